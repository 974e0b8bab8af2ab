#pragma once

// JSON views of library results, shared by the CLI and the acceptance runner.

#include "ecfkit/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ecfkit::report {

using nlohmann::ordered_json;

inline ordered_json matrix(const Matrix& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline ordered_json matrix(const IntMatrix& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

// pairs are written one-based
inline ordered_json pairs(const std::vector<std::pair<int, int>>& ps) {
  ordered_json out = ordered_json::array();
  for (auto [a, b] : ps) out.push_back({a + 1, b + 1});
  return out;
}

inline ordered_json validation(const ValidationReport& v) {
  ordered_json violations = ordered_json::array();
  for (const auto& p : v.policy_violations)
    violations.push_back({{"i", p.i + 1}, {"j", p.j + 1}, {"inner_product", p.inner_product}, {"bound", p.bound}});
  return {{"valid", v.valid()},
          {"duplicate_rows", pairs(v.duplicate_rows)},
          {"policy_violations", violations},
          {"duplicate_columns", pairs(v.duplicate_columns)},
          {"complementary_columns", pairs(v.complementary_columns)}};
}

inline ordered_json projection(const ProjectionResult& p) {
  return {{"iterations", p.iterations},
          {"converged", p.converged},
          {"min_eigenvalue", p.min_eigenvalue},
          {"last_change", p.last_change}};
}

inline ordered_json factorization(const FactorizationResult& r) {
  return {{"k", r.coding.k()},
          {"l", r.relaxed.cols()},
          {"dichotomies", r.coding.l()},
          {"initial_objective", r.initial_objective},
          {"relaxed_objective", r.relaxed_objective},
          {"discrete_objective", r.discrete_objective},
          {"threshold", r.threshold},
          {"cycles", r.cycles},
          {"converged", r.converged},
          {"columns_removed", r.columns_removed},
          {"safeguarded_updates", r.safeguarded_updates},
          {"solver_iteration_limits", r.solver_iteration_limits},
          {"objective_trace", r.objective_trace},
          {"validation", validation(r.validation)}};
}

inline ordered_json coding_summary(const CodingMatrix& x) {
  const auto h = hamming_profile(x);
  IntMatrix pairwise = IntMatrix::Zero(x.k(), x.k());
  for (int i = 0; i < x.k(); ++i)
    for (int j = 0; j < x.k(); ++j)
      if (i != j) pairwise(i, j) = pairwise_correction(h, i, j);
  return {{"k", x.k()},
          {"l", x.l()},
          {"min_distance", x.k() > 1 ? min_off_diagonal(h) : 0},
          {"global_correction", x.k() > 1 ? global_correction(h) : 0},
          {"hamming_profile", matrix(h.values)},
          {"pairwise_correction", matrix(pairwise)}};
}

inline ordered_json evaluation(const EvaluationReport& r) {
  return {{"coding", r.coding},
          {"decoding", to_string(r.decoding)},
          {"fold_accuracies", r.fold_accuracies},
          {"mean", r.mean},
          {"std", r.std},
          {"fold_dichotomies", r.fold_dichotomies},
          {"dichotomies", r.dichotomies}};
}

inline void write(const std::filesystem::path& path, const ordered_json& j) {
  detail::write_atomically(path, j.dump(2) + "\n");
}

}  // namespace ecfkit::report
