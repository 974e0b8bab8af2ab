#pragma once

#include "ecfkit/core.hpp"
#include "ecfkit/design.hpp"
#include "ecfkit/ecoc.hpp"
#include "ecfkit/policy.hpp"
#include "ecfkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace ecfkit {

/// A row subproblem had an empty feasible set: the policy is too strict for
/// the other rows and this code length.
class InfeasibleRow : public NumericalFailure {
 public:
  explicit InfeasibleRow(int row)
      : NumericalFailure("ecf: row " + std::to_string(row + 1) +
                         " has no feasible update; the correction policy is too strict for this code length"),
        row_(row) {}
  int row() const { return row_; }

 private:
  int row_;
};

/// Discretization left two classes with the same codeword.
class DuplicateCodewords : public NumericalFailure {
 public:
  DuplicateCodewords(int i, int j)
      : NumericalFailure("ecf: classes " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                         " received identical codewords"),
        first(i),
        second(j) {}
  int first, second;
};

enum class RowOrder {
  Cyclic,
  /// Each pass draws k row indices uniformly with replacement. Only used to
  /// compare update orders.
  UniformRandom,
};

struct EcfOptions {
  std::uint64_t seed = 0;
  int max_cycles = 100;
  /// Stop once a full cycle lowers the objective by less than this fraction.
  double rel_tol = 1e-8;
  RowOrder order = RowOrder::Cyclic;
  /// Replace objective-raising block minimizers by a segment search.
  bool descent_safeguard = true;
  solver::SolverOptions solver;
};

struct FactorizationResult {
  CodingMatrix coding;
  /// Relaxed factor in [-1, 1]^{k x l} before discretization.
  Matrix relaxed;
  double initial_objective = 0.0;
  /// Objective after each completed cycle.
  std::vector<double> objective_trace;
  /// Objective at the start and after every single row update.
  std::vector<double> update_trace;
  double relaxed_objective = 0.0;
  /// ||D - X X^T||_F^2 of `coding` (after duplicate columns are dropped).
  double discrete_objective = 0.0;
  double threshold = 0.0;
  int cycles = 0;
  bool converged = false;
  /// Checks of the discretized matrix (before column removal) against P.
  /// When it lists duplicate rows, `coding` is the discretized matrix as is.
  ValidationReport validation;
  int columns_removed = 0;
  /// Row updates where the least-squares minimizer would have raised the
  /// full objective and a segment search was used instead.
  int safeguarded_updates = 0;
  int solver_iteration_limits = 0;
};

struct ErrorDecomposition {
  double total = 0.0;
  double optimization_error = 0.0;
  double discretization_error = 0.0;
  double cross_term = 0.0;
};

/// ||D - X X^T||_F^2
inline double objective(const Matrix& design, const Matrix& x) {
  require(design.rows() == design.cols() && design.rows() == x.rows(),
          "objective: design is " + shape_str(design.rows(), design.cols()) + ", factor is " +
              shape_str(x.rows(), x.cols()));
  return (design - x * x.transpose()).squaredNorm();
}

inline double objective(const DesignMatrix& design, const Matrix& x) { return objective(design.values, x); }

namespace detail {

template <typename Mat>
Mat drop_row(const Mat& m, Eigen::Index i) {
  Mat out(m.rows() - 1, m.cols());
  out.topRows(i) = m.topRows(i);
  out.bottomRows(m.rows() - i - 1) = m.bottomRows(m.rows() - i - 1);
  return out;
}

inline Vector drop_entry(const Vector& v, Eigen::Index i) {
  Vector out(v.size() - 1);
  out.head(i) = v.head(i);
  out.tail(v.size() - i - 1) = v.tail(v.size() - i - 1);
  return out;
}

inline void check_shapes(const DesignMatrix& d, const CorrectionPolicy& p, const Matrix& x) {
  require(d.values.rows() == d.values.cols(), "ecf: design must be square");
  require(p.values.rows() == d.k() && p.values.cols() == d.k(),
          "ecf: policy is " + shape_str(p.values.rows(), p.values.cols()) + ", design is " +
              shape_str(d.k(), d.k()));
  require(x.rows() == d.k(), "ecf: factor has " + std::to_string(x.rows()) + " rows, design has " +
                                 std::to_string(d.k()));
}

}  // namespace detail

/// Least-squares subproblem for row i: A = X without row i, b = column i
/// of D without entry i, G = A, h = row i of P without entry i, box [-1, 1].
inline solver::ConstrainedLsProblem row_problem(const DesignMatrix& d, const CorrectionPolicy& p, const Matrix& x,
                                                Eigen::Index i) {
  detail::check_shapes(d, p, x);
  require(i >= 0 && i < x.rows(), "ecf: row index out of range");
  solver::ConstrainedLsProblem prob;
  prob.A = detail::drop_row(x, i);
  prob.b = detail::drop_entry(d.values.col(i), i);
  prob.G = prob.A;
  prob.h = detail::drop_entry(p.values.row(i).transpose(), i);
  prob.lower = Vector::Constant(x.cols(), -1.0);
  prob.upper = Vector::Constant(x.cols(), 1.0);
  return prob;
}

/// Minimizer of ||X'^i x - d^i||^2 over -1 <= x <= 1, X'^i x <= p^i.
inline Vector update_row(const DesignMatrix& d, const CorrectionPolicy& p, const Matrix& x, Eigen::Index i,
                         const solver::SolverOptions& opts = {}) {
  auto sol = solver::solve_box_lin_ls(row_problem(d, p, x, i), opts);
  if (sol.status == solver::LsStatus::Infeasible) throw InfeasibleRow(static_cast<int>(i));
  return sol.x;
}

struct Discretization {
  CodingMatrix coding;
  double threshold = 0.0;
  int index = 0;
  double objective = 0.0;
};

/// Scans the thresholds t_m = -1 + 2m/999 (m = 0..999); entries >= t_m map
/// to +1. Picks the matrix whose objective is closest to the relaxed one,
/// smallest m on ties.
inline Discretization discretize(const Matrix& relaxed, const Matrix& design, double relaxed_objective) {
  require(design.rows() == design.cols() && design.rows() == relaxed.rows(), "discretize: shape mismatch");
  Discretization best;
  double best_gap = std::numeric_limits<double>::infinity();
  Matrix current;
  double current_obj = 0.0;
  for (int m = 0; m < 1000; ++m) {
    const double t = -1.0 + 2.0 * m / 999.0;
    Matrix cand = (relaxed.array() >= t).select(Matrix::Ones(relaxed.rows(), relaxed.cols()),
                                                -Matrix::Ones(relaxed.rows(), relaxed.cols()));
    if (m == 0 || cand != current) {
      current = std::move(cand);
      current_obj = objective(design, current);
    }
    const double gap = std::abs(relaxed_objective - current_obj);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = t;
      best.index = m;
      best.objective = current_obj;
      best.coding = CodingMatrix::from_real(current);
    }
  }
  return best;
}

inline Discretization discretize(const Matrix& relaxed, const DesignMatrix& design, double relaxed_objective) {
  return discretize(relaxed, design.values, relaxed_objective);
}

/// Keeps the first of every group of equal or complementary columns.
/// Throws DuplicateCodewords when the input rows are not distinct.
inline CodingMatrix dedup_columns(const CodingMatrix& x) {
  const auto& v = x.values();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    bool redundant = false;
    for (auto kept : keep)
      if (v.col(j) == v.col(kept) || v.col(j) == -v.col(kept)) {
        redundant = true;
        break;
      }
    if (!redundant) keep.push_back(j);
  }
  IntMatrix out(v.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = v.col(keep[c]);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = i + 1; j < out.rows(); ++j)
      if (out.row(i) == out.row(j)) throw DuplicateCodewords(static_cast<int>(i), static_cast<int>(j));
  return CodingMatrix(std::move(out));
}

namespace detail {

// Part of ||D - X X^T||_F^2 that depends on row i.
struct RowObjective {
  const solver::ConstrainedLsProblem& prob;
  double diag;

  double operator()(const Vector& x) const {
    const double self = diag - x.squaredNorm();
    return 2.0 * (prob.A * x - prob.b).squaredNorm() + self * self;
  }
};

inline bool row_feasible(const solver::ConstrainedLsProblem& prob, const Vector& x, double tol) {
  if ((x.array().abs() > 1.0 + tol).any()) return false;
  return prob.G.rows() == 0 || ((prob.G * x - prob.h).array() <= tol).all();
}

// Minimizes the quartic f(x_old + t (x_new - x_old)) over t in [0, 1]: grid
// scan, then golden-section refinement around the best node.
inline Vector segment_search(const RowObjective& f, const Vector& x_old, const Vector& x_new) {
  const Vector dir = x_new - x_old;
  auto along = [&](double t) { return f(x_old + t * dir); };
  constexpr int nodes = 256;
  int best = 0;
  double best_val = along(0.0);
  for (int s = 1; s <= nodes; ++s) {
    const double v = along(static_cast<double>(s) / nodes);
    if (v < best_val) {
      best_val = v;
      best = s;
    }
  }
  double lo = std::max(0.0, (best - 1.0) / nodes), hi = std::min(1.0, (best + 1.0) / nodes);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - ratio * (hi - lo), b = lo + ratio * (hi - lo);
  double fa = along(a), fb = along(b);
  for (int it = 0; it < 60; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = along(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = along(b);
    }
  }
  double t = static_cast<double>(best) / nodes;
  const double mid = 0.5 * (lo + hi);
  if (along(mid) < best_val) t = mid;
  return x_old + t * dir;
}

// Uniform draw in [-1, 1]^{k x l}; then each row, in order, is scaled down
// just enough to meet P against the rows before it. Bounds below zero cannot
// be met by scaling and are left to the first cycle.
inline Matrix initial_factor(const CorrectionPolicy& p, Eigen::Index k, int l, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix x(k, l);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int j = 0; j < l; ++j) x(i, j) = unit(rng);
  for (Eigen::Index i = 1; i < k; ++i) {
    double scale = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double g = x.row(i).dot(x.row(j));
      if (g > p.values(i, j) && p.values(i, j) >= 0.0) scale = std::min(scale, p.values(i, j) / g);
    }
    x.row(i) *= scale;
  }
  return x;
}

}  // namespace detail

/// Error-correcting factorization: block coordinate descent over the rows of
/// X in [-1, 1]^{k x l}, each block solved as a bounded least-squares problem
/// with the row-correlation bounds of P, followed by threshold
/// discretization and removal of equivalent columns.
///
/// X starts from a seeded uniform draw in [-1, 1], with rows shrunk where
/// needed so the start already satisfies P.
///
/// The block solve ignores the diagonal term (D_ii - |x^i|^2)^2. When the
/// minimizer would raise the full objective from a feasible row, the update
/// moves to the best point on the segment between the old row and the
/// minimizer instead, so the full objective never increases.
inline FactorizationResult factorize(const DesignMatrix& d, const CorrectionPolicy& p, const EcfOptions& opts = {}) {
  const int l = d.l;
  const auto k = d.k();
  require(l >= 1, "ecf: code length must be >= 1");
  require(p.l == l, "ecf: policy length " + std::to_string(p.l) + " differs from design length " + std::to_string(l));
  require(l >= 31 || (std::int64_t{1} << l) >= k,
          "ecf: 2^l < k (l = " + std::to_string(l) + ", k = " + std::to_string(k) + "): codewords cannot be distinct");
  require(opts.max_cycles >= 1, "ecf: max_cycles must be >= 1");
  detail::check_shapes(d, p, Matrix(k, l));

  std::mt19937_64 rng(opts.seed);
  Matrix x = detail::initial_factor(p, k, l, rng);
  std::uniform_int_distribution<Eigen::Index> pick(0, k - 1);

  FactorizationResult res;
  double obj = objective(d, x);
  res.initial_objective = obj;
  res.update_trace.push_back(obj);

  auto update = [&](Eigen::Index i) {
    const auto prob = row_problem(d, p, x, i);
    const auto sol = solver::solve_box_lin_ls(prob, opts.solver);
    if (sol.status == solver::LsStatus::Infeasible) throw InfeasibleRow(static_cast<int>(i));
    if (sol.status == solver::LsStatus::IterationLimit) ++res.solver_iteration_limits;
    const Vector old = x.row(i).transpose();
    Vector next = sol.x;
    if (opts.descent_safeguard && detail::row_feasible(prob, old, opts.solver.feas_tol)) {
      const detail::RowObjective f{prob, d.values(i, i)};
      if (f(next) > f(old)) {
        next = detail::segment_search(f, old, next);
        ++res.safeguarded_updates;
      }
    }
    x.row(i) = next.transpose();
  };

  for (int cycle = 1; cycle <= opts.max_cycles; ++cycle) {
    const double start = obj;
    for (Eigen::Index s = 0; s < k; ++s) {
      update(opts.order == RowOrder::Cyclic ? s : pick(rng));
      obj = objective(d, x);
      res.update_trace.push_back(obj);
    }
    res.objective_trace.push_back(obj);
    res.cycles = cycle;
    const double decrease = start - obj;
    if (decrease >= 0.0 && decrease <= opts.rel_tol * start) {
      res.converged = true;
      break;
    }
  }

  res.relaxed = x;
  res.relaxed_objective = obj;
  auto disc = discretize(x, d, obj);
  res.threshold = disc.threshold;
  res.validation = validate_coding(disc.coding, p);
  // Merged codewords are reported, not repaired; column removal needs
  // distinct rows.
  res.coding = res.validation.valid() ? dedup_columns(disc.coding) : disc.coding;
  res.columns_removed = disc.coding.l() - res.coding.l();
  res.discrete_objective = objective(d, res.coding.real());
  return res;
}

/// Splits ||X* X*^T - D||^2 into the distance to a binary Gramian D^B, the
/// distance from D to D^B, and the cross term.
inline ErrorDecomposition error_decomposition(const Matrix& relaxed, const Matrix& design, const Matrix& binary) {
  require(design.rows() == design.cols() && binary.rows() == design.rows() && binary.cols() == design.cols() &&
              relaxed.rows() == design.rows(),
          "error_decomposition: shape mismatch");
  const Matrix gram = relaxed * relaxed.transpose();
  const Matrix opt_part = gram - binary;
  const Matrix disc_part = design - binary;
  ErrorDecomposition e;
  e.optimization_error = opt_part.squaredNorm();
  e.discretization_error = disc_part.squaredNorm();
  e.cross_term = -2.0 * (opt_part * disc_part).trace();
  e.total = (gram - design).squaredNorm();
  return e;
}

inline ErrorDecomposition error_decomposition(const FactorizationResult& result, const DesignMatrix& design,
                                              const DesignMatrix& binary) {
  return error_decomposition(result.relaxed, design.values, binary.values);
}

}  // namespace ecfkit
