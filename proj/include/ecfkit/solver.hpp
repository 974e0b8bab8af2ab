#pragma once

#include "ecfkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace ecfkit::solver {

/// minimize ||A x - b||^2  subject to  lower <= x <= upper,  G x <= h.
struct ConstrainedLsProblem {
  Matrix A;
  Vector b;
  Matrix G;
  Vector h;
  Vector lower;
  Vector upper;

  Eigen::Index num_vars() const { return A.cols(); }
  Eigen::Index num_inequalities() const { return G.rows(); }

  void validate() const {
    const auto n = A.cols();
    require(b.size() == A.rows(), "solver: b has " + std::to_string(b.size()) + " entries, A is " +
                                      shape_str(A.rows(), A.cols()));
    require(G.rows() == 0 || G.cols() == n, "solver: G is " + shape_str(G.rows(), G.cols()) + ", expected " +
                                                std::to_string(n) + " columns");
    require(h.size() == G.rows(), "solver: h has " + std::to_string(h.size()) + " entries, G has " +
                                      std::to_string(G.rows()) + " rows");
    require(lower.size() == n && upper.size() == n, "solver: bound vectors must have " + std::to_string(n) + " entries");
    require((lower.array() <= upper.array()).all(), "solver: lower bound exceeds upper bound");
  }
};

struct SolverOptions {
  double feas_tol = 1e-8;
  double kkt_tol = 1e-6;
  /// 0 selects 200 * n.
  int max_iter = 0;
};

enum class LsStatus { Optimal, Infeasible, IterationLimit };

inline const char* to_string(LsStatus s) {
  switch (s) {
    case LsStatus::Optimal: return "optimal";
    case LsStatus::Infeasible: return "infeasible";
    case LsStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

struct LsSolution {
  Vector x;
  double objective = 0.0;
  double kkt_residual = 0.0;
  LsStatus status = LsStatus::Optimal;
  int iterations = 0;
};

namespace detail {

// Phase 1: minimize the total violation sum_j max(0, G_j x - h_j) over the
// box, as a dense tableau LP solved with Bland's rule. Returns the minimizer
// and its violation.
struct PhaseOneResult {
  Vector x;
  double violation = 0.0;
};

inline PhaseOneResult minimize_violation(const ConstrainedLsProblem& p) {
  const auto n = p.num_vars();
  const auto q = p.num_inequalities();
  // columns: y (n) | s (q) | t (q) | w (n) | rhs ; x = lower + y
  const Eigen::Index cols = 2 * n + 2 * q;
  const Eigen::Index rows = q + n;
  Matrix T = Matrix::Zero(rows, cols + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(rows));
  Vector cost = Vector::Zero(cols);
  for (Eigen::Index j = 0; j < q; ++j) cost(n + j) = 1.0;

  for (Eigen::Index j = 0; j < q; ++j) {
    const double r = p.h(j) - p.G.row(j).dot(p.lower);
    const double sign = r < 0.0 ? -1.0 : 1.0;
    T.row(j).head(n) = sign * p.G.row(j);
    T(j, n + j) = -sign;
    T(j, n + q + j) = sign;
    T(j, cols) = sign * r;
    basis[static_cast<std::size_t>(j)] = r < 0.0 ? n + j : n + q + j;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    T(q + i, i) = 1.0;
    T(q + i, 2 * n + 2 * q - n + i) = 1.0;
    T(q + i, cols) = p.upper(i) - p.lower(i);
    basis[static_cast<std::size_t>(q + i)] = 2 * n + 2 * q - n + i;
  }

  // reduced costs for the starting basis
  Vector reduced = cost;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double cb = cost(basis[static_cast<std::size_t>(r)]);
    if (cb != 0.0) reduced -= cb * T.row(r).head(cols).transpose();
  }

  constexpr double eps = 1e-12;
  const int cap = 50 * static_cast<int>(rows + cols) + 100;
  for (int it = 0; it < cap; ++it) {
    Eigen::Index enter = -1;
    for (Eigen::Index c = 0; c < cols; ++c)
      if (reduced(c) < -eps) {
        enter = c;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (T(r, enter) > eps) {
        const double ratio = T(r, cols) / T(r, enter);
        if (ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && leave >= 0 &&
             basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) break;  // unbounded cannot happen: objective >= 0
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index r = 0; r < rows; ++r)
      if (r != leave && T(r, enter) != 0.0) T.row(r) -= T(r, enter) * T.row(leave);
    reduced -= reduced(enter) * T.row(leave).head(cols).transpose();
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  Vector y = Vector::Zero(n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto b = basis[static_cast<std::size_t>(r)];
    if (b < n) y(b) = T(r, cols);
  }
  PhaseOneResult out;
  out.x = (p.lower + y).cwiseMax(p.lower).cwiseMin(p.upper);
  out.violation = q > 0 ? (p.G * out.x - p.h).cwiseMax(0.0).sum() : 0.0;
  return out;
}

// Stacked constraint row i of [G; I; -I] applied to v.
struct ConstraintSet {
  const ConstrainedLsProblem& p;
  Eigen::Index n, q;

  Eigen::Index size() const { return q + 2 * n; }
  double dot(Eigen::Index i, const Vector& v) const {
    if (i < q) return p.G.row(i).dot(v);
    if (i < q + n) return v(i - q);
    return -v(i - q - n);
  }
  double rhs(Eigen::Index i) const {
    if (i < q) return p.h(i);
    if (i < q + n) return p.upper(i - q);
    return -p.lower(i - q - n);
  }
  Vector row(Eigen::Index i) const {
    if (i < q) return p.G.row(i).transpose();
    Vector r = Vector::Zero(n);
    r(i < q + n ? i - q : i - q - n) = i < q + n ? 1.0 : -1.0;
    return r;
  }
};

inline double kkt_residual(const ConstrainedLsProblem& p, const ConstraintSet& cs, const Vector& x,
                           const std::vector<Eigen::Index>& working, const Vector& multipliers) {
  // gradient of ||Ax - b||^2 and multipliers scaled to match it
  Vector station = 2.0 * p.A.transpose() * (p.A * x - p.b);
  double worst = 0.0;
  for (std::size_t a = 0; a < working.size(); ++a) {
    const double mu = 2.0 * multipliers(static_cast<Eigen::Index>(a));
    station += mu * cs.row(working[a]);
    worst = std::max(worst, -mu);
    worst = std::max(worst, std::abs(mu * (cs.dot(working[a], x) - cs.rhs(working[a]))));
  }
  worst = std::max(worst, station.lpNorm<Eigen::Infinity>());
  for (Eigen::Index i = 0; i < cs.size(); ++i) worst = std::max(worst, cs.dot(i, x) - cs.rhs(i));
  return worst;
}

}  // namespace detail

/// Bounded least squares with linear inequalities by a primal active-set
/// method on the normal equations.
///
/// Start: the zero vector when feasible, otherwise the phase-1 LP minimizer.
/// Each iteration minimizes over the null space of the working constraints;
/// a nonzero step is cut at the first blocking constraint, which joins
/// the working set, and a zero step with a negative multiplier drops that
/// constraint. Anti-cycling: blocking and dropping ties both go to the
/// smallest constraint index (G rows, then upper bounds, then lower bounds).
inline LsSolution solve_box_lin_ls(const ConstrainedLsProblem& problem, const SolverOptions& opts = {}) {
  problem.validate();
  const auto n = problem.num_vars();
  const auto q = problem.num_inequalities();
  detail::ConstraintSet cs{problem, n, q};
  LsSolution sol;

  if (n == 0) {
    sol.x = Vector(0);
    sol.objective = problem.b.squaredNorm();
    sol.status = (q == 0 || (problem.h.array() >= -opts.feas_tol).all()) ? LsStatus::Optimal : LsStatus::Infeasible;
    return sol;
  }

  Vector x = Vector::Zero(n);
  const bool zero_feasible = (problem.lower.array() <= 0.0).all() && (problem.upper.array() >= 0.0).all() &&
                             (q == 0 || (problem.h.array() >= 0.0).all());
  if (!zero_feasible) {
    auto phase1 = detail::minimize_violation(problem);
    if (phase1.violation > opts.feas_tol) {
      sol.x = phase1.x;
      sol.objective = (problem.A * sol.x - problem.b).squaredNorm();
      sol.kkt_residual = std::numeric_limits<double>::infinity();
      sol.status = LsStatus::Infeasible;
      return sol;
    }
    x = phase1.x;
  }

  const Matrix gram = problem.A.transpose() * problem.A;
  const double trace = gram.trace();
  const double ridge = 1e-12 * (trace > 0.0 ? trace / static_cast<double>(n) : 1.0);
  const Matrix hess = gram + ridge * Matrix::Identity(n, n);
  const Vector atb = problem.A.transpose() * problem.b;

  std::vector<Eigen::Index> working;
  std::vector<bool> in_working(static_cast<std::size_t>(cs.size()), false);
  Vector multipliers;
  const int cap = opts.max_iter > 0 ? opts.max_iter : 200 * static_cast<int>(n);
  bool optimal = false;
  bool on_subspace_minimum = false;
  int it = 0;
  for (; it < cap; ++it) {
    const auto w = static_cast<Eigen::Index>(working.size());
    Matrix rows(n, w);
    for (Eigen::Index a = 0; a < w; ++a) rows.col(a) = cs.row(working[static_cast<std::size_t>(a)]);
    const Vector half_grad = hess * x - atb;

    // Null space of the working rows from a full QR of their transpose; the
    // working set is kept linearly independent, so its rank is w.
    Vector step = Vector::Zero(n);
    if (w < n) {
      Eigen::HouseholderQR<Matrix> qr(rows);
      const Matrix q_full = qr.householderQ() * Matrix::Identity(n, n);
      const Matrix z = q_full.rightCols(n - w);
      const Matrix reduced = z.transpose() * hess * z;
      step = -z * reduced.ldlt().solve(z.transpose() * half_grad);
    }

    // A step that leaves the gradient of the unregularized objective
    // unchanged (up to a fraction of the KKT tolerance) is treated as zero;
    // otherwise the ridge drags the iterate along null directions of A.
    // After an unblocked full step the iterate already minimizes over the
    // working set, so any remaining step is solve noise.
    const double grad_change = 2.0 * (gram * step).lpNorm<Eigen::Infinity>();
    if (on_subspace_minimum || step.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>()) ||
        grad_change <= 1e-3 * opts.kkt_tol) {
      // rows * lambda = -(gradient / 2)
      multipliers = w > 0 ? Vector(rows.colPivHouseholderQr().solve(-half_grad)) : Vector(0);
      Eigen::Index drop = -1;
      double most_negative = -1e-4 * opts.kkt_tol;
      for (Eigen::Index a = 0; a < w; ++a)
        if (multipliers(a) < most_negative) {
          most_negative = multipliers(a);
          drop = a;
        }
      if (drop < 0) {
        optimal = true;
        break;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = false;
      working.erase(working.begin() + drop);
      on_subspace_minimum = false;
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    const double step_norm = step.norm();
    for (Eigen::Index i = 0; i < cs.size(); ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double slope = cs.dot(i, step);
      // rows nearly orthogonal to the step would make the working set
      // numerically dependent
      if (slope <= 1e-10 * cs.row(i).norm() * step_norm) continue;
      const double ratio = std::max(0.0, (cs.rhs(i) - cs.dot(i, x)) / slope);
      if (ratio < alpha) {
        alpha = ratio;
        blocking = i;
      }
    }
    x += alpha * step;
    on_subspace_minimum = blocking < 0;
    if (blocking >= 0) {
      if (blocking >= q) {
        const auto var = blocking < q + n ? blocking - q : blocking - q - n;
        x(var) = blocking < q + n ? problem.upper(var) : problem.lower(var);
      }
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = true;
    }
  }

  x = x.cwiseMax(problem.lower).cwiseMin(problem.upper);
  sol.x = x;
  sol.iterations = it;
  sol.objective = (problem.A * x - problem.b).squaredNorm();
  if (!optimal) multipliers = Vector::Zero(static_cast<Eigen::Index>(working.size()));
  sol.kkt_residual = detail::kkt_residual(problem, cs, x, working, multipliers);
  sol.status = optimal && sol.kkt_residual <= opts.kkt_tol ? LsStatus::Optimal : LsStatus::IterationLimit;
  return sol;
}

}  // namespace ecfkit::solver
