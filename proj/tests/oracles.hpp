#pragma once

// Independent reference computations used only by the tests.

#include "ecfkit/solver.hpp"

#include <Eigen/Eigenvalues>

#include <random>

namespace oracle {

using ecfkit::Matrix;
using ecfkit::Vector;

// Dykstra's alternating projections onto the box and each half-space
// G_j x <= h_j; converges to the Euclidean projection onto the intersection.
inline Vector project_feasible(const ecfkit::solver::ConstrainedLsProblem& p, const Vector& z, int sweeps = 5000) {
  const auto q = p.G.rows();
  const auto sets = q + 1;
  std::vector<Vector> corr(static_cast<std::size_t>(sets), Vector::Zero(z.size()));
  Vector x = z;
  for (int s = 0; s < sweeps; ++s) {
    const Vector before = x;
    double moved = 0.0;
    for (Eigen::Index c = 0; c < sets; ++c) {
      Vector y = x + corr[static_cast<std::size_t>(c)];
      Vector proj;
      if (c == 0) {
        proj = y.cwiseMax(p.lower).cwiseMin(p.upper);
      } else {
        const Vector g = p.G.row(c - 1).transpose();
        const double excess = g.dot(y) - p.h(c - 1);
        proj = excess > 0.0 ? Vector(y - excess / g.squaredNorm() * g) : y;
      }
      const Vector next_corr = y - proj;
      moved = std::max(moved, (next_corr - corr[static_cast<std::size_t>(c)]).lpNorm<Eigen::Infinity>());
      corr[static_cast<std::size_t>(c)] = next_corr;
      x = proj;
    }
    // the end-of-sweep iterate can repeat while the corrections still move
    if (std::max(moved, (x - before).lpNorm<Eigen::Infinity>()) < 1e-14) break;
  }
  return x;
}

// Projected gradient on 0.5 ||Ax - b||^2 with step 1/L, L = lambda_max(A^T A).
inline Vector projected_gradient_ls(const ecfkit::solver::ConstrainedLsProblem& p, int iterations = 100000) {
  const Matrix gram = p.A.transpose() * p.A;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double lip = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  Vector x = project_feasible(p, Vector::Zero(p.A.cols()));
  for (int it = 0; it < iterations; ++it) {
    const Vector grad = p.A.transpose() * (p.A * x - p.b);
    const Vector next = project_feasible(p, x - grad / lip);
    const double moved = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    if (moved < 1e-15) break;
  }
  return x;
}

// Random feasible instance: h is built around a point strictly inside the box.
inline ecfkit::solver::ConstrainedLsProblem random_problem(std::mt19937_64& rng, int max_n = 6, int max_m = 8,
                                                           int max_q = 4) {
  std::uniform_int_distribution<int> dn(1, max_n), dm(1, max_m), dq(0, max_q);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0), slack(0.0, 0.5);
  const int n = dn(rng), m = dm(rng), q = dq(rng);
  ecfkit::solver::ConstrainedLsProblem p;
  p.A = Matrix(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) p.A(i, j) = g(rng);
  p.b = Vector(m);
  for (int i = 0; i < m; ++i) p.b(i) = 2.0 * g(rng);
  p.lower = Vector::Constant(n, -1.0);
  p.upper = Vector::Constant(n, 1.0);
  Vector inside(n);
  for (int j = 0; j < n; ++j) inside(j) = 0.8 * u(rng);
  p.G = Matrix(q, n);
  p.h = Vector(q);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < n; ++j) p.G(i, j) = g(rng);
    p.h(i) = p.G.row(i).dot(inside) + slack(rng);
  }
  return p;
}

}  // namespace oracle
