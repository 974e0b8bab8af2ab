#include "ecfkit/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ecfkit;
using namespace ecfkit::solver;

namespace {

ConstrainedLsProblem box_only(Matrix A, Vector b) {
  ConstrainedLsProblem p;
  const auto n = A.cols();
  p.A = std::move(A);
  p.b = std::move(b);
  p.G = Matrix(0, n);
  p.h = Vector(0);
  p.lower = Vector::Constant(n, -1.0);
  p.upper = Vector::Constant(n, 1.0);
  return p;
}

bool feasible(const ConstrainedLsProblem& p, const Vector& x, double tol) {
  if ((x.array() < p.lower.array() - tol).any() || (x.array() > p.upper.array() + tol).any()) return false;
  return p.G.rows() == 0 || ((p.G * x - p.h).array() <= tol).all();
}

}  // namespace

TEST(Solver, InteriorOptimum) {
  auto sol = solve_box_lin_ls(box_only(Matrix::Identity(2, 2), Vector{{0.3, -0.2}}));
  ASSERT_EQ(sol.status, LsStatus::Optimal);
  EXPECT_NEAR(sol.x(0), 0.3, 1e-12);
  EXPECT_NEAR(sol.x(1), -0.2, 1e-12);
  EXPECT_NEAR(sol.objective, 0.0, 1e-20);
}

TEST(Solver, BoundClipping) {
  auto sol = solve_box_lin_ls(box_only(Matrix::Identity(2, 2), Vector{{2.0, 0.0}}));
  ASSERT_EQ(sol.status, LsStatus::Optimal);
  EXPECT_NEAR(sol.x(0), 1.0, 1e-12);
  EXPECT_NEAR(sol.x(1), 0.0, 1e-12);
  EXPECT_NEAR(sol.objective, 1.0, 1e-12);
  EXPECT_LE(sol.kkt_residual, 1e-6);
}

TEST(Solver, HalfSpaceActive) {
  // minimize (x-1)^2 + (y-1)^2 s.t. x + y <= 0 -> (0, 0)
  auto p = box_only(Matrix::Identity(2, 2), Vector{{1.0, 1.0}});
  p.G = Matrix{{1.0, 1.0}};
  p.h = Vector{{0.0}};
  auto sol = solve_box_lin_ls(p);
  ASSERT_EQ(sol.status, LsStatus::Optimal);
  EXPECT_NEAR(sol.x(0), 0.0, 1e-12);
  EXPECT_NEAR(sol.x(1), 0.0, 1e-12);
  EXPECT_NEAR(sol.objective, 2.0, 1e-12);
}

TEST(Solver, PhaseOneFindsFeasibleStart) {
  // zero violates x0 + x1 <= -1.5, so the LP start is needed
  auto p = box_only(Matrix::Identity(2, 2), Vector{{0.0, 0.0}});
  p.G = Matrix{{1.0, 1.0}};
  p.h = Vector{{-1.5}};
  auto sol = solve_box_lin_ls(p);
  ASSERT_EQ(sol.status, LsStatus::Optimal);
  EXPECT_NEAR(sol.x(0), -0.75, 1e-10);
  EXPECT_NEAR(sol.x(1), -0.75, 1e-10);
}

TEST(Solver, InfeasibleDetected) {
  auto p = box_only(Matrix::Identity(2, 2), Vector{{0.0, 0.0}});
  p.G = Matrix{{1.0, 1.0}};
  p.h = Vector{{-2.5}};
  EXPECT_EQ(solve_box_lin_ls(p).status, LsStatus::Infeasible);
}

TEST(Solver, RankDeficientA) {
  // one row, three unknowns: infinitely many unconstrained minimizers
  auto p = box_only(Matrix{{1.0, 1.0, 1.0}}, Vector{{-3.0}});
  p.G = Matrix{{1.0, 1.0, 1.0}};
  p.h = Vector{{2.0}};
  auto sol = solve_box_lin_ls(p);
  ASSERT_EQ(sol.status, LsStatus::Optimal);
  EXPECT_NEAR(sol.objective, 0.0, 1e-12);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(sol.x(j), -1.0, 1e-9);
}

TEST(Solver, RejectsInconsistentShapes) {
  auto p = box_only(Matrix::Identity(2, 2), Vector{{0.0, 0.0}});
  p.b = Vector{{1.0}};
  EXPECT_THROW(solve_box_lin_ls(p), InvalidArgument);
  auto q = box_only(Matrix::Identity(2, 2), Vector{{0.0, 0.0}});
  q.lower(0) = 2.0;
  EXPECT_THROW(solve_box_lin_ls(q), InvalidArgument);
}

TEST(Solver, MatchesProjectedGradientOracle) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = oracle::random_problem(rng);
    auto sol = solve_box_lin_ls(p);
    ASSERT_EQ(sol.status, LsStatus::Optimal) << "trial " << trial;
    EXPECT_TRUE(feasible(p, sol.x, 1e-8)) << "trial " << trial;
    EXPECT_LE(sol.kkt_residual, 1e-6) << "trial " << trial;
    const Vector ref = oracle::projected_gradient_ls(p);
    const double ref_obj = (p.A * ref - p.b).squaredNorm();
    EXPECT_LE(sol.objective, ref_obj + 1e-4) << "trial " << trial;
  }
}

TEST(Solver, Deterministic) {
  std::mt19937_64 rng(7);
  auto p = oracle::random_problem(rng);
  auto a = solve_box_lin_ls(p);
  auto b = solve_box_lin_ls(p);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.objective, b.objective);
}
