#pragma once

#include "ecfkit/core.hpp"
#include "ecfkit/data.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

namespace ecfkit {

/// k x k target matrix of codeword inner products; the diagonal holds the
/// code length l.
struct DesignMatrix {
  Matrix values;
  int l = 1;

  Eigen::Index k() const { return values.rows(); }

  /// Symmetric within 1e-10, diagonal exactly l, entries within [-l, l].
  void validate() const {
    require(l >= 1, "design: code length must be >= 1");
    require(values.rows() == values.cols(), "design: matrix is " + shape_str(values.rows(), values.cols()));
    const double len = static_cast<double>(l);
    for (Eigen::Index i = 0; i < k(); ++i) {
      require(values(i, i) == len, "design: diagonal entry " + std::to_string(i + 1) + " is not " + std::to_string(l));
      for (Eigen::Index j = 0; j < k(); ++j) {
        require(std::abs(values(i, j) - values(j, i)) <= 1e-10, "design: matrix is not symmetric");
        require(values(i, j) >= -len && values(i, j) <= len, "design: entry outside [-l, l]");
      }
    }
  }
};

/// Symmetric, nonnegative, zero diagonal.
struct ClassDistanceMatrix {
  Matrix values;
};

enum class AllocationPolicy { Hard, Easy };

/// Thrown when the off-diagonal distances are all equal and cannot be
/// min-max normalized.
class DegenerateDistances : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

/// Mahalanobis distance between class means under the pooled within-class
/// covariance, ridge-regularized by 1e-6 * trace / d.
inline ClassDistanceMatrix pairwise_mahalanobis(const LabeledDataset& data) {
  data.validate();
  require(data.k >= 2, "mahalanobis: need at least 2 classes");
  require(data.dim() >= 1, "mahalanobis: need at least one feature");
  const auto counts = data.class_counts();
  for (int c = 0; c < data.k; ++c)
    require(counts[static_cast<std::size_t>(c)] >= 2,
            "mahalanobis: class " + data.class_names[static_cast<std::size_t>(c)] + " has fewer than 2 samples");

  const auto d = data.dim();
  Matrix means = Matrix::Zero(data.k, d);
  for (Eigen::Index i = 0; i < data.size(); ++i) means.row(data.labels(i) - 1) += data.features.row(i);
  for (int c = 0; c < data.k; ++c) means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);

  Matrix cov = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Vector centered = (data.features.row(i) - means.row(data.labels(i) - 1)).transpose();
    cov.noalias() += centered * centered.transpose();
  }
  cov /= static_cast<double>(data.size() - data.k);
  const double ridge = std::max(1e-6 * cov.trace() / static_cast<double>(d), 1e-12);
  cov += ridge * Matrix::Identity(d, d);
  Eigen::LDLT<Matrix> chol(cov);

  ClassDistanceMatrix out{Matrix::Zero(data.k, data.k)};
  for (int i = 0; i < data.k; ++i)
    for (int j = i + 1; j < data.k; ++j) {
      const Vector diff = (means.row(i) - means.row(j)).transpose();
      const double dist = std::sqrt(std::max(0.0, diff.dot(chol.solve(diff))));
      out.values(i, j) = out.values(j, i) = dist;
    }
  return out;
}

/// Maps class distances to target inner products. With u the min-max
/// normalized off-diagonal distance, Hard uses l(2u - 1) (close classes get
/// far codewords) and Easy uses l(1 - 2u) clipped above at l - 2.
inline DesignMatrix distances_to_design(const ClassDistanceMatrix& dist, int l, AllocationPolicy policy) {
  const auto k = dist.values.rows();
  require(l >= 1, "design: code length must be >= 1");
  require(k >= 2 && dist.values.cols() == k, "design: distance matrix must be square with k >= 2");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (i != j) {
        lo = std::min(lo, dist.values(i, j));
        hi = std::max(hi, dist.values(i, j));
      }
  if (!(hi > lo)) throw DegenerateDistances("design: all class distances are equal; cannot normalize");

  const double len = static_cast<double>(l);
  DesignMatrix out{Matrix::Constant(k, k, 0.0), l};
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) {
        out.values(i, j) = len;
        continue;
      }
      const double u = (dist.values(i, j) - lo) / (hi - lo);
      out.values(i, j) = policy == AllocationPolicy::Hard ? len * (2.0 * u - 1.0)
                                                          : std::min(len * (1.0 - 2.0 * u), len - 2.0);
    }
  return out;
}

struct ProjectionResult {
  DesignMatrix design;
  int iterations = 0;
  bool converged = false;
  double min_eigenvalue = 0.0;
  double last_change = 0.0;
};

/// Alternating projections: PSD cone, then the box [-l, l], then the
/// diagonal reset to l, until the Frobenius change per cycle drops below
/// `tol`. If the final matrix still has a negative eigenvalue it is pulled
/// toward l*I just enough to be PSD (keeps the diagonal and the box).
inline ProjectionResult project_psd_scaled(const Matrix& input, int l, double tol = 1e-9, int max_iter = 1000) {
  require(l >= 1, "projection: code length must be >= 1");
  require(input.rows() == input.cols() && input.rows() >= 1, "projection: matrix must be square");
  require(input.allFinite(), "projection: non-finite entry");
  const auto k = input.rows();
  const double len = static_cast<double>(l);
  Matrix d = 0.5 * (input + input.transpose());

  ProjectionResult res;
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix prev = d;
    eig.compute(d);
    const Vector pos = eig.eigenvalues().cwiseMax(0.0);
    d = eig.eigenvectors() * pos.asDiagonal() * eig.eigenvectors().transpose();
    d = 0.5 * (d + d.transpose());
    d = d.cwiseMax(-len).cwiseMin(len);
    d.diagonal().setConstant(len);
    res.iterations = it;
    res.last_change = (d - prev).norm();
    if (res.last_change < tol) {
      res.converged = true;
      break;
    }
  }

  double lmin = min_eigenvalue(d);
  if (lmin < 0.0) {
    const double theta = -lmin / (len - lmin);
    d = (1.0 - theta) * d;
    d.diagonal().setConstant(len);
    lmin = min_eigenvalue(d);
  }
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) d(j, i) = d(i, j);
  res.design = DesignMatrix{std::move(d), l};
  res.min_eigenvalue = lmin;
  return res;
}

inline ProjectionResult project_psd_scaled(const DesignMatrix& dm, double tol = 1e-9, int max_iter = 1000) {
  return project_psd_scaled(dm.values, dm.l, tol, max_iter);
}

struct BinaryGramian {
  DesignMatrix design;
  IntMatrix factor;
};

namespace detail {

inline bool rows_distinct(const IntMatrix& x) {
  std::set<std::vector<int>> seen;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<int> r(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) r[static_cast<std::size_t>(j)] = x(i, j);
    if (!seen.insert(std::move(r)).second) return false;
  }
  return true;
}

inline bool cols_distinct(const IntMatrix& x) {
  const IntMatrix t = x.transpose();
  return rows_distinct(t);
}

}  // namespace detail

/// Random X0 in {-1,+1}^{k x l} with pairwise distinct rows and columns,
/// and D^B = X0 X0^T.
inline BinaryGramian binary_gramian(int k, int l, std::uint64_t seed) {
  require(k >= 2, "binary_gramian: k must be >= 2");
  require(l >= 1, "binary_gramian: l must be >= 1");
  require(l >= 31 || (std::uint64_t{1} << l) >= static_cast<std::uint64_t>(k),
          "binary_gramian: 2^l < k, distinct rows impossible");
  require(k >= 31 || (std::uint64_t{1} << k) >= static_cast<std::uint64_t>(l),
          "binary_gramian: 2^k < l, distinct columns impossible");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  IntMatrix x(k, l);
  // Redrawing a row that repeats an earlier one samples the same
  // distribution as redrawing the whole matrix until rows are distinct.
  for (long attempt = 0;; ++attempt) {
    if (attempt >= 1'000'000) throw NumericalFailure("binary_gramian: no draw with distinct rows and columns");
    for (int i = 0; i < k; ++i) {
      bool repeated = true;
      while (repeated) {
        for (int j = 0; j < l; ++j) x(i, j) = coin(rng) ? 1 : -1;
        repeated = false;
        for (int r = 0; r < i && !repeated; ++r) repeated = x.row(r) == x.row(i);
      }
    }
    if (detail::cols_distinct(x)) break;
  }
  const Matrix xd = x.cast<double>();
  return {DesignMatrix{xd * xd.transpose(), l}, x};
}

/// Numerical rank: eigenvalues above rank_tol * max|eigenvalue|
/// (rank_tol <= 0 selects 1e-8 * k).
inline int code_length(const Matrix& design, double rank_tol = 0.0) {
  require(design.rows() == design.cols() && design.rows() >= 1, "code_length: matrix must be square");
  const auto k = design.rows();
  if (rank_tol <= 0.0) rank_tol = 1e-8 * static_cast<double>(k);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (design + design.transpose()), Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  require(top > 0.0, "code_length: zero matrix has no rank");
  int rank = 0;
  for (Eigen::Index i = 0; i < k; ++i)
    if (std::abs(eig.eigenvalues()(i)) > rank_tol * top) ++rank;
  return rank;
}

inline int code_length(const DesignMatrix& design, double rank_tol = 0.0) {
  return code_length(design.values, rank_tol);
}

}  // namespace ecfkit
