#pragma once

#include "ecfkit/core.hpp"
#include "ecfkit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace ecfkit {

/// k x l matrix over {-1, +1}: rows are class codewords, columns are
/// dichotomies. Construction only checks the alphabet; structural validity
/// (distinct rows, non-equivalent columns) is reported by validate_coding.
class CodingMatrix {
 public:
  CodingMatrix() = default;
  explicit CodingMatrix(IntMatrix values) : values_(std::move(values)) {
    for (Eigen::Index i = 0; i < values_.rows(); ++i)
      for (Eigen::Index j = 0; j < values_.cols(); ++j)
        require(values_(i, j) == 1 || values_(i, j) == -1,
                "coding: entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") is not +1/-1");
  }

  /// Accepts a real matrix holding exactly +1/-1.
  static CodingMatrix from_real(const Matrix& m) {
    IntMatrix v(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        require(m(i, j) == 1.0 || m(i, j) == -1.0, "coding: non +1/-1 entry");
        v(i, j) = static_cast<int>(m(i, j));
      }
    return CodingMatrix(std::move(v));
  }

  int k() const { return static_cast<int>(values_.rows()); }
  int l() const { return static_cast<int>(values_.cols()); }
  int operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }
  const IntMatrix& values() const { return values_; }
  Matrix real() const { return values_.cast<double>(); }

  friend bool operator==(const CodingMatrix& a, const CodingMatrix& b) { return a.values_ == b.values_; }

 private:
  IntMatrix values_;
};

/// Pairwise disagreement counts between codewords.
struct DistanceProfile {
  IntMatrix values;
  Eigen::Index k() const { return values.rows(); }
};

/// Per-class, per-dichotomy reliability weights; rows sum to one.
struct WeightMatrix {
  Matrix values;
};

using PredictionCodeword = IntVector;

inline DistanceProfile hamming_profile(const CodingMatrix& x) {
  const Matrix xr = x.real();
  const Matrix gram = xr * xr.transpose();
  DistanceProfile h{IntMatrix::Zero(x.k(), x.k())};
  for (int i = 0; i < x.k(); ++i)
    for (int j = 0; j < x.k(); ++j)
      if (i != j) h.values(i, j) = static_cast<int>(std::lround((x.l() - gram(i, j)) / 2.0));
  return h;
}

inline int min_off_diagonal(const DistanceProfile& h) {
  int best = std::numeric_limits<int>::max();
  for (Eigen::Index i = 0; i < h.k(); ++i)
    for (Eigen::Index j = 0; j < h.k(); ++j)
      if (i != j) best = std::min(best, h.values(i, j));
  return best;
}

namespace detail {
// floor((m - 1) / 2), also for m = 0
inline int correction_of(int m) { return static_cast<int>(std::floor((m - 1) / 2.0)); }
}  // namespace detail

/// floor((min off-diagonal H - 1) / 2); -1 when two codewords coincide.
inline int global_correction(const DistanceProfile& h) {
  require(h.k() >= 2, "global_correction: need k >= 2");
  return detail::correction_of(min_off_diagonal(h));
}

/// floor((m - 1) / 2) with m the minimum over rows i and j of H, diagonal
/// entries excluded.
inline int pairwise_correction(const DistanceProfile& h, int i, int j) {
  require(i != j, "pairwise_correction: i and j must differ");
  require(i >= 0 && j >= 0 && i < h.k() && j < h.k(), "pairwise_correction: class index out of range");
  int m = std::numeric_limits<int>::max();
  for (Eigen::Index c = 0; c < h.k(); ++c) {
    if (c != i) m = std::min(m, h.values(i, c));
    if (c != j) m = std::min(m, h.values(j, c));
  }
  return detail::correction_of(m);
}

/// floor((H_ij - 1) / 2): flips of codeword i that still decode closer to i
/// than to j.
inline int pair_distance_correction(const DistanceProfile& h, int i, int j) {
  require(i != j, "pair_distance_correction: i and j must differ");
  return detail::correction_of(h.values(i, j));
}

struct PolicyViolation {
  int i = 0, j = 0;
  double inner_product = 0.0;
  double bound = 0.0;
};

struct ValidationReport {
  std::vector<std::pair<int, int>> duplicate_rows;
  std::vector<PolicyViolation> policy_violations;
  std::vector<std::pair<int, int>> duplicate_columns;
  std::vector<std::pair<int, int>> complementary_columns;

  /// Distinct codewords are the only hard requirement.
  bool valid() const { return duplicate_rows.empty(); }
  bool has_warnings() const {
    return !policy_violations.empty() || !duplicate_columns.empty() || !complementary_columns.empty();
  }
};

/// Indices are zero-based; pairs are (earlier, later).
inline ValidationReport validate_coding(const CodingMatrix& x, const CorrectionPolicy* policy = nullptr) {
  ValidationReport rep;
  const Matrix xr = x.real();
  const Matrix rows = xr * xr.transpose();
  for (int i = 0; i < x.k(); ++i)
    for (int j = i + 1; j < x.k(); ++j) {
      if (rows(i, j) == x.l()) rep.duplicate_rows.emplace_back(i, j);
      if (policy && rows(i, j) > policy->values(i, j))
        rep.policy_violations.push_back({i, j, rows(i, j), policy->values(i, j)});
    }
  const Matrix cols = xr.transpose() * xr;
  for (int a = 0; a < x.l(); ++a)
    for (int b = a + 1; b < x.l(); ++b) {
      if (cols(a, b) == x.k()) rep.duplicate_columns.emplace_back(a, b);
      if (cols(a, b) == -x.k()) rep.complementary_columns.emplace_back(a, b);
    }
  return rep;
}

inline ValidationReport validate_coding(const CodingMatrix& x, const CorrectionPolicy& policy) {
  require(policy.k() == x.k(), "validate_coding: policy is for " + std::to_string(policy.k()) + " classes, coding has " +
                                   std::to_string(x.k()));
  return validate_coding(x, &policy);
}

namespace detail {
inline void check_codeword(const CodingMatrix& x, const PredictionCodeword& y) {
  require(y.size() == x.l(), "decode: codeword has " + std::to_string(y.size()) + " bits, coding has l = " +
                                 std::to_string(x.l()));
}
}  // namespace detail

/// Nearest codeword by disagreement count; ties go to the smallest index.
inline int decode_hamming(const CodingMatrix& x, const PredictionCodeword& y) {
  detail::check_codeword(x, y);
  int best = 0, best_dist = std::numeric_limits<int>::max();
  for (int i = 0; i < x.k(); ++i) {
    int dist = 0;
    for (int j = 0; j < x.l(); ++j) dist += x(i, j) != y(j);
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

/// Row-normalized accuracies; an all-zero row becomes uniform.
inline WeightMatrix weight_matrix(const CodingMatrix& x, const Matrix& per_class_accuracy) {
  require(per_class_accuracy.rows() == x.k() && per_class_accuracy.cols() == x.l(),
          "weight_matrix: accuracy matrix must be " + shape_str(x.k(), x.l()));
  require((per_class_accuracy.array() >= 0.0).all() && (per_class_accuracy.array() <= 1.0).all(),
          "weight_matrix: accuracies must lie in [0, 1]");
  WeightMatrix w{per_class_accuracy};
  for (Eigen::Index i = 0; i < w.values.rows(); ++i) {
    const double s = w.values.row(i).sum();
    if (s > 0.0)
      w.values.row(i) /= s;
    else
      w.values.row(i).setConstant(1.0 / static_cast<double>(x.l()));
  }
  return w;
}

/// argmin_i sum_j w_ij (1 - x_ij y_j) / 2; ties go to the smallest index.
inline int decode_loss_weighted(const CodingMatrix& x, const WeightMatrix& w, const PredictionCodeword& y) {
  detail::check_codeword(x, y);
  require(w.values.rows() == x.k() && w.values.cols() == x.l(), "decode: weight matrix shape mismatch");
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.k(); ++i) {
    double loss = 0.0;
    for (int j = 0; j < x.l(); ++j) loss += w.values(i, j) * (1 - x(i, j) * y(j)) / 2.0;
    if (loss < best_loss) {
      best_loss = loss;
      best = i;
    }
  }
  return best;
}

inline CodingMatrix ova_coding(int k) {
  require(k >= 2, "ova: k must be >= 2");
  IntMatrix v = IntMatrix::Constant(k, k, -1);
  v.diagonal().setConstant(1);
  return CodingMatrix(std::move(v));
}

namespace detail {

inline IntMatrix random_sign_matrix(int k, int l, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  IntMatrix v(k, l);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < l; ++j) v(i, j) = coin(rng) ? 1 : -1;
  return v;
}

inline bool distinct_rows(const IntMatrix& v) {
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = i + 1; j < v.rows(); ++j)
      if (v.row(i) == v.row(j)) return false;
  return true;
}

}  // namespace detail

inline int dense_code_length(int k) {
  return static_cast<int>(std::ceil(10.0 * std::log2(static_cast<double>(k)) - 1e-12));
}

struct RandomCodingResult {
  CodingMatrix coding;
  bool success = true;
  int min_distance = 0;
  int attempts = 0;
};

/// Best of `pool` random dense codes of length ceil(10 log2 k) by minimum
/// codeword distance; the first draw wins ties. A draw with repeated rows is
/// redrawn and does not count toward the pool.
inline RandomCodingResult dense_random_coding(int k, int pool, std::uint64_t seed) {
  require(k >= 2, "dense: k must be >= 2");
  require(pool >= 1, "dense: pool must be >= 1");
  const int l = dense_code_length(k);
  std::mt19937_64 rng(seed);
  RandomCodingResult best;
  best.min_distance = -1;
  for (int p = 0; p < pool; ++p) {
    IntMatrix v;
    do {
      v = detail::random_sign_matrix(k, l, rng);
    } while (!detail::distinct_rows(v));
    CodingMatrix c(std::move(v));
    const int md = min_off_diagonal(hamming_profile(c));
    if (md > best.min_distance) {
      best.coding = std::move(c);
      best.min_distance = md;
    }
  }
  best.attempts = pool;
  return best;
}

/// Rejection sampling until min off-diagonal H >= c. On failure returns the
/// best candidate seen with success = false.
inline RandomCodingResult fixed_correction_random_coding(int k, int l, int c, std::uint64_t seed, int attempts) {
  require(k >= 2, "rand: k must be >= 2");
  require(l >= 1 && (l >= 31 || (1L << l) >= k), "rand: 2^l must be >= k");
  require(c >= 1, "rand: minimum distance must be >= 1");
  require(attempts >= 1, "rand: attempts must be >= 1");
  std::mt19937_64 rng(seed);
  RandomCodingResult best;
  best.min_distance = -1;
  best.success = false;
  for (int a = 1; a <= attempts; ++a) {
    CodingMatrix cand(detail::random_sign_matrix(k, l, rng));
    const int md = min_off_diagonal(hamming_profile(cand));
    if (md > best.min_distance) {
      best.coding = std::move(cand);
      best.min_distance = md;
    }
    best.attempts = a;
    if (best.min_distance >= c) {
      best.success = true;
      break;
    }
  }
  return best;
}

}  // namespace ecfkit
