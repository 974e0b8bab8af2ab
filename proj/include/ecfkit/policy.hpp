#pragma once

#include "ecfkit/core.hpp"

namespace ecfkit {

/// Upper bounds on codeword inner products x^i . x^j; the diagonal is l.
struct CorrectionPolicy {
  Matrix values;
  int l = 1;

  Eigen::Index k() const { return values.rows(); }

  void validate() const {
    require(values.rows() == values.cols(), "policy: matrix is " + shape_str(values.rows(), values.cols()));
    const double len = static_cast<double>(l);
    for (Eigen::Index i = 0; i < k(); ++i)
      for (Eigen::Index j = 0; j < k(); ++j) {
        require(values(i, j) == values(j, i), "policy: matrix is not symmetric");
        if (i == j)
          require(values(i, i) == len, "policy: diagonal must equal l = " + std::to_string(l));
        else
          require(values(i, j) >= -len && values(i, j) <= len - 1.0, "policy: off-diagonal entry outside [-l, l-1]");
      }
  }
};

/// Every pair of codewords must disagree enough that x^i . x^j <= l - c.
inline CorrectionPolicy make_policy(int k, int l, int c) {
  require(k >= 1, "policy: k must be >= 1");
  require(l >= 1, "policy: l must be >= 1");
  require(c >= 1 && c <= l,
          "policy: minimum distance c = " + std::to_string(c) + " must lie in [1, l = " + std::to_string(l) + "]");
  CorrectionPolicy p{Matrix::Constant(k, k, static_cast<double>(l - c)), l};
  p.values.diagonal().setConstant(static_cast<double>(l));
  return p;
}

}  // namespace ecfkit
