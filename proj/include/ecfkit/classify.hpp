#pragma once

#include "ecfkit/core.hpp"
#include "ecfkit/data.hpp"
#include "ecfkit/ecoc.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

namespace ecfkit {

enum class LearnerKind { ReferenceLogistic };

struct BinaryLearnerSpec {
  LearnerKind kind = LearnerKind::ReferenceLogistic;
  /// L2 penalty on the weights (not the bias).
  double lambda = 1e-3;
  int iterations = 500;
  bool standardize = true;

  void validate() const {
    require(lambda >= 0.0, "learner: lambda must be >= 0");
    require(iterations >= 1, "learner: iterations must be >= 1");
  }
};

/// Linear scorer on (optionally) z-scored features; the sign is the label.
struct BinaryPredictor {
  Vector mean;
  Vector scale;
  Vector weights;
  double bias = 0.0;
  /// Training labels had a single sign; the predictor always returns it.
  bool constant = false;

  double margin(const Eigen::Ref<const Vector>& sample) const {
    require(sample.size() == weights.size(), "predict: sample has " + std::to_string(sample.size()) +
                                                 " features, model expects " + std::to_string(weights.size()));
    if (constant) return bias;
    return weights.dot((sample - mean).cwiseQuotient(scale)) + bias;
  }
  int predict(const Eigen::Ref<const Vector>& sample) const { return margin(sample) >= 0.0 ? 1 : -1; }
};

namespace detail {

// Mean logistic loss plus lambda/2 |w|^2; params = (w, b).
inline double logistic_loss(const Matrix& z, const Vector& y, double lambda, const Vector& params) {
  const auto d = z.cols();
  const Vector m = (z * params.head(d)).array() + params(d);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double t = -y(i) * m(i);
    loss += t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  }
  return loss / static_cast<double>(z.rows()) + 0.5 * lambda * params.head(d).squaredNorm();
}

inline Vector logistic_gradient(const Matrix& z, const Vector& y, double lambda, const Vector& params) {
  const auto d = z.cols();
  const auto n = static_cast<double>(z.rows());
  const Vector m = (z * params.head(d)).array() + params(d);
  Vector coef(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double t = y(i) * m(i);
    // -y * sigmoid(-t), written to stay finite for large |t|
    coef(i) = -y(i) * (t >= 0.0 ? std::exp(-t) / (1.0 + std::exp(-t)) : 1.0 / (1.0 + std::exp(t)));
  }
  Vector g(d + 1);
  g.head(d) = z.transpose() * coef / n + lambda * params.head(d);
  g(d) = coef.sum() / n;
  return g;
}

// Gradient Lipschitz bound lambda_max([Z 1]^T [Z 1]) / (4n) + lambda.
inline double logistic_smoothness(const Matrix& z, double lambda) {
  Matrix aug(z.rows(), z.cols() + 1);
  aug << z, Vector::Ones(z.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(aug.transpose() * aug, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff() / (4.0 * static_cast<double>(z.rows())) + lambda;
}

struct Standardized {
  Matrix z;
  Vector mean, scale;
};

inline Standardized standardize(const Matrix& features, bool enabled) {
  Standardized s;
  const auto d = features.cols();
  s.mean = Vector::Zero(d);
  s.scale = Vector::Ones(d);
  if (enabled) {
    s.mean = features.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sd = std::sqrt((features.col(j).array() - s.mean(j)).square().mean());
      if (sd > 0.0) s.scale(j) = sd;
    }
  }
  s.z = (features.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
  return s;
}

}  // namespace detail

/// L2-regularized logistic regression by full-batch gradient descent with
/// step 1/L. Labels are +1/-1.
inline BinaryPredictor fit_binary(const BinaryLearnerSpec& spec, const Matrix& features, const IntVector& labels) {
  spec.validate();
  require(features.rows() >= 1, "fit_binary: no samples");
  require(labels.size() == features.rows(), "fit_binary: " + std::to_string(labels.size()) + " labels for " +
                                                std::to_string(features.rows()) + " samples");
  require((labels.array().abs() == 1).all(), "fit_binary: labels must be +1/-1");
  const auto d = features.cols();
  BinaryPredictor model;
  if ((labels.array() == labels(0)).all()) {
    model.mean = Vector::Zero(d);
    model.scale = Vector::Ones(d);
    model.weights = Vector::Zero(d);
    model.bias = labels(0);
    model.constant = true;
    return model;
  }

  auto st = detail::standardize(features, spec.standardize);
  const Vector y = labels.cast<double>();
  const double step = 1.0 / detail::logistic_smoothness(st.z, spec.lambda);
  Vector params = Vector::Zero(d + 1);
  for (int it = 0; it < spec.iterations; ++it) params -= step * detail::logistic_gradient(st.z, y, spec.lambda, params);

  model.mean = std::move(st.mean);
  model.scale = std::move(st.scale);
  model.weights = params.head(d);
  model.bias = params(d);
  return model;
}

enum class Decoding { Hamming, LossWeighted };

inline std::string to_string(Decoding d) { return d == Decoding::Hamming ? "hamming" : "lw"; }

struct EnsembleModel {
  CodingMatrix coding;
  std::vector<BinaryPredictor> dichotomizers;
  WeightMatrix weights;
  BinaryLearnerSpec train_config;
  /// Per-class training accuracy of each dichotomizer (k x l).
  Matrix class_accuracy;
};

/// One predictor per coding column, trained on the samples relabelled by
/// their class's bit in that column. LWD weights come from per-class
/// training accuracies.
inline EnsembleModel train_ensemble(const CodingMatrix& x, const LabeledDataset& data, const BinaryLearnerSpec& spec) {
  data.validate();
  require(x.k() == data.k, "train_ensemble: coding has " + std::to_string(x.k()) + " classes, data has " +
                               std::to_string(data.k));
  require(x.l() >= 1, "train_ensemble: coding has no columns");
  EnsembleModel model;
  model.coding = x;
  model.train_config = spec;
  model.class_accuracy = Matrix::Zero(x.k(), x.l());
  const auto counts = data.class_counts();
  for (int j = 0; j < x.l(); ++j) {
    IntVector y(data.size());
    for (Eigen::Index s = 0; s < data.size(); ++s) y(s) = x(data.labels(s) - 1, j);
    try {
      model.dichotomizers.push_back(fit_binary(spec, data.features, y));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("dichotomizer " + std::to_string(j + 1) + ": " + e.what());
    }
    const auto& h = model.dichotomizers.back();
    for (Eigen::Index s = 0; s < data.size(); ++s)
      if (h.predict(data.features.row(s).transpose()) == y(s)) model.class_accuracy(data.labels(s) - 1, j) += 1.0;
  }
  for (int i = 0; i < x.k(); ++i) model.class_accuracy.row(i) /= static_cast<double>(counts[static_cast<std::size_t>(i)]);
  model.weights = weight_matrix(x, model.class_accuracy);
  return model;
}

inline PredictionCodeword predict_codeword(const EnsembleModel& model, const Eigen::Ref<const Vector>& sample) {
  PredictionCodeword y(static_cast<Eigen::Index>(model.dichotomizers.size()));
  for (std::size_t j = 0; j < model.dichotomizers.size(); ++j)
    y(static_cast<Eigen::Index>(j)) = model.dichotomizers[j].predict(sample);
  return y;
}

/// Zero-based class index.
inline int predict(const EnsembleModel& model, const Eigen::Ref<const Vector>& sample, Decoding decoding) {
  const auto y = predict_codeword(model, sample);
  return decoding == Decoding::Hamming ? decode_hamming(model.coding, y)
                                       : decode_loss_weighted(model.coding, model.weights, y);
}

/// Builds the coding for one fold from that fold's training data only.
struct CodingSource {
  std::string name;
  std::function<CodingMatrix(const LabeledDataset& train, int fold)> make;
};

struct SamplePrediction {
  Eigen::Index sample = 0;
  int fold = 0;
  int truth = 0;      // 1..k
  int predicted = 0;  // 1..k
};

struct EvaluationReport {
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  /// Population standard deviation over folds.
  double std = 0.0;
  Decoding decoding = Decoding::Hamming;
  std::string coding;
  std::vector<int> fold_dichotomies;
  double dichotomies = 0.0;
  std::vector<SamplePrediction> predictions;
};

inline void summarize(EvaluationReport& r) {
  const auto f = static_cast<double>(r.fold_accuracies.size());
  r.mean = std::accumulate(r.fold_accuracies.begin(), r.fold_accuracies.end(), 0.0) / f;
  double var = 0.0;
  for (double a : r.fold_accuracies) var += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(var / f);
  r.dichotomies = std::accumulate(r.fold_dichotomies.begin(), r.fold_dichotomies.end(), 0.0) / f;
}

/// Stratified k-fold evaluation (plain leave-one-out when folds equals the
/// sample count). Folds may run on up to `threads` threads;
/// results do not depend on the thread count.
inline EvaluationReport cross_validate(const LabeledDataset& data, const CodingSource& source,
                                       const BinaryLearnerSpec& spec, Decoding decoding, int folds,
                                       std::uint64_t seed, int threads = 1) {
  data.validate();
  spec.validate();
  require(static_cast<bool>(source.make), "cross_validate: empty coding source");
  require(folds >= 2 && folds <= data.size(), "cross_validate: folds must lie in [2, n]");
  // folds == n is leave-one-out, which cannot be stratified
  std::vector<int> assignment(static_cast<std::size_t>(data.size()));
  if (folds == data.size())
    std::iota(assignment.begin(), assignment.end(), 0);
  else
    assignment = stratified_folds(data.labels, folds, seed);

  EvaluationReport rep;
  rep.decoding = decoding;
  rep.coding = source.name;
  rep.fold_accuracies.assign(static_cast<std::size_t>(folds), 0.0);
  rep.fold_dichotomies.assign(static_cast<std::size_t>(folds), 0);
  std::vector<std::vector<SamplePrediction>> per_fold(static_cast<std::size_t>(folds));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(folds));

  auto run_fold = [&](int f) {
    try {
      std::vector<Eigen::Index> train_rows, test_rows;
      for (std::size_t i = 0; i < assignment.size(); ++i)
        (assignment[i] == f ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
      const auto train = data.subset(train_rows);
      const auto model = train_ensemble(source.make(train, f), train, spec);
      int correct = 0;
      auto& out = per_fold[static_cast<std::size_t>(f)];
      for (auto row : test_rows) {
        const int guess = predict(model, data.features.row(row).transpose(), decoding) + 1;
        correct += guess == data.labels(row);
        out.push_back({row, f, data.labels(row), guess});
      }
      rep.fold_accuracies[static_cast<std::size_t>(f)] =
          static_cast<double>(correct) / static_cast<double>(test_rows.size());
      rep.fold_dichotomies[static_cast<std::size_t>(f)] = model.coding.l();
    } catch (...) {
      errors[static_cast<std::size_t>(f)] = std::current_exception();
    }
  };

  const int workers = std::max(1, std::min(threads, folds));
  if (workers == 1) {
    for (int f = 0; f < folds; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int f = w; f < folds; f += workers) run_fold(f);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& fp : per_fold) rep.predictions.insert(rep.predictions.end(), fp.begin(), fp.end());
  std::sort(rep.predictions.begin(), rep.predictions.end(),
            [](const SamplePrediction& a, const SamplePrediction& b) { return a.sample < b.sample; });
  summarize(rep);
  return rep;
}

}  // namespace ecfkit
