#include "ecfkit/classify.hpp"
#include "ecfkit/pipeline.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ecfkit;

namespace {

LabeledDataset blobs(const Matrix& means, int per_class, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  const auto k = static_cast<int>(means.rows());
  LabeledDataset ds;
  ds.k = k;
  ds.features.resize(k * per_class, means.cols());
  ds.labels.resize(k * per_class);
  for (int c = 0; c < k; ++c) {
    ds.class_names.push_back(std::to_string(c + 1));
    for (int s = 0; s < per_class; ++s) {
      const auto row = c * per_class + s;
      for (Eigen::Index j = 0; j < means.cols(); ++j) ds.features(row, j) = means(c, j) + g(rng);
      ds.labels(row) = c + 1;
    }
  }
  return ds;
}

Matrix triangle() {
  Matrix m(3, 2);
  m << 0, 0, 4, 0, 2, 3.5;
  return m;
}

BinaryPredictor constant_predictor(int sign, Eigen::Index dim) {
  BinaryPredictor p;
  p.mean = Vector::Zero(dim);
  p.scale = Vector::Ones(dim);
  p.weights = Vector::Zero(dim);
  p.bias = sign;
  p.constant = true;
  return p;
}

}  // namespace

TEST(FitBinary, SeparableOneDimensional) {
  Matrix x(40, 1);
  IntVector y(40);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (int i = 0; i < 40; ++i) {
    y(i) = i % 2 ? 1 : -1;
    x(i, 0) = y(i) + jitter(rng);
  }
  const auto h = fit_binary(BinaryLearnerSpec{}, x, y);
  EXPECT_FALSE(h.constant);
  for (int i = 0; i < 40; ++i) EXPECT_EQ(h.predict(x.row(i).transpose()), y(i));
}

TEST(FitBinary, SingleSignIsConstant) {
  const auto h = fit_binary(BinaryLearnerSpec{}, Matrix::Random(5, 3), IntVector::Ones(5));
  EXPECT_TRUE(h.constant);
  EXPECT_EQ(h.predict(Vector::Constant(3, -100.0)), 1);
}

TEST(FitBinary, RejectsBadInput) {
  EXPECT_THROW(fit_binary(BinaryLearnerSpec{}, Matrix(0, 2), IntVector(0)), InvalidArgument);
  EXPECT_THROW(fit_binary(BinaryLearnerSpec{}, Matrix::Zero(3, 2), IntVector::Zero(3)), InvalidArgument);
  EXPECT_THROW(fit_binary(BinaryLearnerSpec{}, Matrix::Zero(3, 2), IntVector::Ones(2)), InvalidArgument);
  BinaryLearnerSpec bad;
  bad.iterations = 0;
  EXPECT_THROW(fit_binary(bad, Matrix::Zero(2, 1), IntVector::Ones(2)), InvalidArgument);
}

TEST(FitBinary, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix z(30, 3);
  Vector y(30), params(4);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  for (int i = 0; i < 30; ++i) y(i) = g(rng) > 0 ? 1.0 : -1.0;
  for (int i = 0; i < 4; ++i) params(i) = g(rng);
  const Vector grad = detail::logistic_gradient(z, y, 0.1, params);
  for (int i = 0; i < 4; ++i) {
    Vector hi = params, lo = params;
    hi(i) += 1e-6;
    lo(i) -= 1e-6;
    const double fd = (detail::logistic_loss(z, y, 0.1, hi) - detail::logistic_loss(z, y, 0.1, lo)) / 2e-6;
    EXPECT_NEAR(grad(i), fd, 1e-7);
  }
}

TEST(FitBinary, GradientShrinks) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  Matrix x(200, 4);
  IntVector y(200);
  const Vector truth = (Vector(4) << 0.8, -0.5, 0.3, 0.1).finished();
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = g(rng);
    y(i) = x.row(i).dot(truth) + 0.5 * g(rng) > 0 ? 1 : -1;
  }
  BinaryLearnerSpec spec;
  spec.standardize = false;
  spec.lambda = 1e-2;
  const auto h = fit_binary(spec, x, y);
  Vector params(5);
  params << h.weights, h.bias;
  const Vector yd = y.cast<double>();
  const double start = detail::logistic_gradient(x, yd, spec.lambda, Vector::Zero(5)).norm();
  const double end = detail::logistic_gradient(x, yd, spec.lambda, params).norm();
  EXPECT_LE(end, 1e-2 * start);
  EXPECT_LT(detail::logistic_loss(x, yd, spec.lambda, params), detail::logistic_loss(x, yd, spec.lambda, Vector::Zero(5)));
}

TEST(FitBinary, StandardizesWithTrainingStatistics) {
  Matrix x(4, 2);
  x << 0, 10, 2, 10, 4, 30, 6, 30;
  IntVector y(4);
  y << -1, -1, 1, 1;
  const auto h = fit_binary(BinaryLearnerSpec{}, x, y);
  EXPECT_DOUBLE_EQ(h.mean(0), 3.0);
  EXPECT_DOUBLE_EQ(h.mean(1), 20.0);
  EXPECT_DOUBLE_EQ(h.scale(0), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(h.scale(1), 10.0);
}

TEST(Ensemble, OvaOnSeparatedBlobs) {
  const auto ds = blobs(triangle(), 60, 0.4, 2);
  const auto model = train_ensemble(ova_coding(3), ds, BinaryLearnerSpec{});
  ASSERT_EQ(model.dichotomizers.size(), 3u);
  for (int j = 0; j < 3; ++j) {
    int correct = 0;
    for (Eigen::Index s = 0; s < ds.size(); ++s)
      correct += model.dichotomizers[static_cast<std::size_t>(j)].predict(ds.features.row(s).transpose()) ==
                 ova_coding(3)(ds.labels(s) - 1, j);
    EXPECT_GT(correct / static_cast<double>(ds.size()), 0.9);
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(model.weights.values.row(i).sum(), 1.0, 1e-12);
    EXPECT_EQ(predict(model, triangle().row(i).transpose(), Decoding::Hamming), i);
    EXPECT_EQ(predict(model, triangle().row(i).transpose(), Decoding::LossWeighted), i);
  }
}

TEST(Ensemble, TwoClassesReduceToBinary) {
  Matrix means(2, 2);
  means << 0, 0, 1.5, 0.5;
  const auto ds = blobs(means, 50, 0.7, 3);
  IntMatrix col(2, 1);
  col << 1, -1;
  const auto model = train_ensemble(CodingMatrix(col), ds, BinaryLearnerSpec{});
  IntVector y(ds.size());
  for (Eigen::Index s = 0; s < ds.size(); ++s) y(s) = ds.labels(s) == 1 ? 1 : -1;
  const auto direct = fit_binary(BinaryLearnerSpec{}, ds.features, y);
  for (Eigen::Index s = 0; s < ds.size(); ++s) {
    const Vector v = ds.features.row(s).transpose();
    EXPECT_EQ(predict(model, v, Decoding::Hamming), direct.predict(v) == 1 ? 0 : 1);
  }
}

TEST(Ensemble, ExactCodewordDecodes) {
  std::mt19937_64 rng(8);
  const auto coding = dense_random_coding(5, 10, 3).coding;
  for (int i = 0; i < 5; ++i) {
    EnsembleModel m;
    m.coding = coding;
    for (int j = 0; j < coding.l(); ++j) m.dichotomizers.push_back(constant_predictor(coding(i, j), 2));
    Matrix acc(5, coding.l());
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (Eigen::Index e = 0; e < acc.size(); ++e) acc.data()[e] = u(rng);
    m.weights = weight_matrix(coding, acc);
    EXPECT_EQ(predict(m, Vector::Zero(2), Decoding::Hamming), i);
    EXPECT_EQ(predict(m, Vector::Zero(2), Decoding::LossWeighted), i);
  }
}

TEST(Ensemble, HammingEqualsBruteForceScan) {
  const auto ds = generate_toy(ToyOptions{6, 30, 0.4, 1.0, 0.3}, 5);
  const auto coding = dense_random_coding(6, 20, 1).coding;
  const auto model = train_ensemble(coding, ds, BinaryLearnerSpec{});
  for (Eigen::Index s = 0; s < ds.size(); s += 7) {
    const Vector v = ds.features.row(s).transpose();
    const auto y = predict_codeword(model, v);
    int best = 0, best_d = 1 << 30;
    for (int i = 0; i < coding.k(); ++i) {
      int d = 0;
      for (int j = 0; j < coding.l(); ++j) d += coding(i, j) != y(j);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    EXPECT_EQ(predict(model, v, Decoding::Hamming), best);
  }
}

TEST(Ensemble, RejectsMismatchedCoding) {
  const auto ds = blobs(triangle(), 5, 0.1, 1);
  EXPECT_THROW(train_ensemble(ova_coding(4), ds, BinaryLearnerSpec{}), InvalidArgument);
  const auto model = train_ensemble(ova_coding(3), ds, BinaryLearnerSpec{});
  EXPECT_THROW(predict(model, Vector::Zero(3), Decoding::Hamming), InvalidArgument);
}

TEST(CrossValidate, SeparableData) {
  const auto ds = blobs(triangle(), 40, 0.2, 4);
  const auto rep = cross_validate(ds, ova_source(), BinaryLearnerSpec{}, Decoding::Hamming, 5, 1);
  EXPECT_GE(rep.mean, 0.95);
  ASSERT_EQ(rep.fold_accuracies.size(), 5u);
  EXPECT_EQ(rep.predictions.size(), static_cast<std::size_t>(ds.size()));
  EXPECT_EQ(rep.dichotomies, 3.0);
}

TEST(CrossValidate, SummaryConsistent) {
  const auto ds = generate_toy(ToyOptions{5, 20, 0.5, 1.0, 0.3}, 2);
  const auto rep = cross_validate(ds, ova_source(), BinaryLearnerSpec{}, Decoding::LossWeighted, 4, 9);
  double mean = 0.0;
  for (double a : rep.fold_accuracies) mean += a / 4.0;
  double var = 0.0;
  for (double a : rep.fold_accuracies) var += (a - mean) * (a - mean) / 4.0;
  EXPECT_NEAR(rep.mean, mean, 1e-12);
  EXPECT_NEAR(rep.std, std::sqrt(var), 1e-12);
  int correct = 0;
  for (const auto& p : rep.predictions) correct += p.truth == p.predicted;
  EXPECT_NEAR(static_cast<double>(correct) / static_cast<double>(ds.size()), rep.mean, 1e-12);
}

TEST(CrossValidate, LeaveOneOut) {
  const auto ds = blobs((Matrix(2, 1) << 0, 5).finished(), 3, 0.1, 1);
  const auto rep = cross_validate(ds, ova_source(), BinaryLearnerSpec{}, Decoding::Hamming, 6, 0);
  EXPECT_EQ(rep.fold_accuracies.size(), 6u);
  EXPECT_DOUBLE_EQ(rep.mean, 1.0);
}

TEST(CrossValidate, DeterministicAndThreadIndependent) {
  const auto ds = generate_toy(ToyOptions{6, 25, 0.3, 1.0, 0.3}, 3);
  const auto src = ecf_source(AllocationPolicy::Hard, std::nullopt, 2);
  const auto a = cross_validate(ds, src, BinaryLearnerSpec{}, Decoding::Hamming, 5, 11);
  const auto b = cross_validate(ds, src, BinaryLearnerSpec{}, Decoding::Hamming, 5, 11, 3);
  EXPECT_EQ(a.fold_accuracies, b.fold_accuracies);
  EXPECT_EQ(a.fold_dichotomies, b.fold_dichotomies);
  for (std::size_t i = 0; i < a.predictions.size(); ++i) EXPECT_EQ(a.predictions[i].predicted, b.predictions[i].predicted);
}

TEST(CrossValidate, CodingSeesTrainingRowsOnly) {
  const auto ds = generate_toy(ToyOptions{4, 10, 0.3, 1.0, 0.3}, 1);
  const auto folds = stratified_folds(ds.labels, 5, 7);
  CodingSource spy{"spy", [&](const LabeledDataset& train, int fold) {
                     // recompute the expected training matrix from the fold assignment
                     std::vector<Eigen::Index> rows;
                     for (std::size_t i = 0; i < folds.size(); ++i)
                       if (folds[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
                     EXPECT_EQ(train.features, ds.subset(rows).features);
                     return ova_coding(train.k);
                   }};
  cross_validate(ds, spy, BinaryLearnerSpec{}, Decoding::Hamming, 5, 7);
}

TEST(CrossValidate, UndersizedClass) {
  const auto ds = blobs(triangle(), 3, 0.1, 1);
  EXPECT_THROW(cross_validate(ds, ova_source(), BinaryLearnerSpec{}, Decoding::Hamming, 5, 1), InvalidArgument);
}
