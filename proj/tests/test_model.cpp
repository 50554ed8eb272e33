#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hetsgd/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <vector>

using namespace hetsgd;

namespace {

Dataset synthetic(int dim, Eigen::Index count, Real noise, std::uint64_t seed = 42,
                  Real scale = 1.0) {
  RngStream rng(seed, stream_id::kDataset);
  return generate_synthetic(dim, count, noise, rng, scale).first;
}

SampleBatch full_index_batch(const Dataset& data) {
  SampleBatch batch;
  for (Eigen::Index i = 0; i < data.size(); ++i) batch.indices.push_back(i);
  return batch;
}

// Central finite differences of batch loss * M against grad_sum.
Real max_fd_error(const Model& model, const ParamVector& x, const SampleBatch& batch,
                  const Dataset& data) {
  const Real h = 1e-6;
  const Real m = static_cast<Real>(batch.size());
  const ParamVector g = grad_sum(model, x, batch, data);
  Real worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    ParamVector lo = x;
    ParamVector hi = x;
    lo(i) -= h;
    hi(i) += h;
    const Real fd = (loss(model, hi, batch, data) - loss(model, lo, batch, data)) * m / (2 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(g(i))));
  }
  return worst;
}

Real logistic_hessian_bound(const Dataset& data) {
  const Eigen::MatrixXd gram =
      data.features.transpose() * data.features / static_cast<Real>(data.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  return eig.eigenvalues().maxCoeff() / 4.0;
}

}  // namespace

TEST_CASE("noise-free synthetic data is separable by the generating weights") {
  RngStream rng(7, stream_id::kDataset);
  const auto [data, truth] = generate_synthetic(4, 100, 0.0, rng);
  const Model model{ModelKind::kLogistic, 4, 0};
  CHECK(accuracy(model, truth, data) == 1.0);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  const Dataset a = synthetic(3, 50, 0.1, 99);
  const Dataset b = synthetic(3, 50, 0.1, 99);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
}

TEST_CASE("empirical label-flip rate tracks the noise parameter") {
  RngStream rng(2024, stream_id::kDataset);
  const auto [data, truth] = generate_synthetic(2, 10000, 0.05, rng);
  Eigen::Index flipped = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Real clean = (truth.dot(data.features.row(i)) >= 0.0) ? 1.0 : -1.0;
    if (data.labels(i) != clean) ++flipped;
  }
  const Real rate = static_cast<Real>(flipped) / static_cast<Real>(data.size());
  CHECK(std::abs(rate - 0.05) < 0.01);
}

TEST_CASE("logistic loss at zero parameters is ln 2") {
  const Dataset data = synthetic(6, 40, 0.1);
  const Model model{ModelKind::kLogistic, 6, 0};
  const ParamVector x = ParamVector::Zero(6);
  CHECK(loss(model, x, full_index_batch(data), data) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("a confidently correct sample has near-zero loss") {
  Dataset data;
  data.features.resize(1, 2);
  data.features << 10.0, 0.0;
  data.labels.resize(1);
  data.labels << 1.0;
  const Model model{ModelKind::kLogistic, 2, 0};
  ParamVector x(2);
  x << 1.0, 0.0;
  SampleBatch batch;
  batch.indices = {0};
  CHECK(loss(model, x, batch, data) < 0.01);
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  const Dataset data = synthetic(4, 10, 0.2);
  for (const Model model : {Model{ModelKind::kLogistic, 4, 0}, Model{ModelKind::kTwoLayerMlp, 4, 3}}) {
    RngStream rng(5, stream_id::kParamInit);
    const ParamVector x = init_params(model, rng);
    SampleBatch pair;
    pair.indices = {2, 7};
    SampleBatch first;
    first.indices = {2};
    SampleBatch second;
    second.indices = {7};
    const Real mean = (loss(model, x, first, data) + loss(model, x, second, data)) / 2.0;
    CHECK(loss(model, x, pair, data) == doctest::Approx(mean).epsilon(1e-14));
  }
}

TEST_CASE("grad_sum of an empty batch is the zero vector") {
  const Dataset data = synthetic(3, 10, 0.0);
  const Model model{ModelKind::kLogistic, 3, 0};
  const ParamVector g = grad_sum(model, ParamVector::Ones(3), SampleBatch{}, data);
  CHECK(g == ParamVector::Zero(3));
}

TEST_CASE("grad_sum is additive over batch concatenation") {
  const Dataset data = synthetic(5, 30, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  RngStream rng(8, 0);
  ParamVector x(5);
  for (Eigen::Index i = 0; i < 5; ++i) x(i) = rng.normal();
  SampleBatch b1;
  b1.indices = {0, 3, 3, 7};
  SampleBatch b2;
  b2.indices = {1, 7, 29};
  SampleBatch joined = b1;
  joined.indices.insert(joined.indices.end(), b2.indices.begin(), b2.indices.end());
  const ParamVector split_sum = grad_sum(model, x, b1, data) + grad_sum(model, x, b2, data);
  CHECK((grad_sum(model, x, joined, data) - split_sum).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("grad_sum matches central finite differences for both model kinds") {
  const Dataset data = synthetic(5, 40, 0.1);
  RngStream rng(31, 0);
  for (const Model model : {Model{ModelKind::kLogistic, 5, 0}, Model{ModelKind::kTwoLayerMlp, 5, 4}}) {
    for (int rep = 0; rep < 5; ++rep) {
      ParamVector x(model.param_count());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 0.5 * rng.normal();
      const SampleBatch batch = draw_batch(rng, 8, data.size());
      CHECK(max_fd_error(model, x, batch, data) < 1e-5);
    }
  }
}

TEST_CASE("full_gradient equals the normalized grad_sum over the full index set") {
  const Dataset data = synthetic(4, 25, 0.1);
  const Model model{ModelKind::kLogistic, 4, 0};
  ParamVector x(4);
  x << 0.3, -0.2, 0.9, 0.0;
  const ParamVector direct =
      grad_sum(model, x, full_index_batch(data), data) / static_cast<Real>(data.size());
  CHECK((full_gradient(model, x, data) - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exhaustive single-sample average equals full_gradient to 1e-12") {
  const Dataset data = synthetic(4, 50, 0.1);
  for (const Model model : {Model{ModelKind::kLogistic, 4, 0}, Model{ModelKind::kTwoLayerMlp, 4, 3}}) {
    RngStream rng(17, stream_id::kParamInit);
    const ParamVector x = init_params(model, rng);
    ParamVector acc = ParamVector::Zero(model.param_count());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      SampleBatch one;
      one.indices = {i};
      acc += grad_sum(model, x, one, data);
    }
    acc /= static_cast<Real>(data.size());
    CHECK((acc - full_gradient(model, x, data)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("long full-batch descent reaches a near-stationary point") {
  const Dataset data = synthetic(5, 200, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  const Real step = 1.0 / logistic_hessian_bound(data);
  ParamVector x = ParamVector::Zero(5);
  for (int i = 0; i < 100000; ++i) x -= step * full_gradient(model, x, data);
  CHECK(std::sqrt(l2_norm_sq(full_gradient(model, x, data))) < 1e-6);
}

TEST_CASE("Monte-Carlo single-sample gradients are unbiased") {
  const Dataset data = synthetic(5, 60, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  ParamVector x(5);
  x << 0.4, -0.1, 0.2, 0.7, -0.3;
  const ParamVector target = full_gradient(model, x, data);
  RngStream rng(606, 0);
  const int n = 10000;
  ParamVector sum = ParamVector::Zero(5);
  ParamVector sum_sq = ParamVector::Zero(5);
  for (int i = 0; i < n; ++i) {
    const SampleBatch one = draw_batch(rng, 1, data.size());
    const ParamVector g = grad_sum(model, x, one, data);
    sum += g;
    sum_sq += hadamard(g, g);
  }
  const ParamVector mean = sum / n;
  for (Eigen::Index c = 0; c < 5; ++c) {
    const Real var = sum_sq(c) / n - mean(c) * mean(c);
    const Real three_se = 3.0 * std::sqrt(std::max(var, 0.0)) / 100.0;
    CHECK(std::abs(mean(c) - target(c)) <= three_se + 1e-12);
  }
}

TEST_CASE("sigma estimate is zero when every sample is identical") {
  Dataset data;
  data.features = Eigen::MatrixXd::Ones(8, 3);
  data.labels = Eigen::VectorXd::Ones(8);
  const Model model{ModelKind::kLogistic, 3, 0};
  ParamVector x(3);
  x << 0.1, 0.2, 0.3;
  RngStream rng(4, stream_id::kEstimators);
  CHECK(estimate_sigma_sq(model, x, data, 100, rng) == 0.0);
}

TEST_CASE("sigma estimate is stable under doubling the sample count") {
  const Dataset data = synthetic(5, 100, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  ParamVector x(5);
  x << 0.5, -0.5, 0.2, 0.1, -0.8;
  RngStream a(12, stream_id::kEstimators);
  RngStream b(12, stream_id::kEstimators);
  const Real small = estimate_sigma_sq(model, x, data, 2000, a);
  const Real big = estimate_sigma_sq(model, x, data, 4000, b);
  CHECK(std::abs(big - small) / small < 0.10);
}

TEST_CASE("sigma estimate matches the exhaustive variance on a symmetric dataset") {
  Dataset data;
  data.features.resize(4, 2);
  data.features << 1, 0, -1, 0, 0, 1, 0, -1;
  data.labels = Eigen::VectorXd::Ones(4);
  const Model model{ModelKind::kLogistic, 2, 0};
  const ParamVector x = ParamVector::Zero(2);
  const Real exhaustive = exhaustive_sigma_sq(model, x, data);
  RngStream rng(3, stream_id::kEstimators);
  const Real sampled = estimate_sigma_sq(model, x, data, 64, rng);
  CHECK(std::abs(sampled - exhaustive) < 1e-9);
  CHECK(exhaustive == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lipschitz estimate is exact for a constant-curvature gradient") {
  const Real c = 2.5;
  RngStream rng(21, stream_id::kEstimators);
  const Real est = estimate_lipschitz([&](const ParamVector& x) { return ParamVector(c * x); },
                                      4, 10, 1.0, rng);
  CHECK(std::abs(est - c) < 1e-9);
}

TEST_CASE("lipschitz estimate is non-decreasing in the probe count") {
  const Dataset data = synthetic(4, 80, 0.1);
  const Model model{ModelKind::kLogistic, 4, 0};
  RngStream a(9, stream_id::kEstimators);
  RngStream b(9, stream_id::kEstimators);
  const Real few = estimate_lipschitz(model, data, 10, 2.0, a);
  const Real many = estimate_lipschitz(model, data, 50, 2.0, b);
  CHECK(many >= few);
}

TEST_CASE("lipschitz estimate respects the logistic Hessian bound") {
  const Dataset data = synthetic(5, 300, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  RngStream rng(14, stream_id::kEstimators);
  const Real est = estimate_lipschitz(model, data, 200, 2.0, rng);
  CHECK(est > 0.0);
  CHECK(est <= logistic_hessian_bound(data) + 1e-6);
}

TEST_CASE("lipschitz estimate is stable across seeds") {
  const Dataset data = synthetic(5, 200, 0.1);
  const Model model{ModelKind::kLogistic, 5, 0};
  RngStream a(100, stream_id::kEstimators);
  RngStream b(200, stream_id::kEstimators);
  const Real ea = estimate_lipschitz(model, data, 100, 2.0, a);
  const Real eb = estimate_lipschitz(model, data, 100, 2.0, b);
  CHECK(std::isfinite(ea));
  CHECK(ea / eb < 2.0);
  CHECK(eb / ea < 2.0);
}

TEST_CASE("parameter layout sizes") {
  CHECK(Model{ModelKind::kLogistic, 7, 0}.param_count() == 7);
  CHECK(Model{ModelKind::kTwoLayerMlp, 4, 3}.param_count() == 3 * 4 + 2 * 3 + 1);
}

TEST_CASE("initial parameters are zeros for logistic and seeded normals for the mlp") {
  RngStream a(5, stream_id::kParamInit);
  CHECK(init_params(Model{ModelKind::kLogistic, 6, 0}, a) == ParamVector::Zero(6));
  RngStream b(5, stream_id::kParamInit);
  RngStream c(5, stream_id::kParamInit);
  const Model mlp{ModelKind::kTwoLayerMlp, 6, 4};
  const ParamVector pb = init_params(mlp, b);
  CHECK(pb == init_params(mlp, c));
  CHECK(l2_norm_sq(pb) > 0.0);
}

TEST_CASE("model kind names round-trip") {
  CHECK(model_kind_from_string("logistic") == ModelKind::kLogistic);
  CHECK(model_kind_from_string("mlp") == ModelKind::kTwoLayerMlp);
  CHECK(to_string(ModelKind::kLogistic) == "logistic");
  CHECK(to_string(ModelKind::kTwoLayerMlp) == "mlp");
  CHECK_THROWS_AS(model_kind_from_string("resnet"), std::invalid_argument);
}

TEST_CASE("dataset csv round-trips exactly") {
  const Dataset data = synthetic(3, 20, 0.1);
  const std::string path = "tmp_dataset_roundtrip.csv";
  dataset_to_csv(data, path);
  const Dataset back = dataset_from_csv(path);
  CHECK(back.features == data.features);
  CHECK(back.labels == data.labels);
  std::remove(path.c_str());
}
