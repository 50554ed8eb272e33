#include "hetsgd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hetsgd {

namespace {

// log(1 + exp(t)) without overflow.
Real softplus(Real t) {
  if (t > 0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

Real sigmoid(Real t) { return 1.0 / (1.0 + std::exp(-t)); }

struct MlpView {
  Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::VectorXd> w2;
  Real b2;
};

MlpView mlp_view(const Model& m, const ParamVector& x) {
  const int h = m.hidden;
  const int d = m.input_dim;
  const Real* p = x.data();
  return MlpView{
      {p, h, d},
      {p + static_cast<std::ptrdiff_t>(h) * d, h},
      {p + static_cast<std::ptrdiff_t>(h) * d + h, h},
      p[static_cast<std::ptrdiff_t>(h) * d + 2 * h]};
}

// Per-sample loss and (optionally) gradient accumulation into `acc`.
Real sample_loss_grad(const Model& m, const ParamVector& x, const Dataset& data,
                      Eigen::Index idx, ParamVector* acc) {
  const Real y = data.labels[idx];
  const auto xi = data.features.row(idx);
  if (m.kind == ModelKind::kLogistic) {
    const Real margin = y * xi.dot(x);
    if (acc) {
      const Real coeff = -y * sigmoid(-margin);
      acc->noalias() += coeff * xi.transpose();
    }
    return softplus(-margin);
  }
  // Two-layer MLP: out = w2 . tanh(W1 xi + b1) + b2, logistic loss on y*out.
  const MlpView v = mlp_view(m, x);
  const Eigen::VectorXd z1 = v.W1 * xi.transpose() + v.b1;
  const Eigen::VectorXd a1 = z1.array().tanh().matrix();
  const Real out = v.w2.dot(a1) + v.b2;
  const Real margin = y * out;
  if (acc) {
    const int h = m.hidden;
    const int d = m.input_dim;
    const Real dout = -y * sigmoid(-margin);
    const Eigen::VectorXd dz1 =
        (v.w2.array() * (1.0 - a1.array().square())).matrix() * dout;
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gW1(
        acc->data(), h, d);
    Eigen::Map<Eigen::VectorXd> gb1(acc->data() + static_cast<std::ptrdiff_t>(h) * d, h);
    Eigen::Map<Eigen::VectorXd> gw2(acc->data() + static_cast<std::ptrdiff_t>(h) * d + h, h);
    gW1.noalias() += dz1 * xi;
    gb1.noalias() += dz1;
    gw2.noalias() += dout * a1;
    (*acc)[static_cast<std::ptrdiff_t>(h) * d + 2 * h] += dout;
  }
  return softplus(-margin);
}

Real predict_margin(const Model& m, const ParamVector& x, const Dataset& data, Eigen::Index idx) {
  const auto xi = data.features.row(idx);
  if (m.kind == ModelKind::kLogistic) return xi.dot(x);
  const MlpView v = mlp_view(m, x);
  const Eigen::VectorXd a1 = (v.W1 * xi.transpose() + v.b1).array().tanh().matrix();
  return v.w2.dot(a1) + v.b2;
}

void check_model_dim(const Model& m, const ParamVector& x, const char* where) {
  if (x.size() != m.param_count())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(x.size()) + " vs model " +
                                std::to_string(m.param_count()) + ")");
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp") return ModelKind::kTwoLayerMlp;
  throw std::invalid_argument("unknown model kind: " + name);
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kLogistic ? "logistic" : "mlp";
}

SampleBatch draw_batch(RngStream& rng, Eigen::Index batch_size, Eigen::Index dataset_size) {
  require(dataset_size >= 1, "draw_batch: empty dataset");
  SampleBatch b;
  b.indices.reserve(static_cast<std::size_t>(batch_size));
  for (Eigen::Index i = 0; i < batch_size; ++i)
    b.indices.push_back(static_cast<std::int64_t>(
        rng.uniform_index(static_cast<std::uint64_t>(dataset_size))));
  return b;
}

std::pair<Dataset, ParamVector> generate_synthetic(int dim, Eigen::Index count, Real noise,
                                                   RngStream& rng, Real feature_scale) {
  require(dim >= 1 && count >= 1, "generate_synthetic: dim and count must be >= 1");
  require(noise >= 0.0, "generate_synthetic: noise must be >= 0");
  ParamVector truth(dim);
  for (int j = 0; j < dim; ++j) truth[j] = rng.normal();
  Dataset data;
  data.features.resize(count, dim);
  data.labels.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) data.features(i, j) = feature_scale * rng.normal();
    const Real clean = data.features.row(i).dot(truth) >= 0.0 ? 1.0 : -1.0;
    const bool flip = rng.next_double() < noise;
    data.labels[i] = flip ? -clean : clean;
  }
  return {std::move(data), std::move(truth)};
}

ParamVector init_params(const Model& model, RngStream& rng) {
  if (model.kind == ModelKind::kLogistic)
    return ParamVector::Zero(model.param_count());
  ParamVector x(model.param_count());
  const Real scale = 0.5 / std::sqrt(static_cast<Real>(model.input_dim));
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = scale * rng.normal();
  return x;
}

Real loss(const Model& model, const ParamVector& x, const SampleBatch& batch,
          const Dataset& data) {
  check_model_dim(model, x, "loss");
  require(batch.size() >= 1, "loss: empty batch");
  Real total = 0.0;
  for (auto idx : batch.indices) total += sample_loss_grad(model, x, data, idx, nullptr);
  return total / static_cast<Real>(batch.size());
}

ParamVector grad_sum(const Model& model, const ParamVector& x, const SampleBatch& batch,
                     const Dataset& data) {
  check_model_dim(model, x, "grad_sum");
  ParamVector acc = ParamVector::Zero(model.param_count());
  for (auto idx : batch.indices) sample_loss_grad(model, x, data, idx, &acc);
  return acc;
}

ParamVector full_gradient(const Model& model, const ParamVector& x, const Dataset& data) {
  check_model_dim(model, x, "full_gradient");
  if (model.kind == ModelKind::kLogistic) {
    // Vectorized: grad = -X^T (y .* sigmoid(-y .* Xx)) / D.
    const Eigen::VectorXd margins = data.features * x;
    const Eigen::ArrayXd ym = data.labels.array() * margins.array();
    const Eigen::VectorXd coeff =
        (-data.labels.array() * (1.0 / (1.0 + (ym).exp()))).matrix();
    return data.features.transpose() * coeff / static_cast<Real>(data.size());
  }
  ParamVector acc = ParamVector::Zero(model.param_count());
  for (Eigen::Index i = 0; i < data.size(); ++i) sample_loss_grad(model, x, data, i, &acc);
  return acc / static_cast<Real>(data.size());
}

Real full_loss(const Model& model, const ParamVector& x, const Dataset& data) {
  check_model_dim(model, x, "full_loss");
  if (model.kind == ModelKind::kLogistic) {
    const Eigen::VectorXd margins = data.features * x;
    const Eigen::ArrayXd neg_ym = -(data.labels.array() * margins.array());
    // softplus(t) = max(t, 0) + log1p(exp(-|t|))
    return (neg_ym.max(0.0) + (-neg_ym.abs()).exp().log1p()).sum() /
           static_cast<Real>(data.size());
  }
  Real total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    total += sample_loss_grad(model, x, data, i, nullptr);
  return total / static_cast<Real>(data.size());
}

Real accuracy(const Model& model, const ParamVector& x, const Dataset& data) {
  check_model_dim(model, x, "accuracy");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Real m = predict_margin(model, x, data, i);
    const Real pred = m >= 0.0 ? 1.0 : -1.0;
    if (pred == data.labels[i]) ++hits;
  }
  return static_cast<Real>(hits) / static_cast<Real>(data.size());
}

Real estimate_sigma_sq(const Model& model, const ParamVector& x, const Dataset& data,
                       Eigen::Index samples, RngStream& rng) {
  require(samples >= 2, "estimate_sigma_sq: need at least 2 samples");
  const ParamVector mean_grad = full_gradient(model, x, data);
  Real total = 0.0;
  for (Eigen::Index s = 0; s < samples; ++s) {
    const auto idx = static_cast<Eigen::Index>(
        rng.uniform_index(static_cast<std::uint64_t>(data.size())));
    ParamVector g = ParamVector::Zero(model.param_count());
    sample_loss_grad(model, x, data, idx, &g);
    total += (g - mean_grad).squaredNorm();
  }
  return total / static_cast<Real>(samples);
}

Real exhaustive_sigma_sq(const Model& model, const ParamVector& x, const Dataset& data) {
  const ParamVector mean_grad = full_gradient(model, x, data);
  Real total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    ParamVector g = ParamVector::Zero(model.param_count());
    sample_loss_grad(model, x, data, i, &g);
    total += (g - mean_grad).squaredNorm();
  }
  return total / static_cast<Real>(data.size());
}

Real estimate_lipschitz(const std::function<ParamVector(const ParamVector&)>& gradient,
                        Eigen::Index dim, Eigen::Index probes, Real radius, RngStream& rng) {
  require(probes >= 1, "estimate_lipschitz: probes must be >= 1");
  require(radius > 0.0, "estimate_lipschitz: radius must be > 0");
  Real best = 0.0;
  for (Eigen::Index p = 0; p < probes; ++p) {
    ParamVector a(dim), b(dim);
    for (Eigen::Index j = 0; j < dim; ++j) a[j] = rng.normal(0.0, radius);
    for (Eigen::Index j = 0; j < dim; ++j) b[j] = rng.normal(0.0, radius);
    const Real dist = (a - b).norm();
    if (dist == 0.0) continue;
    const Real ratio = (gradient(a) - gradient(b)).norm() / dist;
    if (ratio > best) best = ratio;
  }
  return best;
}

Real estimate_lipschitz(const Model& model, const Dataset& data, Eigen::Index probes, Real radius,
                        RngStream& rng) {
  return estimate_lipschitz(
      [&](const ParamVector& x) { return full_gradient(model, x, data); },
      model.param_count(), probes, radius, rng);
}

void dataset_to_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset_to_csv: cannot open " + path);
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[40];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.features(i, j));
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.labels[i]);
    out << buf << "\n";
  }
  if (!out) throw std::runtime_error("dataset_to_csv: write failed for " + path);
}

Dataset dataset_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset_from_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("dataset_from_csv: empty file " + path);
  Eigen::Index cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) + 1;
  require(cols >= 2, "dataset_from_csv: need at least one feature column");
  std::vector<std::vector<Real>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<Real> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("dataset_from_csv: ragged row in " + path);
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "dataset_from_csv: no data rows in " + path);
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), cols - 1);
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j + 1 < cols; ++j) data.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    data.labels[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(cols - 1)];
  }
  return data;
}

}  // namespace hetsgd
