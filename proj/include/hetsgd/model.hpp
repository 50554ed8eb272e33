#pragma once

// Differentiable objectives F(x; xi) over finite sample sets, at desk
// scale: binary logistic regression and a two-layer tanh MLP (smooth, so
// the gradient is Lipschitz). Gradients are exact and verified against
// finite differences in the tests.

#include "hetsgd/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hetsgd {

// Labeled sample set. Labels are -1/+1. Row i of `features` pairs with
// labels[i]; the sample index set is {0, ..., size()-1}.
struct Dataset {
  Eigen::MatrixXd features;  // D x d
  Eigen::VectorXd labels;    // D

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

enum class ModelKind { kLogistic, kTwoLayerMlp };

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind kind);

// Objective family plus its flat parameter layout. For the MLP the layout
// is [W1 (hidden x d, row-major), b1, w2, b2].
struct Model {
  ModelKind kind = ModelKind::kLogistic;
  int input_dim = 0;
  int hidden = 0;  // MLP only

  Eigen::Index param_count() const {
    if (kind == ModelKind::kLogistic) return input_dim;
    return static_cast<Eigen::Index>(hidden) * input_dim + 2 * hidden + 1;
  }
};

// Batch of sample indices drawn i.i.d. with replacement.
struct SampleBatch {
  std::vector<std::int64_t> indices;

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

SampleBatch draw_batch(RngStream& rng, Eigen::Index batch_size, Eigen::Index dataset_size);

// Synthetic binary classification data from a hidden weight vector:
// features are standard normal scaled by `feature_scale`, the clean label
// is sign(w* . x), and each label flips independently with probability
// `noise`. Returns (dataset, ground-truth weights).
std::pair<Dataset, ParamVector> generate_synthetic(int dim, Eigen::Index count, Real noise,
                                                   RngStream& rng, Real feature_scale = 1.0);

// Initial parameters: zeros for logistic, small deterministic normals for
// the MLP (zero would be a saddle).
ParamVector init_params(const Model& model, RngStream& rng);

// Mean loss over the batch.
Real loss(const Model& model, const ParamVector& x, const SampleBatch& batch, const Dataset& data);

// Unnormalized gradient sum over the batch. Averaging happens at the
// aggregation step, which needs raw sums and batch sizes separately.
ParamVector grad_sum(const Model& model, const ParamVector& x, const SampleBatch& batch,
                     const Dataset& data);

// Exact mean gradient over all samples.
ParamVector full_gradient(const Model& model, const ParamVector& x, const Dataset& data);

Real full_loss(const Model& model, const ParamVector& x, const Dataset& data);

// Fraction of samples whose predicted sign matches the label.
Real accuracy(const Model& model, const ParamVector& x, const Dataset& data);

// Empirical E||g(x;xi) - grad f(x)||^2 at x, over `samples` draws.
Real estimate_sigma_sq(const Model& model, const ParamVector& x, const Dataset& data,
                       Eigen::Index samples, RngStream& rng);

// Exhaustive version of the same quantity (all D samples, equal weight).
Real exhaustive_sigma_sq(const Model& model, const ParamVector& x, const Dataset& data);

// Max over probe pairs of ||g(x)-g(y)|| / ||x-y||. A lower bound on the
// Lipschitz constant, used as its working estimate.
Real estimate_lipschitz(const std::function<ParamVector(const ParamVector&)>& gradient,
                        Eigen::Index dim, Eigen::Index probes, Real radius, RngStream& rng);

Real estimate_lipschitz(const Model& model, const Dataset& data, Eigen::Index probes, Real radius,
                        RngStream& rng);

// Headered CSV with feature columns then the label column.
void dataset_to_csv(const Dataset& data, const std::string& path);
Dataset dataset_from_csv(const std::string& path);

}  // namespace hetsgd
