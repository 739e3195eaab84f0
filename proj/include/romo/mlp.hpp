#pragma once

#include "romo/dataset.hpp"
#include "romo/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace romo {

// Gradients of a scalar objective w.r.t. one network's parameters, plus the
// gradient w.r.t. the input(s) that produced them.
struct GradBundle {
  std::vector<Mat> weight_grads;
  std::vector<Vec> bias_grads;
  Vec input_grad;
};

struct BatchGradBundle {
  std::vector<Mat> weight_grads;  // summed over the batch
  std::vector<Vec> bias_grads;
  Mat input_grads;  // per row
};

// Dense feedforward net, tanh hidden layers, identity scalar output.
class Mlp {
public:
  // Glorot-uniform weights, zero biases, deterministic under the caller's rng.
  Mlp(std::vector<int> layer_dims, CounterRng& rng);
  Mlp(std::vector<int> layer_dims, std::vector<Mat> weights, std::vector<Vec> biases);

  int input_dim() const { return layer_dims_.front(); }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int n_layers() const { return static_cast<int>(weights_.size()); }
  std::int64_t parameter_count() const;

  double forward(const Vec& input) const;
  Vec forward_batch(const Mat& inputs) const;

  // Gradients of upstream * forward(input).
  GradBundle backward(const Vec& input, double upstream) const;
  // Parameter grads summed over rows i of upstream[i] * forward(inputs.row(i)).
  BatchGradBundle backward_batch(const Mat& inputs, const Vec& upstream) const;
  // Input gradients only; skips parameter-grad allocation.
  Mat input_gradients(const Mat& inputs, const Vec& upstream) const;

  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }
  std::vector<Mat>& weights() { return weights_; }
  std::vector<Vec>& biases() { return biases_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

private:
  std::vector<int> layer_dims_;
  std::vector<Mat> weights_;  // layer l: (dims[l+1] x dims[l])
  std::vector<Vec> biases_;
};

// Contiguous span of doubles inside some parameter or gradient container.
struct ParamView {
  double* data = nullptr;
  std::ptrdiff_t size = 0;
};

std::vector<ParamView> param_views(Mlp& net);
std::vector<ParamView> grad_views(BatchGradBundle& grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators sized once from the parameter views they will update.
class AdamState {
public:
  explicit AdamState(const std::vector<ParamView>& params);

  std::int64_t step_count() const { return step_; }

  friend void adam_step(std::vector<ParamView> params, std::vector<ParamView> grads,
                        AdamState& state, const AdamConfig& config);

private:
  std::vector<Vec> m_, v_;
  std::int64_t step_ = 0;
};

void adam_step(std::vector<ParamView> params, std::vector<ParamView> grads,
               AdamState& state, const AdamConfig& config);

}  // namespace romo
