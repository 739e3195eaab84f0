#include "romo/mlp.hpp"

#include "romo/errors.hpp"

#include <cmath>
#include <utility>

namespace romo {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ValidationError("network needs at least input and output layers");
  for (int d : dims)
    if (d < 1) throw ValidationError("layer sizes must be positive");
  if (dims.back() != 1) throw ValidationError("output layer must have one unit");
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_dims, CounterRng& rng) : layer_dims_(std::move(layer_dims)) {
  check_dims(layer_dims_);
  const int n = static_cast<int>(layer_dims_.size()) - 1;
  weights_.reserve(static_cast<std::size_t>(n));
  biases_.reserve(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) {
    const int fan_in = layer_dims_[static_cast<std::size_t>(l)];
    const int fan_out = layer_dims_[static_cast<std::size_t>(l) + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = rng.next_uniform(-limit, limit);
    weights_.push_back(std::move(w));
    biases_.push_back(Vec::Zero(fan_out));
  }
}

Mlp::Mlp(std::vector<int> layer_dims, std::vector<Mat> weights, std::vector<Vec> biases)
    : layer_dims_(std::move(layer_dims)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  check_dims(layer_dims_);
  const std::size_t n = layer_dims_.size() - 1;
  if (weights_.size() != n || biases_.size() != n)
    throw ValidationError("layer count does not match layer_dims");
  for (std::size_t l = 0; l < n; ++l) {
    if (weights_[l].rows() != layer_dims_[l + 1] || weights_[l].cols() != layer_dims_[l] ||
        biases_[l].size() != layer_dims_[l + 1])
      throw ValidationError("layer " + std::to_string(l) + " has inconsistent shapes");
    if (!weights_[l].allFinite() || !biases_[l].allFinite())
      throw ValidationError("layer " + std::to_string(l) + " has non-finite parameters");
  }
}

std::int64_t Mlp::parameter_count() const {
  std::int64_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_dims_.size(); ++l)
    count += static_cast<std::int64_t>(layer_dims_[l + 1]) * layer_dims_[l] + layer_dims_[l + 1];
  return count;
}

double Mlp::forward(const Vec& input) const {
  return forward_batch(input.transpose())[0];
}

Vec Mlp::forward_batch(const Mat& inputs) const {
  if (inputs.cols() != input_dim()) throw ValidationError("forward input dimension mismatch");
  Mat act = inputs;
  for (int l = 0; l < n_layers(); ++l) {
    Mat z = act * weights_[static_cast<std::size_t>(l)].transpose();
    z.rowwise() += biases_[static_cast<std::size_t>(l)].transpose();
    act = (l + 1 < n_layers()) ? z.array().tanh().matrix() : std::move(z);
  }
  return act.col(0);
}

BatchGradBundle Mlp::backward_batch(const Mat& inputs, const Vec& upstream) const {
  if (inputs.cols() != input_dim()) throw ValidationError("backward input dimension mismatch");
  if (upstream.size() != inputs.rows())
    throw ValidationError("upstream length must match batch size");

  const int n = n_layers();
  std::vector<Mat> acts(static_cast<std::size_t>(n) + 1);
  acts[0] = inputs;
  for (int l = 0; l < n; ++l) {
    Mat z = acts[static_cast<std::size_t>(l)] * weights_[static_cast<std::size_t>(l)].transpose();
    z.rowwise() += biases_[static_cast<std::size_t>(l)].transpose();
    acts[static_cast<std::size_t>(l) + 1] =
        (l + 1 < n) ? z.array().tanh().matrix() : std::move(z);
  }

  BatchGradBundle out;
  out.weight_grads.resize(static_cast<std::size_t>(n));
  out.bias_grads.resize(static_cast<std::size_t>(n));

  Mat delta = upstream;  // B x 1, dL/dz at the output layer
  for (int l = n - 1; l >= 0; --l) {
    out.weight_grads[static_cast<std::size_t>(l)] =
        delta.transpose() * acts[static_cast<std::size_t>(l)];
    out.bias_grads[static_cast<std::size_t>(l)] = delta.colwise().sum().transpose();
    Mat d_act = delta * weights_[static_cast<std::size_t>(l)];
    if (l > 0) {
      delta = d_act.cwiseProduct(
          (1.0 - acts[static_cast<std::size_t>(l)].array().square()).matrix());
    } else {
      out.input_grads = std::move(d_act);
    }
  }
  return out;
}

GradBundle Mlp::backward(const Vec& input, double upstream) const {
  BatchGradBundle batch = backward_batch(input.transpose(), Vec::Constant(1, upstream));
  GradBundle out;
  out.weight_grads = std::move(batch.weight_grads);
  out.bias_grads = std::move(batch.bias_grads);
  out.input_grad = batch.input_grads.row(0).transpose();
  return out;
}

Mat Mlp::input_gradients(const Mat& inputs, const Vec& upstream) const {
  if (inputs.cols() != input_dim()) throw ValidationError("backward input dimension mismatch");
  if (upstream.size() != inputs.rows())
    throw ValidationError("upstream length must match batch size");

  const int n = n_layers();
  std::vector<Mat> acts(static_cast<std::size_t>(n));
  Mat act = inputs;
  for (int l = 0; l + 1 < n; ++l) {
    Mat z = act * weights_[static_cast<std::size_t>(l)].transpose();
    z.rowwise() += biases_[static_cast<std::size_t>(l)].transpose();
    act = z.array().tanh().matrix();
    acts[static_cast<std::size_t>(l) + 1] = act;
  }

  Mat delta = upstream;
  for (int l = n - 1; l >= 0; --l) {
    Mat d_act = delta * weights_[static_cast<std::size_t>(l)];
    if (l == 0) return d_act;
    delta = d_act.cwiseProduct(
        (1.0 - acts[static_cast<std::size_t>(l)].array().square()).matrix());
  }
  return delta;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["layer_dims"] = layer_dims_;
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < n_layers(); ++l) {
    const Mat& w = weights_[static_cast<std::size_t>(l)];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(i, c));
    nlohmann::json layer;
    layer["weights"] = flat;
    layer["bias"] = std::vector<double>(biases_[static_cast<std::size_t>(l)].begin(),
                                        biases_[static_cast<std::size_t>(l)].end());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  std::vector<int> dims;
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  try {
    dims = j.at("layer_dims").get<std::vector<int>>();
    check_dims(dims);
    const auto& layers = j.at("layers");
    if (layers.size() != dims.size() - 1)
      throw ValidationError("checkpoint layer count does not match layer_dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto flat = layers[l].at("weights").get<std::vector<double>>();
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      const int rows = dims[l + 1];
      const int cols = dims[l];
      if (static_cast<int>(flat.size()) != rows * cols ||
          static_cast<int>(bias.size()) != rows)
        throw ValidationError("checkpoint layer " + std::to_string(l) + " has wrong sizes");
      Mat w(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) w(i, c) = flat[static_cast<std::size_t>(i * cols + c)];
      weights.push_back(std::move(w));
      biases.push_back(Eigen::Map<const Vec>(bias.data(), rows));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed network checkpoint: ") + e.what());
  }
  return Mlp(std::move(dims), std::move(weights), std::move(biases));
}

std::vector<ParamView> param_views(Mlp& net) {
  std::vector<ParamView> views;
  for (int l = 0; l < net.n_layers(); ++l) {
    Mat& w = net.weights()[static_cast<std::size_t>(l)];
    Vec& b = net.biases()[static_cast<std::size_t>(l)];
    views.push_back({w.data(), w.size()});
    views.push_back({b.data(), b.size()});
  }
  return views;
}

std::vector<ParamView> grad_views(BatchGradBundle& grads) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < grads.weight_grads.size(); ++l) {
    views.push_back({grads.weight_grads[l].data(), grads.weight_grads[l].size()});
    views.push_back({grads.bias_grads[l].data(), grads.bias_grads[l].size()});
  }
  return views;
}

AdamState::AdamState(const std::vector<ParamView>& params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ParamView& p : params) {
    m_.push_back(Vec::Zero(p.size));
    v_.push_back(Vec::Zero(p.size));
  }
}

void adam_step(std::vector<ParamView> params, std::vector<ParamView> grads,
               AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m_.size())
    throw ValidationError("adam_step block counts differ");
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size != grads[b].size || params[b].size != state.m_[b].size())
      throw ValidationError("adam_step block " + std::to_string(b) + " size mismatch");
    Eigen::Map<Vec> p(params[b].data, params[b].size);
    Eigen::Map<const Vec> g(grads[b].data, grads[b].size);
    Vec& m = state.m_[b];
    Vec& v = state.v_[b];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v.array().matrix() + (1.0 - config.beta2) * g.array().square().matrix();
    const Vec m_hat = m / bc1;
    const Vec v_hat = v / bc2;
    p.array() -= config.lr * m_hat.array() / (v_hat.array().sqrt() + config.eps);
  }
}

}  // namespace romo
