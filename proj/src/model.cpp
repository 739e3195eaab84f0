#include "romo/model.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace romo {

Method parse_method(const std::string& id) {
  if (id == "grad") return Method::Grad;
  if (id == "rem_p") return Method::RemP;
  if (id == "rem_n") return Method::RemN;
  if (id == "romo_p") return Method::RomoP;
  if (id == "romo_n") return Method::RomoN;
  throw ValidationError("unknown method \"" + id +
                        "\" (expected grad, rem_p, rem_n, romo_p, romo_n)");
}

std::string method_id(Method m) {
  switch (m) {
    case Method::Grad: return "grad";
    case Method::RemP: return "rem_p";
    case Method::RemN: return "rem_n";
    case Method::RomoP: return "romo_p";
    case Method::RomoN: return "romo_n";
  }
  throw ValidationError("unknown method");
}

std::string method_display_name(Method m) {
  switch (m) {
    case Method::Grad: return "Grad.";
    case Method::RemP: return "REM_p";
    case Method::RemN: return "REM_n";
    case Method::RomoP: return "ROMO_p";
    case Method::RomoN: return "ROMO_n";
  }
  throw ValidationError("unknown method");
}

bool method_uses_retrieval(Method m) { return m != Method::Grad; }

bool method_uses_parametric_aggregation(Method m) {
  return m == Method::RemP || m == Method::RomoP;
}

namespace {

bool method_trains_f(Method m) {
  return m == Method::Grad || m == Method::RomoP || m == Method::RomoN;
}

bool method_trains_g(Method m) { return m != Method::Grad; }

std::vector<int> g_input_dims(const std::vector<int>& hidden, int d) {
  std::vector<int> dims;
  dims.push_back(2 * d + 1);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

std::vector<int> f_input_dims(const std::vector<int>& hidden, int d) {
  std::vector<int> dims;
  dims.push_back(d);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

Mat init_attention(int d, CounterRng& rng) {
  const double limit = std::sqrt(3.0 / d);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.next_uniform(-limit, limit);
  return a;
}

nlohmann::json sim_to_json(const SimilarityKind& sim) {
  nlohmann::json j;
  switch (sim.variant) {
    case SimilarityKind::Variant::InnerProduct: j["kind"] = "inner_product"; break;
    case SimilarityKind::Variant::Rbf:
      j["kind"] = "rbf";
      j["sigma"] = sim.sigma;
      break;
    case SimilarityKind::Variant::Cosine: j["kind"] = "cosine"; break;
  }
  return j;
}

SimilarityKind sim_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "inner_product") return SimilarityKind::inner_product();
  if (kind == "rbf") return SimilarityKind::rbf(j.value("sigma", 1.0));
  if (kind == "cosine") return SimilarityKind::cosine();
  throw ValidationError("unknown similarity kind \"" + kind + "\"");
}

}  // namespace

RomoModel::RomoModel(Method method, const ModelConfig& config, Normalizer normalizer,
                     int dim, std::uint64_t seed)
    : method_(method),
      config_(config),
      normalizer_(std::move(normalizer)),
      dim_(dim),
      f_net_([&] {
        CounterRng rng(seed, 10);
        return Mlp(f_input_dims(config.hidden, dim), rng);
      }()),
      g_net_([&] {
        CounterRng rng(seed, 11);
        return Mlp(g_input_dims(config.hidden, dim), rng);
      }()) {
  if (dim_ < 1) throw ValidationError("model dimension must be positive");
  if (!(config_.beta > 0.0 && config_.beta < 1.0))
    throw ValidationError("beta must lie in (0, 1)");
  if (config_.k < 1) throw ValidationError("retrieval size must be at least 1");
  if (normalizer_.dim() != dim_) throw ValidationError("normalizer dimension mismatch");
  CounterRng rng(seed, 12);
  attention_ = init_attention(dim_, rng);
}

RomoModel::RomoModel(Method method, ModelConfig config, Normalizer normalizer, int dim,
                     Mlp f_net, Mlp g_net, Mat attention, double lambda_dual)
    : method_(method),
      config_(std::move(config)),
      normalizer_(std::move(normalizer)),
      dim_(dim),
      f_net_(std::move(f_net)),
      g_net_(std::move(g_net)),
      attention_(std::move(attention)),
      lambda_dual_(lambda_dual) {
  if (f_net_.input_dim() != dim_ || g_net_.input_dim() != 2 * dim_ + 1)
    throw ValidationError("network input dimensions inconsistent with model dimension");
  if (attention_.rows() != dim_ || attention_.cols() != dim_)
    throw ValidationError("attention matrix must be d x d");
}

AggregationKind RomoModel::aggregation() const {
  if (method_uses_parametric_aggregation(method_))
    return AggregationKind::parametric(config_.gamma);
  return AggregationKind::non_parametric(config_.ridge_lambda);
}

Prediction RomoModel::predict(const Vec& x_norm, const Aggregate& agg) const {
  if (x_norm.size() != dim_) throw ValidationError("predict dimension mismatch");
  Prediction p;
  p.f = f_net_.forward(x_norm);
  Vec g_in(2 * dim_ + 1);
  g_in << x_norm, agg.x_aggr, agg.y_aggr;
  p.g = g_net_.forward(g_in);
  p.h = config_.beta * p.f + (1.0 - config_.beta) * p.g;
  return p;
}

Vec RomoModel::weights_for(const RetrievalSet& rset, const Vec& query_norm) const {
  if (method_uses_parametric_aggregation(method_))
    return attention_weights(attention_, query_norm, rset.candidates_x, config_.gamma);
  return ridge_weights(rset.candidates_x, query_norm, config_.ridge_lambda);
}

Mat RomoModel::g_inputs(const Mat& x_norm, const std::vector<RetrievalSet>& rsets) const {
  if (static_cast<Eigen::Index>(rsets.size()) != x_norm.rows())
    throw ValidationError("one retrieval set per design required");
  Mat g_in(x_norm.rows(), 2 * dim_ + 1);
  for (Eigen::Index i = 0; i < x_norm.rows(); ++i) {
    const Vec q = x_norm.row(i).transpose();
    const Aggregate agg = aggregate(rsets[static_cast<std::size_t>(i)],
                                    weights_for(rsets[static_cast<std::size_t>(i)], q));
    g_in.row(i) << q.transpose(), agg.x_aggr.transpose(), agg.y_aggr;
  }
  return g_in;
}

Vec RomoModel::surrogate_batch(const Mat& x_norm,
                               const std::vector<RetrievalSet>& rsets) const {
  if (method_ == Method::Grad) return f_net_.forward_batch(x_norm);
  const Vec g_vals = g_net_.forward_batch(g_inputs(x_norm, rsets));
  if (method_ == Method::RemP || method_ == Method::RemN) return g_vals;
  const Vec f_vals = f_net_.forward_batch(x_norm);
  return config_.beta * f_vals + (1.0 - config_.beta) * g_vals;
}

void RomoModel::surrogate_with_input_grad(const Mat& x_norm,
                                          const std::vector<RetrievalSet>& rsets,
                                          Vec& values, Mat& input_grads) const {
  const Vec ones = Vec::Ones(x_norm.rows());
  if (method_ == Method::Grad) {
    values = f_net_.forward_batch(x_norm);
    input_grads = f_net_.input_gradients(x_norm, ones);
    return;
  }
  const Mat g_in = g_inputs(x_norm, rsets);
  const Vec g_vals = g_net_.forward_batch(g_in);
  const Mat g_grads = g_net_.input_gradients(g_in, ones).leftCols(dim_);
  if (method_ == Method::RemP || method_ == Method::RemN) {
    values = g_vals;
    input_grads = g_grads;
    return;
  }
  const Vec f_vals = f_net_.forward_batch(x_norm);
  const Mat f_grads = f_net_.input_gradients(x_norm, ones);
  values = config_.beta * f_vals + (1.0 - config_.beta) * g_vals;
  input_grads = config_.beta * f_grads + (1.0 - config_.beta) * g_grads;
}

nlohmann::json RomoModel::to_json() const {
  nlohmann::json j;
  j["format"] = "romo-checkpoint-v1";
  j["method"] = method_id(method_);
  j["dim"] = dim_;
  j["beta"] = config_.beta;
  j["k"] = config_.k;
  j["hidden"] = config_.hidden;
  j["similarity"] = sim_to_json(config_.sim);
  j["aggregation"] = {{"gamma", config_.gamma}, {"lambda", config_.ridge_lambda}};
  j["f_net"] = f_net_.to_json();
  j["g_net"] = g_net_.to_json();
  std::vector<double> attn_flat;
  attn_flat.reserve(static_cast<std::size_t>(attention_.size()));
  for (int i = 0; i < dim_; ++i)
    for (int c = 0; c < dim_; ++c) attn_flat.push_back(attention_(i, c));
  j["attention"] = attn_flat;
  j["normalizer"] = {
      {"x_mean", std::vector<double>(normalizer_.x_mean().begin(), normalizer_.x_mean().end())},
      {"x_std", std::vector<double>(normalizer_.x_std().begin(), normalizer_.x_std().end())},
      {"y_mean", normalizer_.y_mean()},
      {"y_std", normalizer_.y_std()}};
  j["lambda_dual"] = lambda_dual_;
  return j;
}

RomoModel RomoModel::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "romo-checkpoint-v1")
      throw ValidationError("unrecognized checkpoint format");
    const Method method = parse_method(j.at("method").get<std::string>());
    const int dim = j.at("dim").get<int>();

    ModelConfig config;
    config.hidden = j.at("hidden").get<std::vector<int>>();
    config.beta = j.at("beta").get<double>();
    config.k = j.at("k").get<int>();
    config.sim = sim_from_json(j.at("similarity"));
    config.gamma = j.at("aggregation").at("gamma").get<double>();
    config.ridge_lambda = j.at("aggregation").at("lambda").get<double>();

    const auto& nj = j.at("normalizer");
    const auto x_mean = nj.at("x_mean").get<std::vector<double>>();
    const auto x_std = nj.at("x_std").get<std::vector<double>>();
    Normalizer normalizer(Eigen::Map<const Vec>(x_mean.data(), static_cast<Eigen::Index>(x_mean.size())),
                          Eigen::Map<const Vec>(x_std.data(), static_cast<Eigen::Index>(x_std.size())),
                          nj.at("y_mean").get<double>(), nj.at("y_std").get<double>());

    Mlp f_net = Mlp::from_json(j.at("f_net"));
    Mlp g_net = Mlp::from_json(j.at("g_net"));

    const auto attn_flat = j.at("attention").get<std::vector<double>>();
    if (static_cast<int>(attn_flat.size()) != dim * dim)
      throw ValidationError("attention block has wrong size");
    Mat attention(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int c = 0; c < dim; ++c) attention(i, c) = attn_flat[static_cast<std::size_t>(i * dim + c)];

    return RomoModel(method, std::move(config), std::move(normalizer), dim, std::move(f_net),
                     std::move(g_net), std::move(attention), j.value("lambda_dual", 0.0));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void RomoModel::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

RomoModel RomoModel::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void TrainLog::save_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "epoch,l_s,l_a,l_c,lambda_dual,valid_mse\n";
  for (const TrainLogRow& r : rows) {
    out << r.epoch << "," << format_double(r.l_s) << "," << format_double(r.l_a) << ","
        << format_double(r.l_c) << "," << format_double(r.lambda_dual) << ","
        << format_double(r.valid_mse) << "\n";
  }
  write_text_file(path, out.str());
}

namespace {

struct Snapshot {
  std::vector<Mat> f_weights;
  std::vector<Vec> f_biases;
  std::vector<Mat> g_weights;
  std::vector<Vec> g_biases;
  Mat attention;
  double lambda_dual = 0.0;

  static Snapshot capture(const RomoModel& m) {
    return {m.f_net().weights(), m.f_net().biases(), m.g_net().weights(),
            m.g_net().biases(), m.attention(), m.lambda_dual()};
  }
  void restore(RomoModel& m) const {
    m.f_net().weights() = f_weights;
    m.f_net().biases() = f_biases;
    m.g_net().weights() = g_weights;
    m.g_net().biases() = g_biases;
    m.attention() = attention;
    m.set_lambda_dual(lambda_dual);
  }
};

struct Trainer {
  const OfflineDataset& ds;
  Method method;
  const ModelConfig& mc;
  const TrainConfig& tc;
  RomoModel& model;

  Mat x_train, x_valid;
  Vec y_train, y_valid;
  RetrievalPool pool;
  std::vector<RetrievalSet> rs_train, rs_valid;

  Trainer(const OfflineDataset& ds_, const DatasetSplit& split, Method method_,
          const ModelConfig& mc_, const TrainConfig& tc_, RomoModel& model_)
      : ds(ds_), method(method_), mc(mc_), tc(tc_), model(model_),
        pool(build_normalized_pool(ds_, split.pool_idx, model_.normalizer())) {
    gather(split.train_idx, x_train, y_train);
    gather(split.valid_idx, x_valid, y_valid);
    if (method_uses_retrieval(method)) {
      rs_train = retrieve_batch(pool, x_train, mc.k, mc.sim);
      rs_valid = retrieve_batch(pool, x_valid, mc.k, mc.sim);
    }
  }

  void gather(const std::vector<int>& idx, Mat& x, Vec& y) const {
    x.resize(static_cast<Eigen::Index>(idx.size()), ds.dim());
    y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) =
          model.normalizer().normalize_x(ds.design(idx[i])).transpose();
      y[static_cast<Eigen::Index>(i)] = model.normalizer().normalize_y(ds.score(idx[i]));
    }
  }

  Vec method_values(const Mat& x, const std::vector<RetrievalSet>& rsets) const {
    return model.surrogate_batch(x, rsets);
  }
};

}  // namespace

ObjectiveEval objective_eval(const RomoModel& model, const Mat& x_norm,
                             const std::vector<RetrievalSet>& rsets, const Vec& y_norm,
                             double tau) {
  const Method method = model.method();
  const Eigen::Index b = x_norm.rows();
  if (b == 0) throw ValidationError("empty objective batch");
  if (y_norm.size() != b) throw ValidationError("objective batch size mismatch");
  if (method_uses_retrieval(method) && static_cast<Eigen::Index>(rsets.size()) != b)
    throw ValidationError("objective batch needs one retrieval set per row");
  const double inv_b = 1.0 / static_cast<double>(b);

  ObjectiveEval ev;
  if (method == Method::Grad) {
    const Vec f_vals = model.f_net().forward_batch(x_norm);
    const Vec resid = f_vals - y_norm;
    ev.l_s = resid.squaredNorm() * inv_b;
    ev.value = 0.5 * ev.l_s;
    ev.f_grads = model.f_net().backward_batch(x_norm, resid * inv_b);
    return ev;
  }

  const Mat g_in = model.g_inputs(x_norm, rsets);
  const Vec g_vals = model.g_net().forward_batch(g_in);
  Vec u_g;
  if (method == Method::RomoP || method == Method::RomoN) {
    const double beta = model.config().beta;
    const double lambda = model.lambda_dual();
    const Vec f_vals = model.f_net().forward_batch(x_norm);
    const Vec h = beta * f_vals + (1.0 - beta) * g_vals;
    const Vec resid = h - y_norm;
    const Vec diff = f_vals - g_vals;
    ev.l_s = resid.squaredNorm() * inv_b;
    ev.l_a = diff.squaredNorm() * inv_b;
    ev.l_c = f_vals.mean() - g_vals.mean();
    ev.value = 0.5 * ev.l_s + ev.l_a + lambda * (ev.l_c - tau);
    const Vec u_f = (beta * resid + 2.0 * diff + Vec::Constant(b, lambda)) * inv_b;
    u_g = ((1.0 - beta) * resid - 2.0 * diff - Vec::Constant(b, lambda)) * inv_b;
    ev.f_grads = model.f_net().backward_batch(x_norm, u_f);
  } else {
    const Vec resid = g_vals - y_norm;
    ev.l_s = resid.squaredNorm() * inv_b;
    ev.value = 0.5 * ev.l_s;
    u_g = resid * inv_b;
  }
  ev.g_grads = model.g_net().backward_batch(g_in, u_g);

  if (method_uses_parametric_aggregation(method)) {
    const int d = model.dim();
    ev.attention_grad = Mat::Zero(d, d);
    for (Eigen::Index i = 0; i < b; ++i) {
      const RetrievalSet& rset = rsets[static_cast<std::size_t>(i)];
      const Vec q = x_norm.row(i).transpose();
      const Vec d_xaggr = ev.g_grads.input_grads.row(i).segment(d, d).transpose();
      const double d_yaggr = ev.g_grads.input_grads(i, 2 * d);
      const Vec upstream = rset.candidates_x * d_xaggr + rset.candidates_y * d_yaggr;
      ev.attention_grad += attention_weights_backward(model.attention(), q,
                                                      rset.candidates_x,
                                                      model.config().gamma, upstream)
                               .d_attn;
    }
  }
  return ev;
}

std::pair<RomoModel, TrainLog> train(const OfflineDataset& ds, const DatasetSplit& split,
                                     Method method, const ModelConfig& model_config,
                                     const TrainConfig& train_config) {
  if (train_config.epochs < 1 || train_config.batch_size < 1 || train_config.patience < 1)
    throw ValidationError("epochs, batch_size and patience must be positive");
  if (!(train_config.net_lr > 0.0) || !(train_config.dual_lr > 0.0))
    throw ValidationError("learning rates must be positive");
  if (method_uses_retrieval(method) &&
      static_cast<int>(split.pool_idx.size()) < model_config.k)
    throw ValidationError("pool smaller than retrieval size");

  Normalizer normalizer = Normalizer::fit(ds, split.train_idx);
  RomoModel model(method, model_config, std::move(normalizer), ds.dim(), train_config.seed);
  Trainer tr(ds, split, method, model_config, train_config, model);

  const bool trains_f = method_trains_f(method);
  const bool trains_g = method_trains_g(method);
  const bool trains_attn = method_uses_parametric_aggregation(method);
  const bool is_romo = method == Method::RomoP || method == Method::RomoN;

  std::vector<ParamView> params;
  if (trains_f)
    for (ParamView v : param_views(model.f_net())) params.push_back(v);
  if (trains_g)
    for (ParamView v : param_views(model.g_net())) params.push_back(v);
  if (trains_attn) params.push_back({model.attention().data(), model.attention().size()});

  AdamState adam(params);
  AdamConfig adam_config;
  adam_config.lr = train_config.net_lr;

  const int n_train = static_cast<int>(tr.x_train.rows());
  const int d = model.dim();

  TrainLog log;
  double best_valid = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  Snapshot best = Snapshot::capture(model);
  int best_epoch = -1;

  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle_rng(train_config.seed, 100 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    for (int start = 0; start < n_train; start += train_config.batch_size) {
      const int stop = std::min(n_train, start + train_config.batch_size);
      const std::vector<int> batch(order.begin() + start, order.begin() + stop);
      const auto b = static_cast<Eigen::Index>(batch.size());

      Mat xb(b, d);
      Vec yb(b);
      std::vector<RetrievalSet> rsb;
      if (method_uses_retrieval(method)) rsb.reserve(batch.size());
      for (Eigen::Index i = 0; i < b; ++i) {
        const int p = batch[static_cast<std::size_t>(i)];
        xb.row(i) = tr.x_train.row(p);
        yb[i] = tr.y_train[p];
        if (method_uses_retrieval(method))
          rsb.push_back(tr.rs_train[static_cast<std::size_t>(p)]);
      }

      ObjectiveEval ev = objective_eval(model, xb, rsb, yb, train_config.tau);
      if (!std::isfinite(ev.value))
        throw ValidationError("non-finite loss at epoch " + std::to_string(epoch));

      std::vector<ParamView> grads;
      if (trains_f)
        for (ParamView v : grad_views(ev.f_grads)) grads.push_back(v);
      if (trains_g)
        for (ParamView v : grad_views(ev.g_grads)) grads.push_back(v);
      if (trains_attn)
        grads.push_back({ev.attention_grad.data(), ev.attention_grad.size()});

      adam_step(params, grads, adam, adam_config);

      if (is_romo) {
        const double next =
            model.lambda_dual() + train_config.dual_lr * (ev.l_c - train_config.tau);
        model.set_lambda_dual(std::max(0.0, next));
      }
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.lambda_dual = model.lambda_dual();
    {
      const Vec h_train = tr.method_values(tr.x_train, tr.rs_train);
      row.l_s = (h_train - tr.y_train).squaredNorm() / n_train;
      if (is_romo) {
        const Vec f_vals = model.f_net().forward_batch(tr.x_train);
        const Mat g_in = model.g_inputs(tr.x_train, tr.rs_train);
        const Vec g_vals = model.g_net().forward_batch(g_in);
        row.l_a = (f_vals - g_vals).squaredNorm() / n_train;
        row.l_c = f_vals.mean() - g_vals.mean();
      }
      const Vec h_valid = tr.method_values(tr.x_valid, tr.rs_valid);
      row.valid_mse = (h_valid - tr.y_valid).squaredNorm() / tr.x_valid.rows();
    }
    log.rows.push_back(row);

    if (row.valid_mse < best_valid) {
      best_valid = row.valid_mse;
      best = Snapshot::capture(model);
      best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= train_config.patience) {
      break;
    }
  }

  best.restore(model);
  log.best_epoch = best_epoch;
  return {std::move(model), std::move(log)};
}

RetrievalPool build_normalized_pool(const OfflineDataset& ds,
                                    const std::vector<int>& pool_idx,
                                    const Normalizer& normalizer) {
  const int m = static_cast<int>(pool_idx.size());
  Mat x(m, ds.dim());
  Vec y(m);
  for (int i = 0; i < m; ++i) {
    const int src = pool_idx[static_cast<std::size_t>(i)];
    x.row(i) = normalizer.normalize_x(ds.design(src)).transpose();
    y[i] = normalizer.normalize_y(ds.score(src));
  }
  return RetrievalPool(std::move(x), std::move(y), pool_idx);
}

}  // namespace romo
