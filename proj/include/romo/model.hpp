#pragma once

#include "romo/aggregation.hpp"
#include "romo/dataset.hpp"
#include "romo/mlp.hpp"
#include "romo/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace romo {

// Grad ascends a plain surrogate; Rem* use the retrieval-enhanced net alone;
// Romo* ensemble both. The P/N suffix picks parametric attention vs.
// non-parametric ridge weights.
enum class Method { Grad, RemP, RemN, RomoP, RomoN };

Method parse_method(const std::string& id);
std::string method_id(Method m);
std::string method_display_name(Method m);
bool method_uses_retrieval(Method m);
bool method_uses_parametric_aggregation(Method m);

struct ModelConfig {
  std::vector<int> hidden = {64, 64};
  double beta = 0.5;
  int k = 10;
  SimilarityKind sim = SimilarityKind::rbf(1.0);
  double gamma = 2.0;        // parametric shift factor
  double ridge_lambda = 0.1; // non-parametric ridge strength
};

struct Prediction {
  double h = 0.0;
  double f = 0.0;
  double g = 0.0;
};

// Dual-network surrogate: f_net over the design, g_net over the design plus
// its aggregated retrieval context, blended by beta. Baseline methods use one
// branch and leave the other at its initialization.
class RomoModel {
public:
  RomoModel(Method method, const ModelConfig& config, Normalizer normalizer, int dim,
            std::uint64_t seed);

  Method method() const { return method_; }
  int dim() const { return dim_; }
  const ModelConfig& config() const { return config_; }
  const Normalizer& normalizer() const { return normalizer_; }
  AggregationKind aggregation() const;

  Mlp& f_net() { return f_net_; }
  Mlp& g_net() { return g_net_; }
  const Mlp& f_net() const { return f_net_; }
  const Mlp& g_net() const { return g_net_; }
  Mat& attention() { return attention_; }
  const Mat& attention() const { return attention_; }

  double lambda_dual() const { return lambda_dual_; }
  void set_lambda_dual(double v) { lambda_dual_ = v; }

  // Ensemble prediction from an externally built aggregate.
  Prediction predict(const Vec& x_norm, const Aggregate& agg) const;

  // Method-specific surrogate values over a batch of normalized designs.
  // rsets may be empty for Grad; otherwise one set per row.
  Vec surrogate_batch(const Mat& x_norm, const std::vector<RetrievalSet>& rsets) const;

  // Surrogate values plus d(value)/d(design) holding each row's retrieval
  // context fixed (only the direct design inputs of f_net/g_net contribute).
  void surrogate_with_input_grad(const Mat& x_norm, const std::vector<RetrievalSet>& rsets,
                                 Vec& values, Mat& input_grads) const;

  Vec weights_for(const RetrievalSet& rset, const Vec& query_norm) const;
  Mat g_inputs(const Mat& x_norm, const std::vector<RetrievalSet>& rsets) const;

  nlohmann::json to_json() const;
  static RomoModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RomoModel load(const std::filesystem::path& path);

private:
  RomoModel(Method method, ModelConfig config, Normalizer normalizer, int dim, Mlp f_net,
            Mlp g_net, Mat attention, double lambda_dual);

  Method method_;
  ModelConfig config_;
  Normalizer normalizer_;
  int dim_;
  Mlp f_net_;
  Mlp g_net_;
  Mat attention_;  // d x d, used by parametric aggregation
  double lambda_dual_ = 0.0;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double net_lr = 1e-3;
  double tau = 0.01;
  double dual_lr = 0.05;
  int patience = 20;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  int epoch = 0;
  double l_s = 0.0;
  double l_a = 0.0;
  double l_c = 0.0;
  double lambda_dual = 0.0;
  double valid_mse = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  int best_epoch = -1;

  void save_csv(const std::filesystem::path& path) const;
};

// One minibatch of the training objective. For Grad this is half the MSE of
// f, for Rem* half the MSE of g, for Romo* the Lagrangian
// 0.5 l_s + l_a + lambda (l_c - tau) at the model's current multiplier.
// Gradient bundles cover exactly the parameters the method trains;
// attention_grad stays empty unless the aggregation is parametric.
struct ObjectiveEval {
  double value = 0.0;
  double l_s = 0.0;
  double l_a = 0.0;
  double l_c = 0.0;
  BatchGradBundle f_grads;
  BatchGradBundle g_grads;
  Mat attention_grad;
};

ObjectiveEval objective_eval(const RomoModel& model, const Mat& x_norm,
                             const std::vector<RetrievalSet>& rsets, const Vec& y_norm,
                             double tau);

// Full training loop: normalizer fit on the train split, per-batch retrieval
// aggregates from the pool, Adam on the method's parameters, dual ascent on
// the conservatism constraint for Romo methods, early stopping on validation
// MSE with best-parameter restore.
std::pair<RomoModel, TrainLog> train(const OfflineDataset& ds, const DatasetSplit& split,
                                     Method method, const ModelConfig& model_config,
                                     const TrainConfig& train_config);

RetrievalPool build_normalized_pool(const OfflineDataset& ds,
                                    const std::vector<int>& pool_idx,
                                    const Normalizer& normalizer);

}  // namespace romo
