#pragma once

#include "romo/retrieval.hpp"

namespace romo {

struct AggregationKind {
  enum class Variant { Parametric, NonParametric };
  Variant variant = Variant::Parametric;
  double gamma = 2.0;    // Parametric: shift factor, >= 1
  double lambda = 0.1;   // NonParametric: ridge strength, > 0

  static AggregationKind parametric(double gamma = 2.0);
  static AggregationKind non_parametric(double lambda = 0.1);
};

// Weighted summary of a retrieval set under shared x/y weights.
struct Aggregate {
  Vec x_aggr;
  double y_aggr = 0.0;
  Vec weights;
};

// gamma * softmax(scores) - (gamma - 1) / K. Scores arrive already scaled;
// softmax uses max subtraction.
Vec softmax_prime(const Vec& scores, double gamma);

// score_i = candidate_i^T A query / sqrt(d), then softmax_prime.
Vec attention_weights(const Mat& attn, const Vec& query, const Mat& candidates,
                      double gamma);

struct AttentionBackward {
  Mat d_attn;
  Vec d_query;
};

// Gradient of sum_i upstream_i * w_i through attention_weights, with respect
// to the attention matrix and the query.
AttentionBackward attention_weights_backward(const Mat& attn, const Vec& query,
                                             const Mat& candidates, double gamma,
                                             const Vec& upstream);

// w_hat = (X_K X_K^T + lambda I)^{-1} X_K query over the K x K system, then
// L1 normalization; uniform fallback when the norm collapses. Candidates are
// rows, matching RetrievalSet.
Vec ridge_weights(const Mat& candidates, const Vec& query, double lambda);

Aggregate aggregate(const RetrievalSet& rset, const Vec& weights);

// Weights per kind (parametric path reads attn; non-parametric ignores it),
// then the weighted summary.
Aggregate build_aggregate(const AggregationKind& kind, const Mat& attn, const Vec& query,
                          const RetrievalSet& rset);

}  // namespace romo
