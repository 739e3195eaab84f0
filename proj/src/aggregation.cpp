#include "romo/aggregation.hpp"

#include "romo/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace romo {

AggregationKind AggregationKind::parametric(double gamma) {
  if (!(gamma >= 1.0)) throw ValidationError("parametric aggregation needs gamma >= 1");
  AggregationKind k;
  k.variant = Variant::Parametric;
  k.gamma = gamma;
  return k;
}

AggregationKind AggregationKind::non_parametric(double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("non-parametric aggregation needs lambda > 0");
  AggregationKind k;
  k.variant = Variant::NonParametric;
  k.lambda = lambda;
  return k;
}

namespace {

Vec stable_softmax(const Vec& scores) {
  const Vec shifted = scores.array() - scores.maxCoeff();
  const Vec e = shifted.array().exp();
  return e / e.sum();
}

}  // namespace

Vec softmax_prime(const Vec& scores, double gamma) {
  if (scores.size() < 1) throw ValidationError("softmax_prime needs at least one score");
  if (!scores.allFinite()) throw ValidationError("softmax_prime scores must be finite");
  const double k = static_cast<double>(scores.size());
  return (gamma * stable_softmax(scores).array() - (gamma - 1.0) / k).matrix();
}

Vec attention_weights(const Mat& attn, const Vec& query, const Mat& candidates,
                      double gamma) {
  const auto d = query.size();
  if (attn.rows() != d || attn.cols() != d)
    throw ValidationError("attention matrix must be d x d");
  if (candidates.cols() != d) throw ValidationError("candidate dimension mismatch");
  const Vec scores = candidates * (attn * query) / std::sqrt(static_cast<double>(d));
  return softmax_prime(scores, gamma);
}

AttentionBackward attention_weights_backward(const Mat& attn, const Vec& query,
                                             const Mat& candidates, double gamma,
                                             const Vec& upstream) {
  const auto d = query.size();
  if (attn.rows() != d || attn.cols() != d)
    throw ValidationError("attention matrix must be d x d");
  if (candidates.cols() != d) throw ValidationError("candidate dimension mismatch");
  if (upstream.size() != candidates.rows())
    throw ValidationError("upstream length must match candidate count");

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Vec scores = candidates * (attn * query) * scale;
  const Vec p = stable_softmax(scores);
  const Vec d_scores = gamma * (p.cwiseProduct(upstream) - p * p.dot(upstream));
  const Vec d_aq = candidates.transpose() * d_scores * scale;

  AttentionBackward out;
  out.d_attn = d_aq * query.transpose();
  out.d_query = attn.transpose() * d_aq;
  return out;
}

Vec ridge_weights(const Mat& candidates, const Vec& query, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("ridge_weights needs lambda > 0");
  if (candidates.cols() != query.size()) throw ValidationError("candidate dimension mismatch");
  const auto k = candidates.rows();
  if (k < 1) throw ValidationError("ridge_weights needs at least one candidate");

  Mat gram = candidates * candidates.transpose();
  gram.diagonal().array() += lambda;
  const Vec w_hat = gram.llt().solve(candidates * query);

  const double norm1 = w_hat.lpNorm<1>();
  if (norm1 < 1e-10) return Vec::Constant(k, 1.0 / static_cast<double>(k));
  return w_hat / norm1;
}

Aggregate aggregate(const RetrievalSet& rset, const Vec& weights) {
  if (weights.size() != rset.k())
    throw ValidationError("aggregation weight count must match retrieval size");
  Aggregate out;
  out.x_aggr = rset.candidates_x.transpose() * weights;
  out.y_aggr = weights.dot(rset.candidates_y);
  out.weights = weights;
  return out;
}

Aggregate build_aggregate(const AggregationKind& kind, const Mat& attn, const Vec& query,
                          const RetrievalSet& rset) {
  if (kind.variant == AggregationKind::Variant::Parametric)
    return aggregate(rset, attention_weights(attn, query, rset.candidates_x, kind.gamma));
  return aggregate(rset, ridge_weights(rset.candidates_x, query, kind.lambda));
}

}  // namespace romo
