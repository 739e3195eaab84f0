#include "romo/retrieval.hpp"

#include "romo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace romo {

SimilarityKind SimilarityKind::rbf(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("rbf similarity needs sigma > 0");
  return {Variant::Rbf, sigma};
}

double similarity(const SimilarityKind& kind, const Eigen::Ref<const Vec>& xi,
                  const Eigen::Ref<const Vec>& xj) {
  if (xi.size() != xj.size()) throw ValidationError("similarity dimension mismatch");
  switch (kind.variant) {
    case SimilarityKind::Variant::InnerProduct:
      return xi.dot(xj);
    case SimilarityKind::Variant::Rbf: {
      if (!(kind.sigma > 0.0)) throw ValidationError("rbf similarity needs sigma > 0");
      const double d2 = (xi - xj).squaredNorm();
      return std::exp(-d2 / (2.0 * kind.sigma * kind.sigma));
    }
    case SimilarityKind::Variant::Cosine: {
      const double ni = xi.norm();
      const double nj = xj.norm();
      if (ni == 0.0 || nj == 0.0)
        throw ValidationError("cosine similarity undefined for a zero vector");
      return xi.dot(xj) / (ni * nj);
    }
  }
  throw ValidationError("unknown similarity kind");
}

RetrievalPool::RetrievalPool(Mat features, Vec scores, std::vector<int> source_idx)
    : features_(std::move(features)),
      features_t_(features_.transpose()),
      scores_(std::move(scores)),
      source_idx_(std::move(source_idx)) {
  if (features_.rows() != scores_.size() ||
      features_.rows() != static_cast<Eigen::Index>(source_idx_.size()))
    throw ValidationError("retrieval pool component sizes differ");
  if (features_.rows() == 0) throw ValidationError("retrieval pool is empty");
}

RetrievalSet retrieve(const RetrievalPool& pool, const Vec& query, int k,
                      const SimilarityKind& kind) {
  if (k < 1) throw ValidationError("retrieval size must be at least 1");
  if (k > pool.size())
    throw ValidationError("retrieval size " + std::to_string(k) + " exceeds pool size " +
                          std::to_string(pool.size()));
  if (query.size() != pool.dim()) throw ValidationError("query dimension mismatch");

  const int m = pool.size();
  // Scored through the scalar similarity() so a one-off comparison and a full
  // scan agree to the last bit, ties included.
  Vec sims(m);
  for (int i = 0; i < m; ++i) sims[i] = similarity(kind, pool.features_t().col(i), query);

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });

  RetrievalSet set;
  set.candidates_x.resize(k, pool.dim());
  set.candidates_y.resize(k);
  set.similarities.resize(k);
  set.source_idx.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    const int i = order[static_cast<std::size_t>(r)];
    set.candidates_x.row(r) = pool.features().row(i);
    set.candidates_y[r] = pool.scores()[i];
    set.similarities[r] = sims[i];
    set.source_idx[static_cast<std::size_t>(r)] = pool.source_idx()[static_cast<std::size_t>(i)];
  }
  return set;
}

std::vector<RetrievalSet> retrieve_batch(const RetrievalPool& pool, const Mat& queries,
                                         int k, const SimilarityKind& kind) {
  std::vector<RetrievalSet> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    out.push_back(retrieve(pool, queries.row(i).transpose(), k, kind));
  return out;
}

}  // namespace romo
