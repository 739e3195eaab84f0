#pragma once

#include "romo/dataset.hpp"

#include <vector>

namespace romo {

// Similarity between two designs. Rbf and Cosine operate on whatever space the
// caller passes in; the model modules pass normalized features.
struct SimilarityKind {
  enum class Variant { InnerProduct, Rbf, Cosine };
  Variant variant = Variant::Rbf;
  double sigma = 1.0;

  static SimilarityKind inner_product() { return {Variant::InnerProduct, 0.0}; }
  static SimilarityKind rbf(double sigma = 1.0);
  static SimilarityKind cosine() { return {Variant::Cosine, 0.0}; }
};

double similarity(const SimilarityKind& kind, const Eigen::Ref<const Vec>& xi,
                  const Eigen::Ref<const Vec>& xj);

// Pool the retriever scans: rows of normalized features with scores, plus the
// dataset indices they came from.
class RetrievalPool {
public:
  RetrievalPool(Mat features, Vec scores, std::vector<int> source_idx);

  int size() const { return static_cast<int>(features_.rows()); }
  int dim() const { return static_cast<int>(features_.cols()); }
  const Mat& features() const { return features_; }
  // features() transposed, so one record is a contiguous column.
  const Mat& features_t() const { return features_t_; }
  const Vec& scores() const { return scores_; }
  const std::vector<int>& source_idx() const { return source_idx_; }

private:
  Mat features_;
  Mat features_t_;
  Vec scores_;
  std::vector<int> source_idx_;
};

// K pool records ordered by descending similarity to one query.
struct RetrievalSet {
  Mat candidates_x;          // K x d, most similar first
  Vec candidates_y;          // K
  Vec similarities;          // K, non-increasing
  std::vector<int> source_idx;  // K dataset indices, pairwise distinct

  int k() const { return static_cast<int>(similarities.size()); }
};

// Full scan, ties broken by lower pool position.
RetrievalSet retrieve(const RetrievalPool& pool, const Vec& query, int k,
                      const SimilarityKind& kind);

std::vector<RetrievalSet> retrieve_batch(const RetrievalPool& pool, const Mat& queries,
                                         int k, const SimilarityKind& kind);

}  // namespace romo
