#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace romo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A design is a length-d feature vector in task units.
using Design = Eigen::VectorXd;

struct LabeledDesign {
  Design x;
  double y = 0.0;
};

// Immutable collection of labeled designs with a fixed dimensionality.
// Stored as an N x d row matrix plus a score vector so the numeric modules
// can work on whole blocks.
class OfflineDataset {
public:
  OfflineDataset(Mat features, Vec scores);

  static OfflineDataset load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(features_.rows()); }
  int dim() const { return static_cast<int>(features_.cols()); }

  const Mat& features() const { return features_; }
  const Vec& scores() const { return scores_; }

  Design design(int i) const { return features_.row(i).transpose(); }
  double score(int i) const { return scores_[i]; }
  LabeledDesign record(int i) const { return {design(i), score(i)}; }

private:
  Mat features_;  // N x d
  Vec scores_;    // N
};

// Disjoint index sets over one dataset: supervised, validation, retrieval pool.
struct DatasetSplit {
  std::vector<int> train_idx;
  std::vector<int> valid_idx;
  std::vector<int> pool_idx;

  void save_json(const std::filesystem::path& path) const;
  static DatasetSplit load_json(const std::filesystem::path& path);
};

struct SplitFractions {
  double train = 0.7;
  double valid = 0.1;
  double pool = 0.2;
};

// Seeded shuffle followed by a contiguous partition. Sizes are
// round(fraction * N) for valid and pool; everything else lands in train.
// Throws when the pool ends up smaller than min_pool (the retrieval size K).
DatasetSplit split_dataset(const OfflineDataset& ds, const SplitFractions& fractions,
                           std::uint64_t seed, int min_pool = 0);

// Z-score statistics with population (divide-by-N) std, clamped at 1e-8.
class Normalizer {
public:
  Normalizer() = default;
  Normalizer(Vec x_mean, Vec x_std, double y_mean, double y_std);

  static Normalizer fit(const OfflineDataset& ds, const std::vector<int>& idx);

  Vec normalize_x(const Vec& x) const;
  Vec denormalize_x(const Vec& x) const;
  Mat normalize_rows(const Mat& x) const;
  Mat denormalize_rows(const Mat& x) const;
  double normalize_y(double y) const { return (y - y_mean_) / y_std_; }
  double denormalize_y(double y) const { return y * y_std_ + y_mean_; }
  Vec normalize_y(const Vec& y) const;
  Vec denormalize_y(const Vec& y) const;

  const Vec& x_mean() const { return x_mean_; }
  const Vec& x_std() const { return x_std_; }
  double y_mean() const { return y_mean_; }
  double y_std() const { return y_std_; }
  int dim() const { return static_cast<int>(x_mean_.size()); }

private:
  Vec x_mean_, x_std_;
  double y_mean_ = 0.0, y_std_ = 1.0;
};

// Which dimensions the optimizer may move. False entries are held constant.
class ConstraintMask {
public:
  static ConstraintMask all_optimizable(int dim);
  // Marks the listed dimensions as fixed. Spec syntax: "2" or "2,5-8".
  static ConstraintMask from_fixed_spec(const std::string& spec, int dim);
  static ConstraintMask from_fixed_dims(const std::vector<int>& fixed, int dim);

  int dim() const { return static_cast<int>(optimizable_.size()); }
  bool optimizable(int j) const { return optimizable_[j]; }
  int n_optimizable() const;
  std::vector<int> fixed_dims() const;

private:
  explicit ConstraintMask(std::vector<char> optimizable);
  std::vector<char> optimizable_;
};

// Parses "2" / "2,5-8" into dimension indices. Shared by the mask factory
// and the CLI so malformed specs fail the same way everywhere.
std::vector<int> parse_dim_spec(const std::string& spec, int dim);

// Indices of all records with score strictly below the threshold.
std::vector<int> select_mediocre_threshold(const OfflineDataset& ds, double y_thres);

// Indices of the k lowest-score records, ties broken by lower index.
std::vector<int> select_mediocre_bottom_k(const OfflineDataset& ds, int k);

// Equal-width binning over feature `dim`, bottom `per_bin` records per
// non-empty bin. Records at the feature maximum land in the last bin.
std::vector<int> bin_select(const OfflineDataset& ds, int dim, int n_bins, int per_bin);

}  // namespace romo
