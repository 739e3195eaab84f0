#include "romo/dataset.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"
#include "romo/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace romo {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

}  // namespace

OfflineDataset::OfflineDataset(Mat features, Vec scores)
    : features_(std::move(features)), scores_(std::move(scores)) {
  if (features_.rows() != scores_.size())
    throw ValidationError("feature rows and score count differ");
  if (features_.rows() == 0) throw ValidationError("empty dataset");
  if (features_.cols() == 0) throw ValidationError("dataset has no feature columns");
  if (!features_.allFinite() || !scores_.allFinite())
    throw ValidationError("dataset contains non-finite values");
}

OfflineDataset OfflineDataset::load_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::vector<std::string> lines = split_lines(text);
  const std::string where = path.string();
  if (lines.empty()) throw ValidationError(where + ": empty file");

  const std::vector<std::string> header = split_line(lines[0], ',');
  if (header.size() < 2)
    throw ValidationError(where + ": line 1: header needs at least one feature column and \"y\"");
  if (header.back() != "y")
    throw ValidationError(where + ": line 1: last header column must be \"y\", got \"" +
                          header.back() + "\"");
  const int d = static_cast<int>(header.size()) - 1;

  const int n = static_cast<int>(lines.size()) - 1;
  if (n == 0) throw ValidationError(where + ": empty dataset");

  Mat features(n, d);
  Vec scores(n);
  for (int i = 0; i < n; ++i) {
    const int line_no = i + 2;
    const std::vector<std::string> cells = split_line(lines[i + 1], ',');
    if (static_cast<int>(cells.size()) != d + 1)
      throw ValidationError(where + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(d + 1) + " cells, got " +
                            std::to_string(cells.size()));
    for (int j = 0; j <= d; ++j) {
      const std::optional<double> v = parse_double(cells[j]);
      if (!v)
        throw ValidationError(where + ": line " + std::to_string(line_no) + ", column " +
                              std::to_string(j + 1) + ": non-numeric cell \"" + cells[j] + "\"");
      if (j < d)
        features(i, j) = *v;
      else
        scores[i] = *v;
    }
  }
  return OfflineDataset(std::move(features), std::move(scores));
}

void OfflineDataset::save_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  for (int j = 0; j < dim(); ++j) out << "x" << j << ",";
  out << "y\n";
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < dim(); ++j) out << format_double(features_(i, j)) << ",";
    out << format_double(scores_[i]) << "\n";
  }
  write_text_file(path, out.str());
}

void DatasetSplit::save_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["train_idx"] = train_idx;
  j["valid_idx"] = valid_idx;
  j["pool_idx"] = pool_idx;
  write_text_file(path, j.dump(2) + "\n");
}

DatasetSplit DatasetSplit::load_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  DatasetSplit s;
  try {
    s.train_idx = j.at("train_idx").get<std::vector<int>>();
    s.valid_idx = j.at("valid_idx").get<std::vector<int>>();
    s.pool_idx = j.at("pool_idx").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return s;
}

DatasetSplit split_dataset(const OfflineDataset& ds, const SplitFractions& fractions,
                           std::uint64_t seed, int min_pool) {
  if (fractions.train <= 0.0 || fractions.valid <= 0.0 || fractions.pool <= 0.0)
    throw ValidationError("split fractions must be positive");
  if (fractions.train + fractions.valid + fractions.pool > 1.0 + 1e-9)
    throw ValidationError("split fractions sum above 1");

  const int n = ds.size();
  const int n_valid = static_cast<int>(std::llround(fractions.valid * n));
  const int n_pool = static_cast<int>(std::llround(fractions.pool * n));
  const int n_train = n - n_valid - n_pool;
  if (n_train <= 0 || n_valid <= 0 || n_pool <= 0)
    throw ValidationError("split produces an empty subset (N=" + std::to_string(n) + ")");
  if (n_pool < min_pool)
    throw ValidationError("pool size " + std::to_string(n_pool) +
                          " smaller than retrieval size " + std::to_string(min_pool));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, /*stream=*/1);
  rng.shuffle(order);

  DatasetSplit s;
  s.train_idx.assign(order.begin(), order.begin() + n_train);
  s.valid_idx.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  s.pool_idx.assign(order.begin() + n_train + n_valid, order.end());
  return s;
}

Normalizer::Normalizer(Vec x_mean, Vec x_std, double y_mean, double y_std)
    : x_mean_(std::move(x_mean)), x_std_(std::move(x_std)), y_mean_(y_mean), y_std_(y_std) {
  if (x_mean_.size() != x_std_.size()) throw ValidationError("normalizer stat sizes differ");
  if ((x_std_.array() < 1e-8).any() || y_std_ < 1e-8)
    throw ValidationError("normalizer std below clamp floor");
}

Normalizer Normalizer::fit(const OfflineDataset& ds, const std::vector<int>& idx) {
  if (idx.empty()) throw ValidationError("cannot fit normalizer on an empty index set");
  const int d = ds.dim();
  const double n = static_cast<double>(idx.size());

  Vec x_mean = Vec::Zero(d);
  double y_mean = 0.0;
  for (int i : idx) {
    if (i < 0 || i >= ds.size()) throw ValidationError("normalizer index out of range");
    x_mean += ds.features().row(i).transpose();
    y_mean += ds.scores()[i];
  }
  x_mean /= n;
  y_mean /= n;

  Vec x_var = Vec::Zero(d);
  double y_var = 0.0;
  for (int i : idx) {
    const Vec dx = ds.features().row(i).transpose() - x_mean;
    x_var += dx.cwiseProduct(dx);
    const double dy = ds.scores()[i] - y_mean;
    y_var += dy * dy;
  }
  Vec x_std = (x_var / n).cwiseSqrt().cwiseMax(1e-8);
  const double y_std = std::max(std::sqrt(y_var / n), 1e-8);
  return Normalizer(std::move(x_mean), std::move(x_std), y_mean, y_std);
}

Vec Normalizer::normalize_x(const Vec& x) const {
  if (x.size() != x_mean_.size()) throw ValidationError("normalize_x dimension mismatch");
  return (x - x_mean_).cwiseQuotient(x_std_);
}

Vec Normalizer::denormalize_x(const Vec& x) const {
  if (x.size() != x_mean_.size()) throw ValidationError("denormalize_x dimension mismatch");
  return x.cwiseProduct(x_std_) + x_mean_;
}

Mat Normalizer::normalize_rows(const Mat& x) const {
  if (x.cols() != x_mean_.size()) throw ValidationError("normalize_rows dimension mismatch");
  return (x.rowwise() - x_mean_.transpose()).array().rowwise() /
         x_std_.transpose().array();
}

Mat Normalizer::denormalize_rows(const Mat& x) const {
  if (x.cols() != x_mean_.size()) throw ValidationError("denormalize_rows dimension mismatch");
  return (x.array().rowwise() * x_std_.transpose().array()).matrix().rowwise() +
         x_mean_.transpose();
}

Vec Normalizer::normalize_y(const Vec& y) const {
  return (y.array() - y_mean_) / y_std_;
}

Vec Normalizer::denormalize_y(const Vec& y) const {
  return (y.array() * y_std_ + y_mean_).matrix();
}

ConstraintMask::ConstraintMask(std::vector<char> optimizable)
    : optimizable_(std::move(optimizable)) {
  if (optimizable_.empty()) throw ValidationError("constraint mask has zero dimensions");
  if (std::find(optimizable_.begin(), optimizable_.end(), char(1)) == optimizable_.end())
    throw ValidationError("constraint mask leaves no optimizable dimension");
}

ConstraintMask ConstraintMask::all_optimizable(int dim) {
  if (dim <= 0) throw ValidationError("constraint mask needs a positive dimension");
  return ConstraintMask(std::vector<char>(static_cast<std::size_t>(dim), char(1)));
}

ConstraintMask ConstraintMask::from_fixed_dims(const std::vector<int>& fixed, int dim) {
  if (dim <= 0) throw ValidationError("constraint mask needs a positive dimension");
  std::vector<char> opt(static_cast<std::size_t>(dim), char(1));
  for (int j : fixed) {
    if (j < 0 || j >= dim)
      throw ValidationError("fixed dimension " + std::to_string(j) + " out of range for d=" +
                            std::to_string(dim));
    opt[static_cast<std::size_t>(j)] = char(0);
  }
  return ConstraintMask(std::move(opt));
}

ConstraintMask ConstraintMask::from_fixed_spec(const std::string& spec, int dim) {
  return from_fixed_dims(parse_dim_spec(spec, dim), dim);
}

int ConstraintMask::n_optimizable() const {
  return static_cast<int>(std::count(optimizable_.begin(), optimizable_.end(), char(1)));
}

std::vector<int> ConstraintMask::fixed_dims() const {
  std::vector<int> out;
  for (int j = 0; j < dim(); ++j)
    if (!optimizable_[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

std::vector<int> parse_dim_spec(const std::string& spec, int dim) {
  std::vector<int> dims;
  auto parse_int = [&](const std::string& tok) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("malformed dimension spec \"" + spec + "\"");
    const long v = std::stol(tok);
    if (v >= dim)
      throw ValidationError("dimension " + tok + " out of range for d=" + std::to_string(dim));
    return static_cast<int>(v);
  };
  for (const std::string& part : split_line(spec, ',')) {
    const std::size_t dash = part.find('-');
    if (dash == std::string::npos) {
      dims.push_back(parse_int(part));
    } else {
      const int lo = parse_int(part.substr(0, dash));
      const int hi = parse_int(part.substr(dash + 1));
      if (lo > hi) throw ValidationError("malformed dimension range \"" + part + "\"");
      for (int j = lo; j <= hi; ++j) dims.push_back(j);
    }
  }
  return dims;
}

std::vector<int> select_mediocre_threshold(const OfflineDataset& ds, double y_thres) {
  std::vector<int> out;
  for (int i = 0; i < ds.size(); ++i)
    if (ds.score(i) < y_thres) out.push_back(i);
  return out;
}

std::vector<int> select_mediocre_bottom_k(const OfflineDataset& ds, int k) {
  if (k < 0 || k > ds.size())
    throw ValidationError("bottom_k " + std::to_string(k) + " outside [0, N]");
  std::vector<int> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ds.score(a) < ds.score(b); });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

std::vector<int> bin_select(const OfflineDataset& ds, int dim, int n_bins, int per_bin) {
  if (dim < 0 || dim >= ds.dim()) throw ValidationError("bin_select dimension out of range");
  if (n_bins < 1) throw ValidationError("bin_select needs at least one bin");
  if (per_bin < 1) throw ValidationError("bin_select needs per_bin >= 1");

  const auto col = ds.features().col(dim);
  const double lo = col.minCoeff();
  const double hi = col.maxCoeff();
  const double width = hi - lo;

  std::vector<std::vector<int>> bins(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < ds.size(); ++i) {
    int b = 0;
    if (width > 0.0) {
      b = static_cast<int>((col[i] - lo) / width * n_bins);
      if (b >= n_bins) b = n_bins - 1;
    }
    bins[static_cast<std::size_t>(b)].push_back(i);
  }

  std::vector<int> out;
  for (auto& members : bins) {
    std::stable_sort(members.begin(), members.end(),
                     [&](int a, int b) { return ds.score(a) < ds.score(b); });
    const std::size_t take = std::min<std::size_t>(members.size(),
                                                   static_cast<std::size_t>(per_bin));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<long>(take));
  }
  return out;
}

}  // namespace romo
