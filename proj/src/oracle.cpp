#include "romo/oracle.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"
#include "romo/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace romo {

double hartmann3(const Design& x) {
  if (x.size() != 3) throw ValidationError("hartmann3 expects 3 dimensions");
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double A[4][3] = {
      {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}, {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}};
  static const double P[4][3] = {{0.3689, 0.1170, 0.2673},
                                 {0.4699, 0.4387, 0.7470},
                                 {0.1091, 0.8732, 0.5547},
                                 {0.0381, 0.5743, 0.8828}};
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double d = x[j] - P[i][j];
      inner += A[i][j] * d * d;
    }
    sum += alpha[i] * std::exp(-inner);
  }
  return sum;
}

OfflineDataset generate_hartmann_dataset(int n_total, int trim, std::uint64_t seed) {
  if (trim < 0) throw ValidationError("trim must be non-negative");
  if (n_total <= 2 * trim)
    throw ValidationError("n_total " + std::to_string(n_total) +
                          " leaves nothing after trimming 2*" + std::to_string(trim));

  CounterRng rng(seed, /*stream=*/0);
  Mat features(n_total, 3);
  Vec scores(n_total);
  for (int i = 0; i < n_total; ++i) {
    for (int j = 0; j < 3; ++j) features(i, j) = rng.next_open01();
    scores[i] = hartmann3(features.row(i).transpose());
  }

  std::vector<int> order(static_cast<std::size_t>(n_total));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });

  std::vector<int> keep(order.begin() + trim, order.end() - trim);
  std::sort(keep.begin(), keep.end());

  const int n = static_cast<int>(keep.size());
  Mat kept_x(n, 3);
  Vec kept_y(n);
  for (int i = 0; i < n; ++i) {
    kept_x.row(i) = features.row(keep[static_cast<std::size_t>(i)]);
    kept_y[i] = scores[keep[static_cast<std::size_t>(i)]];
  }
  return OfflineDataset(std::move(kept_x), std::move(kept_y));
}

namespace {

std::filesystem::path fresh_temp_path(const char* tag) {
  static std::atomic<unsigned> counter{0};
  const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
  std::ostringstream name;
  name << "romo_" << tag << "_" << now << "_" << counter.fetch_add(1);
  return std::filesystem::temp_directory_path() / name.str();
}

std::vector<double> run_external(const std::string& command,
                                 const std::vector<Design>& designs) {
  const std::filesystem::path in_path = fresh_temp_path("in");
  const std::filesystem::path out_path = fresh_temp_path("out");

  std::ostringstream in;
  for (const Design& x : designs) {
    for (int j = 0; j < x.size(); ++j) {
      if (j) in << ",";
      in << format_double(x[j]);
    }
    in << "\n";
  }
  write_text_file(in_path, in.str());

  const std::string shell_cmd =
      "( " + command + " ) < '" + in_path.string() + "' > '" + out_path.string() + "'";
  const int status = std::system(shell_cmd.c_str());

  std::string out_text;
  if (std::filesystem::exists(out_path)) out_text = read_text_file(out_path);
  std::error_code ignore;
  std::filesystem::remove(in_path, ignore);
  std::filesystem::remove(out_path, ignore);

  std::vector<double> scores;
  std::istringstream lines(out_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::optional<double> v = parse_double(line);
    if (!v)
      throw IoError("external oracle: design " + std::to_string(scores.size()) +
                    ": non-numeric score \"" + line + "\"");
    scores.push_back(*v);
  }

  if (status != 0)
    throw IoError("external oracle command failed (status " + std::to_string(status) +
                  ") after " + std::to_string(scores.size()) + " of " +
                  std::to_string(designs.size()) + " designs");
  if (scores.size() != designs.size())
    throw IoError("external oracle produced " + std::to_string(scores.size()) +
                  " scores for " + std::to_string(designs.size()) +
                  " designs (failed at design " + std::to_string(scores.size()) + ")");
  return scores;
}

}  // namespace

std::vector<double> evaluate_batch(const OracleHandle& oracle,
                                   const std::vector<Design>& designs) {
  if (designs.empty()) return {};
  if (oracle.kind == OracleHandle::Kind::Hartmann3) {
    std::vector<double> scores;
    scores.reserve(designs.size());
    for (const Design& x : designs) scores.push_back(hartmann3(x));
    return scores;
  }
  if (oracle.command.empty()) throw ValidationError("external oracle has no command");
  const auto d = designs.front().size();
  for (const Design& x : designs)
    if (x.size() != d) throw ValidationError("designs have mixed dimensionality");
  return run_external(oracle.command, designs);
}

}  // namespace romo
