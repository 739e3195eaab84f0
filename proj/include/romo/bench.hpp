#pragma once

#include "romo/dataset.hpp"
#include "romo/model.hpp"
#include "romo/oracle.hpp"
#include "romo/particle.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace romo {

struct PercentileSummary {
  double mean = 0.0;
  double p100 = 0.0;
  double p90 = 0.0;
  double p80 = 0.0;
  double p50 = 0.0;
};

// Nearest-rank percentiles: p_q = ascending[ceil(q * n) - 1].
PercentileSummary percentile_summary(const std::vector<double>& scores);

// Min-max over the dataset's score range, scaled to 100. Values outside the
// range extrapolate past 0/100.
double normalized_score(double y, const OfflineDataset& ds);

struct EvalReport {
  std::string task;
  Method method = Method::RomoN;
  std::uint64_t seed = 0;
  PercentileSummary scores;
  int n_candidates = 0;
};

struct ExperimentConfig {
  enum class Task { Hartmann, Csv };
  Task task = Task::Hartmann;

  std::filesystem::path csv_path;                // Csv task
  std::optional<std::string> oracle_command;     // Csv: absent -> predicted scores
  int bottom_k = 128;                            // Csv initial particles

  int hartmann_n_total = 12000;
  int hartmann_trim = 1000;
  int bin_dim = 2;
  int n_bins = 50;
  int per_bin = 2;

  std::string fix_spec = "2";  // empty -> every dimension optimizable

  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  SplitFractions fractions;
  ModelConfig model;
  TrainConfig train;
  ProtocolConfig protocol;

  std::filesystem::path out_dir = ".";
  bool write_trajectory = true;
};

struct RunResult {
  EvalReport report;
  bool predicted_scores = false;

  Mat initial_designs;   // raw units
  Vec initial_scores;    // dataset truth at the initial particles
  Mat candidate_designs; // raw units, fixed dims bit-identical to their origin
  Vec candidate_predicted;
  Vec candidate_truth;
  Vec reported_scores;   // what the percentiles summarize

  TrainLog train_log;
  double final_train_l_c = 0.0;
  double final_lambda_dual = 0.0;

  std::filesystem::path report_path;
  std::filesystem::path candidates_path;
  std::filesystem::path trajectory_path;
  std::filesystem::path train_log_path;
  std::filesystem::path scatter_path;
};

// Dataset generation, training, bin-selected particles, Protocol 1 ascent
// with the configured mask, oracle evaluation, artifact files.
RunResult run_hartmann_experiment(const ExperimentConfig& config, Method method,
                                  std::uint64_t seed);

// CSV task: bottom-k particles, Protocol 2, best-of-last-Q per particle
// against the external oracle (or the surrogate, flagged as predicted).
RunResult run_csv_experiment(const ExperimentConfig& config, Method method,
                             std::uint64_t seed);

RunResult run_experiment(const ExperimentConfig& config, Method method,
                         std::uint64_t seed);

// Per-statistic mean and population std across seeds.
struct SeedAggregate {
  int n_seeds = 0;
  double mean_of_means = 0.0, std_of_means = 0.0;
  double mean_of_p100 = 0.0, std_of_p100 = 0.0;
  double mean_of_p50 = 0.0, std_of_p50 = 0.0;
};

SeedAggregate aggregate_reports(const std::vector<EvalReport>& reports);

struct MethodRow {
  Method method;
  SeedAggregate aggregate;
};

// Mean / Maximum / Median table over methods, plus the initial-particle
// baseline row.
std::string markdown_table(const std::vector<MethodRow>& rows, double xtilde_mean,
                           double xtilde_max, double xtilde_median);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

// Standalone SVG, score-colored circles, byte-deterministic for fixed input.
void emit_scatter_svg(const std::vector<ScatterPoint>& points,
                      const std::filesystem::path& path);

// Columns of a candidate CSV written by the experiment runners.
struct CandidateFile {
  Mat designs;
  Vec predicted;
  Vec truth;
};

CandidateFile load_candidates(const std::filesystem::path& path);

nlohmann::json config_echo_json(const ExperimentConfig& config, Method method,
                                std::uint64_t seed);

}  // namespace romo
