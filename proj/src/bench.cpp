#include "romo/bench.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

namespace romo {

PercentileSummary percentile_summary(const std::vector<double>& scores) {
  if (scores.empty()) throw ValidationError("percentile_summary needs at least one score");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  auto nearest_rank = [&](double q) {
    const auto rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n)));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
  };
  PercentileSummary p;
  p.mean = 0.0;
  for (double s : sorted) p.mean += s;
  p.mean /= static_cast<double>(n);
  p.p100 = nearest_rank(1.0);
  p.p90 = nearest_rank(0.9);
  p.p80 = nearest_rank(0.8);
  p.p50 = nearest_rank(0.5);
  return p;
}

double normalized_score(double y, const OfflineDataset& ds) {
  const double lo = ds.scores().minCoeff();
  const double hi = ds.scores().maxCoeff();
  if (!(hi > lo)) throw ValidationError("dataset score range is degenerate");
  return 100.0 * (y - lo) / (hi - lo);
}

namespace {

std::string task_name(ExperimentConfig::Task task) {
  return task == ExperimentConfig::Task::Hartmann ? "hartmann" : "csv";
}

std::filesystem::path artifact_base(const ExperimentConfig& config, Method method,
                                    std::uint64_t seed) {
  return config.out_dir / (task_name(config.task) + "_" + method_id(method) + "_seed" +
                           std::to_string(seed));
}

void write_report_json(const RunResult& rr, const ExperimentConfig& config,
                       const std::filesystem::path& path) {
  nlohmann::json j;
  j["task"] = rr.report.task;
  j["method"] = method_id(rr.report.method);
  j["seed"] = rr.report.seed;
  j["mean"] = rr.report.scores.mean;
  j["p100"] = rr.report.scores.p100;
  j["p90"] = rr.report.scores.p90;
  j["p80"] = rr.report.scores.p80;
  j["p50"] = rr.report.scores.p50;
  j["n_candidates"] = rr.report.n_candidates;
  j["predicted_scores"] = rr.predicted_scores;
  j["config_echo"] = config_echo_json(config, rr.report.method, rr.report.seed);
  write_text_file(path, j.dump(2) + "\n");
}

void write_candidates_csv(const Mat& designs, const Vec& predicted, const Vec& truth,
                          const std::filesystem::path& path) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < designs.cols(); ++j) out << "x" << j << ",";
  out << "predicted_h,truth_y\n";
  for (Eigen::Index i = 0; i < designs.rows(); ++i) {
    for (Eigen::Index j = 0; j < designs.cols(); ++j)
      out << format_double(designs(i, j)) << ",";
    out << format_double(predicted[i]) << "," << format_double(truth[i]) << "\n";
  }
  write_text_file(path, out.str());
}

Vec predicted_raw(const RomoModel& model, const std::optional<RetrievalPool>& pool,
                  const Mat& positions) {
  std::vector<RetrievalSet> rsets;
  if (method_uses_retrieval(model.method()))
    rsets = retrieve_batch(*pool, positions, model.config().k, model.config().sim);
  return model.normalizer().denormalize_y(model.surrogate_batch(positions, rsets));
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, Method method,
                         std::uint64_t seed) {
  if (config.task == ExperimentConfig::Task::Hartmann)
    return run_hartmann_experiment(config, method, seed);
  return run_csv_experiment(config, method, seed);
}

RunResult run_hartmann_experiment(const ExperimentConfig& config, Method method,
                                  std::uint64_t seed) {
  if (config.protocol.kind != ProtocolConfig::Kind::P1)
    throw ValidationError("the hartmann experiment runs under protocol 1");

  OfflineDataset ds =
      generate_hartmann_dataset(config.hartmann_n_total, config.hartmann_trim, seed);
  DatasetSplit split = split_dataset(ds, config.fractions, seed, config.model.k);
  TrainConfig tc = config.train;
  tc.seed = seed;
  auto [model, log] = train(ds, split, method, config.model, tc);

  const std::vector<int> init_idx =
      bin_select(ds, config.bin_dim, config.n_bins, config.per_bin);
  if (init_idx.empty()) throw ValidationError("no initial particles selected");
  const int n = static_cast<int>(init_idx.size());
  const int d = ds.dim();

  RunResult rr;
  rr.initial_designs.resize(n, d);
  rr.initial_scores.resize(n);
  for (int i = 0; i < n; ++i) {
    rr.initial_designs.row(i) = ds.features().row(init_idx[static_cast<std::size_t>(i)]);
    rr.initial_scores[i] = ds.score(init_idx[static_cast<std::size_t>(i)]);
  }

  const ConstraintMask mask = config.fix_spec.empty()
                                  ? ConstraintMask::all_optimizable(d)
                                  : ConstraintMask::from_fixed_spec(config.fix_spec, d);
  std::optional<RetrievalPool> pool;
  if (method_uses_retrieval(method))
    pool = build_normalized_pool(ds, split.pool_idx, model.normalizer());
  ModelSurrogate surrogate(model, pool);

  ParticleState state(model.normalizer().normalize_rows(rr.initial_designs), mask);
  if (config.write_trajectory) state.trajectory.emplace();
  const Mat best = run_protocol1(surrogate, state, config.protocol);

  rr.candidate_predicted = predicted_raw(model, pool, best);
  rr.candidate_designs = model.normalizer().denormalize_rows(best);
  for (int j : mask.fixed_dims()) rr.candidate_designs.col(j) = rr.initial_designs.col(j);

  std::vector<Design> designs;
  designs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) designs.push_back(rr.candidate_designs.row(i).transpose());
  const std::vector<double> truth = evaluate_batch(OracleHandle::hartmann(), designs);
  rr.candidate_truth = Eigen::Map<const Vec>(truth.data(), n);
  rr.reported_scores = rr.candidate_truth;

  rr.report.task = task_name(config.task);
  rr.report.method = method;
  rr.report.seed = seed;
  rr.report.scores = percentile_summary(truth);
  rr.report.n_candidates = n;

  rr.train_log = std::move(log);
  rr.final_lambda_dual = model.lambda_dual();
  if (!rr.train_log.rows.empty()) {
    const int best_epoch =
        rr.train_log.best_epoch >= 0
            ? rr.train_log.best_epoch
            : rr.train_log.rows.back().epoch;
    rr.final_train_l_c = rr.train_log.rows[static_cast<std::size_t>(best_epoch)].l_c;
  }

  const std::filesystem::path base = artifact_base(config, method, seed);
  rr.report_path = base.string() + "_report.json";
  rr.candidates_path = base.string() + "_candidates.csv";
  rr.train_log_path = base.string() + "_train_log.csv";
  write_report_json(rr, config, rr.report_path);
  write_candidates_csv(rr.candidate_designs, rr.candidate_predicted, rr.candidate_truth,
                       rr.candidates_path);
  rr.train_log.save_csv(rr.train_log_path);
  if (state.trajectory) {
    rr.trajectory_path = base.string() + "_trajectory.csv";
    state.trajectory->save_csv(rr.trajectory_path);
  }

  std::vector<ScatterPoint> points;
  points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    points.push_back({rr.candidate_designs(i, 0), rr.candidate_designs(i, 1),
                      rr.candidate_truth[i]});
  rr.scatter_path = base.string() + "_candidates.svg";
  emit_scatter_svg(points, rr.scatter_path);

  return rr;
}

RunResult run_csv_experiment(const ExperimentConfig& config, Method method,
                             std::uint64_t seed) {
  if (config.protocol.kind != ProtocolConfig::Kind::P2)
    throw ValidationError("the csv experiment runs under protocol 2");
  if (config.csv_path.empty()) throw ValidationError("csv task needs a dataset path");

  OfflineDataset ds = OfflineDataset::load_csv(config.csv_path);
  DatasetSplit split = split_dataset(ds, config.fractions, seed, config.model.k);
  TrainConfig tc = config.train;
  tc.seed = seed;
  auto [model, log] = train(ds, split, method, config.model, tc);

  const std::vector<int> init_idx = select_mediocre_bottom_k(ds, config.bottom_k);
  if (init_idx.empty()) throw ValidationError("no initial particles selected");
  const int n = static_cast<int>(init_idx.size());
  const int d = ds.dim();

  RunResult rr;
  rr.initial_designs.resize(n, d);
  rr.initial_scores.resize(n);
  for (int i = 0; i < n; ++i) {
    rr.initial_designs.row(i) = ds.features().row(init_idx[static_cast<std::size_t>(i)]);
    rr.initial_scores[i] = ds.score(init_idx[static_cast<std::size_t>(i)]);
  }

  const ConstraintMask mask = config.fix_spec.empty()
                                  ? ConstraintMask::all_optimizable(d)
                                  : ConstraintMask::from_fixed_spec(config.fix_spec, d);
  std::optional<RetrievalPool> pool;
  if (method_uses_retrieval(method))
    pool = build_normalized_pool(ds, split.pool_idx, model.normalizer());
  ModelSurrogate surrogate(model, pool);

  ParticleState state(model.normalizer().normalize_rows(rr.initial_designs), mask);
  if (config.write_trajectory) state.trajectory.emplace();
  const std::vector<Mat> last_q = run_protocol2(surrogate, state, config.protocol);

  const int q = config.protocol.q;
  Mat flat(n * q, d);
  for (int i = 0; i < n; ++i)
    flat.middleRows(i * q, q) = last_q[static_cast<std::size_t>(i)];

  rr.candidate_predicted = predicted_raw(model, pool, flat);
  rr.candidate_designs = model.normalizer().denormalize_rows(flat);
  for (int j : mask.fixed_dims())
    for (int i = 0; i < n; ++i)
      rr.candidate_designs.col(j).segment(i * q, q).setConstant(rr.initial_designs(i, j));

  rr.predicted_scores = !config.oracle_command.has_value();
  if (rr.predicted_scores) {
    rr.candidate_truth = Vec::Constant(n * q, std::nan(""));
  } else {
    std::vector<Design> designs;
    designs.reserve(static_cast<std::size_t>(n * q));
    for (Eigen::Index i = 0; i < rr.candidate_designs.rows(); ++i)
      designs.push_back(rr.candidate_designs.row(i).transpose());
    const std::vector<double> truth =
        evaluate_batch(OracleHandle::external(*config.oracle_command), designs);
    rr.candidate_truth = Eigen::Map<const Vec>(truth.data(), n * q);
  }

  const Vec& pick_from = rr.predicted_scores ? rr.candidate_predicted : rr.candidate_truth;
  rr.reported_scores.resize(n);
  for (int i = 0; i < n; ++i)
    rr.reported_scores[i] = pick_from.segment(i * q, q).maxCoeff();

  rr.report.task = task_name(config.task);
  rr.report.method = method;
  rr.report.seed = seed;
  rr.report.scores = percentile_summary(
      std::vector<double>(rr.reported_scores.begin(), rr.reported_scores.end()));
  rr.report.n_candidates = n;

  rr.train_log = std::move(log);
  rr.final_lambda_dual = model.lambda_dual();
  if (!rr.train_log.rows.empty()) {
    const int best_epoch =
        rr.train_log.best_epoch >= 0
            ? rr.train_log.best_epoch
            : rr.train_log.rows.back().epoch;
    rr.final_train_l_c = rr.train_log.rows[static_cast<std::size_t>(best_epoch)].l_c;
  }

  const std::filesystem::path base = artifact_base(config, method, seed);
  rr.report_path = base.string() + "_report.json";
  rr.candidates_path = base.string() + "_candidates.csv";
  rr.train_log_path = base.string() + "_train_log.csv";
  write_report_json(rr, config, rr.report_path);
  write_candidates_csv(rr.candidate_designs, rr.candidate_predicted, rr.candidate_truth,
                       rr.candidates_path);
  rr.train_log.save_csv(rr.train_log_path);
  if (state.trajectory) {
    rr.trajectory_path = base.string() + "_trajectory.csv";
    state.trajectory->save_csv(rr.trajectory_path);
  }
  return rr;
}

SeedAggregate aggregate_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("no reports to aggregate");
  const double n = static_cast<double>(reports.size());
  auto stats = [&](auto field) {
    double mean = 0.0;
    for (const EvalReport& r : reports) mean += field(r);
    mean /= n;
    double var = 0.0;
    for (const EvalReport& r : reports) {
      const double dv = field(r) - mean;
      var += dv * dv;
    }
    return std::pair<double, double>(mean, std::sqrt(var / n));
  };
  SeedAggregate a;
  a.n_seeds = static_cast<int>(reports.size());
  std::tie(a.mean_of_means, a.std_of_means) =
      stats([](const EvalReport& r) { return r.scores.mean; });
  std::tie(a.mean_of_p100, a.std_of_p100) =
      stats([](const EvalReport& r) { return r.scores.p100; });
  std::tie(a.mean_of_p50, a.std_of_p50) =
      stats([](const EvalReport& r) { return r.scores.p50; });
  return a;
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string markdown_table(const std::vector<MethodRow>& rows, double xtilde_mean,
                           double xtilde_max, double xtilde_median) {
  std::ostringstream out;
  out << "| Method | Mean | Maximum | Median |\n";
  out << "|---|---|---|---|\n";
  out << "| x~ (init) | " << fixed3(xtilde_mean) << " | " << fixed3(xtilde_max) << " | "
      << fixed3(xtilde_median) << " |\n";
  for (const MethodRow& r : rows) {
    out << "| " << method_display_name(r.method) << " | " << fixed3(r.aggregate.mean_of_means)
        << " ± " << fixed3(r.aggregate.std_of_means) << " | "
        << fixed3(r.aggregate.mean_of_p100) << " ± " << fixed3(r.aggregate.std_of_p100)
        << " | " << fixed3(r.aggregate.mean_of_p50) << " ± "
        << fixed3(r.aggregate.std_of_p50) << " |\n";
  }
  return out.str();
}

void emit_scatter_svg(const std::vector<ScatterPoint>& points,
                      const std::filesystem::path& path) {
  const double width = 640.0, height = 480.0, margin = 40.0;
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  double s_lo = 0.0, s_hi = 1.0;
  if (!points.empty()) {
    x_lo = x_hi = points.front().x;
    y_lo = y_hi = points.front().y;
    s_lo = s_hi = points.front().score;
    for (const ScatterPoint& p : points) {
      x_lo = std::min(x_lo, p.x);
      x_hi = std::max(x_hi, p.x);
      y_lo = std::min(y_lo, p.y);
      y_hi = std::max(y_hi, p.y);
      s_lo = std::min(s_lo, p.score);
      s_hi = std::max(s_hi, p.score);
    }
  }
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;

  auto px = [&](double x) { return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin); };
  auto py = [&](double y) {
    return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin);
  };
  auto coord = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  for (const ScatterPoint& p : points) {
    const double t = s_hi > s_lo ? (p.score - s_lo) / (s_hi - s_lo) : 0.5;
    const long r = std::lround(255.0 * t);
    const long b = std::lround(255.0 * (1.0 - t));
    out << "<circle cx=\"" << coord(px(p.x)) << "\" cy=\"" << coord(py(p.y))
        << "\" r=\"4\" fill=\"rgb(" << r << ",60," << b << ")\" fill-opacity=\"0.8\"/>\n";
  }
  out << "</svg>\n";
  write_text_file(path, out.str());
}

CandidateFile load_candidates(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) throw ValidationError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[header.size() - 2] != "predicted_h" ||
      header.back() != "truth_y")
    throw ValidationError(path.string() + ": not a candidate file");
  const int d = static_cast<int>(header.size()) - 2;

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cs(line);
    std::string cell;
    while (std::getline(cs, cell, ',')) {
      const std::optional<double> v = parse_double(cell);
      if (!v && cell != "nan")
        throw ValidationError(path.string() + ": line " + std::to_string(line_no) +
                              ": non-numeric cell \"" + cell + "\"");
      row.push_back(v ? *v : std::nan(""));
    }
    if (static_cast<int>(row.size()) != d + 2)
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) +
                            ": wrong cell count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path.string() + ": empty dataset");

  CandidateFile cf;
  const int n = static_cast<int>(rows.size());
  cf.designs.resize(n, d);
  cf.predicted.resize(n);
  cf.truth.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) cf.designs(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    cf.predicted[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    cf.truth[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d) + 1];
  }
  return cf;
}

nlohmann::json config_echo_json(const ExperimentConfig& config, Method method,
                                std::uint64_t seed) {
  nlohmann::json j;
  j["task"] = task_name(config.task);
  j["method"] = method_id(method);
  j["seed"] = seed;
  j["fractions"] = {{"train", config.fractions.train},
                    {"valid", config.fractions.valid},
                    {"pool", config.fractions.pool}};
  nlohmann::json sim;
  switch (config.model.sim.variant) {
    case SimilarityKind::Variant::InnerProduct: sim = {{"kind", "inner_product"}}; break;
    case SimilarityKind::Variant::Rbf:
      sim = {{"kind", "rbf"}, {"sigma", config.model.sim.sigma}};
      break;
    case SimilarityKind::Variant::Cosine: sim = {{"kind", "cosine"}}; break;
  }
  j["model"] = {{"hidden", config.model.hidden}, {"beta", config.model.beta},
                {"k", config.model.k},           {"similarity", sim},
                {"gamma", config.model.gamma},   {"lambda", config.model.ridge_lambda}};
  j["train"] = {{"epochs", config.train.epochs},
                {"batch_size", config.train.batch_size},
                {"net_lr", config.train.net_lr},
                {"tau", config.train.tau},
                {"dual_lr", config.train.dual_lr},
                {"patience", config.train.patience}};
  j["protocol"] = {{"kind", config.protocol.kind == ProtocolConfig::Kind::P1 ? "p1" : "p2"},
                   {"eta", config.protocol.eta},
                   {"max_steps", config.protocol.max_steps},
                   {"converge_tol", config.protocol.converge_tol},
                   {"T", config.protocol.t},
                   {"Q", config.protocol.q}};
  if (config.task == ExperimentConfig::Task::Hartmann) {
    j["hartmann"] = {{"n_total", config.hartmann_n_total},
                     {"trim", config.hartmann_trim},
                     {"bin_dim", config.bin_dim},
                     {"n_bins", config.n_bins},
                     {"per_bin", config.per_bin}};
  } else {
    j["csv"] = {{"path", config.csv_path.string()},
                {"bottom_k", config.bottom_k},
                {"oracle", config.oracle_command.value_or("")}};
  }
  j["fix"] = config.fix_spec;
  return j;
}

}  // namespace romo
