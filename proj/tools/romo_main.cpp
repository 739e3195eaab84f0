#include "romo/bench.hpp"
#include "romo/dataset.hpp"
#include "romo/errors.hpp"
#include "romo/io.hpp"
#include "romo/model.hpp"
#include "romo/oracle.hpp"
#include "romo/particle.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace romo;

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<Method> parse_methods(const std::string& text) {
  std::vector<Method> methods;
  for (const std::string& tok : split_csv_list(text)) methods.push_back(parse_method(tok));
  if (methods.empty()) throw ValidationError("empty method list");
  return methods;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& tok : split_csv_list(text)) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("malformed seed \"" + tok + "\"");
    seeds.push_back(std::stoull(tok));
  }
  return seeds;
}

std::vector<int> parse_hidden(const std::string& text) {
  std::vector<int> dims;
  for (const std::string& tok : split_csv_list(text)) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("malformed hidden layer size \"" + tok + "\"");
    dims.push_back(std::stoi(tok));
    if (dims.back() < 1) throw ValidationError("hidden layer sizes must be positive");
  }
  if (dims.empty()) throw ValidationError("empty hidden layer list");
  return dims;
}

SimilarityKind make_similarity(const std::string& kind, double sigma) {
  if (kind == "inner_product") return SimilarityKind::inner_product();
  if (kind == "rbf") return SimilarityKind::rbf(sigma);
  if (kind == "cosine") return SimilarityKind::cosine();
  throw ValidationError("unknown similarity kind \"" + kind +
                        "\" (expected inner_product, rbf, cosine)");
}

struct CliConfig {
  ExperimentConfig exp;
  std::vector<Method> methods = {Method::Grad, Method::RemP, Method::RemN, Method::RomoP,
                                 Method::RomoN};
};

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& scope) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ValidationError("unknown config key \"" + scope + item.key() + "\"");
}

void apply_config_json(CliConfig& cfg, const nlohmann::json& j) {
  check_keys(j, {"task", "data", "oracle", "out_dir", "methods", "seeds", "fix", "hidden",
                 "beta", "similarity", "retrieval", "aggregation", "split", "train",
                 "protocol", "hartmann", "bottom_k", "write_trajectory"},
             "");
  if (j.contains("task")) {
    const std::string t = j.at("task").get<std::string>();
    if (t == "hartmann") cfg.exp.task = ExperimentConfig::Task::Hartmann;
    else if (t == "csv") cfg.exp.task = ExperimentConfig::Task::Csv;
    else throw ValidationError("unknown task \"" + t + "\"");
  }
  if (j.contains("data")) cfg.exp.csv_path = j.at("data").get<std::string>();
  if (j.contains("oracle")) {
    const std::string o = j.at("oracle").get<std::string>();
    if (!o.empty() && o != "none") cfg.exp.oracle_command = o;
  }
  if (j.contains("out_dir")) cfg.exp.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("seeds")) cfg.exp.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("fix")) cfg.exp.fix_spec = j.at("fix").get<std::string>();
  if (j.contains("hidden")) cfg.exp.model.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("beta")) cfg.exp.model.beta = j.at("beta").get<double>();
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    check_keys(s, {"kind", "sigma"}, "similarity.");
    cfg.exp.model.sim = make_similarity(s.value("kind", "rbf"), s.value("sigma", 1.0));
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    check_keys(r, {"k"}, "retrieval.");
    if (r.contains("k")) cfg.exp.model.k = r.at("k").get<int>();
  }
  if (j.contains("aggregation")) {
    const auto& a = j.at("aggregation");
    check_keys(a, {"gamma", "lambda"}, "aggregation.");
    if (a.contains("gamma")) cfg.exp.model.gamma = a.at("gamma").get<double>();
    if (a.contains("lambda")) cfg.exp.model.ridge_lambda = a.at("lambda").get<double>();
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, {"train", "valid", "pool"}, "split.");
    if (s.contains("train")) cfg.exp.fractions.train = s.at("train").get<double>();
    if (s.contains("valid")) cfg.exp.fractions.valid = s.at("valid").get<double>();
    if (s.contains("pool")) cfg.exp.fractions.pool = s.at("pool").get<double>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"epochs", "batch_size", "net_lr", "tau", "dual_lr", "patience"}, "train.");
    if (t.contains("epochs")) cfg.exp.train.epochs = t.at("epochs").get<int>();
    if (t.contains("batch_size")) cfg.exp.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("net_lr")) cfg.exp.train.net_lr = t.at("net_lr").get<double>();
    if (t.contains("tau")) cfg.exp.train.tau = t.at("tau").get<double>();
    if (t.contains("dual_lr")) cfg.exp.train.dual_lr = t.at("dual_lr").get<double>();
    if (t.contains("patience")) cfg.exp.train.patience = t.at("patience").get<int>();
  }
  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    check_keys(p, {"kind", "eta", "max_steps", "converge_tol", "T", "Q"}, "protocol.");
    if (p.contains("kind")) {
      const std::string k = p.at("kind").get<std::string>();
      if (k == "p1") cfg.exp.protocol.kind = ProtocolConfig::Kind::P1;
      else if (k == "p2") cfg.exp.protocol.kind = ProtocolConfig::Kind::P2;
      else throw ValidationError("unknown protocol \"" + k + "\"");
    }
    if (p.contains("eta")) cfg.exp.protocol.eta = p.at("eta").get<double>();
    if (p.contains("max_steps")) cfg.exp.protocol.max_steps = p.at("max_steps").get<int>();
    if (p.contains("converge_tol"))
      cfg.exp.protocol.converge_tol = p.at("converge_tol").get<double>();
    if (p.contains("T")) cfg.exp.protocol.t = p.at("T").get<int>();
    if (p.contains("Q")) cfg.exp.protocol.q = p.at("Q").get<int>();
  }
  if (j.contains("hartmann")) {
    const auto& h = j.at("hartmann");
    check_keys(h, {"n_total", "trim", "bin_dim", "n_bins", "per_bin"}, "hartmann.");
    if (h.contains("n_total")) cfg.exp.hartmann_n_total = h.at("n_total").get<int>();
    if (h.contains("trim")) cfg.exp.hartmann_trim = h.at("trim").get<int>();
    if (h.contains("bin_dim")) cfg.exp.bin_dim = h.at("bin_dim").get<int>();
    if (h.contains("n_bins")) cfg.exp.n_bins = h.at("n_bins").get<int>();
    if (h.contains("per_bin")) cfg.exp.per_bin = h.at("per_bin").get<int>();
  }
  if (j.contains("bottom_k")) cfg.exp.bottom_k = j.at("bottom_k").get<int>();
  if (j.contains("write_trajectory"))
    cfg.exp.write_trajectory = j.at("write_trajectory").get<bool>();
}

// Everything the flat flags can override; only values the user actually
// passed are applied, so precedence stays CLI > file > defaults.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> task, data, oracle, out_dir, methods, seeds, fix, hidden,
      sim_kind, protocol;
  std::optional<int> epochs, batch_size, patience, k, max_steps, t_steps, q_last, n_total,
      trim, bin_dim, n_bins, per_bin, bottom_k;
  std::optional<double> net_lr, tau, dual_lr, eta, converge_tol, beta, gamma, lambda, sigma,
      frac_train, frac_valid, frac_pool;
  std::optional<bool> no_trajectory;
};

void add_model_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (flags override it)");
  cmd->add_option("--hidden", o.hidden, "hidden layer sizes, e.g. 64,64");
  cmd->add_option("--beta", o.beta, "ensemble weight on the plain surrogate");
  cmd->add_option("--k", o.k, "retrieval size");
  cmd->add_option("--sim", o.sim_kind, "similarity kind: inner_product, rbf, cosine");
  cmd->add_option("--sigma", o.sigma, "rbf bandwidth");
  cmd->add_option("--gamma", o.gamma, "shifted-softmax factor");
  cmd->add_option("--lambda", o.lambda, "ridge strength for non-parametric weights");
  cmd->add_option("--train-frac", o.frac_train, "train fraction");
  cmd->add_option("--valid-frac", o.frac_valid, "validation fraction");
  cmd->add_option("--pool-frac", o.frac_pool, "retrieval pool fraction");
}

void add_train_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--batch-size", o.batch_size, "minibatch size");
  cmd->add_option("--net-lr", o.net_lr, "Adam learning rate");
  cmd->add_option("--tau", o.tau, "conservatism threshold");
  cmd->add_option("--dual-lr", o.dual_lr, "dual ascent rate");
  cmd->add_option("--patience", o.patience, "early-stopping patience in epochs");
}

void add_protocol_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--protocol", o.protocol, "p1 or p2");
  cmd->add_option("--eta", o.eta, "ascent step size");
  cmd->add_option("--max-steps", o.max_steps, "protocol 1 step cap");
  cmd->add_option("--tol", o.converge_tol, "protocol 1 convergence tolerance");
  cmd->add_option("--T", o.t_steps, "protocol 2 total steps");
  cmd->add_option("--Q", o.q_last, "protocol 2 emitted tail length");
}

void apply_overrides(CliConfig& cfg, const Overrides& o) {
  if (o.config_path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(*o.config_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(*o.config_path + ": " + e.what());
    }
    apply_config_json(cfg, j);
  }
  if (o.task) {
    if (*o.task == "hartmann") cfg.exp.task = ExperimentConfig::Task::Hartmann;
    else if (*o.task == "csv") cfg.exp.task = ExperimentConfig::Task::Csv;
    else throw ValidationError("unknown task \"" + *o.task + "\"");
  }
  if (o.data) cfg.exp.csv_path = *o.data;
  if (o.oracle && !o.oracle->empty() && *o.oracle != "none") cfg.exp.oracle_command = *o.oracle;
  if (o.out_dir) cfg.exp.out_dir = *o.out_dir;
  if (o.methods) cfg.methods = parse_methods(*o.methods);
  if (o.seeds) cfg.exp.seeds = parse_seeds(*o.seeds);
  if (o.fix) cfg.exp.fix_spec = *o.fix;
  if (o.hidden) cfg.exp.model.hidden = parse_hidden(*o.hidden);
  if (o.beta) cfg.exp.model.beta = *o.beta;
  if (o.k) cfg.exp.model.k = *o.k;
  if (o.sim_kind || o.sigma) {
    const std::string kind = o.sim_kind.value_or(
        cfg.exp.model.sim.variant == SimilarityKind::Variant::InnerProduct ? "inner_product"
        : cfg.exp.model.sim.variant == SimilarityKind::Variant::Cosine     ? "cosine"
                                                                           : "rbf");
    cfg.exp.model.sim = make_similarity(kind, o.sigma.value_or(cfg.exp.model.sim.sigma));
  }
  if (o.gamma) cfg.exp.model.gamma = *o.gamma;
  if (o.lambda) cfg.exp.model.ridge_lambda = *o.lambda;
  if (o.frac_train) cfg.exp.fractions.train = *o.frac_train;
  if (o.frac_valid) cfg.exp.fractions.valid = *o.frac_valid;
  if (o.frac_pool) cfg.exp.fractions.pool = *o.frac_pool;
  if (o.epochs) cfg.exp.train.epochs = *o.epochs;
  if (o.batch_size) cfg.exp.train.batch_size = *o.batch_size;
  if (o.net_lr) cfg.exp.train.net_lr = *o.net_lr;
  if (o.tau) cfg.exp.train.tau = *o.tau;
  if (o.dual_lr) cfg.exp.train.dual_lr = *o.dual_lr;
  if (o.patience) cfg.exp.train.patience = *o.patience;
  if (o.protocol) {
    if (*o.protocol == "p1") cfg.exp.protocol.kind = ProtocolConfig::Kind::P1;
    else if (*o.protocol == "p2") cfg.exp.protocol.kind = ProtocolConfig::Kind::P2;
    else throw ValidationError("unknown protocol \"" + *o.protocol + "\"");
  } else if (cfg.exp.task == ExperimentConfig::Task::Csv) {
    cfg.exp.protocol.kind = ProtocolConfig::Kind::P2;
  }
  if (o.eta) cfg.exp.protocol.eta = *o.eta;
  if (o.max_steps) cfg.exp.protocol.max_steps = *o.max_steps;
  if (o.converge_tol) cfg.exp.protocol.converge_tol = *o.converge_tol;
  if (o.t_steps) cfg.exp.protocol.t = *o.t_steps;
  if (o.q_last) cfg.exp.protocol.q = *o.q_last;
  if (o.n_total) cfg.exp.hartmann_n_total = *o.n_total;
  if (o.trim) cfg.exp.hartmann_trim = *o.trim;
  if (o.bin_dim) cfg.exp.bin_dim = *o.bin_dim;
  if (o.n_bins) cfg.exp.n_bins = *o.n_bins;
  if (o.per_bin) cfg.exp.per_bin = *o.per_bin;
  if (o.bottom_k) cfg.exp.bottom_k = *o.bottom_k;
  if (o.no_trajectory && *o.no_trajectory) cfg.exp.write_trajectory = false;
}

int cmd_gen_data(const std::string& task, std::uint64_t seed, int n_total, int trim,
                 const std::string& out) {
  if (task != "hartmann")
    throw ValidationError("gen-data supports only the hartmann task, got \"" + task + "\"");
  const OfflineDataset ds = generate_hartmann_dataset(n_total, trim, seed);
  ds.save_csv(out);
  std::cout << "N=" << ds.size() << " d=" << ds.dim() << " y∈["
            << format_double(ds.scores().minCoeff()) << ","
            << format_double(ds.scores().maxCoeff()) << "]\n";
  return 0;
}

int cmd_train(const CliConfig& cfg, const std::string& method_str, const std::string& data,
              const std::string& out, std::uint64_t seed) {
  const Method method = parse_method(method_str);
  const OfflineDataset ds = OfflineDataset::load_csv(data);
  const DatasetSplit split = split_dataset(ds, cfg.exp.fractions, seed, cfg.exp.model.k);
  TrainConfig tc = cfg.exp.train;
  tc.seed = seed;
  auto [model, log] = train(ds, split, method, cfg.exp.model, tc);

  nlohmann::json j = model.to_json();
  ExperimentConfig echo_cfg = cfg.exp;
  echo_cfg.task = ExperimentConfig::Task::Csv;
  echo_cfg.csv_path = data;
  j["config_echo"] = config_echo_json(echo_cfg, method, seed);
  write_text_file(out, j.dump(2) + "\n");

  const std::filesystem::path log_path =
      std::filesystem::path(out).replace_extension().string() + "_train_log.csv";
  log.save_csv(log_path);

  const TrainLogRow& last = log.rows.back();
  std::cout << "trained " << method_id(method) << " for " << log.rows.size()
            << " epochs (best " << log.best_epoch << "), valid_mse="
            << format_double(last.valid_mse) << ", checkpoint " << out << "\n";
  return 0;
}

struct OptimizeArgs {
  std::string model_path, data, out;
  std::string trajectory;
  std::string init = "bottom_k";
  std::string oracle = "none";
  std::uint64_t seed = 0;
};

int cmd_optimize(const CliConfig& cfg, const OptimizeArgs& a) {
  const RomoModel model = RomoModel::load(a.model_path);
  const OfflineDataset ds = OfflineDataset::load_csv(a.data);
  if (ds.dim() != model.dim())
    throw ValidationError("dataset dimension does not match the checkpoint");

  std::vector<int> init_idx;
  if (a.init == "bottom_k")
    init_idx = select_mediocre_bottom_k(ds, std::min(cfg.exp.bottom_k, ds.size()));
  else if (a.init == "bin")
    init_idx = bin_select(ds, cfg.exp.bin_dim, cfg.exp.n_bins, cfg.exp.per_bin);
  else
    throw ValidationError("unknown init rule \"" + a.init + "\" (expected bottom_k, bin)");
  if (init_idx.empty()) throw ValidationError("no initial particles selected");

  const int n = static_cast<int>(init_idx.size());
  const int d = ds.dim();
  Mat init_raw(n, d);
  for (int i = 0; i < n; ++i)
    init_raw.row(i) = ds.features().row(init_idx[static_cast<std::size_t>(i)]);

  std::vector<int> fixed;
  if (!cfg.exp.fix_spec.empty()) fixed = parse_dim_spec(cfg.exp.fix_spec, d);
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
  const bool all_fixed = static_cast<int>(fixed.size()) == d;

  std::optional<RetrievalPool> pool;
  if (method_uses_retrieval(model.method())) {
    const DatasetSplit split =
        split_dataset(ds, cfg.exp.fractions, a.seed, model.config().k);
    pool = build_normalized_pool(ds, split.pool_idx, model.normalizer());
  }
  ModelSurrogate surrogate(model, pool);

  Mat final_norm;
  Mat candidates;
  std::optional<TrajectoryLog> trajectory;
  if (all_fixed) {
    std::cerr << "warning: no optimizable dimensions; emitting initial designs unchanged\n";
    final_norm = model.normalizer().normalize_rows(init_raw);
    candidates = init_raw;
  } else {
    const ConstraintMask mask = fixed.empty()
                                    ? ConstraintMask::all_optimizable(d)
                                    : ConstraintMask::from_fixed_dims(fixed, d);
    ParticleState state(model.normalizer().normalize_rows(init_raw), mask);
    if (!a.trajectory.empty()) state.trajectory.emplace();
    if (cfg.exp.protocol.kind == ProtocolConfig::Kind::P1) {
      final_norm = run_protocol1(surrogate, state, cfg.exp.protocol);
      candidates = model.normalizer().denormalize_rows(final_norm);
      for (int j : fixed) candidates.col(j) = init_raw.col(j);
    } else {
      const std::vector<Mat> last_q = run_protocol2(surrogate, state, cfg.exp.protocol);
      const int q = cfg.exp.protocol.q;
      final_norm.resize(n * q, d);
      for (int i = 0; i < n; ++i)
        final_norm.middleRows(i * q, q) = last_q[static_cast<std::size_t>(i)];
      candidates = model.normalizer().denormalize_rows(final_norm);
      for (int j : fixed)
        for (int i = 0; i < n; ++i)
          candidates.col(j).segment(i * q, q).setConstant(init_raw(i, j));
    }
    trajectory = std::move(state.trajectory);
  }

  std::vector<RetrievalSet> rsets;
  if (method_uses_retrieval(model.method()))
    rsets = retrieve_batch(*pool, final_norm, model.config().k, model.config().sim);
  const Vec predicted =
      model.normalizer().denormalize_y(model.surrogate_batch(final_norm, rsets));

  Vec truth = Vec::Constant(candidates.rows(), std::nan(""));
  if (a.oracle != "none" && !a.oracle.empty()) {
    std::vector<Design> designs;
    designs.reserve(static_cast<std::size_t>(candidates.rows()));
    for (Eigen::Index i = 0; i < candidates.rows(); ++i)
      designs.push_back(candidates.row(i).transpose());
    const OracleHandle handle = a.oracle == "hartmann"
                                    ? OracleHandle::hartmann()
                                    : OracleHandle::external(a.oracle);
    const std::vector<double> scores = evaluate_batch(handle, designs);
    truth = Eigen::Map<const Vec>(scores.data(), static_cast<Eigen::Index>(scores.size()));
  }

  std::ostringstream out;
  for (int j = 0; j < d; ++j) out << "x" << j << ",";
  out << "predicted_h,truth_y\n";
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
    for (int j = 0; j < d; ++j) out << format_double(candidates(i, j)) << ",";
    out << format_double(predicted[i]) << "," << format_double(truth[i]) << "\n";
  }
  write_text_file(a.out, out.str());
  if (trajectory && !a.trajectory.empty()) trajectory->save_csv(a.trajectory);

  std::cout << "wrote " << candidates.rows() << " candidates to " << a.out << "\n";
  return 0;
}

int cmd_run_bench(const CliConfig& cfg) {
  if (cfg.exp.task == ExperimentConfig::Task::Csv && !cfg.exp.oracle_command)
    std::cout << "PREDICTED: no oracle command given; reported scores are surrogate "
                 "predictions, not ground truth\n";
  if (cfg.exp.seeds.empty()) throw ValidationError("seed list is empty");

  std::filesystem::create_directories(cfg.exp.out_dir);

  std::vector<MethodRow> rows;
  std::vector<PercentileSummary> init_stats;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method method = cfg.methods[mi];
    std::vector<EvalReport> reports;
    for (std::uint64_t seed : cfg.exp.seeds) {
      const RunResult rr = run_experiment(cfg.exp, method, seed);
      reports.push_back(rr.report);
      if (mi == 0)
        init_stats.push_back(percentile_summary(std::vector<double>(
            rr.initial_scores.begin(), rr.initial_scores.end())));
      std::cout << rr.report.task << " " << method_id(method) << " seed " << seed
                << ": mean=" << format_double(rr.report.scores.mean)
                << " max=" << format_double(rr.report.scores.p100)
                << " median=" << format_double(rr.report.scores.p50) << "\n";
    }
    rows.push_back({method, aggregate_reports(reports)});
  }

  double init_mean = 0.0, init_max = 0.0, init_median = 0.0;
  for (const PercentileSummary& p : init_stats) {
    init_mean += p.mean;
    init_max += p.p100;
    init_median += p.p50;
  }
  const double ns = static_cast<double>(init_stats.size());
  init_mean /= ns;
  init_max /= ns;
  init_median /= ns;

  const std::string table = markdown_table(rows, init_mean, init_max, init_median);
  const std::filesystem::path table_path =
      std::filesystem::path(cfg.exp.out_dir) /
      (cfg.exp.task == ExperimentConfig::Task::Hartmann ? "hartmann_table.md"
                                                        : "csv_table.md");
  write_text_file(table_path, table);
  std::cout << "\n" << table << "\ntable written to " << table_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-enhanced offline model-based optimization"};
  app.require_subcommand(1);

  Overrides o;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic offline dataset");
  std::string gen_task = "hartmann", gen_out;
  std::uint64_t gen_seed = 0;
  int gen_n_total = 12000, gen_trim = 1000;
  gen->add_option("--task", gen_task, "task name (hartmann)");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--n-total", gen_n_total, "points sampled before trimming");
  gen->add_option("--trim", gen_trim, "points trimmed from each score extreme");
  gen->add_option("--out", gen_out, "output CSV path")->required();

  auto* tr = app.add_subcommand("train", "train a surrogate on an offline dataset");
  std::string tr_method, tr_data, tr_out;
  std::uint64_t tr_seed = 0;
  tr->add_option("--method", tr_method, "grad, rem_p, rem_n, romo_p, romo_n")->required();
  tr->add_option("--data", tr_data, "dataset CSV")->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--seed", tr_seed, "training seed");
  add_model_options(tr, o);
  add_train_options(tr, o);

  auto* opt = app.add_subcommand("optimize", "ascend particles against a checkpoint");
  OptimizeArgs oa;
  opt->add_option("--model", oa.model_path, "checkpoint path")->required();
  opt->add_option("--data", oa.data, "dataset CSV")->required();
  opt->add_option("--out", oa.out, "candidates CSV path")->required();
  opt->add_option("--trajectory", oa.trajectory, "trajectory CSV path");
  opt->add_option("--fix", o.fix, "dimensions held constant, e.g. 2 or 2,5-8");
  opt->add_option("--init", oa.init, "initial particle rule: bottom_k or bin");
  opt->add_option("--bottom-k", o.bottom_k, "bottom_k particle count");
  opt->add_option("--bin-dim", o.bin_dim, "bin rule dimension");
  opt->add_option("--bins", o.n_bins, "bin count");
  opt->add_option("--per-bin", o.per_bin, "particles per bin");
  opt->add_option("--oracle", oa.oracle, "none, hartmann, or an external command");
  opt->add_option("--seed", oa.seed, "pool split seed");
  add_model_options(opt, o);
  add_protocol_options(opt, o);

  auto* rb = app.add_subcommand("run-bench", "full multi-method, multi-seed experiment");
  rb->add_option("--task", o.task, "hartmann or csv");
  rb->add_option("--data", o.data, "dataset CSV for the csv task");
  rb->add_option("--oracle", o.oracle, "external oracle command for the csv task");
  rb->add_option("--methods", o.methods, "comma list, default all five");
  rb->add_option("--seeds", o.seeds, "comma list, default 0,1,2,3,4");
  rb->add_option("--out-dir", o.out_dir, "artifact directory");
  rb->add_option("--fix", o.fix, "dimensions held constant");
  rb->add_option("--n-total", o.n_total, "hartmann points before trimming");
  rb->add_option("--trim", o.trim, "hartmann trim count");
  rb->add_option("--bin-dim", o.bin_dim, "initial particle bin dimension");
  rb->add_option("--bins", o.n_bins, "initial particle bin count");
  rb->add_option("--per-bin", o.per_bin, "initial particles per bin");
  rb->add_option("--bottom-k", o.bottom_k, "csv task initial particle count");
  bool rb_no_trajectory = false;
  rb->add_flag("--no-trajectory", rb_no_trajectory, "skip trajectory CSVs");
  add_model_options(rb, o);
  add_train_options(rb, o);
  add_protocol_options(rb, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (rb_no_trajectory) o.no_trajectory = true;

  try {
    CliConfig cfg;
    apply_overrides(cfg, o);
    if (gen->parsed()) return cmd_gen_data(gen_task, gen_seed, gen_n_total, gen_trim, gen_out);
    if (tr->parsed()) return cmd_train(cfg, tr_method, tr_data, tr_out, tr_seed);
    if (opt->parsed()) return cmd_optimize(cfg, oa);
    if (rb->parsed()) return cmd_run_bench(cfg);
    throw ValidationError("no subcommand given");
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
