#pragma once

// Experiment orchestration: JSON config, sweep expansion, seeded parallel
// trials over shared environment streams, and the results CSV.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "safemtrl/baselines.hpp"
#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/metrics.hpp"
#include "safemtrl/movielens.hpp"
#include "safemtrl/schedule.hpp"
#include "safemtrl/solver.hpp"

namespace safemtrl {

using Json = nlohmann::json;

enum class Dataset { kSynthetic, kMovielens };

inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> names{"safe_altgdmin", "ts_conservative", "trace_norm", "mom"};
  return names;
}

struct ExperimentConfig {
  Dataset dataset = Dataset::kSynthetic;
  std::string data_path;
  Eigen::Index d = 100;
  Eigen::Index r = 2;
  Eigen::Index tasks = 100;
  Eigen::Index k = 10;
  Eigen::Index baseline_rank = 5;
  double alpha = 0.2;
  double rho = 0.1;
  double delta = 0.01;
  double sigma_eta = 1e-3;
  ScheduleMode schedule = ScheduleMode::fixed(4, 50);
  std::vector<std::string> algorithms{"safe_altgdmin"};
  SolverParams solver;
  ColumnNormBounds col_norm_bounds;
  bool positive_baseline = true;
  std::optional<std::pair<double, double>> gap_window;
  bool strict_window = false;
  double ts_reg = 1.0;
  std::optional<double> ts_theta_norm_bound;  // max column norm of the truth when unset
  TraceNormParams trace_norm;
  MovielensOptions movielens;
  int trials = 100;
  std::uint64_t base_seed = 1;
  std::optional<std::string> sweep_param;
  std::vector<Json> sweep_values;
  Json source = Json::object();  // the validated document, for sweep expansion

  std::string dataset_name() const { return dataset == Dataset::kMovielens ? "movielens" : "synthetic"; }
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
    }
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("key '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
  }
}

template <typename T>
void read_optional(const Json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  out = value;
}

inline void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

/// Dotted path into a JSON document, e.g. "solver.gd_iters".
inline Json::json_pointer dotted_pointer(const std::string& dotted) {
  std::string path;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("bad parameter path '" + dotted + "'");
    path += "/" + part;
  }
  return Json::json_pointer(path);
}

inline void validate(const ExperimentConfig& c) {
  check(c.d >= 1, "d must be >= 1");
  check(c.tasks >= 1, "T must be >= 1");
  check(c.r >= 1 && c.r <= std::min(c.d, c.tasks), "r must lie in [1, min(d, T)]");
  check(c.k >= 1, "K must be >= 1");
  check(c.baseline_rank >= 1 && c.baseline_rank <= c.k, "baseline_rank must lie in [1, K]");
  check(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha must lie in [0, 1]");
  check(c.rho >= 0.0 && c.rho <= 1.0, "rho must lie in [0, 1]");
  check(c.delta > 0.0 && c.delta < 1.0, "delta must lie in (0, 1)");
  check(c.sigma_eta >= 0.0, "sigma_eta must be >= 0");
  check(c.trials >= 1, "trials must be >= 1");
  check(c.col_norm_bounds.low > 0.0 && c.col_norm_bounds.low <= c.col_norm_bounds.high,
        "environment column norm bounds need 0 < low <= high");
  if (c.gap_window) check(c.gap_window->first <= c.gap_window->second, "gap_window needs low <= high");
  check(c.solver.gd_iters >= 1, "solver.gd_iters must be >= 1");
  check(c.solver.step_c > 0.0 && c.solver.step_c <= 0.5, "solver.step_c must lie in (0, 0.5]");
  if (c.solver.gd_step) check(*c.solver.gd_step > 0.0, "solver.gd_step must be > 0");
  if (c.solver.trunc_multiplier) check(*c.solver.trunc_multiplier > 0.0, "solver.trunc_multiplier must be > 0");
  check(c.ts_reg > 0.0, "ts.reg must be > 0");
  check(c.trace_norm.iters >= 1, "trace_norm.iters must be >= 1");
  check(c.trace_norm.lambda_multiplier > 0.0, "trace_norm.lambda_multiplier must be > 0");
  check(!c.algorithms.empty(), "at least one algorithm is required");
  for (const std::string& a : c.algorithms) {
    check(std::find(known_algorithms().begin(), known_algorithms().end(), a) != known_algorithms().end(),
          "unknown algorithm '" + a + "'");
  }

  EpochSchedule schedule;
  try {
    schedule = epoch_boundaries(c.schedule);
  } catch (const ScheduleError& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  const bool uses_solver =
      std::find(c.algorithms.begin(), c.algorithms.end(), "safe_altgdmin") != c.algorithms.end();
  if (uses_solver && c.solver.sample_split) {
    for (int m = 1; m <= schedule.epochs(); ++m) {
      try {
        split_samples(schedule.length(m), c.solver.gd_iters, m == 1, c.r);
      } catch (const ConfigError& e) {
        throw ConfigError("infeasible split in epoch " + std::to_string(m) + ": " + e.what());
      }
    }
  }
  const bool uses_mom = std::find(c.algorithms.begin(), c.algorithms.end(), "mom") != c.algorithms.end();
  if (uses_mom) check(schedule.epochs() >= 2, "mom needs at least 2 epochs");

  if (c.dataset == Dataset::kMovielens) {
    check(integer_sqrt(c.d).has_value(),
          "movielens: d = " + std::to_string(c.d) + " must be a perfect square");
    check(c.r == 1, "movielens: the implied reward parameter has rank 1, so r must be 1");
    check(c.tasks <= 1682, "movielens: T cannot exceed the 1682 items");
    check(!c.data_path.empty(), "movielens: data_path is required");
  }

  if (c.sweep_param) {
    check(!c.sweep_values.empty(), "sweep.values must not be empty");
    std::set<std::string> seen;
    for (const Json& v : c.sweep_values) {
      check(seen.insert(v.dump()).second, "sweep values must be distinct (repeated " + v.dump() + ")");
    }
  }
}

}  // namespace detail

/// Parse and validate a config document. Missing keys take the defaults
/// above; unknown keys are errors.
inline ExperimentConfig load_config(const Json& doc) {
  using detail::read;
  using detail::read_optional;
  const Json root = doc.is_null() ? Json::object() : doc;
  detail::reject_unknown(root,
                         {"dataset", "data_path", "d", "r", "T", "K", "baseline_rank", "alpha", "rho",
                          "delta", "sigma_eta", "schedule", "algorithms", "solver", "environment", "ts",
                          "trace_norm", "movielens", "trials", "base_seed", "sweep"},
                         "");
  ExperimentConfig c;
  std::string dataset = "synthetic";
  read(root, "dataset", dataset, "");
  if (dataset == "movielens") {
    c.dataset = Dataset::kMovielens;
    c.r = 1;
    c.tasks = 5;
  } else if (dataset != "synthetic") {
    throw ConfigError("dataset must be 'synthetic' or 'movielens'");
  }
  read(root, "data_path", c.data_path, "");
  read(root, "d", c.d, "");
  read(root, "r", c.r, "");
  read(root, "T", c.tasks, "");
  read(root, "K", c.k, "");
  read(root, "baseline_rank", c.baseline_rank, "");
  read(root, "alpha", c.alpha, "");
  read(root, "rho", c.rho, "");
  read(root, "delta", c.delta, "");
  read(root, "sigma_eta", c.sigma_eta, "");
  read(root, "trials", c.trials, "");
  read(root, "base_seed", c.base_seed, "");

  if (root.contains("algorithms")) {
    const Json& a = root.at("algorithms");
    if (a.is_string()) {
      const std::string name = a.get<std::string>();
      c.algorithms = name == "all" ? known_algorithms() : std::vector<std::string>{name};
    } else {
      c.algorithms.clear();
      read(root, "algorithms", c.algorithms, "");
    }
  }

  if (root.contains("schedule")) {
    const Json& s = root.at("schedule");
    detail::reject_unknown(s, {"mode", "N", "epochs", "per_epoch"}, "schedule");
    std::string mode = "fixed";
    read(s, "mode", mode, "schedule");
    if (mode == "doubling") {
      int n = 200;
      read(s, "N", n, "schedule");
      c.schedule = ScheduleMode::doubling(n);
    } else if (mode == "fixed") {
      int m = 4, per = 50;
      read(s, "epochs", m, "schedule");
      read(s, "per_epoch", per, "schedule");
      c.schedule = ScheduleMode::fixed(m, per);
    } else {
      throw ConfigError("schedule.mode must be 'fixed' or 'doubling'");
    }
  }

  if (root.contains("solver")) {
    const Json& s = root.at("solver");
    detail::reject_unknown(s, {"gd_iters", "gd_step", "step_c", "trunc_multiplier", "target_error",
                               "sample_split", "enforce_safety"},
                           "solver");
    read(s, "gd_iters", c.solver.gd_iters, "solver");
    read_optional(s, "gd_step", c.solver.gd_step, "solver");
    read(s, "step_c", c.solver.step_c, "solver");
    read_optional(s, "trunc_multiplier", c.solver.trunc_multiplier, "solver");
    read(s, "target_error", c.solver.target_error, "solver");
    read(s, "sample_split", c.solver.sample_split, "solver");
    read(s, "enforce_safety", c.solver.enforce_safety, "solver");
  }
  c.solver.rho = c.rho;

  if (root.contains("environment")) {
    const Json& e = root.at("environment");
    detail::reject_unknown(e, {"col_norm_low", "col_norm_high", "positive_baseline", "gap_window",
                               "strict_window"},
                           "environment");
    read(e, "col_norm_low", c.col_norm_bounds.low, "environment");
    read(e, "col_norm_high", c.col_norm_bounds.high, "environment");
    read(e, "positive_baseline", c.positive_baseline, "environment");
    read_optional(e, "gap_window", c.gap_window, "environment");
    read(e, "strict_window", c.strict_window, "environment");
  }

  if (root.contains("ts")) {
    const Json& t = root.at("ts");
    detail::reject_unknown(t, {"reg", "theta_norm_bound"}, "ts");
    read(t, "reg", c.ts_reg, "ts");
    read_optional(t, "theta_norm_bound", c.ts_theta_norm_bound, "ts");
  }

  if (root.contains("trace_norm")) {
    const Json& t = root.at("trace_norm");
    detail::reject_unknown(t, {"lambda", "lambda_multiplier", "iters", "step"}, "trace_norm");
    read_optional(t, "lambda", c.trace_norm.lambda, "trace_norm");
    read(t, "lambda_multiplier", c.trace_norm.lambda_multiplier, "trace_norm");
    read(t, "iters", c.trace_norm.iters, "trace_norm");
    read_optional(t, "step", c.trace_norm.step, "trace_norm");
  }
  c.trace_norm.sigma_eta = c.sigma_eta;

  if (root.contains("movielens")) {
    const Json& m = root.at("movielens");
    detail::reject_unknown(m, {"nmf_iters", "seed"}, "movielens");
    read(m, "nmf_iters", c.movielens.nmf_iters, "movielens");
    read(m, "seed", c.movielens.seed, "movielens");
  }

  if (root.contains("sweep")) {
    const Json& s = root.at("sweep");
    detail::reject_unknown(s, {"param", "values"}, "sweep");
    std::string param;
    read(s, "param", param, "sweep");
    detail::check(!param.empty(), "sweep.param is required");
    detail::check(s.contains("values") && s.at("values").is_array(), "sweep.values must be a list");
    c.sweep_param = param;
    c.sweep_values = s.at("values").get<std::vector<Json>>();
  }

  detail::validate(c);
  c.source = root;
  return c;
}

inline ExperimentConfig load_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return load_config(Json::object());
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return load_config(doc);
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

/// One config per sweep value, all sharing base_seed; the config itself
/// when no sweep is set. Each expanded config is revalidated.
inline std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config) {
  if (!config.sweep_param) return {config};
  std::vector<ExperimentConfig> out;
  const Json::json_pointer ptr = detail::dotted_pointer(*config.sweep_param);
  for (const Json& value : config.sweep_values) {
    Json doc = config.source;
    doc.erase("sweep");
    if (config.sweep_param->rfind("sweep", 0) == 0) throw ConfigError("cannot sweep over 'sweep'");
    doc[ptr] = value;
    out.push_back(load_config(doc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Result rows and CSV.

inline constexpr const char* kCsvHeader =
    "algorithm,dataset,trial,epoch,round,d,r,T,K,alpha,rho,cum_regret,violations,est_error,sd";

struct ResultRow {
  std::string algorithm;
  std::string dataset;
  std::string trial;  // trial index, or "mean" / "stderr" for aggregates
  int epoch = 0;
  int round = 0;
  long d = 0;
  long r = 0;
  long tasks = 0;
  long k = 0;
  double alpha = 0.0;
  double rho = 0.0;
  double cum_regret = 0.0;
  double violations = 0.0;
  std::optional<double> est_error;
  std::optional<double> sd;

  bool operator==(const ResultRow&) const = default;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_row(const ResultRow& row) {
  std::string out;
  out.reserve(160);
  auto add = [&out](const std::string& field) {
    if (!out.empty()) out += ',';
    out += field;
  };
  out = row.algorithm;
  add(row.dataset);
  add(row.trial);
  add(std::to_string(row.epoch));
  add(std::to_string(row.round));
  add(std::to_string(row.d));
  add(std::to_string(row.r));
  add(std::to_string(row.tasks));
  add(std::to_string(row.k));
  add(format_real(row.alpha));
  add(format_real(row.rho));
  add(format_real(row.cum_regret));
  add(format_real(row.violations));
  add(row.est_error ? format_real(*row.est_error) : "");
  add(row.sd ? format_real(*row.sd) : "");
  return out;
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const ResultRow& row : rows) out << format_row(row) << '\n';
}

inline void write_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, rows);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("missing or unexpected CSV header", 1);
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 15) throw ParseError("expected 15 fields, got " + std::to_string(f.size()), line_no);
    try {
      ResultRow row;
      row.algorithm = f[0];
      row.dataset = f[1];
      row.trial = f[2];
      row.epoch = std::stoi(f[3]);
      row.round = std::stoi(f[4]);
      row.d = std::stol(f[5]);
      row.r = std::stol(f[6]);
      row.tasks = std::stol(f[7]);
      row.k = std::stol(f[8]);
      row.alpha = std::stod(f[9]);
      row.rho = std::stod(f[10]);
      row.cum_regret = std::stod(f[11]);
      row.violations = std::stod(f[12]);
      if (!f[13].empty()) row.est_error = std::stod(f[13]);
      if (!f[14].empty()) row.sd = std::stod(f[14]);
      rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw ParseError("malformed numeric field", line_no);
    }
  }
  return rows;
}

inline std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in);
}

// ---------------------------------------------------------------------------
// Running trials.

struct TrialFailure {
  int trial = 0;
  std::string algorithm;
  std::string message;
};

struct AlgorithmTrial {
  std::string algorithm;
  bool ok = false;
  TrialMetrics metrics;
  std::optional<SolverDiagnostics> solver;
  std::optional<double> gd_floor;  // GD-iteration floor from the true model, leading constant 1
};

struct TrialOutcome {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<AlgorithmTrial> runs;  // same order as config.algorithms
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<TrialOutcome> trials;
  std::vector<TrialFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

/// Data shared read-only by every trial of an experiment.
struct DatasetContext {
  std::shared_ptr<const MovielensTasks> movielens;
};

inline DatasetContext prepare_dataset(const ExperimentConfig& config) {
  DatasetContext ctx;
  if (config.dataset == Dataset::kMovielens) {
    std::ifstream in(config.data_path);
    if (!in) throw IoError("cannot read ratings file '" + config.data_path + "'");
    const RatingMatrix ratings = parse_ratings(in);
    ctx.movielens = std::make_shared<const MovielensTasks>(
        build_movielens_tasks(fill_unobserved(ratings), config.d, static_cast<int>(config.tasks),
                              config.movielens));
  }
  return ctx;
}

inline std::unique_ptr<Learner> make_learner(const std::string& name, const ExperimentConfig& c,
                                             const ProblemSettings& problem, const TaskModel& model) {
  if (name == "safe_altgdmin") {
    return std::make_unique<SafeAltGdmin>(problem, c.solver, SafetyInputs{model.mu, model.sigma_max});
  }
  if (name == "ts_conservative") {
    TsParams p;
    p.reg = c.ts_reg;
    p.sigma_eta = c.sigma_eta;
    p.theta_norm_bound = c.ts_theta_norm_bound ? *c.ts_theta_norm_bound
                                               : model.theta_star.colwise().norm().maxCoeff();
    return std::make_unique<ConservativeTs>(problem, p);
  }
  if (name == "trace_norm") return std::make_unique<TraceNormLearner>(problem, c.trace_norm);
  if (name == "mom") return std::make_unique<MomLearner>(problem);
  throw ConfigError("unknown algorithm '" + name + "'");
}

/// Run trial i of the experiment: every algorithm plays against its own
/// Environment built from the same model, options and seed, so all of them
/// see the identical stream of candidate sets and noise.
inline TrialOutcome run_trial(const ExperimentConfig& c, const DatasetContext& ctx, int trial,
                              std::vector<TrialFailure>& failures) {
  TrialOutcome out;
  out.trial = trial;
  out.seed = c.base_seed + static_cast<std::uint64_t>(trial);

  std::shared_ptr<const TaskModel> model;
  std::shared_ptr<const ActionSource> source;
  try {
    if (c.dataset == Dataset::kMovielens) {
      model = std::make_shared<const TaskModel>(make_task_model(ctx.movielens->theta_star_implied, c.r));
      source = std::make_shared<const MovielensActionSource>(ctx.movielens);
    } else {
      model = std::make_shared<const TaskModel>(
          generate_task_model(c.d, c.r, c.tasks, c.col_norm_bounds, out.seed));
      source = std::make_shared<const GaussianActionSource>(c.d);
    }
  } catch (const std::exception& e) {
    for (const std::string& a : c.algorithms) {
      out.runs.push_back({a, false, {}, std::nullopt, std::nullopt});
      failures.push_back({trial, a, e.what()});
    }
    return out;
  }

  EnvironmentOptions options;
  options.k = c.k;
  options.baseline_rank = c.baseline_rank;
  options.sigma_eta = c.sigma_eta;
  options.positive_baseline = c.positive_baseline;
  options.gap_window = c.gap_window;
  options.strict_window = c.strict_window;

  ProblemSettings problem;
  problem.r = c.r;
  problem.alpha = c.alpha;
  problem.delta = c.delta;
  problem.schedule = epoch_boundaries(c.schedule);
  problem.seed = out.seed;

  for (const std::string& name : c.algorithms) {
    AlgorithmTrial run;
    run.algorithm = name;
    try {
      Environment env(model, source, options, out.seed);
      std::unique_ptr<Learner> learner = make_learner(name, c, problem, *model);
      TrialRecorder recorder(model->b_star, false);
      learner->run(env, recorder);
      run.metrics = summarize_trial(recorder, c.alpha, &model->theta_star);
      if (const auto* s = dynamic_cast<const SafeAltGdmin*>(learner.get())) {
        run.solver = s->diagnostics();
        double gap = 0.0, reward = 0.0;
        for (const RoundRecord& rec : recorder.records()) {
          gap += rec.baseline_gap;
          reward += rec.baseline_reward;
        }
        const auto count = static_cast<double>(std::max<std::size_t>(recorder.records().size(), 1));
        run.gd_floor = gd_iteration_floor(model->kappa, gap / count, c.alpha, reward / count, c.rho,
                                          model->mu, model->sigma_max, c.r, c.tasks,
                                          problem.schedule.horizon(), c.delta);
      }
      run.ok = true;
    } catch (const std::exception& e) {
      failures.push_back({trial, name, e.what()});
    }
    out.runs.push_back(std::move(run));
  }
  return out;
}

/// Worker count from SAFEMTRL_WORKERS (default 1).
inline int worker_count() {
  const char* env = std::getenv("SAFEMTRL_WORKERS");
  if (!env || !*env) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

namespace detail {

inline ResultRow base_row(const ExperimentConfig& c, const std::string& algorithm) {
  ResultRow row;
  row.algorithm = algorithm;
  row.dataset = c.dataset_name();
  row.d = static_cast<long>(c.d);
  row.r = static_cast<long>(c.r);
  row.tasks = static_cast<long>(c.tasks);
  row.k = static_cast<long>(c.k);
  row.alpha = c.alpha;
  row.rho = c.rho;
  return row;
}

inline void append_rows(const ExperimentConfig& c, const std::vector<TrialOutcome>& trials,
                        std::vector<ResultRow>& rows) {
  const EpochSchedule schedule = epoch_boundaries(c.schedule);
  for (std::size_t a = 0; a < c.algorithms.size(); ++a) {
    const std::string& name = c.algorithms[a];
    for (const TrialOutcome& t : trials) {
      const AlgorithmTrial& run = t.runs[a];
      if (!run.ok) continue;
      for (const EpochMetrics& e : run.metrics.epochs) {
        ResultRow row = base_row(c, name);
        row.trial = std::to_string(t.trial);
        row.epoch = e.epoch;
        row.round = e.last_round;
        row.cum_regret = e.cumulative_regret;
        row.violations = static_cast<double>(e.violations);
        row.est_error = e.est_error;
        row.sd = e.sd;
        rows.push_back(std::move(row));
      }
    }
    for (int m = 1; m <= schedule.epochs(); ++m) {
      std::vector<double> regret, violations, err, sd;
      for (const TrialOutcome& t : trials) {
        const AlgorithmTrial& run = t.runs[a];
        if (!run.ok || static_cast<int>(run.metrics.epochs.size()) < m) continue;
        const EpochMetrics& e = run.metrics.epochs[static_cast<std::size_t>(m - 1)];
        regret.push_back(e.cumulative_regret);
        violations.push_back(static_cast<double>(e.violations));
        if (e.est_error) err.push_back(*e.est_error);
        if (e.sd) sd.push_back(*e.sd);
      }
      if (regret.empty()) continue;
      const MeanStderr reg = mean_stderr(regret);
      const MeanStderr vio = mean_stderr(violations);
      const MeanStderr er = err.empty() ? MeanStderr{} : mean_stderr(err);
      const MeanStderr s = sd.empty() ? MeanStderr{} : mean_stderr(sd);
      for (const bool is_mean : {true, false}) {
        ResultRow row = base_row(c, name);
        row.trial = is_mean ? "mean" : "stderr";
        row.epoch = m;
        row.round = schedule.last_round(m);
        row.cum_regret = is_mean ? reg.mean : reg.stderr_;
        row.violations = is_mean ? vio.mean : vio.stderr_;
        if (!err.empty()) row.est_error = is_mean ? er.mean : er.stderr_;
        if (!sd.empty()) row.sd = is_mean ? s.mean : s.stderr_;
        rows.push_back(std::move(row));
      }
    }
  }
}

}  // namespace detail

/// Run all trials of one (already expanded) config. Trials run on
/// worker_count() threads; results are merged in trial-index order.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const DatasetContext& ctx,
                                       int workers = worker_count()) {
  ExperimentResult result;
  result.trials.resize(static_cast<std::size_t>(config.trials));
  std::vector<std::vector<TrialFailure>> failures(static_cast<std::size_t>(config.trials));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < config.trials; i = next++) {
      result.trials[static_cast<std::size_t>(i)] =
          run_trial(config, ctx, i, failures[static_cast<std::size_t>(i)]);
    }
  };
  const int threads = std::clamp(workers, 1, config.trials);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (auto& f : failures) result.failures.insert(result.failures.end(), f.begin(), f.end());
  detail::append_rows(config, result.trials, result.rows);
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, prepare_dataset(config));
}

}  // namespace safemtrl
