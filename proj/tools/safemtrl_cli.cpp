// Command-line front end: run, sweep and movielens experiments to CSV.
//
// Exit codes: 0 all trials succeeded, 1 some trial failed, 2 bad config/IO.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safemtrl/harness.hpp"

namespace {

using safemtrl::Json;

struct CommonFlags {
  std::string config;
  std::vector<std::string> algorithms;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file");
  app->add_option("--algorithm", f.algorithms,
                  "safe_altgdmin, ts_conservative, trace_norm, mom or all (repeatable)")
      ->delimiter(',');
  app->add_option("--trials", f.trials, "number of trials");
  app->add_option("--seed", f.seed, "base seed; trial i uses seed + i");
  app->add_option("--out", f.out, "CSV output path (stdout when omitted)");
}

Json read_document(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw safemtrl::IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw safemtrl::ConfigError(std::string("malformed config: ") + e.what());
  }
}

void apply_flags(Json& doc, const CommonFlags& f) {
  if (f.algorithms.size() == 1) {
    doc["algorithms"] = f.algorithms.front();
  } else if (!f.algorithms.empty()) {
    doc["algorithms"] = f.algorithms;
  }
  if (f.trials) doc["trials"] = *f.trials;
  if (f.seed) doc["base_seed"] = *f.seed;
}

void print_summary(const safemtrl::ExperimentConfig& c, const safemtrl::ExperimentResult& r) {
  const int last = safemtrl::epoch_boundaries(c.schedule).epochs();
  std::fprintf(stderr, "%s d=%ld r=%ld T=%ld K=%ld alpha=%g rho=%g trials=%d\n",
               c.dataset_name().c_str(), static_cast<long>(c.d), static_cast<long>(c.r),
               static_cast<long>(c.tasks), static_cast<long>(c.k), c.alpha, c.rho, c.trials);
  for (const safemtrl::ResultRow& row : r.rows) {
    if (row.trial != "mean" || row.epoch != last) continue;
    long trials_with_violation = 0;
    const auto a = static_cast<std::size_t>(
        std::find(c.algorithms.begin(), c.algorithms.end(), row.algorithm) - c.algorithms.begin());
    for (const auto& t : r.trials) {
      if (t.runs[a].ok && t.runs[a].metrics.violations > 0) ++trials_with_violation;
    }
    std::fprintf(stderr, "  %-16s regret %.6g  violations/trial %.6g  trials with violations %ld",
                 row.algorithm.c_str(), row.cum_regret, row.violations, trials_with_violation);
    if (row.est_error) std::fprintf(stderr, "  err %.4g", *row.est_error);
    if (row.sd) std::fprintf(stderr, "  sd %.4g", *row.sd);
    std::fprintf(stderr, "\n");
  }
  const auto solver = std::find(c.algorithms.begin(), c.algorithms.end(), "safe_altgdmin");
  if (solver != c.algorithms.end()) {
    const auto a = static_cast<std::size_t>(solver - c.algorithms.begin());
    int met = 0, total = 0;
    double worst = 0.0;
    for (const auto& t : r.trials) {
      if (!t.runs[a].gd_floor) continue;
      ++total;
      worst = std::max(worst, *t.runs[a].gd_floor);
      if (c.solver.gd_iters >= *t.runs[a].gd_floor) ++met;
    }
    if (total > 0) {
      std::fprintf(stderr, "  L = %d vs GD-iteration floor (constant 1): met in %d/%d trials, largest floor %.3g\n",
                   c.solver.gd_iters, met, total, worst);
    }
  }
  for (const auto& f : r.failures) {
    std::fprintf(stderr, "  trial %d %s failed: %s\n", f.trial, f.algorithm.c_str(), f.message.c_str());
  }
}

int execute(Json doc, const CommonFlags& flags) {
  apply_flags(doc, flags);
  const safemtrl::ExperimentConfig config = safemtrl::load_config(doc);
  const std::vector<safemtrl::ExperimentConfig> expanded = safemtrl::expand_sweep(config);
  const safemtrl::DatasetContext ctx = safemtrl::prepare_dataset(expanded.front());

  std::vector<safemtrl::ResultRow> rows;
  bool failed = false;
  for (const safemtrl::ExperimentConfig& c : expanded) {
    const safemtrl::ExperimentResult result = safemtrl::run_experiment(c, ctx);
    print_summary(c, result);
    failed = failed || !result.ok();
    rows.insert(rows.end(), result.rows.begin(), result.rows.end());
  }
  if (flags.out.empty()) {
    safemtrl::write_csv(std::cout, rows);
  } else {
    safemtrl::write_csv(rows, flags.out);
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe multi-task representation learning experiments"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per parameter value");
  add_common(sweep, sweep_flags);
  sweep->add_option("--param", sweep_param, "parameter to vary, e.g. T or solver.gd_iters")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required()->delimiter(',');

  CommonFlags ml_flags;
  std::string data_path;
  CLI::App* ml = app.add_subcommand("movielens", "run on MovieLens-100K");
  add_common(ml, ml_flags);
  ml->add_option("--data", data_path, "path to u.data")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return execute(read_document(run_flags.config), run_flags);
    if (*sweep) {
      Json doc = read_document(sweep_flags.config);
      Json values = Json::array();
      for (const std::string& v : sweep_values) {
        try {
          values.push_back(Json::parse(v));
        } catch (const nlohmann::json::parse_error&) {
          values.push_back(v);
        }
      }
      doc["sweep"] = {{"param", sweep_param}, {"values", values}};
      return execute(doc, sweep_flags);
    }
    Json doc = read_document(ml_flags.config);
    doc["dataset"] = "movielens";
    doc["data_path"] = data_path;
    return execute(doc, ml_flags);
  } catch (const safemtrl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
  } catch (const safemtrl::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
  } catch (const safemtrl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
  }
  return 2;
}
