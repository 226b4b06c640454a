// All four algorithms on the same seeded streams through the harness API.

#include <cstdio>

#include "safemtrl/safemtrl.hpp"

int main() {
  using namespace safemtrl;
  ExperimentConfig config = load_config_text(R"({
    "d": 30, "T": 30, "trials": 5, "algorithms": "all",
    "solver": {"sample_split": false, "gd_iters": 10, "step_c": 0.05}
  })");
  const ExperimentResult result = run_experiment(config);
  for (const ResultRow& row : result.rows) {
    if (row.trial != "mean" || row.epoch != 4) continue;
    std::printf("%-16s regret %9.3f  violations %8.2f  err %.3e\n", row.algorithm.c_str(),
                row.cum_regret, row.violations, row.est_error.value_or(NAN));
  }
  return result.ok() ? 0 : 1;
}
