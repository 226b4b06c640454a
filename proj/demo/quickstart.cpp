// One Safe-AltGDmin trial on a small synthetic problem, printed per epoch.

#include <cstdio>
#include <memory>

#include "safemtrl/safemtrl.hpp"

int main() {
  using namespace safemtrl;
  const std::uint64_t seed = 7;
  auto model = std::make_shared<const TaskModel>(generate_task_model(30, 2, 30, {}, seed));
  Environment env(model, std::make_shared<const GaussianActionSource>(30), EnvironmentOptions{}, seed);

  ProblemSettings problem;
  problem.schedule = epoch_boundaries(ScheduleMode::fixed(4, 50));
  problem.seed = seed;
  SolverParams params;
  params.sample_split = false;
  params.gd_iters = 10;
  params.step_c = 0.05;

  SafeAltGdmin solver(problem, params, {model->mu, model->sigma_max});
  TrialRecorder recorder(model->b_star);
  solver.run(env, recorder);

  const TrialMetrics m = summarize_trial(recorder, problem.alpha, &model->theta_star);
  for (const EpochMetrics& e : m.epochs) {
    std::printf("epoch %d  rounds %4d  regret %9.4f  violations %ld  err %.3e  sd %.3e\n", e.epoch,
                e.last_round, e.cumulative_regret, e.violations, e.est_error.value_or(NAN),
                e.sd.value_or(NAN));
  }
  const SolverDiagnostics& d = solver.diagnostics();
  std::printf("C~ %.3g  tau %.3g  gamma %.3g  mean rho %.3g\n", d.trunc_multiplier, d.tau, d.gd_step,
              d.mean_effective_rho);
}
