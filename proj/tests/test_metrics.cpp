#include <gtest/gtest.h>

#include <algorithm>
#include <memory>
#include <random>

#include "safemtrl/baselines.hpp"
#include "safemtrl/metrics.hpp"

using namespace safemtrl;

namespace {

RoundRecord record(double expected, double optimal, double baseline) {
  RoundRecord r;
  r.expected_reward = expected;
  r.optimal_reward = optimal;
  r.baseline_reward = baseline;
  return r;
}

}  // namespace

TEST(InstantaneousRegret, Examples) {
  EXPECT_EQ(instantaneous_regret(record(3, 3, 1), 3.0), 0.0);
  EXPECT_EQ(instantaneous_regret(record(9, 11, 1), 11.0), 2.0);
  EXPECT_EQ(instantaneous_regret(record(5, 5, 1), 5.0 - 1e-13), 0.0);
  EXPECT_THROW(instantaneous_regret(record(5, 5, 1), 4.0), EnvironmentInconsistency);
}

TEST(ViolationCheck, Examples) {
  EXPECT_FALSE(violation_check(record(2, 3, 2), 0.1));
  EXPECT_TRUE(violation_check(record(0.89 * 2, 3, 2), 0.1));
  EXPECT_FALSE(violation_check(record(0.0, 3, 2), 1.0));
  EXPECT_FALSE(violation_check(record(0.9 * 2, 3, 2), 0.1));
}

TEST(EstimationError, Examples) {
  const Matrix t = (Matrix(2, 2) << 1, 2, 3, 4).finished();
  EXPECT_EQ(estimation_error(t, t), 0.0);
  EXPECT_DOUBLE_EQ(estimation_error(Matrix::Zero(2, 2), t), 1.0);
  EXPECT_DOUBLE_EQ(estimation_error(2 * t, t), 1.0);
  EXPECT_THROW(estimation_error(t, Matrix::Zero(2, 2)), Error);
}

TEST(SummarizeTrial, RegretMatchesBruteForceDoubleSum) {
  // 5 rounds x 3 tasks written by hand.
  const double expected[5][3] = {{1, 2, 0.5}, {0.3, 2, 1}, {1, 1, 1}, {0.2, 0.1, 3}, {4, 4, 4}};
  const double optimal[5][3] = {{1.5, 2, 1}, {1, 2.5, 1}, {1, 1.2, 2}, {1, 0.1, 3}, {4, 5, 4.5}};
  TrialRecorder rec;
  for (int n = 0; n < 5; ++n) {
    for (int t = 0; t < 3; ++t) {
      RoundRecord r = record(expected[n][t], optimal[n][t], 0.5);
      r.epoch = n < 3 ? 1 : 2;
      r.round = n + 1;
      r.task = t;
      rec.on_round(r);
    }
  }
  double oracle = 0.0;
  for (int n = 0; n < 5; ++n)
    for (int t = 0; t < 3; ++t) oracle += optimal[n][t] - expected[n][t];
  const TrialMetrics m = summarize_trial(rec, 0.2, nullptr);
  EXPECT_EQ(m.cumulative_regret, oracle);
  EXPECT_EQ(m.rounds, 15);
  // 0.3 and 0.2 and 0.1 fall below 0.8 * 0.5.
  EXPECT_EQ(m.violations, 3);
  ASSERT_EQ(m.epochs.size(), 2u);
  EXPECT_EQ(m.epochs[0].last_round, 3);
  EXPECT_EQ(m.epochs[1].violations, 3);
}

TEST(SummarizeTrial, EqualsRecomputationFromRecords) {
  auto model = std::make_shared<const TaskModel>(generate_task_model(6, 2, 4, {}, 31));
  Environment env(model, std::make_shared<GaussianActionSource>(6), {}, 31);
  ProblemSettings p;
  p.schedule = epoch_boundaries(ScheduleMode::fixed(3, 30));
  p.seed = 31;
  MomLearner mom(p);
  TrialRecorder rec(model->b_star);
  mom.run(env, rec);
  const TrialMetrics m = summarize_trial(rec, 0.2, &model->theta_star);
  double regret = 0.0;
  long violations = 0;
  for (const RoundRecord& r : rec.records()) {
    regret += r.optimal_reward - r.expected_reward;
    violations += r.expected_reward < 0.8 * r.baseline_reward;
    EXPECT_EQ(r.safe, !(r.expected_reward < 0.8 * r.baseline_reward));
  }
  EXPECT_NEAR(m.cumulative_regret, regret, 1e-9 * std::max(1.0, regret));
  EXPECT_EQ(m.violations, violations);
  double previous = 0.0;
  for (const EpochMetrics& e : m.epochs) {
    EXPECT_GE(e.cumulative_regret, previous);
    previous = e.cumulative_regret;
  }
  EXPECT_LE(m.violations, m.rounds);
}

TEST(MeanStderr, OrderInvariant) {
  std::vector<double> v;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (int i = 0; i < 101; ++i) v.push_back(normal(rng));
  const MeanStderr a = mean_stderr(v);
  std::shuffle(v.begin(), v.end(), rng);
  const MeanStderr b = mean_stderr(v);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stderr_, b.stderr_);
  EXPECT_EQ(a.count, 101u);
}

TEST(MeanStderr, SmallExample) {
  const MeanStderr s = mean_stderr({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stderr_, std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(mean_stderr({7}).stderr_, 0.0);
}
