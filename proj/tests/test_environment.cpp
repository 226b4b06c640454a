#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "safemtrl/environment.hpp"

using namespace safemtrl;

TEST(GenerateTaskModel, SingleUnitColumn) {
  const TaskModel m = generate_task_model(2, 1, 1, {1.0, 1.0}, 4);
  EXPECT_NEAR(m.theta_star.col(0).norm(), 1.0, 1e-12);
  EXPECT_NEAR(m.sigma_max, 1.0, 1e-12);
  EXPECT_NEAR(m.sigma_min, 1.0, 1e-12);
  EXPECT_NEAR(m.kappa, 1.0, 1e-12);
}

TEST(GenerateTaskModel, DefaultScaleHasRankTwo) {
  const TaskModel m = generate_task_model(100, 2, 100, {1.0, 1.0}, 1);
  Eigen::JacobiSVD<Matrix> svd(m.theta_star);
  const Vector s = svd.singularValues();
  EXPECT_GT(s(1), 1e-6);
  EXPECT_LE(s(2), 1e-10 * s(0));
  EXPECT_NEAR((m.theta_star - m.b_star.matrix() * m.w_star).norm(), 0.0, 1e-10);
  EXPECT_NEAR(m.sigma_max, s(0), 1e-10);
  EXPECT_NEAR(m.sigma_min, s(1), 1e-10);
}

TEST(GenerateTaskModel, ColumnNormsInsideBounds) {
  const TaskModel m = generate_task_model(20, 3, 40, {0.5, 2.0}, 9);
  const Vector norms = m.w_star.colwise().norm();
  EXPECT_GE(norms.minCoeff(), 0.5 - 1e-12);
  EXPECT_LE(norms.maxCoeff(), 2.0 + 1e-12);
  EXPECT_LE(norms.maxCoeff() / norms.minCoeff(), m.mu + 1e-12);
  EXPECT_DOUBLE_EQ(m.mu, 4.0);
  EXPECT_NEAR(m.nsr(1e-3), 40 * 1e-6 / (m.sigma_min * m.sigma_min), 1e-15);
}

TEST(GenerateTaskModel, RejectsBadShapes) {
  EXPECT_THROW(generate_task_model(3, 4, 10, {}, 1), DimensionError);
  EXPECT_THROW(generate_task_model(10, 2, 1, {}, 1), DimensionError);
  EXPECT_THROW(generate_task_model(10, 2, 5, {2.0, 1.0}, 1), ParameterError);
}

TEST(RankActions, SingletonBaselineIsOptimal) {
  const TaskActions a = rank_actions(Matrix::Ones(3, 1), Vector::Ones(3), 1);
  EXPECT_EQ(a.optimal_index, 0);
  EXPECT_EQ(a.baseline_index, 0);
  EXPECT_DOUBLE_EQ(a.baseline_gap, 0.0);
}

TEST(RankActions, ThreeCandidates) {
  Matrix x(2, 3);
  x << 2, 1, 0,
       0, 0, 5;
  Vector theta(2);
  theta << 1, 0;
  const TaskActions a = rank_actions(x, theta, 2);
  EXPECT_EQ(a.optimal_index, 0);
  EXPECT_EQ(a.baseline_index, 1);
  EXPECT_DOUBLE_EQ(a.baseline_gap, 1.0);
  EXPECT_DOUBLE_EQ(a.baseline_reward, 1.0);
}

TEST(SampleActionRound, BaselineIsFifthBest) {
  const TaskModel m = generate_task_model(10, 2, 6, {}, 3);
  Rng rng = make_rng(3, Stream::kEnvironment);
  for (int rep = 0; rep < 20; ++rep) {
    const ActionRound round = sample_action_round(m, 10, 5, rng);
    ASSERT_EQ(round.tasks.size(), 6u);
    for (const TaskActions& a : round.tasks) {
      int better = 0;
      for (Eigen::Index j = 0; j < 10; ++j) better += a.expected(j) > a.baseline_reward;
      EXPECT_EQ(better, 4);
      EXPECT_EQ(a.expected.maxCoeff(), a.expected(a.optimal_index));
      EXPECT_GE(a.baseline_gap, 0.0);
    }
  }
}

TEST(ObserveReward, Noiseless) {
  TaskModel m = make_task_model((Matrix(2, 1) << 1, 2).finished(), 1);
  Rng rng = make_rng(1, Stream::kEnvironment);
  const auto [y, eta] = observe_reward(m, 0, (Vector(2) << 3, 4).finished(), 0.0, rng);
  EXPECT_DOUBLE_EQ(y, 11.0);
  EXPECT_DOUBLE_EQ(eta, 0.0);
}

TEST(ObserveReward, ZeroActionGivesNoise) {
  TaskModel m = make_task_model((Matrix(2, 1) << 1, 2).finished(), 1);
  Rng rng = make_rng(1, Stream::kEnvironment);
  const auto [y, eta] = observe_reward(m, 0, Vector::Zero(2), 0.5, rng);
  EXPECT_DOUBLE_EQ(y, eta);
}

TEST(ObserveReward, NoiseMeanWithinClt) {
  TaskModel m = make_task_model((Matrix(2, 1) << 1, 2).finished(), 1);
  Rng rng = make_rng(2, Stream::kEnvironment);
  const Vector x = (Vector(2) << 0.3, -0.7).finished();
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += observe_reward(m, 0, x, 1e-3, rng).first;
  EXPECT_LE(std::abs(sum / n - x.dot(m.theta_star.col(0))), 3e-3 / std::sqrt(double(n)));
}

namespace {

std::shared_ptr<const TaskModel> small_model() {
  return std::make_shared<const TaskModel>(generate_task_model(8, 2, 4, {}, 21));
}

}  // namespace

TEST(Environment, RecordsAreSelfConsistent) {
  auto model = small_model();
  Environment env(model, std::make_shared<GaussianActionSource>(8), {}, 5);
  for (int n = 1; n <= 30; ++n) {
    for (Eigen::Index t = 0; t < 4; ++t) {
      const TaskRound round = env.next_round(t);
      EXPECT_GT(round.actions.baseline_reward, 0.0);
      const Eigen::Index pick = (n + t) % 10;
      const RoundRecord rec = env.play(round, t, round.actions.actions.col(pick), pick, 1, n, 0.2);
      EXPECT_EQ(rec.reward, rec.expected_reward + rec.noise);
      EXPECT_EQ(rec.safe, rec.expected_reward >= 0.8 * rec.baseline_reward);
      EXPECT_GE(rec.optimal_reward, rec.expected_reward);
    }
  }
}

TEST(Environment, StreamsAreReproducibleAndPerTask) {
  auto model = small_model();
  auto source = std::make_shared<GaussianActionSource>(8);
  Environment a(model, source, {}, 77);
  Environment b(model, source, {}, 77);
  // b consumes tasks in reverse order; each task's stream must not care.
  std::vector<TaskRound> ra, rb(4);
  for (Eigen::Index t = 0; t < 4; ++t) ra.push_back(a.next_round(t));
  for (Eigen::Index t = 3; t >= 0; --t) rb[static_cast<std::size_t>(t)] = b.next_round(t);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(ra[t].actions.actions, rb[t].actions.actions);
    EXPECT_EQ(ra[t].noise, rb[t].noise);
  }
}

TEST(Environment, OffSetActionRaisesOptimum) {
  auto model = small_model();
  Environment env(model, std::make_shared<GaussianActionSource>(8), {}, 5);
  const TaskRound round = env.next_round(0);
  const Vector big = 100.0 * model->theta_star.col(0);
  const RoundRecord rec = env.play(round, 0, big, -1, 1, 1, 0.2);
  EXPECT_DOUBLE_EQ(rec.optimal_reward, rec.expected_reward);
}

TEST(Environment, StrictWindowRedraws) {
  auto model = small_model();
  EnvironmentOptions opt;
  opt.gap_window = std::make_pair(0.0, 0.5);
  opt.strict_window = true;
  Environment env(model, std::make_shared<GaussianActionSource>(8), opt, 5);
  for (int i = 0; i < 20; ++i) {
    const TaskRound r = env.next_round(1);
    EXPECT_TRUE(r.gap_in_window);
    EXPECT_LE(r.actions.baseline_gap, 0.5);
  }
}
