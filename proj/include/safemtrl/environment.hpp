#pragma once

// Synthetic multi-task bandit world: ground-truth low-rank reward matrix,
// per-round candidate action sets with a rank-statistic baseline, and the
// Gaussian reward oracle.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "safemtrl/errors.hpp"
#include "safemtrl/linalg.hpp"
#include "safemtrl/random.hpp"

namespace safemtrl {

struct ColumnNormBounds {
  double low = 1.0;
  double high = 1.0;
};

/// Hidden ground truth Theta* = B* W* together with its spectral summary.
struct TaskModel {
  Matrix theta_star;  // d x T
  BasisMatrix b_star;  // d x r
  Matrix w_star;       // r x T
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double kappa = 1.0;
  double mu = 1.0;
  ColumnNormBounds col_norm_bounds;

  Eigen::Index dim() const noexcept { return theta_star.rows(); }
  Eigen::Index tasks() const noexcept { return theta_star.cols(); }
  Eigen::Index rank() const noexcept { return b_star.cols(); }

  /// T sigma_eta^2 / sigma_min^2.
  double nsr(double sigma_eta) const {
    return static_cast<double>(tasks()) * sigma_eta * sigma_eta / (sigma_min * sigma_min);
  }
};

namespace detail {

inline void fill_spectrum(TaskModel& m, Eigen::Index r) {
  Eigen::BDCSVD<Matrix> svd(m.theta_star);
  const Vector& s = svd.singularValues();
  m.sigma_max = s(0);
  m.sigma_min = s(r - 1);
  m.kappa = m.sigma_min > 0.0 ? m.sigma_max / m.sigma_min : INFINITY;
}

}  // namespace detail

/// Random rank-r model: B* from the QR of a Gaussian draw, W* Gaussian with
/// every column rescaled to a norm drawn uniformly from [low, high].
inline TaskModel generate_task_model(Eigen::Index d, Eigen::Index r, Eigen::Index tasks,
                                     ColumnNormBounds bounds, std::uint64_t seed) {
  if (r < 1 || r > std::min(d, tasks)) {
    throw DimensionError("generate_task_model: need 1 <= r <= min(d, T), got r=" +
                         std::to_string(r));
  }
  if (!(bounds.low > 0.0) || bounds.high < bounds.low) {
    throw ParameterError("generate_task_model: need 0 < l <= u");
  }
  Rng rng = make_rng(seed, Stream::kModel);
  TaskModel m;
  m.b_star = qr_orthonormalize(gaussian_matrix(d, r, rng));
  m.w_star = gaussian_matrix(r, tasks, rng);
  std::uniform_real_distribution<double> norm_draw(bounds.low, bounds.high);
  for (Eigen::Index t = 0; t < tasks; ++t) {
    const double target = bounds.low == bounds.high ? bounds.low : norm_draw(rng);
    m.w_star.col(t) *= target / m.w_star.col(t).norm();
  }
  m.theta_star = m.b_star.matrix() * m.w_star;
  m.col_norm_bounds = bounds;
  m.mu = bounds.high / bounds.low;
  detail::fill_spectrum(m, r);
  return m;
}

/// Model for a given Theta* of known rank r (e.g. the MovieLens reward
/// parameters). B* is the top-r left singular basis, W* = B*^T Theta*, and
/// the column-norm bounds are the observed extremes.
inline TaskModel make_task_model(const Matrix& theta_star, Eigen::Index r) {
  TaskModel m;
  m.theta_star = theta_star;
  m.b_star = top_r_svd(theta_star, r).left_singular;
  m.w_star = m.b_star.matrix().transpose() * theta_star;
  const Vector norms = m.w_star.colwise().norm().transpose();
  m.col_norm_bounds = {norms.minCoeff(), norms.maxCoeff()};
  m.mu = m.col_norm_bounds.high / m.col_norm_bounds.low;
  detail::fill_spectrum(m, r);
  return m;
}

/// One task's candidate set for one round, ranked by true expected reward.
struct TaskActions {
  Matrix actions;             // d x K, one candidate per column
  Vector expected;            // K expected rewards
  Eigen::Index optimal_index = 0;
  Eigen::Index baseline_index = 0;
  double baseline_reward = 0.0;  // r_b
  double baseline_gap = 0.0;     // optimal minus baseline expected reward

  Vector baseline_action() const { return actions.col(baseline_index); }
  double optimal_reward() const { return expected(optimal_index); }
};

/// Candidate sets for every task in one round.
struct ActionRound {
  std::vector<TaskActions> tasks;
};

/// Rank candidates under theta: the optimum is the best expected reward and
/// the baseline the baseline_rank-th best (ties resolved by lower index).
inline TaskActions rank_actions(Matrix actions, const Vector& theta, Eigen::Index baseline_rank) {
  const Eigen::Index k = actions.cols();
  if (k < 1) throw DimensionError("rank_actions: empty action set");
  if (baseline_rank < 1 || baseline_rank > k) {
    throw ParameterError("rank_actions: baseline_rank must lie in [1, K]");
  }
  TaskActions out;
  out.expected = actions.transpose() * theta;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return out.expected(a) > out.expected(b);
  });
  out.optimal_index = order.front();
  out.baseline_index = order[static_cast<std::size_t>(baseline_rank - 1)];
  out.baseline_reward = out.expected(out.baseline_index);
  out.baseline_gap = out.expected(out.optimal_index) - out.baseline_reward;
  out.actions = std::move(actions);
  return out;
}

/// K i.i.d. standard Gaussian candidates per task, drawn from one generator.
inline ActionRound sample_action_round(const TaskModel& model, Eigen::Index k,
                                       Eigen::Index baseline_rank, Rng& rng) {
  ActionRound round;
  round.tasks.reserve(static_cast<std::size_t>(model.tasks()));
  for (Eigen::Index t = 0; t < model.tasks(); ++t) {
    round.tasks.push_back(
        rank_actions(gaussian_matrix(model.dim(), k, rng), model.theta_star.col(t), baseline_rank));
  }
  return round;
}

/// Noisy reward x^T theta_t + eta with eta ~ N(0, sigma_eta^2). Returns (reward, noise).
inline std::pair<double, double> observe_reward(const TaskModel& model, Eigen::Index t,
                                                const Vector& x, double sigma_eta, Rng& rng) {
  if (x.size() != model.dim()) throw DimensionError("observe_reward: action dimension mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise = sigma_eta * normal(rng);
  return {x.dot(model.theta_star.col(t)) + noise, noise};
}

/// Source of raw (unranked) candidate sets for a task.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  /// d x K candidates for task t.
  virtual Matrix draw(Eigen::Index t, Eigen::Index k, Rng& rng) const = 0;
};

class GaussianActionSource final : public ActionSource {
 public:
  explicit GaussianActionSource(Eigen::Index d) : d_(d) {}
  Matrix draw(Eigen::Index, Eigen::Index k, Rng& rng) const override {
    return gaussian_matrix(d_, k, rng);
  }

 private:
  Eigen::Index d_;
};

struct EnvironmentOptions {
  Eigen::Index k = 10;
  Eigen::Index baseline_rank = 5;
  double sigma_eta = 1e-3;
  /// Redraw a task's candidate set until its baseline reward is > 0.
  bool positive_baseline = true;
  /// Admissible window [kappa_l, kappa_h] on the baseline gap.
  std::optional<std::pair<double, double>> gap_window;
  /// Redraw rounds whose baseline gap leaves gap_window (otherwise only recorded).
  bool strict_window = false;
  int max_redraws = 10000;
};

/// What one task sees in one round: the ranked candidates and the noise
/// realization that will be added to whatever is played.
struct TaskRound {
  TaskActions actions;
  double noise = 0.0;
  bool gap_in_window = true;
};

/// A played (round, task) pair: the unit of metrics aggregation.
struct RoundRecord {
  int epoch = 0;
  int round = 0;
  int task = 0;
  Vector action;
  Eigen::Index chosen_index = -1;  // -1 when the action is not a candidate
  double reward = 0.0;
  double expected_reward = 0.0;
  double optimal_reward = 0.0;
  double baseline_reward = 0.0;
  double baseline_gap = 0.0;
  double noise = 0.0;
  bool safe = true;
};

/// Replayable environment stream for one trial. Each task owns its own
/// generator, so the draws a task sees depend only on (seed, task, round)
/// and not on the learner or on task interleaving.
class Environment {
 public:
  Environment(std::shared_ptr<const TaskModel> model, std::shared_ptr<const ActionSource> source,
              EnvironmentOptions options, std::uint64_t seed)
      : model_(std::move(model)), source_(std::move(source)), options_(std::move(options)) {
    if (options_.baseline_rank < 1 || options_.baseline_rank > options_.k) {
      throw ConfigError("baseline_rank must lie in [1, K]");
    }
    rngs_.reserve(static_cast<std::size_t>(model_->tasks()));
    for (Eigen::Index t = 0; t < model_->tasks(); ++t) {
      rngs_.push_back(make_rng(seed, Stream::kEnvironment, static_cast<std::uint64_t>(t)));
    }
  }

  const TaskModel& model() const noexcept { return *model_; }
  const EnvironmentOptions& options() const noexcept { return options_; }
  Eigen::Index dim() const noexcept { return model_->dim(); }
  Eigen::Index tasks() const noexcept { return model_->tasks(); }

  /// Next round's candidates and noise for task t.
  TaskRound next_round(Eigen::Index t) {
    Rng& rng = rngs_.at(static_cast<std::size_t>(t));
    const Vector theta = model_->theta_star.col(t);
    TaskRound out;
    for (int attempt = 0;; ++attempt) {
      out.actions =
          rank_actions(source_->draw(t, options_.k, rng), theta, options_.baseline_rank);
      out.gap_in_window = in_window(out.actions.baseline_gap);
      const bool positive_ok = !options_.positive_baseline || out.actions.baseline_reward > 0.0;
      const bool window_ok = !options_.strict_window || out.gap_in_window;
      if (positive_ok && window_ok) break;
      if (attempt + 1 >= options_.max_redraws) {
        throw Error("environment: no admissible action set for task " + std::to_string(t) +
                    " after " + std::to_string(options_.max_redraws) + " draws");
      }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    out.noise = options_.sigma_eta * normal(rng);
    return out;
  }

  double expected_reward(Eigen::Index t, const Vector& x) const {
    return x.dot(model_->theta_star.col(t));
  }

  /// Play x for task t in a drawn round and produce its record.
  RoundRecord play(const TaskRound& round, Eigen::Index t, const Vector& x, Eigen::Index chosen,
                   int epoch, int n, double alpha) const {
    RoundRecord rec;
    rec.epoch = epoch;
    rec.round = n;
    rec.task = static_cast<int>(t);
    rec.action = x;
    rec.chosen_index = chosen;
    rec.expected_reward = expected_reward(t, x);
    rec.noise = round.noise;
    rec.reward = rec.expected_reward + rec.noise;
    // An off-set action (the conservative mix) can beat every candidate.
    rec.optimal_reward = chosen >= 0 ? round.actions.optimal_reward()
                                     : std::max(round.actions.optimal_reward(), rec.expected_reward);
    rec.baseline_reward = round.actions.baseline_reward;
    rec.baseline_gap = round.actions.baseline_gap;
    rec.safe = rec.expected_reward >= (1.0 - alpha) * rec.baseline_reward;
    return rec;
  }

 private:
  bool in_window(double gap) const {
    if (!options_.gap_window) return true;
    return gap >= options_.gap_window->first && gap <= options_.gap_window->second;
  }

  std::shared_ptr<const TaskModel> model_;
  std::shared_ptr<const ActionSource> source_;
  EnvironmentOptions options_;
  std::vector<Rng> rngs_;
};

}  // namespace safemtrl
