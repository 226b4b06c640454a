#pragma once

// Comparison algorithms: per-task conservative Thompson sampling, a
// trace-norm regularized least-squares learner, and a method-of-moments
// subspace learner. Trace-norm and MoM play without any safety filter.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/learner.hpp"
#include "safemtrl/linalg.hpp"
#include "safemtrl/metrics.hpp"
#include "safemtrl/random.hpp"
#include "safemtrl/solver.hpp"

namespace safemtrl {

// ---------------------------------------------------------------------------
// Conservative Thompson sampling
// ---------------------------------------------------------------------------

/// Regularized least-squares state of one task.
struct TsTaskState {
  Matrix gram;    // reg I + sum x x^T
  Vector moment;  // sum x y
  Vector theta_rls;
  double confidence_radius = 0.0;  // beta_n
  double sampling_scale = 0.0;     // v
  long samples = 0;
  Eigen::LLT<Matrix> chol;

  TsTaskState() = default;

  TsTaskState(Matrix g, Vector b, double radius, double scale)
      : gram(std::move(g)), moment(std::move(b)), confidence_radius(radius), sampling_scale(scale) {
    chol.compute(gram);
    if (chol.info() != Eigen::Success) throw ContractViolation("TsTaskState: gram not positive definite");
    theta_rls = chol.solve(moment);
  }

  static TsTaskState prior(Eigen::Index d, double reg) {
    return TsTaskState(reg * Matrix::Identity(d, d), Vector::Zero(d), 0.0, 0.0);
  }

  void observe(const Vector& x, double y) {
    gram.noalias() += x * x.transpose();
    chol.rankUpdate(x, 1.0);
    moment += y * x;
    theta_rls = chol.solve(moment);
    ++samples;
  }

  /// ||x||_{gram^-1}.
  double weighted_norm(const Vector& x) const { return chol.matrixL().solve(x).norm(); }
};

struct TsParams {
  double reg = 1.0;                // lambda_reg
  double theta_norm_bound = 1.0;   // S >= ||theta_t||
  double sigma_eta = 1e-3;
};

/// beta_n = sigma_eta sqrt(d log((1 + n) / delta)) + sqrt(reg) S.
inline double ts_confidence_radius(const TsParams& p, Eigen::Index d, long n, double delta) {
  return p.sigma_eta * std::sqrt(static_cast<double>(d) *
                                 std::log((1.0 + static_cast<double>(n)) / delta)) +
         std::sqrt(p.reg) * p.theta_norm_bound;
}

/// Candidates whose pessimistic value x^T theta_rls - beta ||x||_{G^-1}
/// clears (1 - alpha) r_b.
inline std::vector<Eigen::Index> ts_safe_set(const TsTaskState& state, const Matrix& actions,
                                             double baseline_reward, double alpha) {
  std::vector<Eigen::Index> safe;
  for (Eigen::Index i = 0; i < actions.cols(); ++i) {
    const Vector x = actions.col(i);
    const double pessimistic =
        x.dot(state.theta_rls) - state.confidence_radius * state.weighted_norm(x);
    if (pessimistic >= (1.0 - alpha) * baseline_reward) safe.push_back(i);
  }
  return safe;
}

/// Sample theta~ ~ N(theta_rls, v^2 G^-1) and maximize over the safe set;
/// the baseline index when the safe set is empty.
inline Eigen::Index ts_select_action(const TsTaskState& state, const Matrix& actions,
                                     Eigen::Index baseline_index, double baseline_reward,
                                     double alpha, Rng& rng) {
  const Vector z = gaussian_vector(state.theta_rls.size(), rng);
  const Vector sampled =
      state.theta_rls + state.sampling_scale * Vector(state.chol.matrixU().solve(z));
  const std::vector<Eigen::Index> safe = ts_safe_set(state, actions, baseline_reward, alpha);
  if (safe.empty()) return baseline_index;
  Eigen::Index best = safe.front();
  double best_score = actions.col(best).dot(sampled);
  for (Eigen::Index i : safe) {
    const double score = actions.col(i).dot(sampled);
    if (score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

class ConservativeTs final : public Learner {
 public:
  ConservativeTs(ProblemSettings problem, TsParams params)
      : problem_(std::move(problem)), params_(params) {}

  std::string name() const override { return "ts_conservative"; }

  void run(Environment& env, TrialRecorder& recorder) override {
    const Eigen::Index tasks = env.tasks();
    const Eigen::Index d = env.dim();
    Rng rng = make_rng(problem_.seed, Stream::kLearner);
    std::vector<TsTaskState> states(static_cast<std::size_t>(tasks),
                                     TsTaskState::prior(d, params_.reg));
    const EpochSchedule& schedule = problem_.schedule;
    for (int m = 1; m <= schedule.epochs(); ++m) {
      for (int n = schedule.first_round(m); n <= schedule.last_round(m); ++n) {
        for (Eigen::Index t = 0; t < tasks; ++t) {
          TsTaskState& st = states[static_cast<std::size_t>(t)];
          st.confidence_radius = ts_confidence_radius(params_, d, st.samples, problem_.delta);
          st.sampling_scale = st.confidence_radius;
          const TaskRound round = env.next_round(t);
          const TaskActions& a = round.actions;
          const Eigen::Index pick =
              ts_select_action(st, a.actions, a.baseline_index, a.baseline_reward, problem_.alpha, rng);
          const Vector x = a.actions.col(pick);
          if (pick != a.baseline_index) {
            const double pessimistic =
                x.dot(st.theta_rls) - st.confidence_radius * st.weighted_norm(x);
            if (pessimistic < (1.0 - problem_.alpha) * a.baseline_reward) {
              throw ContractViolation("ts_conservative played an uncertified action");
            }
          }
          RoundRecord rec = env.play(round, t, x, pick, m, n, problem_.alpha);
          st.observe(x, rec.reward);
          recorder.on_round(std::move(rec));
        }
      }
      Matrix theta(d, tasks);
      for (Eigen::Index t = 0; t < tasks; ++t) {
        theta.col(t) = states[static_cast<std::size_t>(t)].theta_rls;
      }
      recorder.on_epoch_end({m, theta, std::nullopt});
    }
  }

 private:
  ProblemSettings problem_;
  TsParams params_;
};

// ---------------------------------------------------------------------------
// Trace-norm regularized least squares
// ---------------------------------------------------------------------------

struct TraceNormFit {
  Matrix theta;
  std::vector<double> objective;  // objective[0] at the starting point
  int iterations = 0;
};

namespace detail {

struct NormalEquations {
  std::vector<Matrix> gram;  // Phi_t^T Phi_t
  Matrix rhs;                // columns Phi_t^T y_t
  std::vector<double> yy;    // ||y_t||^2
};

inline NormalEquations normal_equations(const std::vector<TaskSamples>& samples, Eigen::Index d) {
  NormalEquations ne;
  ne.rhs.resize(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t t = 0; t < samples.size(); ++t) {
    ne.gram.push_back(samples[t].features.transpose() * samples[t].features);
    ne.rhs.col(static_cast<Eigen::Index>(t)) = samples[t].features.transpose() * samples[t].rewards;
    ne.yy.push_back(samples[t].rewards.squaredNorm());
  }
  return ne;
}

inline double smooth_loss(const NormalEquations& ne, const Matrix& theta) {
  double f = 0.0;
  for (std::size_t t = 0; t < ne.gram.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const Vector th = theta.col(ti);
    f += 0.5 * (th.dot(ne.gram[t] * th) - 2.0 * th.dot(ne.rhs.col(ti)) + ne.yy[t]);
  }
  return f;
}

inline double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<Matrix>(m).singularValues().sum();
}

}  // namespace detail

/// 1 / max_t sigma_max(Phi_t^T Phi_t): the reciprocal Lipschitz constant of
/// the smooth part.
inline double trace_norm_default_step(const std::vector<TaskSamples>& samples) {
  double lip = 0.0;
  for (const TaskSamples& s : samples) {
    if (s.features.rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Matrix> es(s.features.transpose() * s.features,
                                             Eigen::EigenvaluesOnly);
    lip = std::max(lip, es.eigenvalues().maxCoeff());
  }
  return lip > 0.0 ? 1.0 / lip : 1.0;
}

/// Proximal gradient on 1/2 sum_t ||y_t - Phi_t theta_t||^2 + lambda ||Theta||_*.
inline TraceNormFit trace_norm_fit(const std::vector<TaskSamples>& samples, double lambda,
                                   int iters, std::optional<double> step = std::nullopt,
                                   std::optional<Matrix> start = std::nullopt) {
  if (!(lambda >= 0.0)) throw ParameterError("trace_norm_fit: lambda must be >= 0");
  if (iters < 1) throw ParameterError("trace_norm_fit: iters must be >= 1");
  if (samples.empty()) throw DimensionError("trace_norm_fit: no tasks");
  const Eigen::Index d = samples.front().features.cols();
  const auto tasks = static_cast<Eigen::Index>(samples.size());
  const detail::NormalEquations ne = detail::normal_equations(samples, d);
  const double s = step ? *step : trace_norm_default_step(samples);

  TraceNormFit fit;
  fit.theta = start ? *start : Matrix::Zero(d, tasks);
  const double f0 = detail::smooth_loss(ne, fit.theta) + lambda * detail::nuclear_norm(fit.theta);
  fit.objective.push_back(f0);
  for (int it = 0; it < iters; ++it) {
    Matrix grad(d, tasks);
    for (Eigen::Index t = 0; t < tasks; ++t) {
      grad.col(t) = ne.gram[static_cast<std::size_t>(t)] * fit.theta.col(t) - ne.rhs.col(t);
    }
    Matrix next = svd_soft_threshold(fit.theta - s * grad, s * lambda);
    const double change = (next - fit.theta).norm();
    const double scale = std::max(fit.theta.norm(), 1e-300);
    fit.theta = std::move(next);
    ++fit.iterations;
    const double f = detail::smooth_loss(ne, fit.theta) + lambda * detail::nuclear_norm(fit.theta);
    fit.objective.push_back(f);
    if (f > 10.0 * std::max(std::abs(f0), 1e-300)) {
      throw StepSizeError("trace_norm_fit: objective grew tenfold; step " + std::to_string(s) +
                          " is too large");
    }
    if (change / scale < 1e-8) break;
  }
  return fit;
}

struct TraceNormParams {
  std::optional<double> lambda;  // default from the noise level
  double lambda_multiplier = 1.0;
  int iters = 200;
  std::optional<double> step;
  double sigma_eta = 1e-3;
};

/// multiplier * sigma_eta * sqrt(T (d + T) n_per_task).
inline double trace_norm_default_lambda(double sigma_eta, Eigen::Index d, Eigen::Index tasks,
                                        Eigen::Index per_task, double multiplier) {
  return multiplier * sigma_eta *
         std::sqrt(static_cast<double>(tasks) * static_cast<double>(d + tasks) *
                   static_cast<double>(per_task));
}

namespace detail {

inline Eigen::Index uniform_index(Eigen::Index k, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, k - 1);
  return pick(rng);
}

inline void append_samples(std::vector<TaskSamples>& into, const std::vector<TaskSamples>& more) {
  if (into.empty()) {
    into = more;
    return;
  }
  for (std::size_t t = 0; t < into.size(); ++t) {
    TaskSamples& a = into[t];
    const TaskSamples& b = more[t];
    const Eigen::Index n = a.features.rows();
    a.features.conservativeResize(n + b.features.rows(), Eigen::NoChange);
    a.features.bottomRows(b.features.rows()) = b.features;
    a.rewards.conservativeResize(n + b.rewards.size());
    a.rewards.tail(b.rewards.size()) = b.rewards;
  }
}

}  // namespace detail

/// Explores with uniformly random candidates in epoch 1, refits the
/// trace-norm estimate on all data at every epoch end, and plays greedily.
class TraceNormLearner final : public Learner {
 public:
  TraceNormLearner(ProblemSettings problem, TraceNormParams params)
      : problem_(std::move(problem)), params_(params) {}

  std::string name() const override { return "trace_norm"; }

  void run(Environment& env, TrialRecorder& recorder) override {
    const Eigen::Index tasks = env.tasks();
    const Eigen::Index d = env.dim();
    Rng rng = make_rng(problem_.seed, Stream::kLearner);
    const EpochSchedule& schedule = problem_.schedule;
    std::vector<TaskSamples> all;
    std::optional<Matrix> theta;
    for (int m = 1; m <= schedule.epochs(); ++m) {
      EpochBuffer buffer(tasks, d, schedule.length(m));
      for (int n = schedule.first_round(m); n <= schedule.last_round(m); ++n) {
        for (Eigen::Index t = 0; t < tasks; ++t) {
          const TaskRound round = env.next_round(t);
          const Matrix& actions = round.actions.actions;
          Eigen::Index pick;
          if (theta) {
            Estimate est{BasisMatrix(), Matrix(), *theta, m, 0};
            pick = greedy_action(est, t, actions).first;
          } else {
            pick = detail::uniform_index(actions.cols(), rng);
          }
          const Vector x = actions.col(pick);
          RoundRecord rec = env.play(round, t, x, pick, m, n, problem_.alpha);
          buffer.push(t, x, rec.reward);
          recorder.on_round(std::move(rec));
        }
      }
      detail::append_samples(all, buffer.take());
      const Eigen::Index per_task = all.front().rewards.size();
      const double lambda =
          params_.lambda ? *params_.lambda
                         : trace_norm_default_lambda(params_.sigma_eta, d, tasks, per_task,
                                                     params_.lambda_multiplier);
      TraceNormFit fit = trace_norm_fit(all, lambda, params_.iters, params_.step, theta);
      for (std::size_t i = 1; i < fit.objective.size(); ++i) {
        if (fit.objective[i] > fit.objective[i - 1] * (1.0 + 1e-10) + 1e-12) {
          throw StepSizeError("trace_norm_fit: objective increased at iteration " +
                              std::to_string(i));
        }
      }
      theta = std::move(fit.theta);
      std::optional<BasisMatrix> basis;
      if (theta->norm() > 0.0) basis = top_r_svd(*theta, problem_.r).left_singular;
      recorder.on_epoch_end({m, *theta, basis});
    }
  }

 private:
  ProblemSettings problem_;
  TraceNormParams params_;
};

// ---------------------------------------------------------------------------
// Method of moments
// ---------------------------------------------------------------------------

/// (1 / sum_t n_t) sum_t sum_n x x^T y^2.
inline Matrix mom_moment_matrix(const std::vector<TaskSamples>& samples) {
  if (samples.empty()) throw DimensionError("mom: no tasks");
  const Eigen::Index d = samples.front().features.cols();
  Matrix m = Matrix::Zero(d, d);
  Eigen::Index count = 0;
  for (const TaskSamples& s : samples) {
    const Matrix weighted = s.features.transpose() * s.rewards.array().square().matrix().asDiagonal();
    m.noalias() += weighted * s.features;
    count += s.rewards.size();
  }
  if (count == 0) throw DimensionError("mom: no samples");
  return m / static_cast<double>(count);
}

/// Top-r eigenvectors of the moment matrix; fails when its rank is below r.
inline BasisMatrix mom_basis(const std::vector<TaskSamples>& first, Eigen::Index r) {
  const Matrix m = mom_moment_matrix(first);
  if (r > m.rows()) throw DimensionError("mom: r exceeds d");
  const SvdResult svd = top_r_svd(m, r);
  const double top = svd.singular_values.size() > 0 ? svd.singular_values(0) : 0.0;
  const double last = svd.singular_values.size() > 0 ? svd.singular_values(r - 1) : 0.0;
  if (!(top > 0.0) || !(last > kRankCutoff * top)) {
    throw DegeneracyError("mom: second-moment matrix has rank below r", last);
  }
  return svd.left_singular;
}

/// B_hat from the first phase, W_hat by per-task least squares on the second.
inline Estimate mom_estimate(const std::vector<TaskSamples>& first, Eigen::Index r,
                             const std::vector<TaskSamples>& second) {
  BasisMatrix b = mom_basis(first, r);
  Matrix w = min_step_w(b, second);
  Matrix theta = b.matrix() * w;
  return Estimate{std::move(b), std::move(w), std::move(theta), 2, 0};
}

/// Random exploration in epochs 1 and 2, then greedy play from the fixed
/// moment estimate.
class MomLearner final : public Learner {
 public:
  explicit MomLearner(ProblemSettings problem) : problem_(std::move(problem)) {}

  std::string name() const override { return "mom"; }

  void run(Environment& env, TrialRecorder& recorder) override {
    const Eigen::Index tasks = env.tasks();
    const Eigen::Index d = env.dim();
    Rng rng = make_rng(problem_.seed, Stream::kLearner);
    const EpochSchedule& schedule = problem_.schedule;
    std::optional<BasisMatrix> basis;
    std::optional<Estimate> estimate;
    for (int m = 1; m <= schedule.epochs(); ++m) {
      EpochBuffer buffer(tasks, d, schedule.length(m));
      for (int n = schedule.first_round(m); n <= schedule.last_round(m); ++n) {
        for (Eigen::Index t = 0; t < tasks; ++t) {
          const TaskRound round = env.next_round(t);
          const Matrix& actions = round.actions.actions;
          const Eigen::Index pick = estimate ? greedy_action(*estimate, t, actions).first
                                             : detail::uniform_index(actions.cols(), rng);
          const Vector x = actions.col(pick);
          RoundRecord rec = env.play(round, t, x, pick, m, n, problem_.alpha);
          buffer.push(t, x, rec.reward);
          recorder.on_round(std::move(rec));
        }
      }
      std::vector<TaskSamples> data = buffer.take();
      if (m == 1) {
        basis = mom_basis(data, problem_.r);
        recorder.on_basis(m, 0, *basis);
        recorder.on_epoch_end({m, std::nullopt, basis});
      } else if (m == 2) {
        Matrix w = min_step_w(*basis, data);
        Matrix theta = basis->matrix() * w;
        estimate = Estimate{*basis, std::move(w), std::move(theta), m, 0};
        recorder.on_epoch_end({m, estimate->theta_hat, estimate->b_hat});
      } else {
        recorder.on_epoch_end({m, estimate->theta_hat, estimate->b_hat});
      }
    }
  }

 private:
  ProblemSettings problem_;
};

}  // namespace safemtrl
