#pragma once

// Safe-AltGDmin: conservative exploration in the first epoch, truncated
// spectral initialization, then alternating exact least-squares (W) and
// projected gradient (B) steps on sample-split epoch data, with greedy play
// from the previous epoch's estimate in every later epoch.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/learner.hpp"
#include "safemtrl/linalg.hpp"
#include "safemtrl/log.hpp"
#include "safemtrl/metrics.hpp"
#include "safemtrl/random.hpp"
#include "safemtrl/schedule.hpp"

namespace safemtrl {

struct SolverParams {
  double rho = 0.1;
  std::optional<double> gd_step;           // gamma; practical heuristic when unset
  double step_c = 0.4;                     // c in the practical step, c <= 0.5
  int gd_iters = 2;                        // L
  std::optional<double> trunc_multiplier;  // C~; estimated from data when unset
  double target_error = 1e-3;              // reporting only
  bool sample_split = true;
  bool enforce_safety = true;  // clamp rho by the per-round safe ceiling
};

/// Learner-side estimate theta_hat = b_hat w_hat.
struct Estimate {
  BasisMatrix b_hat;
  Matrix w_hat;
  Matrix theta_hat;
  int epoch = 0;
  int gd_iter = 0;
};

/// Largest rho for which the conservative mix is provably safe:
/// alpha r_b / (r_b + sqrt(2 (r/T) log(G1 T / delta)) mu sigma_max).
inline double rho_upper_bound(double alpha, double baseline_reward, Eigen::Index r,
                              Eigen::Index tasks, int g1, double delta, double mu,
                              double sigma_max) {
  if (alpha <= 0.0 || baseline_reward <= 0.0) return 0.0;
  if (alpha >= 1.0 || r < 1 || tasks < 1 || g1 < 1 || !(delta > 0.0) || !(mu > 0.0) ||
      !(sigma_max > 0.0)) {
    throw ParameterError("rho_upper_bound: inputs must be positive with alpha in (0, 1)");
  }
  const double ratio = static_cast<double>(r) / static_cast<double>(tasks);
  const double log_term = std::log(static_cast<double>(g1) * static_cast<double>(tasks) / delta);
  const double spread = std::sqrt(2.0 * ratio * log_term) * mu * sigma_max;
  return alpha * baseline_reward / (baseline_reward + spread);
}

/// (1 - rho) x_b + rho zeta.
inline Vector conservative_action(const Vector& baseline, const Vector& zeta, double rho) {
  if (rho < 0.0 || rho > 1.0) throw ParameterError("conservative_action: rho must lie in [0, 1]");
  return (1.0 - rho) * baseline + rho * zeta;
}

/// tau = C~ * mean(y^2); samples with y^2 > tau are dropped from the
/// initialization sum.
inline double truncation_threshold(const std::vector<double>& rewards, double trunc_multiplier) {
  if (rewards.empty()) throw ParameterError("truncation_threshold: no rewards");
  if (!(trunc_multiplier > 0.0)) throw ParameterError("truncation_threshold: C~ must be > 0");
  double sum = 0.0;
  for (double y : rewards) sum += y * y;
  return trunc_multiplier * sum / static_cast<double>(rewards.size());
}

inline constexpr double kMinTruncMultiplier = 9.0;

/// 9 * T max_t ||theta_t||^2 / ||Theta||_F^2 with ||theta_t||^2 ~ mean_n y^2,
/// floored at 9.
inline double estimate_trunc_multiplier(const std::vector<Vector>& rewards_per_task) {
  if (rewards_per_task.empty()) throw ParameterError("estimate_trunc_multiplier: no tasks");
  double total = 0.0;
  double largest = 0.0;
  for (const Vector& y : rewards_per_task) {
    if (y.size() == 0) throw ParameterError("estimate_trunc_multiplier: task without samples");
    const double per_task = y.squaredNorm() / static_cast<double>(y.size());
    total += per_task;
    largest = std::max(largest, per_task);
  }
  if (!(total > 0.0)) {
    warn("all first-epoch rewards are zero; using C~ = 9");
    return kMinTruncMultiplier;
  }
  const double ratio = static_cast<double>(rewards_per_task.size()) * largest / total;
  return std::max(kMinTruncMultiplier, kMinTruncMultiplier * ratio);
}

/// Column t = (1/n_t) sum_n x_{n,t} y_{n,t} 1{y^2 <= tau}.
inline Matrix truncated_first_moment(const std::vector<TaskSamples>& samples, double tau) {
  if (samples.empty()) throw DimensionError("spectral_init: no tasks");
  const Eigen::Index d = samples.front().features.cols();
  Matrix theta0 = Matrix::Zero(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t t = 0; t < samples.size(); ++t) {
    const TaskSamples& s = samples[t];
    if (s.rewards.size() == 0) throw DimensionError("spectral_init: task without samples");
    const Vector kept =
        (s.rewards.array().square() <= tau).select(s.rewards, Vector::Zero(s.rewards.size()));
    theta0.col(static_cast<Eigen::Index>(t)) =
        s.features.transpose() * kept / static_cast<double>(s.rewards.size());
  }
  return theta0;
}

struct SpectralInit {
  BasisMatrix basis;
  Matrix theta0;
};

inline SpectralInit spectral_init_full(const std::vector<TaskSamples>& samples, double tau,
                                       Eigen::Index r) {
  Matrix theta0 = truncated_first_moment(samples, tau);
  if (r > std::min(theta0.rows(), theta0.cols())) {
    throw DimensionError("spectral_init: r exceeds min(d, T)");
  }
  if (theta0.cwiseAbs().maxCoeff() == 0.0) {
    throw InitError("spectral_init: truncated moment matrix is identically zero");
  }
  return {top_r_svd(theta0, r).left_singular, std::move(theta0)};
}

/// Top-r left singular basis of the truncated first-moment matrix.
inline BasisMatrix spectral_init(const std::vector<TaskSamples>& samples, double tau,
                                 Eigen::Index r) {
  return spectral_init_full(samples, tau, r).basis;
}

struct SplitRange {
  Eigen::Index begin = 0;
  Eigen::Index size = 0;
};

/// Contiguous partition of n samples into 2L (+1 when with_init) splits in
/// arrival order; the remainder goes to the last split. With with_init the
/// first split is the initialization set.
inline std::vector<SplitRange> split_samples(Eigen::Index n, int gd_iters, bool with_init,
                                             Eigen::Index min_per_split = 1) {
  if (gd_iters < 1) throw ConfigError("split_samples: L must be >= 1");
  const Eigen::Index count = 2 * gd_iters + (with_init ? 1 : 0);
  const Eigen::Index size = n / count;
  if (size < std::max<Eigen::Index>(min_per_split, 1)) {
    throw ConfigError("split_samples: " + std::to_string(n) + " samples per task cannot fill " +
                      std::to_string(count) + " splits of at least " +
                      std::to_string(std::max<Eigen::Index>(min_per_split, 1)) +
                      " (2L" + (with_init ? "+1" : "") + " splits x r samples)");
  }
  std::vector<SplitRange> out;
  for (Eigen::Index i = 0; i < count; ++i) out.push_back({i * size, size});
  out.back().size = n - out.back().begin;
  return out;
}

inline std::vector<TaskSamples> take_split(const std::vector<TaskSamples>& samples,
                                           SplitRange range) {
  std::vector<TaskSamples> out;
  out.reserve(samples.size());
  for (const TaskSamples& s : samples) {
    out.push_back({s.features.middleRows(range.begin, range.size),
                   s.rewards.segment(range.begin, range.size)});
  }
  return out;
}

/// Column t = (Phi_t B)^+ y_t.
inline Matrix min_step_w(const BasisMatrix& b, const std::vector<TaskSamples>& samples) {
  Matrix w(b.cols(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t t = 0; t < samples.size(); ++t) {
    if (samples[t].features.cols() != b.rows()) {
      throw DimensionError("min_step_w: feature dimension differs from basis rows");
    }
    w.col(static_cast<Eigen::Index>(t)) =
        least_squares(samples[t].features * b.matrix(), samples[t].rewards);
  }
  return w;
}

/// sum_t Phi_t^T (Phi_t B w_t - y_t) w_t^T, accumulated in task order.
inline Matrix gradient_b(const Matrix& b, const Matrix& w, const std::vector<TaskSamples>& samples) {
  if (w.cols() != static_cast<Eigen::Index>(samples.size())) {
    throw DimensionError("gradient_b: W must have one column per task");
  }
  Matrix grad = Matrix::Zero(b.rows(), b.cols());
  for (std::size_t t = 0; t < samples.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const Vector residual = samples[t].features * (b * w.col(ti)) - samples[t].rewards;
    grad.noalias() += (samples[t].features.transpose() * residual) * w.col(ti).transpose();
  }
  return grad;
}

/// QR(B - (gamma / split_size) grad_B f).
inline BasisMatrix grad_step_b(const BasisMatrix& b, const Matrix& w,
                               const std::vector<TaskSamples>& samples, double gamma,
                               Eigen::Index split_size) {
  if (split_size < 1) throw DimensionError("grad_step_b: empty split");
  const Matrix stepped =
      b.matrix() - (gamma / static_cast<double>(split_size)) * gradient_b(b.matrix(), w, samples);
  return qr_orthonormalize(stepped);
}

/// gamma = c / ((1 + 0.04 / (1 - 2 rho)^2)^2 ||Theta_0||^2).
inline double practical_gd_step(double theta0_norm, double rho, double c = 0.4) {
  if (rho == 0.5) throw ParameterError("practical_gd_step: rho = 0.5 makes the step singular");
  if (!(theta0_norm > 0.0)) throw ParameterError("practical_gd_step: ||Theta_0|| must be > 0");
  const double q = 1.0 - 2.0 * rho;
  const double inflate = 1.0 + 0.04 / (q * q);
  return c / (inflate * inflate * theta0_norm * theta0_norm);
}

/// GD-iteration floor kappa^2 log((gap + alpha r_b) / (2 (1 + 2/(1-2rho)^2) mu sigma_max
/// sqrt(2 r/T log(N T/delta)))) with the unknown leading constant set to 1,
/// clipped at 0. Diagnostic only.
inline double gd_iteration_floor(double kappa, double baseline_gap, double alpha,
                                 double baseline_reward, double rho, double mu, double sigma_max,
                                 Eigen::Index r, Eigen::Index tasks, int horizon, double delta) {
  if (rho == 0.5) return std::numeric_limits<double>::infinity();
  const double q = 1.0 - 2.0 * rho;
  const double rt = static_cast<double>(r) / static_cast<double>(tasks);
  const double nt = static_cast<double>(horizon) * static_cast<double>(tasks);
  const double denom = 2.0 * (1.0 + 2.0 / (q * q)) * mu * sigma_max *
                       std::sqrt(2.0 * rt * std::log(nt / delta));
  const double num = baseline_gap + alpha * baseline_reward;
  if (!(num > 0.0) || !(denom > 0.0)) return 0.0;
  return std::max(0.0, kappa * kappa * std::log(num / denom));
}

/// argmax_x x^T theta_hat_t over the columns of `actions`; lowest index wins ties.
inline std::pair<Eigen::Index, Vector> greedy_action(const Estimate& estimate, Eigen::Index t,
                                                     const Matrix& actions) {
  if (actions.cols() < 1) throw DimensionError("greedy_action: empty action set");
  const Vector scores = actions.transpose() * estimate.theta_hat.col(t);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return {best, actions.col(best)};
}

/// Ground-truth quantities entering the safe-exploration ceiling on rho.
struct SafetyInputs {
  double mu = 1.0;
  double sigma_max = 1.0;
};

/// Diagnostics of one Safe-AltGDmin trial.
struct SolverDiagnostics {
  double trunc_multiplier = 0.0;
  double tau = 0.0;
  double gd_step = 0.0;
  double theta0_norm = 0.0;
  double mean_effective_rho = 0.0;
};

class SafeAltGdmin final : public Learner {
 public:
  SafeAltGdmin(ProblemSettings problem, SolverParams params, SafetyInputs safety)
      : problem_(std::move(problem)), params_(params), safety_(safety) {
    if (params_.gd_iters < 1) throw ConfigError("gd_iters (L) must be >= 1");
    if (params_.rho < 0.0 || params_.rho > 1.0) throw ConfigError("rho must lie in [0, 1]");
    if (params_.rho > 0.25 && params_.rho < 0.75) {
      warn("rho = " + std::to_string(params_.rho) +
           " lies outside [0, 0.25] U [0.75, 1] where contraction is guaranteed");
    }
  }

  std::string name() const override { return "safe_altgdmin"; }

  void run(Environment& env, TrialRecorder& recorder) override {
    const EpochSchedule& schedule = problem_.schedule;
    const Eigen::Index tasks = env.tasks();
    const Eigen::Index d = env.dim();
    Rng rng = make_rng(problem_.seed, Stream::kLearner);
    const int g1 = schedule.last_round(1);
    double rho_sum = 0.0;

    std::optional<Estimate> estimate;
    for (int m = 1; m <= schedule.epochs(); ++m) {
      EpochBuffer buffer(tasks, d, schedule.length(m));
      for (int n = schedule.first_round(m); n <= schedule.last_round(m); ++n) {
        for (Eigen::Index t = 0; t < tasks; ++t) {
          const TaskRound round = env.next_round(t);
          Vector x;
          Eigen::Index chosen = -1;
          if (m == 1) {
            double rho = params_.rho;
            if (params_.enforce_safety) {
              rho = std::min(rho, rho_upper_bound(problem_.alpha, round.actions.baseline_reward,
                                                  problem_.r, tasks, g1, problem_.delta,
                                                  safety_.mu, safety_.sigma_max));
            }
            rho_sum += rho;
            const Vector zeta = gaussian_vector(d, rng);
            x = conservative_action(round.actions.baseline_action(), zeta, rho);
            if (rho == 0.0) chosen = round.actions.baseline_index;
          } else {
            std::tie(chosen, x) = greedy_action(*estimate, t, round.actions.actions);
          }
          RoundRecord rec = env.play(round, t, x, chosen, m, n, problem_.alpha);
          buffer.push(t, x, rec.reward);
          recorder.on_round(std::move(rec));
        }
      }
      if (m == 1) {
        diagnostics_.mean_effective_rho =
            rho_sum / static_cast<double>(static_cast<Eigen::Index>(g1) * tasks);
      }
      estimate = refine(m, buffer.take(), estimate, recorder);
      recorder.on_epoch_end({m, estimate->theta_hat, estimate->b_hat});
    }
    final_ = std::move(estimate);
  }

  const std::optional<Estimate>& final_estimate() const noexcept { return final_; }
  const SolverDiagnostics& diagnostics() const noexcept { return diagnostics_; }

 private:
  // Spectral init (epoch 1) followed by L GDmin iterations on this epoch's data.
  Estimate refine(int m, std::vector<TaskSamples> data, const std::optional<Estimate>& previous,
                  TrialRecorder& recorder) {
    const int gd_iters = params_.gd_iters;
    const bool with_init = m == 1;
    const Eigen::Index n = data.front().rewards.size();

    std::vector<SplitRange> splits;
    if (params_.sample_split) {
      splits = split_samples(n, gd_iters, with_init, problem_.r);
    }
    auto split = [&](int index) {
      return params_.sample_split ? take_split(data, splits.at(static_cast<std::size_t>(index)))
                                  : data;
    };
    const int offset = with_init && params_.sample_split ? 1 : 0;

    BasisMatrix b;
    if (with_init) {
      const std::vector<TaskSamples> init = split(0);
      std::vector<Vector> per_task;
      std::vector<double> all;
      for (const TaskSamples& s : init) {
        per_task.push_back(s.rewards);
        all.insert(all.end(), s.rewards.data(), s.rewards.data() + s.rewards.size());
      }
      const double multiplier =
          params_.trunc_multiplier ? *params_.trunc_multiplier : estimate_trunc_multiplier(per_task);
      const double tau = truncation_threshold(all, multiplier);
      SpectralInit si = spectral_init_full(init, tau, problem_.r);
      diagnostics_.trunc_multiplier = multiplier;
      diagnostics_.tau = tau;
      diagnostics_.theta0_norm = spectral_norm(si.theta0);
      gamma_ = params_.gd_step ? *params_.gd_step
                               : practical_gd_step(diagnostics_.theta0_norm, params_.rho,
                                                   params_.step_c);
      diagnostics_.gd_step = gamma_;
      b = si.basis;
      recorder.on_basis(m, 0, b);
    } else {
      b = previous->b_hat;
    }

    Matrix w;
    for (int l = 1; l <= gd_iters; ++l) {
      const std::vector<TaskSamples> min_split = split(offset + l - 1);
      const std::vector<TaskSamples> grad_split = split(offset + gd_iters + l - 1);
      w = min_step_w(b, min_split);
      const Eigen::Index grad_size = grad_split.front().rewards.size();
      try {
        b = grad_step_b(b, w, grad_split, gamma_, grad_size);
      } catch (const DegeneracyError& e) {
        std::string where = "epoch " + std::to_string(m) + ", GD iteration " + std::to_string(l);
        if (recorder.truth()) {
          where += ", SD before step " + std::to_string(subspace_distance(b, *recorder.truth()));
        }
        throw DegeneracyError(std::string(e.what()) + " (" + where + ")", e.singular_value());
      }
      recorder.on_basis(m, l, b);
    }
    Matrix theta = b.matrix() * w;
    return Estimate{b, std::move(w), std::move(theta), m, gd_iters};
  }

  ProblemSettings problem_;
  SolverParams params_;
  SafetyInputs safety_;
  double gamma_ = 0.0;
  SolverDiagnostics diagnostics_;
  std::optional<Estimate> final_;
};

}  // namespace safemtrl
