#pragma once

// Estimation error, cumulative regret and constraint violations, folded from
// the per-round records a learner emits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/linalg.hpp"

namespace safemtrl {

inline constexpr double kRegretTolerance = 1e-12;

/// Pseudo-regret of one round against the stored optimum.
inline double instantaneous_regret(const RoundRecord& record, double optimal_expected) {
  const double gap = optimal_expected - record.expected_reward;
  if (gap < -kRegretTolerance) {
    throw EnvironmentInconsistency("instantaneous_regret: played action beats stored optimum by " +
                                   std::to_string(-gap));
  }
  return std::max(gap, 0.0);
}

inline double instantaneous_regret(const RoundRecord& record) {
  return instantaneous_regret(record, record.optimal_reward);
}

/// Strict violation of x^T theta* >= (1 - alpha) r_b, judged on expected reward.
inline bool violation_check(const RoundRecord& record, double alpha) {
  return record.expected_reward < (1.0 - alpha) * record.baseline_reward;
}

/// ||theta_hat - theta_star||_F / ||theta_star||_F.
inline double estimation_error(const Matrix& theta_hat, const Matrix& theta_star) {
  if (theta_hat.rows() != theta_star.rows() || theta_hat.cols() != theta_star.cols()) {
    throw DimensionError("estimation_error: shape mismatch");
  }
  const double denom = theta_star.norm();
  if (!(denom > 0.0)) throw Error("estimation_error: ground truth is zero");
  return (theta_hat - theta_star).norm() / denom;
}

struct SdPoint {
  int epoch = 0;
  int gd_iter = 0;
  double sd = 0.0;
};

/// End-of-epoch estimate snapshot reported by a learner.
struct EpochEstimate {
  int epoch = 0;
  std::optional<Matrix> theta_hat;
  std::optional<BasisMatrix> b_hat;
};

/// Metrics sink handed to a learner for one trial. Holds the ground-truth
/// basis (when known) so subspace distances can be traced without the
/// learner ever touching it.
class TrialRecorder {
 public:
  TrialRecorder() = default;
  explicit TrialRecorder(std::optional<BasisMatrix> truth, bool keep_actions = true)
      : truth_(std::move(truth)), keep_actions_(keep_actions) {}

  void on_round(RoundRecord record) {
    if (!keep_actions_) record.action = Vector();
    records_.push_back(std::move(record));
  }

  /// Trace SD(b, B*) at (epoch, gd_iter); a no-op without ground truth.
  void on_basis(int epoch, int gd_iter, const BasisMatrix& b) {
    if (truth_) sd_trace_.push_back({epoch, gd_iter, subspace_distance(b, *truth_)});
  }

  void on_epoch_end(EpochEstimate estimate) { epochs_.push_back(std::move(estimate)); }

  const std::vector<RoundRecord>& records() const noexcept { return records_; }
  const std::vector<SdPoint>& sd_trace() const noexcept { return sd_trace_; }
  const std::vector<EpochEstimate>& epochs() const noexcept { return epochs_; }
  const std::optional<BasisMatrix>& truth() const noexcept { return truth_; }

 private:
  std::optional<BasisMatrix> truth_;
  bool keep_actions_ = true;
  std::vector<RoundRecord> records_;
  std::vector<SdPoint> sd_trace_;
  std::vector<EpochEstimate> epochs_;
};

/// Per-epoch summary of one trial.
struct EpochMetrics {
  int epoch = 0;
  int last_round = 0;
  double cumulative_regret = 0.0;
  long violations = 0;  // cumulative
  std::optional<double> est_error;
  std::optional<double> sd;
};

struct TrialMetrics {
  double cumulative_regret = 0.0;
  long violations = 0;
  long rounds = 0;
  std::vector<double> est_error_by_epoch;  // NaN where no estimate exists
  std::vector<SdPoint> sd_trace;
  std::vector<EpochMetrics> epochs;
};

/// Fold a recorder into trial metrics. alpha is the conservatism level used
/// to judge violations; theta_star enables Err-Theta.
inline TrialMetrics summarize_trial(const TrialRecorder& rec, double alpha,
                                    const Matrix* theta_star) {
  TrialMetrics out;
  out.sd_trace = rec.sd_trace();
  int current_epoch = -1;
  for (const RoundRecord& r : rec.records()) {
    if (r.epoch != current_epoch) {
      out.epochs.push_back({r.epoch, r.round, 0.0, 0, std::nullopt, std::nullopt});
      current_epoch = r.epoch;
    }
    out.cumulative_regret += instantaneous_regret(r);
    if (violation_check(r, alpha)) ++out.violations;
    ++out.rounds;
    EpochMetrics& em = out.epochs.back();
    em.last_round = std::max(em.last_round, r.round);
    em.cumulative_regret = out.cumulative_regret;
    em.violations = out.violations;
  }
  for (EpochMetrics& em : out.epochs) {
    for (const EpochEstimate& est : rec.epochs()) {
      if (est.epoch != em.epoch) continue;
      if (est.theta_hat && theta_star) em.est_error = estimation_error(*est.theta_hat, *theta_star);
      if (est.b_hat && rec.truth()) em.sd = subspace_distance(*est.b_hat, *rec.truth());
    }
    out.est_error_by_epoch.push_back(em.est_error.value_or(NAN));
  }
  return out;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

/// Mean and standard error. Values are summed in sorted order so the result
/// does not depend on the order trials finished in.
inline MeanStderr mean_stderr(std::vector<double> values) {
  MeanStderr out;
  out.count = values.size();
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    std::vector<double> sq;
    sq.reserve(values.size());
    for (double v : values) sq.push_back((v - out.mean) * (v - out.mean));
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double v : sq) ss += v;
    const double var = ss / static_cast<double>(values.size() - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

}  // namespace safemtrl
