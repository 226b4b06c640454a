#pragma once

#include <cstdint>
#include <string>

#include "safemtrl/environment.hpp"
#include "safemtrl/metrics.hpp"
#include "safemtrl/schedule.hpp"

namespace safemtrl {

/// Settings every algorithm in a comparison shares.
struct ProblemSettings {
  Eigen::Index r = 2;
  double alpha = 0.2;
  double delta = 0.01;
  EpochSchedule schedule;
  std::uint64_t seed = 0;  // learner-side randomness
};

/// Per-task samples of one epoch (or one split of it): rows of `features`
/// are the played actions, `rewards` the observed y.
struct TaskSamples {
  Matrix features;  // n x d
  Vector rewards;   // n
};

/// Growable per-task sample buffer for an epoch.
class EpochBuffer {
 public:
  EpochBuffer(Eigen::Index tasks, Eigen::Index d, int capacity)
      : samples_(static_cast<std::size_t>(tasks)), count_(static_cast<std::size_t>(tasks), 0) {
    for (auto& s : samples_) {
      s.features.resize(capacity, d);
      s.rewards.resize(capacity);
    }
  }

  void push(Eigen::Index t, const Vector& x, double y) {
    auto& s = samples_.at(static_cast<std::size_t>(t));
    auto& c = count_[static_cast<std::size_t>(t)];
    s.features.row(c) = x.transpose();
    s.rewards(c) = y;
    ++c;
  }

  std::vector<TaskSamples> take() {
    for (std::size_t t = 0; t < samples_.size(); ++t) {
      samples_[t].features.conservativeResize(count_[t], Eigen::NoChange);
      samples_[t].rewards.conservativeResize(count_[t]);
    }
    return std::move(samples_);
  }

 private:
  std::vector<TaskSamples> samples_;
  std::vector<Eigen::Index> count_;
};

/// An algorithm that plays a full trial against an environment.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string name() const = 0;
  virtual void run(Environment& env, TrialRecorder& recorder) = 0;
};

}  // namespace safemtrl
