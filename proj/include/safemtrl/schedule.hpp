#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "safemtrl/errors.hpp"

namespace safemtrl {

struct ScheduleMode {
  enum class Kind { kDoubling, kFixed };
  Kind kind = Kind::kFixed;
  int horizon = 200;   // N, doubling mode
  int epochs = 4;      // M, fixed mode
  int per_epoch = 50;  // S, fixed mode

  static ScheduleMode doubling(int n) { return {Kind::kDoubling, n, 0, 0}; }
  static ScheduleMode fixed(int m, int s) { return {Kind::kFixed, m * s, m, s}; }
};

/// Strictly increasing epoch ends G_1 < ... < G_M = N (G_0 = 0 implicit).
struct EpochSchedule {
  std::vector<int> boundaries;

  int epochs() const noexcept { return static_cast<int>(boundaries.size()); }
  int horizon() const noexcept { return boundaries.empty() ? 0 : boundaries.back(); }
  /// First round (1-based) of epoch m (1-based).
  int first_round(int m) const { return m == 1 ? 1 : boundaries.at(m - 2) + 1; }
  int last_round(int m) const { return boundaries.at(m - 1); }
  int length(int m) const { return last_round(m) - first_round(m) + 1; }
};

/// Doubling: M = ceil(log2 log2 N), G_m = round(N^(1 - 2^-m)) for m < M,
/// G_M = N, duplicates dropped. Fixed: M epochs of S rounds.
inline EpochSchedule epoch_boundaries(const ScheduleMode& mode) {
  EpochSchedule s;
  if (mode.kind == ScheduleMode::Kind::kFixed) {
    if (mode.epochs < 1 || mode.per_epoch < 1) {
      throw ScheduleError("fixed schedule needs epochs >= 1 and per_epoch >= 1");
    }
    for (int m = 1; m <= mode.epochs; ++m) s.boundaries.push_back(m * mode.per_epoch);
    return s;
  }
  const int n = mode.horizon;
  if (n < 4) throw ScheduleError("doubling schedule needs N >= 4, got " + std::to_string(n));
  const double nd = static_cast<double>(n);
  const int epochs = static_cast<int>(std::ceil(std::log2(std::log2(nd)) - 1e-12));
  for (int m = 1; m < epochs; ++m) {
    const int g = static_cast<int>(std::lround(std::pow(nd, 1.0 - std::ldexp(1.0, -m))));
    if (g >= 1 && g < n && (s.boundaries.empty() || g > s.boundaries.back())) {
      s.boundaries.push_back(g);
    }
  }
  s.boundaries.push_back(n);
  return s;
}

inline EpochSchedule epoch_boundaries(int n) { return epoch_boundaries(ScheduleMode::doubling(n)); }

}  // namespace safemtrl
