#include <gtest/gtest.h>

#include "safemtrl/schedule.hpp"

using namespace safemtrl;

TEST(EpochBoundaries, Doubling256) {
  EXPECT_EQ(epoch_boundaries(256).boundaries, (std::vector<int>{16, 64, 256}));
}

TEST(EpochBoundaries, Doubling16) {
  EXPECT_EQ(epoch_boundaries(16).boundaries, (std::vector<int>{4, 16}));
}

TEST(EpochBoundaries, Doubling65536FollowsFormula) {
  // round(65536^(1 - 2^-m)) for m = 1, 2, 3: 2^8, 2^12, 2^14.
  EXPECT_EQ(epoch_boundaries(65536).boundaries, (std::vector<int>{256, 4096, 16384, 65536}));
}

TEST(EpochBoundaries, Fixed) {
  const EpochSchedule s = epoch_boundaries(ScheduleMode::fixed(4, 50));
  EXPECT_EQ(s.boundaries, (std::vector<int>{50, 100, 150, 200}));
  EXPECT_EQ(s.first_round(2), 51);
  EXPECT_EQ(s.length(3), 50);
  EXPECT_EQ(s.horizon(), 200);
}

TEST(EpochBoundaries, StrictlyIncreasingAndEndsAtN) {
  for (int n = 4; n <= 5000; n += 7) {
    const EpochSchedule s = epoch_boundaries(n);
    EXPECT_EQ(s.horizon(), n);
    for (int m = 1; m < s.epochs(); ++m) EXPECT_LT(s.boundaries[m - 1], s.boundaries[m]);
  }
}

TEST(EpochBoundaries, RejectsTinyHorizon) {
  EXPECT_THROW(epoch_boundaries(3), ScheduleError);
  EXPECT_THROW(epoch_boundaries(ScheduleMode::fixed(0, 50)), ScheduleError);
}
