#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace safemtrl {

using Rng = std::mt19937_64;

/// Named sub-streams of one trial seed. Streams are independent of each
/// other, so e.g. the learner's exploration draws never perturb the
/// environment's action/noise sequence.
enum class Stream : std::uint32_t {
  kModel = 1,
  kEnvironment = 2,
  kLearner = 3,
  kPipeline = 4,
};

/// Deterministic generator for (seed, stream, index), e.g. one per
/// (trial, task) pair.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace safemtrl
