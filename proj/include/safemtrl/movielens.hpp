#pragma once

// MovieLens-100K real-data pipeline: parse u.data, fill and normalize the
// rating matrix, factor it with multiplicative-update NMF, cluster item
// factors into tasks with k-means, and generate outer-product features whose
// reward parameter is vec(I_k) for every task.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "safemtrl/environment.hpp"
#include "safemtrl/errors.hpp"
#include "safemtrl/linalg.hpp"
#include "safemtrl/log.hpp"
#include "safemtrl/random.hpp"

namespace safemtrl {

struct RatingShape {
  Eigen::Index users = 943;
  Eigen::Index items = 1682;
};

/// Normalized ratings; unobserved entries are 0 with mask false.
struct RatingMatrix {
  Matrix values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

  Eigen::Index observed() const { return mask.count(); }
};

/// Parse "user<TAB>item<TAB>rating<TAB>timestamp" lines. Ratings are stored
/// as rating / 5; a repeated (user, item) pair keeps the last value.
inline RatingMatrix parse_ratings(std::istream& in, RatingShape shape = {}) {
  RatingMatrix out;
  out.values = Matrix::Zero(shape.users, shape.items);
  out.mask.setConstant(shape.users, shape.items, false);
  std::string line;
  std::size_t line_no = 0;
  std::size_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields", line_no);
    long user = 0, item = 0, rating = 0;
    try {
      std::size_t pos = 0;
      user = std::stol(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument("user");
      item = std::stol(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("item");
      rating = std::stol(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("rating");
      (void)std::stoll(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("timestamp");
    } catch (const std::exception&) {
      throw ParseError("malformed field", line_no);
    }
    if (user < 1 || user > shape.users || item < 1 || item > shape.items) {
      throw BoundsError("line " + std::to_string(line_no) + ": id out of range (user " +
                        std::to_string(user) + ", item " + std::to_string(item) + ")");
    }
    if (rating < 1 || rating > 5) {
      throw BoundsError("line " + std::to_string(line_no) + ": rating " + std::to_string(rating) +
                        " outside 1..5");
    }
    const Eigen::Index u = user - 1;
    const Eigen::Index i = item - 1;
    if (out.mask(u, i)) ++duplicates;
    out.values(u, i) = static_cast<double>(rating) / 5.0;
    out.mask(u, i) = true;
  }
  if (duplicates > 0) {
    warn(std::to_string(duplicates) + " duplicate (user, item) ratings; last value kept");
  }
  return out;
}

/// Dense matrix with unobserved entries replaced by the item mean (global
/// mean for items nobody rated).
inline Matrix fill_unobserved(const RatingMatrix& r) {
  Matrix out = r.values;
  double global_sum = 0.0;
  Eigen::Index global_count = 0;
  for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
    for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
      if (r.mask(i, j)) {
        global_sum += r.values(i, j);
        ++global_count;
      }
    }
  }
  const double global_mean = global_count > 0 ? global_sum / static_cast<double>(global_count) : 0.0;
  for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
      if (r.mask(i, j)) {
        sum += r.values(i, j);
        ++count;
      }
    }
    const double fill = count > 0 ? sum / static_cast<double>(count) : global_mean;
    for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
      if (!r.mask(i, j)) out(i, j) = fill;
    }
  }
  return out;
}

struct NmfResult {
  Matrix u;  // users x k
  Matrix h;  // k x items
  std::vector<double> objective;  // ||R - UH||_F, objective[0] at the initial factors
};

inline constexpr double kNmfFloor = 1e-12;

/// Lee-Seung multiplicative updates for min ||R - UH||_F over U, H >= 0.
inline NmfResult nmf_factorize(const Matrix& r, Eigen::Index k, int iters, std::uint64_t seed) {
  if (k < 1) throw ParameterError("nmf_factorize: k must be >= 1");
  if ((r.array() < 0.0).any()) throw ParameterError("nmf_factorize: matrix must be nonnegative");
  Rng rng = make_rng(seed, Stream::kPipeline, 1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double scale = std::sqrt(std::max(r.mean(), kNmfFloor) / static_cast<double>(k));
  NmfResult out;
  out.u.resize(r.rows(), k);
  out.h.resize(k, r.cols());
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < r.rows(); ++i) out.u(i, j) = scale * uni(rng);
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    for (Eigen::Index i = 0; i < k; ++i) out.h(i, j) = scale * uni(rng);

  out.objective.push_back((r - out.u * out.h).norm());
  for (int it = 0; it < iters; ++it) {
    const Matrix ut_r = out.u.transpose() * r;
    const Matrix ut_u_h = (out.u.transpose() * out.u) * out.h;
    out.h.array() *= ut_r.array() / ut_u_h.array().max(kNmfFloor);
    const Matrix r_ht = r * out.h.transpose();
    const Matrix u_h_ht = out.u * (out.h * out.h.transpose());
    out.u.array() *= r_ht.array() / u_h_ht.array().max(kNmfFloor);
    const double f = (r - out.u * out.h).norm();
    const double prev = out.objective.back();
    out.objective.push_back(f);
    if (prev > 0.0 && std::abs(prev - f) / prev < 1e-6) break;
  }
  return out;
}

struct KmeansResult {
  std::vector<int> assignment;
  Matrix centroids;                  // dim x clusters
  std::vector<double> within_ss;     // per Lloyd iteration, after the update
  int iterations = 0;
};

namespace detail {

inline double within_cluster_ss(const Matrix& points, const Matrix& centroids,
                                const std::vector<int>& assignment) {
  double ss = 0.0;
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    ss += (points.col(j) - centroids.col(assignment[static_cast<std::size_t>(j)])).squaredNorm();
  }
  return ss;
}

}  // namespace detail

/// k-means++ seeding then Lloyd iterations on the columns of `points` until
/// the assignment stops changing (at most 300 iterations). An emptied
/// cluster takes the point farthest from its current centroid.
inline KmeansResult kmeans_cluster(const Matrix& points, int clusters, std::uint64_t seed) {
  const Eigen::Index n = points.cols();
  if (clusters < 1 || clusters > n) {
    throw ParameterError("kmeans_cluster: need 1 <= T <= number of points");
  }
  Rng rng = make_rng(seed, Stream::kPipeline, 2);
  KmeansResult out;
  out.centroids.resize(points.rows(), clusters);

  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  out.centroids.col(0) = points.col(first(rng));
  Vector dist2(n);
  for (Eigen::Index j = 0; j < n; ++j) dist2(j) = (points.col(j) - out.centroids.col(0)).squaredNorm();
  for (int c = 1; c < clusters; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> uni(0.0, total);
      double target = uni(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= dist2(pick);
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    out.centroids.col(c) = points.col(pick);
    for (Eigen::Index j = 0; j < n; ++j) {
      dist2(j) = std::min(dist2(j), (points.col(j) - out.centroids.col(c)).squaredNorm());
    }
  }

  out.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < clusters; ++c) {
        const double dd = (points.col(j) - out.centroids.col(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (out.assignment[static_cast<std::size_t>(j)] != best) {
        out.assignment[static_cast<std::size_t>(j)] = best;
        changed = true;
      }
    }
    // Repair empty clusters.
    for (int c = 0; c < clusters; ++c) {
      if (std::count(out.assignment.begin(), out.assignment.end(), c) > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const int a = out.assignment[static_cast<std::size_t>(j)];
        if (std::count(out.assignment.begin(), out.assignment.end(), a) < 2) continue;
        const double dd = (points.col(j) - out.centroids.col(a)).squaredNorm();
        if (dd > far_d) {
          far_d = dd;
          far = j;
        }
      }
      out.assignment[static_cast<std::size_t>(far)] = c;
      changed = true;
    }
    if (!changed && it > 0) break;
    out.centroids.setZero();
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(clusters), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int a = out.assignment[static_cast<std::size_t>(j)];
      out.centroids.col(a) += points.col(j);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (int c = 0; c < clusters; ++c) {
      out.centroids.col(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    out.within_ss.push_back(detail::within_cluster_ss(points, out.centroids, out.assignment));
    ++out.iterations;
  }
  return out;
}

struct MovielensTasks {
  Matrix u_factors;  // users x k
  Matrix h_factors;  // k x items
  std::vector<int> cluster_assignment;
  std::vector<std::vector<Eigen::Index>> clusters;  // item indices per task
  Matrix theta_star_implied;  // d x T, every column vec(I_k)

  Eigen::Index latent() const noexcept { return u_factors.cols(); }
  Eigen::Index dim() const noexcept { return latent() * latent(); }
  Eigen::Index tasks() const noexcept { return static_cast<Eigen::Index>(clusters.size()); }
};

/// Integer k with k * k == d, or nothing.
inline std::optional<Eigen::Index> integer_sqrt(Eigen::Index d) {
  if (d < 1) return std::nullopt;
  auto k = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(d))));
  if (k * k == d) return k;
  return std::nullopt;
}

struct MovielensOptions {
  int nmf_iters = 200;
  std::uint64_t seed = 0;
};

inline MovielensTasks build_movielens_tasks(const Matrix& ratings, Eigen::Index d, int tasks,
                                            const MovielensOptions& opt) {
  const auto k = integer_sqrt(d);
  if (!k) throw ConfigError("movielens: d = " + std::to_string(d) + " has no integer square root");
  NmfResult nmf = nmf_factorize(ratings, *k, opt.nmf_iters, opt.seed);
  KmeansResult km = kmeans_cluster(nmf.h, tasks, opt.seed);
  MovielensTasks out;
  out.u_factors = std::move(nmf.u);
  out.h_factors = std::move(nmf.h);
  out.cluster_assignment = km.assignment;
  out.clusters.resize(static_cast<std::size_t>(tasks));
  for (std::size_t j = 0; j < km.assignment.size(); ++j) {
    out.clusters[static_cast<std::size_t>(km.assignment[j])].push_back(static_cast<Eigen::Index>(j));
  }
  for (std::size_t t = 0; t < out.clusters.size(); ++t) {
    if (out.clusters[t].empty()) throw PipelineError("movielens: task " + std::to_string(t) + " is empty");
  }
  const Matrix identity = Matrix::Identity(*k, *k);
  const Vector vec_identity = Eigen::Map<const Vector>(identity.data(), d);
  out.theta_star_implied = vec_identity.replicate(1, tasks);
  return out;
}

/// vec(a b^T) in column-major order; its inner product with vec(I) is a^T b.
inline Vector outer_feature(const Vector& a, const Vector& b) {
  const Matrix outer = a * b.transpose();
  return Eigen::Map<const Vector>(outer.data(), outer.size());
}

/// Candidates vec(u_i h_j^T) with user i uniform over all users and item j
/// uniform over the task's cluster.
class MovielensActionSource final : public ActionSource {
 public:
  explicit MovielensActionSource(std::shared_ptr<const MovielensTasks> tasks)
      : tasks_(std::move(tasks)) {}

  Matrix draw(Eigen::Index t, Eigen::Index k, Rng& rng) const override {
    const auto& cluster = tasks_->clusters.at(static_cast<std::size_t>(t));
    if (cluster.empty()) throw PipelineError("movielens: empty cluster for task " + std::to_string(t));
    std::uniform_int_distribution<Eigen::Index> user(0, tasks_->u_factors.rows() - 1);
    std::uniform_int_distribution<std::size_t> item(0, cluster.size() - 1);
    Matrix out(tasks_->dim(), k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const Vector a = tasks_->u_factors.row(user(rng)).transpose();
      const Vector b = tasks_->h_factors.col(cluster[item(rng)]);
      out.col(c) = outer_feature(a, b);
    }
    return out;
  }

 private:
  std::shared_ptr<const MovielensTasks> tasks_;
};

/// Ranked candidate set for task t under the implied reward parameter.
inline TaskActions build_task_features(const MovielensTasks& tasks, Eigen::Index t, Eigen::Index k,
                                       Eigen::Index baseline_rank, Rng& rng) {
  MovielensActionSource source(std::make_shared<const MovielensTasks>(tasks));
  return rank_actions(source.draw(t, k, rng), tasks.theta_star_implied.col(t), baseline_rank);
}

}  // namespace safemtrl
