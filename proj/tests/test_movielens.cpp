#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "safemtrl/log.hpp"
#include "safemtrl/movielens.hpp"
#include "synthetic_ratings.hpp"

using namespace safemtrl;

TEST(ParseRatings, SingleLine) {
  std::istringstream in("196\t242\t3\t881250949\n");
  const RatingMatrix r = parse_ratings(in);
  EXPECT_EQ(r.values.rows(), 943);
  EXPECT_EQ(r.values.cols(), 1682);
  EXPECT_DOUBLE_EQ(r.values(195, 241), 0.6);
  EXPECT_TRUE(r.mask(195, 241));
  EXPECT_EQ(r.observed(), 1);
  EXPECT_EQ(r.values.sum(), 0.6);
}

TEST(ParseRatings, TopRatingIsOne) {
  std::istringstream in("1\t1\t5\t0\n943\t1682\t1\t0\n");
  const RatingMatrix r = parse_ratings(in);
  EXPECT_DOUBLE_EQ(r.values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.values(942, 1681), 0.2);
}

TEST(ParseRatings, DuplicateKeepsLastAndWarns) {
  std::vector<std::string> warnings;
  WarningHandler previous = set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  std::istringstream in("5\t6\t2\t0\n5\t6\t4\t1\n");
  const RatingMatrix r = parse_ratings(in);
  set_warning_handler(previous);
  EXPECT_DOUBLE_EQ(r.values(4, 5), 0.8);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(ParseRatings, MalformedLineReportsLineNumber) {
  std::istringstream in("1\t1\t5\t0\n1\tx\t5\t0\n");
  try {
    parse_ratings(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream three("1\t1\t5\n");
  EXPECT_THROW(parse_ratings(three), ParseError);
}

TEST(ParseRatings, OutOfRangeIsBoundsError) {
  std::istringstream user("944\t1\t5\t0\n");
  EXPECT_THROW(parse_ratings(user), BoundsError);
  std::istringstream item("1\t0\t5\t0\n");
  EXPECT_THROW(parse_ratings(item), BoundsError);
  std::istringstream rating("1\t1\t6\t0\n");
  EXPECT_THROW(parse_ratings(rating), BoundsError);
}

TEST(ParseRatings, RoundTripsNormalizedValues) {
  std::ostringstream raw;
  std::vector<std::tuple<int, int, int>> entries{{1, 1, 1}, {2, 3, 2}, {10, 100, 3}, {943, 7, 4}, {8, 1682, 5}};
  for (auto [u, i, v] : entries) raw << u << '\t' << i << '\t' << v << "\t0\n";
  std::istringstream in(raw.str());
  const RatingMatrix r = parse_ratings(in);
  for (auto [u, i, v] : entries) EXPECT_EQ(r.values(u - 1, i - 1) * 5.0, static_cast<double>(v));
}

TEST(FillUnobserved, ItemMeanThenGlobalMean) {
  std::istringstream in("1\t1\t5\t0\n2\t1\t3\t0\n1\t2\t1\t0\n");
  const Matrix f = fill_unobserved(parse_ratings(in, {3, 3}));
  EXPECT_DOUBLE_EQ(f(2, 0), 0.8);
  EXPECT_DOUBLE_EQ(f(1, 1), 0.2);
  EXPECT_DOUBLE_EQ(f(0, 2), (1.0 + 0.6 + 0.2) / 3.0);
  EXPECT_DOUBLE_EQ(f(0, 0), 1.0);
}

TEST(NmfFactorize, RankOneExact) {
  const Matrix r = (Matrix(2, 2) << 1, 2, 2, 4).finished();
  const NmfResult out = nmf_factorize(r, 1, 500, 3);
  EXPECT_LE((r - out.u * out.h).norm(), 1e-4);
  EXPECT_GE(out.u.minCoeff(), 0.0);
  EXPECT_GE(out.h.minCoeff(), 0.0);
}

TEST(NmfFactorize, MonotoneAndDeterministic) {
  Rng rng = make_rng(4, Stream::kPipeline);
  const Matrix r = gaussian_matrix(30, 20, rng).cwiseAbs();
  const NmfResult a = nmf_factorize(r, 20, 300, 9);
  for (std::size_t i = 1; i < a.objective.size(); ++i) {
    EXPECT_LE(a.objective[i], a.objective[i - 1] * (1 + 1e-12));
  }
  EXPECT_LE(a.objective.back(), a.objective.front());
  const NmfResult b = nmf_factorize(r, 20, 300, 9);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.h, b.h);
  EXPECT_THROW(nmf_factorize(-r, 2, 10, 1), ParameterError);
}

TEST(KmeansCluster, SeparatedPoints) {
  const Matrix pts = (Matrix(1, 4) << 0, 0.1, 10, 10.1).finished();
  const KmeansResult k = kmeans_cluster(pts, 2, 1);
  EXPECT_EQ(k.assignment[0], k.assignment[1]);
  EXPECT_EQ(k.assignment[2], k.assignment[3]);
  EXPECT_NE(k.assignment[0], k.assignment[2]);
}

TEST(KmeansCluster, SingletonClusters) {
  Rng rng = make_rng(5, Stream::kPipeline);
  const Matrix pts = gaussian_matrix(3, 6, rng);
  const KmeansResult k = kmeans_cluster(pts, 6, 2);
  std::set<int> used(k.assignment.begin(), k.assignment.end());
  EXPECT_EQ(used.size(), 6u);
  EXPECT_NEAR(k.within_ss.back(), 0.0, 1e-24);
}

TEST(KmeansCluster, WithinSsNonIncreasing) {
  Rng rng = make_rng(6, Stream::kPipeline);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix pts = gaussian_matrix(4, 200, rng);
    const KmeansResult k = kmeans_cluster(pts, 7, static_cast<std::uint64_t>(rep));
    for (std::size_t i = 1; i < k.within_ss.size(); ++i) EXPECT_LE(k.within_ss[i], k.within_ss[i - 1] + 1e-12);
    std::set<int> used(k.assignment.begin(), k.assignment.end());
    EXPECT_EQ(used.size(), 7u);
  }
}

TEST(OuterFeature, TraceIdentityByHand) {
  const Vector e1 = (Vector(2) << 1, 0).finished();
  const Vector e2 = (Vector(2) << 0, 1).finished();
  EXPECT_EQ(outer_feature(e1, e1), (Vector(4) << 1, 0, 0, 0).finished());
  const Vector vec_i = (Vector(4) << 1, 0, 0, 1).finished();
  EXPECT_EQ(outer_feature(e1, e1).dot(vec_i), 1.0);
  EXPECT_EQ(outer_feature(e1, e2).dot(vec_i), 0.0);
}

TEST(MovielensTasks, PipelineOnSyntheticRatings) {
  const std::string path = write_synthetic_ratings("safemtrl_unit_u.data", 120, 200);
  std::ifstream in(path);
  const Matrix filled = fill_unobserved(parse_ratings(in, {120, 200}));
  EXPECT_GE(filled.minCoeff(), 0.0);
  EXPECT_LE(filled.maxCoeff(), 1.0);
  const MovielensTasks tasks = build_movielens_tasks(filled, 9, 4, {100, 3});
  EXPECT_EQ(tasks.dim(), 9);
  EXPECT_EQ(tasks.tasks(), 4);
  EXPECT_GE(tasks.u_factors.minCoeff(), 0.0);
  EXPECT_GE(tasks.h_factors.minCoeff(), 0.0);
  for (const auto& c : tasks.clusters) EXPECT_FALSE(c.empty());

  Eigen::JacobiSVD<Matrix> svd(tasks.theta_star_implied);
  EXPECT_GT(svd.singularValues()(0), 0.0);
  EXPECT_LE(svd.singularValues()(1), 1e-12);

  Rng rng = make_rng(1, Stream::kEnvironment);
  MovielensActionSource source(std::make_shared<const MovielensTasks>(tasks));
  for (Eigen::Index t = 0; t < 4; ++t) {
    const Matrix x = source.draw(t, 10, rng);
    for (Eigen::Index c = 0; c < 10; ++c) {
      const Eigen::Map<const Matrix> outer(x.col(c).data(), 3, 3);
      // Each candidate is rank one and its reward equals the trace.
      EXPECT_NEAR(x.col(c).dot(tasks.theta_star_implied.col(t)), outer.trace(), 1e-12);
      EXPECT_LE(Eigen::JacobiSVD<Matrix>(outer).singularValues()(1), 1e-12);
    }
  }
  const TaskActions a = build_task_features(tasks, 2, 10, 5, rng);
  EXPECT_EQ(a.actions.cols(), 10);
  EXPECT_GE(a.baseline_gap, 0.0);
  EXPECT_THROW(build_movielens_tasks(filled, 10, 4, {}), ConfigError);
}
