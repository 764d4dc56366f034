#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracles.hpp"
#include "ulearn/error.hpp"
#include "ulearn/unlearnability.hpp"

using namespace ulearn;

TEST(KMeans2, TwoObviousClusters) {
  const std::vector<double> v{10, 0, 10, 0};
  const KMeans2 k = kmeans2_1d(v);
  EXPECT_EQ(k.c1, 0.0);
  EXPECT_EQ(k.c2, 10.0);
  EXPECT_EQ(k.sse, 0.0);
  EXPECT_FALSE(k.degenerate);
}

TEST(KMeans2, IdenticalValuesAreDegenerate) {
  const std::vector<double> v{1, 1, 1, 1};
  const KMeans2 k = kmeans2_1d(v);
  EXPECT_EQ(k.c1, 1.0);
  EXPECT_EQ(k.c2, 1.0);
  EXPECT_TRUE(k.degenerate);
}

TEST(KMeans2, NeedsTwoValues) { EXPECT_THROW(kmeans2_1d(std::vector<double>{1.0}), ShapeError); }

TEST(KMeans2, MatchesBruteForceSplits) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(2, 200);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(static_cast<std::size_t>(size(rng)));
    for (double& x : v) x = t % 3 == 0 ? std::round(n(rng) * 2.0) : n(rng) * (1 + t % 7) + (t % 2 ? 5.0 : 0.0);
    const KMeans2 k = kmeans2_1d(v);
    const double ref = oracle::brute_force_2means_sse(v);
    EXPECT_NEAR(k.sse, ref, 1e-9 * std::max(1.0, ref)) << "trial " << t;
    EXPECT_LE(k.c1, k.c2);
  }
}

TEST(LearnableThreshold, Examples) {
  EXPECT_EQ(learnable_threshold(SalMatrix::from_rows({{0, 0, 10, 10}, {10, 0, 0, 10}})), 5.0);
  EXPECT_EQ(learnable_threshold(SalMatrix::from_rows({{2, 4}})), 3.0);
  // A lone layer is its own midpoint; beta is then the epoch mean.
  EXPECT_DOUBLE_EQ(learnable_threshold(SalMatrix::from_rows({{1}, {2}, {6}})), 3.0);
}

TEST(LearnableThreshold, ScalesWithSal) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> rows(6, std::vector<double>(5));
  for (auto& r : rows) {
    for (double& v : r) v = u(rng);
  }
  const SalMatrix m = SalMatrix::from_rows(rows);
  const double beta = learnable_threshold(m);
  for (double c : {0.5, 2.0, 8.0}) {
    auto scaled = rows;
    for (auto& r : scaled) {
      for (double& v : r) v *= c;
    }
    const SalMatrix ms = SalMatrix::from_rows(scaled);
    const double bs = learnable_threshold(ms);
    EXPECT_NEAR(bs, c * beta, 1e-12 * c);
    EXPECT_EQ(learnable_counts(ms, bs), learnable_counts(m, beta));
  }
}

TEST(CountLearnable, StrictInequality) {
  EXPECT_EQ(count_learnable(std::vector<double>{0.1, 0.6, 0.7}, 0.5), 2u);
  EXPECT_EQ(count_learnable(std::vector<double>{0.5, 0.5}, 0.5), 0u);
  EXPECT_EQ(count_learnable(std::vector<double>{0.0, 0.2, 0.1}, -1.0), 3u);
}

TEST(LpAverage, Examples) {
  EXPECT_EQ(lp_average(SalMatrix::from_rows({{0, 0}, {0, 0}}), 0.1), 0.0);
  EXPECT_EQ(lp_average(SalMatrix::from_rows({{2, 2, 2}, {2, 2, 2}}), 1.0), 3.0);
  EXPECT_EQ(lp_average(SalMatrix::from_rows({{2, 0, 2}, {0, 0, 2}}), 1.0), 1.5);
}

TEST(UnlearnableDistance, SelfIsExactlyOne) {
  const SalMatrix m = SalMatrix::from_rows({{0.1, 0.9, 0.3}, {0.05, 0.7, 0.6}});
  const UdReport r = unlearnable_distance(m, m);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(*r.ud, 1.0);
  EXPECT_EQ(r.lambda_clean, r.lambda_poisoned);
}

TEST(UnlearnableDistance, RatioAndEpochCountsMayDiffer) {
  const SalMatrix clean = SalMatrix::from_rows({{0, 10, 10}, {0, 0, 10}});
  const SalMatrix pois = SalMatrix::from_rows({{0, 0, 10}, {0, 0, 0}, {0, 0, 10}});
  const UdReport r = unlearnable_distance(pois, clean);
  EXPECT_EQ(r.beta, 5.0);
  EXPECT_EQ(r.lp_clean, 1.5);
  EXPECT_DOUBLE_EQ(r.lp_poisoned, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*r.ud * r.lp_clean, r.lp_poisoned);
  EXPECT_EQ(r.lambda_poisoned, (std::vector<std::size_t>{1, 0, 1}));
}

TEST(UnlearnableDistance, ZeroCleanCountIsError) {
  const SalMatrix clean = SalMatrix::from_rows({{1}, {1}});
  const UdReport r = unlearnable_distance(clean, clean);
  EXPECT_FALSE(r.ok());
  EXPECT_FALSE(r.error.empty());
  const auto j = nlohmann::json::parse(ud_report_json(r, "h"));
  EXPECT_TRUE(j["ud"].is_null());
}

TEST(UnlearnableDistance, ReportedRatios) {
  EXPECT_NEAR(0.62 / 3.32, 0.187, 1e-3);
  EXPECT_NEAR(5.44 / 3.32, 1.639, 1e-3);
  EXPECT_NEAR(0.52 / 3.32, 0.157, 1e-3);
}

TEST(UnlearnableDistance, ArchitectureMismatchThrows) {
  EXPECT_THROW(unlearnable_distance(SalMatrix::from_rows({{1, 2}}), SalMatrix::from_rows({{1, 2, 3}})), ShapeError);
}

TEST(UdReportJson, Fields) {
  const SalMatrix m = SalMatrix::from_rows({{0.1, 0.9}});
  const auto j = nlohmann::json::parse(ud_report_json(unlearnable_distance(m, m), "cafe"));
  for (const char* k : {"beta", "lp_clean", "lp_poisoned", "ud", "lambda_clean", "lambda_poisoned", "probe", "runs"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["config_hash"], "cafe");
}
