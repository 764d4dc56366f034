#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ulearn/error.hpp"
#include "ulearn/landscape.hpp"

using namespace ulearn;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Trajectory random_trajectory(std::size_t snaps, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Trajectory t{"rand", {}};
  for (std::size_t s = 0; s < snaps; ++s) {
    std::vector<double> p(dim);
    for (std::size_t k = 0; k < dim; ++k) p[k] = n(rng) / static_cast<double>(k + 1);
    t.snapshots.push_back({s * 5, p});
  }
  return t;
}

Trajectory rank2_trajectory(std::size_t dim) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> u(dim), w(dim), base(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    u[k] = n(rng);
    w[k] = n(rng);
    base[k] = n(rng);
  }
  Trajectory t{"rank2", {}};
  for (std::size_t s = 0; s < 30; ++s) {
    const double a = std::cos(0.3 * static_cast<double>(s)) * static_cast<double>(s), b = std::sin(0.2 * static_cast<double>(s));
    std::vector<double> p(dim);
    for (std::size_t k = 0; k < dim; ++k) p[k] = base[k] + a * u[k] + b * w[k];
    t.snapshots.push_back({s * 5, p});
  }
  return t;
}

}  // namespace

TEST(Pca, StraightLineIsRankOne) {
  std::vector<double> u{1.0, -2.0, 0.5, 3.0};
  const double nu = std::sqrt(dot(u, u));
  Trajectory t{"line", {}};
  for (std::size_t s = 0; s < 10; ++s) {
    std::vector<double> p(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) p[k] = static_cast<double>(s) * u[k];
    t.snapshots.push_back({s, p});
  }
  const PcaResult r = pca_trajectory(t, 1);
  EXPECT_GT(std::abs(dot(r.components[0], u)) / nu, 0.999);
  EXPECT_GT(r.explained_variance[0], 0.9999);
  EXPECT_EQ(r.valid_components, 1u);
  EXPECT_THROW(build_plane(t, {1, 2}), ShapeError);
}

TEST(Pca, OrthonormalNonIncreasingAndReconstructs) {
  const Trajectory t = random_trajectory(12, 8, 3);
  const PcaResult r = pca_trajectory(t, 8);
  double total = 0.0;
  for (std::size_t a = 0; a < 8; ++a) {
    total += r.explained_variance[a];
    if (a > 0) {
      EXPECT_LE(r.explained_variance[a], r.explained_variance[a - 1]);
    }
    for (std::size_t b = 0; b < 8; ++b) EXPECT_NEAR(dot(r.components[a], r.components[b]), a == b ? 1.0 : 0.0, 1e-10);
  }
  EXPECT_LE(total, 1.0 + 1e-12);
  for (std::size_t s = 0; s < t.snapshots.size(); ++s) {
    for (std::size_t k = 0; k < 8; ++k) {
      double rec = r.mean[k];
      for (std::size_t c = 0; c < 8; ++c) rec += r.projections[s][c] * r.components[c][k];
      EXPECT_NEAR(rec, t.snapshots[s].params[k], 1e-8);
    }
  }
}

TEST(Pca, Preconditions) {
  EXPECT_THROW(pca_trajectory(random_trajectory(2, 5, 1), 1), ShapeError);
  EXPECT_THROW(pca_trajectory(random_trajectory(6, 4, 1), 5), ShapeError);
}

TEST(Plane, RankTwoTrajectoryLiesInTopPlane) {
  const Trajectory t = rank2_trajectory(20);
  const LandscapePlane p = build_plane(t, {1, 2});
  EXPECT_NEAR(dot(p.d1, p.d1), 1.0, 1e-10);
  EXPECT_NEAR(dot(p.d1, p.d2), 0.0, 1e-10);
  for (std::size_t s = 0; s < t.snapshots.size(); ++s) {
    const auto q = p.point(p.path[s].alpha, p.path[s].beta);
    for (std::size_t k = 0; k < q.size(); ++k) EXPECT_NEAR(q[k], t.snapshots[s].params[k], 1e-8);
  }
  EXPECT_THROW(build_plane(t, {3, 4}), ShapeError);
  const auto [a, b] = p.project(p.anchor);
  EXPECT_EQ(a, 0.0);
  EXPECT_EQ(b, 0.0);
}

TEST(Plane, PathStepsComeFromSnapshots) {
  const LandscapePlane p = build_plane(random_trajectory(10, 6, 2), {3, 4});
  EXPECT_EQ(p.ranks, (std::pair<std::size_t, std::size_t>{3, 4}));
  for (std::size_t s = 0; s < p.path.size(); ++s) EXPECT_EQ(p.path[s].step, s * 5);
}

TEST(LossGridTest, CenterIsAnchorAndPathIsCovered) {
  std::mt19937_64 rng(4);
  const Model like = make_model(ModelSpec{3, {}, 2}, 1);
  Trajectory t{"model", {}};
  for (std::size_t s = 0; s < 8; ++s) {
    auto p = flatten_params(make_model(ModelSpec{3, {}, 2}, 10 + s));
    t.snapshots.push_back({s * 5, p});
  }
  const LandscapePlane plane = build_plane(t, {1, 2});
  const Batch b{oracle::random_matrix(10, 3, rng), oracle::random_labels(10, 2, rng)};
  const LossGrid g = loss_grid(plane, like, b, 11, 0.2, 2);
  ASSERT_EQ(g.alphas.size(), 11u);
  EXPECT_EQ(g.alphas[5], 0.0);
  EXPECT_EQ(g.betas[5], 0.0);
  EXPECT_EQ(*g.at(5, 5), loss(unflatten_params(like, plane.anchor), b));
  for (const auto& pt : plane.path) {
    EXPECT_GE(pt.alpha, g.alphas.front());
    EXPECT_LE(pt.alpha, g.alphas.back());
    EXPECT_GE(pt.beta, g.betas.front());
    EXPECT_LE(pt.beta, g.betas.back());
  }
  const LossGrid again = loss_grid(plane, like, b, 11, 0.2, 1);
  EXPECT_EQ(again.losses, g.losses);
  EXPECT_THROW(loss_grid(plane, like, b, 1, 0.2), ConfigError);
}

TEST(LossGridTest, QuadraticIsSymmetricThroughMinimum) {
  // Regression on a 1x1 layer: L = 0.5 mean((w x + b - y)^2) is a quadratic
  // in the parameters with its minimum at the least-squares fit.
  Layer l = Layer::dense(1, 1);
  const Model like({l});
  const Tensor x = Tensor({4, 1}, {0.0, 1.0, 2.0, 3.0});
  const Tensor y = Tensor({4, 1}, {1.0, 3.0, 5.0, 7.0});  // w = 2, b = 1 exactly
  const Batch b{x, RegressionTargets{y}};
  Trajectory t{"quad", {}};
  const std::vector<std::pair<double, double>> pts{{1.0, 0.0}, {3.0, 2.0}, {2.5, 0.5}, {1.5, 1.5}, {2.0, 1.0}};
  double mw = 0.0, mb = 0.0;
  for (auto [w, bb] : pts) {
    mw += w;
    mb += bb;
  }
  // Shift so the trajectory mean is the minimum (2, 1).
  const double sw = 2.0 - mw / 5.0, sb = 1.0 - mb / 5.0;
  std::size_t step = 0;
  for (auto [w, bb] : pts) t.snapshots.push_back({step++, {w + sw, bb + sb}});
  const LandscapePlane plane = build_plane(t, {1, 2});
  const LossGrid g = loss_grid(plane, like, b, 21, 0.2);
  const std::size_t mid = 10;
  for (std::size_t i = 0; i <= mid; ++i) {
    EXPECT_NEAR(*g.at(mid - i, mid), *g.at(mid + i, mid), 1e-6);
  }
}
