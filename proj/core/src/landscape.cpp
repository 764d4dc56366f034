#include "ulearn/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <json.hpp>

#include "ulearn/error.hpp"
#include "ulearn/parallel.hpp"

namespace ulearn {

PcaResult pca_trajectory(const Trajectory& traj, std::size_t k) {
  const auto& snaps = traj.snapshots;
  if (snaps.size() < 3) throw ShapeError("PCA needs at least 3 snapshots");
  const std::size_t n = snaps.size(), p = snaps.front().params.size();
  if (k == 0 || k > std::min(n, p)) {
    throw ShapeError("PCA component count " + std::to_string(k) + " exceeds min(snapshots, dims)");
  }
  Eigen::MatrixXd x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    if (snaps[i].params.size() != p) throw ShapeError("snapshots differ in length");
    for (std::size_t j = 0; j < p; ++j) x(i, j) = snaps[i].params[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double total = s.squaredNorm();
  const double tol = s.size() > 0 ? s(0) * static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() : 0.0;

  PcaResult res;
  res.mean.assign(mean.data(), mean.data() + p);
  for (Eigen::Index c = 0; c < s.size(); ++c) {
    if (s(c) > tol && s(c) > 0.0) ++res.valid_components;
  }
  res.rank_deficient = res.valid_components < k;

  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd v = svd.matrixV().col(static_cast<Eigen::Index>(c));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    res.components.emplace_back(v.data(), v.data() + p);
    const double sc = s(static_cast<Eigen::Index>(c));
    res.explained_variance.push_back(total > 0.0 ? sc * sc / total : 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(k);
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p; ++j) dot += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * res.components[c][j];
      row[c] = dot;
    }
    res.projections.push_back(std::move(row));
  }
  return res;
}

std::vector<double> LandscapePlane::point(double alpha, double beta) const {
  std::vector<double> p(anchor.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = anchor[i] + alpha * d1[i] + beta * d2[i];
  return p;
}

std::pair<double, double> LandscapePlane::project(const std::vector<double>& params) const {
  if (params.size() != anchor.size()) throw ShapeError("parameter vector does not match the plane");
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double c = params[i] - anchor[i];
    a += c * d1[i];
    b += c * d2[i];
  }
  return {a, b};
}

LandscapePlane build_plane(const Trajectory& traj, std::pair<std::size_t, std::size_t> ranks) {
  const auto [i, j] = ranks;
  if (i == 0 || j == 0 || i == j) throw ConfigError("plane ranks must be distinct and 1-based");
  const std::size_t k = std::max(i, j);
  const std::size_t cap = traj.snapshots.empty() ? 0 : std::min(traj.snapshots.size(), traj.snapshots.front().params.size());
  if (k > cap) throw ShapeError("trajectory too short for component rank " + std::to_string(k));
  const PcaResult pca = pca_trajectory(traj, k);
  if (pca.valid_components < k) {
    throw ShapeError("trajectory has rank " + std::to_string(pca.valid_components) + ", plane needs component " +
                     std::to_string(k));
  }
  LandscapePlane plane;
  plane.run_id = traj.run_id;
  plane.anchor = pca.mean;
  plane.d1 = pca.components[i - 1];
  plane.d2 = pca.components[j - 1];
  plane.ranks = ranks;
  plane.explained_variance = pca.explained_variance;
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    plane.path.push_back({traj.snapshots[s].step, pca.projections[s][i - 1], pca.projections[s][j - 1]});
  }
  return plane;
}

double plane_loss(const LandscapePlane& plane, const Model& like, const Batch& data, double alpha, double beta) {
  return loss(unflatten_params(like, plane.point(alpha, beta)), data);
}

namespace {

std::vector<double> symmetric_axis(double lo, double hi, double pad, std::size_t res) {
  const double extent = hi - lo;
  double half = std::max(std::abs(lo), std::abs(hi)) + pad * extent;
  if (!(half > 0.0)) half = 1.0;
  std::vector<double> axis(res);
  const double denom = static_cast<double>(res - 1);
  for (std::size_t i = 0; i < res; ++i) {
    axis[i] = half * (2.0 * static_cast<double>(i) - denom) / denom;
  }
  return axis;
}

}  // namespace

LossGrid loss_grid(const LandscapePlane& plane, const Model& like, const Batch& data, std::size_t res, double pad,
                   unsigned jobs) {
  if (res < 2) throw ConfigError("landscape resolution must be >= 2");
  if (pad < 0.0) throw ConfigError("landscape pad must be >= 0");
  double amin = 0.0, amax = 0.0, bmin = 0.0, bmax = 0.0;
  for (const auto& p : plane.path) {
    amin = std::min(amin, p.alpha);
    amax = std::max(amax, p.alpha);
    bmin = std::min(bmin, p.beta);
    bmax = std::max(bmax, p.beta);
  }
  LossGrid grid;
  grid.alphas = symmetric_axis(amin, amax, pad, res);
  grid.betas = symmetric_axis(bmin, bmax, pad, res);
  grid.losses.assign(res * res, std::nullopt);
  parallel_for(res * res, jobs, [&](std::size_t cell) {
    try {
      const double l = plane_loss(plane, like, data, grid.alphas[cell / res], grid.betas[cell % res]);
      if (std::isfinite(l)) grid.losses[cell] = l;
    } catch (const NumericError&) {
    }
  });
  return grid;
}

void write_landscape(const std::filesystem::path& dir, const LandscapePlane& plane, const LossGrid& grid,
                     const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  CsvTable land{{"alpha", "beta", "loss", "config_hash"}, {}};
  for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
    for (std::size_t j = 0; j < grid.betas.size(); ++j) {
      land.rows.push_back({format_double(grid.alphas[i]), format_double(grid.betas[j]), format_optional(grid.at(i, j)),
                           config_hash});
    }
  }
  write_csv_file(dir / "landscape.csv", land);

  CsvTable path{{"step", "alpha", "beta", "config_hash"}, {}};
  for (const auto& p : plane.path) {
    path.rows.push_back({std::to_string(p.step), format_double(p.alpha), format_double(p.beta), config_hash});
  }
  write_csv_file(dir / "path.csv", path);

  double top2 = 0.0;
  for (std::size_t c = 0; c < std::min<std::size_t>(2, plane.explained_variance.size()); ++c) {
    top2 += plane.explained_variance[c];
  }
  nlohmann::json j{{"format", "ulearn-pca"},
                   {"version", 1},
                   {"run_id", plane.run_id},
                   {"ranks", {plane.ranks.first, plane.ranks.second}},
                   {"explained_variance", plane.explained_variance},
                   {"pc1_pc2_explained", top2},
                   {"snapshots", plane.path.size()},
                   {"grid_resolution", grid.alphas.size()},
                   {"config_hash", config_hash}};
  write_text_file(dir / "pca.json", j.dump(2) + "\n");
}

}  // namespace ulearn
