#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulearn/io.hpp"
#include "ulearn/model.hpp"

namespace ulearn {

struct Trajectory {
  std::string run_id;
  std::vector<ParamSnapshot> snapshots;
};

struct PcaResult {
  std::vector<double> mean;
  /// Unit-norm principal directions, strongest first. Sign fixed so the
  /// largest-magnitude entry is positive.
  std::vector<std::vector<double>> components;
  /// Fraction of total variance per returned component.
  std::vector<double> explained_variance;
  /// snapshots x components coordinates.
  std::vector<std::vector<double>> projections;
  /// Components with a non-negligible singular value.
  std::size_t valid_components = 0;
  bool rank_deficient = false;
};

/// PCA of the centered snapshot matrix via its thin SVD; keeps k components.
PcaResult pca_trajectory(const Trajectory& traj, std::size_t k);

struct PathPoint {
  std::size_t step = 0;
  double alpha = 0.0;
  double beta = 0.0;
};

struct LandscapePlane {
  std::string run_id;
  std::vector<double> anchor;  // trajectory mean
  std::vector<double> d1;
  std::vector<double> d2;
  std::pair<std::size_t, std::size_t> ranks{1, 2};  // 1-based component ranks
  std::vector<double> explained_variance;          // of every computed component
  std::vector<PathPoint> path;

  std::vector<double> point(double alpha, double beta) const;
  /// Coordinates of a parameter vector relative to the anchor.
  std::pair<double, double> project(const std::vector<double>& params) const;
};

/// Plane through the trajectory mean spanned by components ranks.first and
/// ranks.second; fails when the trajectory has fewer valid components.
LandscapePlane build_plane(const Trajectory& traj, std::pair<std::size_t, std::size_t> ranks);

/// Loss at anchor + alpha d1 + beta d2 with the architecture of `like`.
double plane_loss(const LandscapePlane& plane, const Model& like, const Batch& data, double alpha, double beta);

struct LossGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  /// alphas.size() x betas.size(), alpha-major; empty = non-finite loss.
  std::vector<std::optional<double>> losses;

  const std::optional<double>& at(std::size_t i, std::size_t j) const { return losses.at(i * betas.size() + j); }
};

/// res x res grid centered on the anchor. Each axis covers
/// [-A, A] with A = max |path coordinate| + pad * (path extent), so the padded
/// bounding box of the path is inside and the middle node sits exactly on the
/// anchor when res is odd.
LossGrid loss_grid(const LandscapePlane& plane, const Model& like, const Batch& data, std::size_t res = 51,
                   double pad = 0.2, unsigned jobs = 1);

/// landscape.csv (alpha, beta, loss), path.csv (step, alpha, beta) and
/// pca.json under `dir`, each file carrying the config hash.
void write_landscape(const std::filesystem::path& dir, const LandscapePlane& plane, const LossGrid& grid,
                     const std::string& config_hash);

}  // namespace ulearn
