#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulearn/sal.hpp"

namespace ulearn {

struct KMeans2 {
  double c1 = 0.0;  // c1 <= c2
  double c2 = 0.0;
  double sse = 0.0;
  /// Number of sorted values assigned to the lower cluster.
  std::size_t split = 0;
  bool degenerate = false;
};

/// Exact 1-D 2-means: every split of the sorted values is scored and the one
/// with the smallest within-cluster sum of squares wins (lowest split on ties).
KMeans2 kmeans2_1d(std::span<const double> values);

/// Within-cluster SSE of splitting the sorted values at `split`.
double split_sse(std::span<const double> sorted, std::size_t split);

/// Per epoch, midpoint of the two 2-means centers of that epoch's layer SALs;
/// averaged over epochs. A lone layer value is its own midpoint.
double learnable_threshold(const SalMatrix& clean);

/// Entries strictly greater than beta.
std::size_t count_learnable(std::span<const double> sal_epoch, double beta);

std::vector<std::size_t> learnable_counts(const SalMatrix& m, double beta);

/// Mean over epochs of count_learnable.
double lp_average(const SalMatrix& m, double beta);

struct UdReport {
  double beta = 0.0;
  std::vector<std::size_t> lambda_clean;
  std::vector<std::size_t> lambda_poisoned;
  double lp_clean = 0.0;
  double lp_poisoned = 0.0;
  /// Empty when the clean run has no learnable layers.
  std::optional<double> ud;
  std::string error;
  SalProbeConfig probe;
  std::string run_clean;
  std::string run_poisoned;

  bool ok() const { return ud.has_value(); }
};

/// UD = lp_poisoned / lp_clean with beta taken from the clean matrix.
UdReport unlearnable_distance(const SalMatrix& poisoned, const SalMatrix& clean);

std::string ud_report_json(const UdReport& r, const std::string& config_hash);

}  // namespace ulearn
