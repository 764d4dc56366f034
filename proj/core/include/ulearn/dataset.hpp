#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ulearn/model.hpp"
#include "ulearn/tensor.hpp"

namespace ulearn {

/// Per-dimension affine map back to the original units:
/// original = min + normalized * (max - min).
struct FeatureScale {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;
};

struct Dataset {
  Tensor features;  // n x d
  std::vector<int> labels;
  int n_classes = 0;
  std::vector<FeatureScale> feature_scale;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return features.empty() ? 0 : features.cols(); }

  /// Throws unless labels are in range, every class is present and all
  /// features are finite.
  void validate() const;
  Batch batch() const { return Batch{features, labels}; }
  std::vector<std::size_t> class_counts() const;
};

struct ClassificationSpec {
  std::size_t n = 5000;
  std::size_t d = 12;
  int n_classes = 10;
  std::size_t n_informative = 12;
  double class_sep = 1.0;
  std::size_t clusters_per_class = 1;
  std::uint64_t seed = 0;
};

/// Gaussian clusters on hypercube vertices of the informative subspace, each
/// cluster linearly mixed by its own random matrix. Non-informative dims are
/// random linear combinations of the informative ones plus unit noise.
Dataset make_classification(const ClassificationSpec& spec);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Stratified split; every class keeps at least one sample on each side.
SplitResult split(const Dataset& ds, double test_frac, std::uint64_t seed);

/// Rows `indices` of `ds`, in the given order.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

/// Per-dimension min-max rescale to [0, 1]. Constant dimensions map to 0.5 and
/// are flagged in feature_scale. Scale metadata composes with any earlier
/// normalization so it always refers to the original units.
Dataset normalize(const Dataset& ds);

/// Header `f0,...,f{d-1},label`.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds);
/// n_classes <= 0 infers max(label) + 1.
Dataset read_dataset_csv(const std::filesystem::path& path, int n_classes = 0);

/// MNIST-style IDX files (u8 images, u8 labels); pixels scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace ulearn
