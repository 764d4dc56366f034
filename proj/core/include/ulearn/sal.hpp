#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ulearn/dataset.hpp"
#include "ulearn/model.hpp"
#include "ulearn/trainer.hpp"

namespace ulearn {

enum class ProbeNorm { l2, linf };

std::string to_string(ProbeNorm n);
ProbeNorm parse_probe_norm(const std::string& name);

/// Sharpness-aware learnability probe settings. Defaults: l2 ball of radius
/// 0.05, 10 ascent iterations, 512-sample evaluation subset.
struct SalProbeConfig {
  double epsilon = 0.05;
  ProbeNorm norm = ProbeNorm::l2;
  std::size_t ascent_iters = 10;
  std::size_t eval_subset = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SalResult {
  double value = 0.0;
  /// The gradient vanished at v = 0; the ascent started from a seeded random
  /// direction instead.
  bool degenerate = false;
};

/// Loss of a perturbation v and optionally its gradient. Used by the ascent so
/// the same routine probes model layers and closed-form test functions.
struct LocalObjective {
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

/// max_{||v|| <= eps} |f(v) - f(0)| by projected gradient ascent:
/// v <- proj(v + eta * g / ||g||_2), eta = 2 eps / iters. Returns the largest
/// |f(v) - f(0)| among the iterates.
SalResult projected_ascent(const LocalObjective& f, const SalProbeConfig& cfg);

/// SAL of dense layer `layer` (an index into model.layers()) on `data`; all
/// other layers stay fixed during the ascent.
SalResult sal_layer(const Model& model, std::size_t layer, const Batch& data, const SalProbeConfig& cfg);

/// Exhaustive search for max |f(v)| over the eps-disk: grid_n radii x grid_n
/// angles plus a boundary ring of grid_n^2 angles. f(0, 0) is taken as the
/// reference, i.e. f should already be the loss difference.
double disk_oracle_2d(const std::function<double(double, double)>& delta_loss, double epsilon, std::size_t grid_n);

/// Grid oracle for SAL of a dense layer holding exactly two parameters
/// (a 1x1 weight and its bias).
double sal_oracle_2param(const Model& model, std::size_t layer, const Batch& data, double epsilon,
                         std::size_t grid_n);

/// Fixed evaluation subset: `count` rows drawn without replacement by seed,
/// kept in ascending index order; the whole set when count >= size.
Batch eval_batch(const Dataset& ds, std::size_t count, std::uint64_t seed);

/// epochs x dense-layers grid of SAL values.
struct SalMatrix {
  std::string run_id;
  SalProbeConfig probe;
  std::vector<std::size_t> layer_ids;
  std::size_t epochs = 0;
  std::vector<std::optional<double>> values;  // row-major; empty = probe failed
  std::vector<bool> degenerate;

  std::size_t layers() const { return layer_ids.size(); }
  const std::optional<double>& at(std::size_t t, std::size_t l) const { return values.at(t * layers() + l); }
  /// Present values of epoch t.
  std::vector<double> epoch_values(std::size_t t) const;
  /// Mean of the present values of epoch t (0 when none).
  double epoch_mean(std::size_t t) const;
  std::size_t missing_count() const;

  /// Dense matrix from raw rows; layer ids default to 0..L-1.
  static SalMatrix from_rows(const std::vector<std::vector<double>>& rows, std::string run_id = "matrix");
};

/// sal_layer for every (epoch checkpoint, dense layer) on one fixed
/// evaluation subset of `train_data`.
SalMatrix sal_matrix(const TrainRecord& record, const Dataset& train_data, const SalProbeConfig& cfg,
                     unsigned jobs = 1);

/// `sal.csv`: epoch, one column per layer id (L<id>), config_hash.
void write_sal_csv(const std::filesystem::path& path, const SalMatrix& m, const std::string& config_hash);
SalMatrix read_sal_csv(const std::filesystem::path& path);
/// Probe manifest (`sal.json`).
void write_sal_manifest(const std::filesystem::path& path, const SalMatrix& m, const std::string& config_hash);
SalProbeConfig read_probe_manifest(const std::filesystem::path& path);

/// Shared dense trunk with one head per task. Task i is evaluated with the
/// model trunk ++ heads[i], so trunk layer indices are shared by every task.
struct MultiHeadModel {
  Model trunk;
  std::vector<Model> heads;

  Model task_model(std::size_t task) const;
  std::vector<std::size_t> trunk_dense_indices() const { return trunk.dense_indices(); }
};

/// trunk: input -> [dense(h) + relu]*; one dense head per entry of head_dims.
MultiHeadModel make_multihead(std::size_t input_dim, const std::vector<std::size_t>& trunk_hidden,
                              const std::vector<std::size_t>& head_dims, std::uint64_t seed);

/// Joint SGD on the sum of task losses. Returns the model after each epoch.
std::vector<MultiHeadModel> train_multihead(const MultiHeadModel& init, const Tensor& inputs,
                                            const std::vector<Targets>& task_targets, std::size_t epochs, double lr,
                                            std::size_t batch_size, std::uint64_t seed);

struct TaskSimilarity {
  Tensor matrix;  // tasks x tasks cosine similarity
  std::vector<std::vector<double>> sal_vectors;
  /// Off-diagonal entries involving a zero SAL vector are set to 0.
  bool zero_vector = false;
};

/// Per task, the SAL vector over the shared trunk layers (using that task's
/// loss); entry (a, b) is the cosine similarity of those vectors.
TaskSimilarity sal_task_similarity(const MultiHeadModel& model, const std::vector<Batch>& task_batches,
                                   const SalProbeConfig& cfg);

}  // namespace ulearn
