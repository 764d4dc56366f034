#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulearn/dataset.hpp"
#include "ulearn/io.hpp"
#include "ulearn/model.hpp"
#include "ulearn/random.hpp"

namespace ulearn {

enum class DefenseKind { none, mixup, cutout, adv_train };

std::string to_string(DefenseKind k);
DefenseKind parse_defense(const std::string& name);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::none;
  double mixup_alpha = 1.0;
  std::size_t cutout_width = 3;
  double cutout_fill = 0.0;
  double adv_budget = 8.0 / 255.0;
  std::size_t adv_inner_steps = 5;
};

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 0.1;
  double momentum = 0.0;
  double lr_decay = 0.1;
  std::vector<double> milestones{0.5, 0.75};
  std::size_t batch_size = 8;
  std::size_t snapshot_every = 5;
  DefenseConfig defense;
  std::uint64_t seed = 0;

  void validate() const;
  /// lr * decay^(number of milestones reached); milestone m starts at epoch
  /// floor(m * epochs) (0-based).
  double lr_at_epoch(std::size_t epoch) const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainRecord {
  std::string run_id;
  TrainConfig config;
  /// Model after each epoch; checkpoints[t] belongs to epoch t + 1.
  std::vector<Model> checkpoints;
  /// Flattened parameters at step 0 and every snapshot_every SGD steps.
  std::vector<ParamSnapshot> snapshots;
  std::vector<EpochMetrics> curves;
  /// Set when training stopped on a numeric failure; checkpoints then hold
  /// the epochs completed before it.
  std::optional<std::string> failure;

  const Model& final_model() const;
};

/// Full minibatch SGD run. Curves report loss/accuracy on the training data as
/// given (without defense transforms) and accuracy on the clean test set.
TrainRecord train(const Model& model0, const Dataset& train_data, const Dataset& test_data, const TrainConfig& cfg,
                  std::string run_id = "run");

struct MixupResult {
  Tensor inputs;
  Tensor soft_labels;
};

/// x' = lambda * x + (1 - lambda) * x[perm], labels mixed the same way.
MixupResult mixup_with(const Tensor& x, std::span<const int> y, int n_classes, double lambda,
                       std::span<const std::size_t> perm);
/// lambda ~ Beta(alpha, alpha), partner order a random permutation.
MixupResult mixup_batch(const Tensor& x, std::span<const int> y, int n_classes, double alpha, Rng& rng);

/// Overwrites a random contiguous window of `width` features per row.
Tensor cutout_batch(const Tensor& x, std::size_t width, double fill, Rng& rng);

struct AdvOptions {
  double budget = 8.0 / 255.0;
  std::size_t inner_steps = 5;
  double step_size = 0.0;  // 0 selects 2.5 * budget / inner_steps
};

struct AdvStepResult {
  Tensor delta;
  double clean_loss = 0.0;
  double adversarial_loss = 0.0;
};

/// Crafts the worst-case perturbation by signed gradient ascent inside the
/// l_inf ball (and [0,1] range), then takes one SGD step on the perturbed
/// batch.
AdvStepResult adv_train_step(Model& model, const Tensor& x, std::span<const int> y, const AdvOptions& opts, double lr,
                             double momentum, SgdState& state);

/// Only the inner maximization of adv_train_step.
AdvStepResult craft_adversarial(const Model& model, const Tensor& x, std::span<const int> y, const AdvOptions& opts);

struct CdfPoint {
  double value = 0.0;
  double fraction = 0.0;
};

/// Empirical CDF of |parameter| over all dense layers; one point per distinct
/// value, ascending.
std::vector<CdfPoint> param_cdf(const Model& model);
double median_abs_param(const Model& model);

/// Writes checkpoints/epoch_NNN.json, curves.csv and snapshots.bin.
void write_record(const std::filesystem::path& dir, const TrainRecord& rec, const std::string& config_hash);
TrainRecord read_record(const std::filesystem::path& dir);

void write_cdf_csv(const std::filesystem::path& path, const std::vector<CdfPoint>& cdf, const std::string& config_hash);

}  // namespace ulearn
