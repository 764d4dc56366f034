#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ulearn/dataset.hpp"
#include "ulearn/model.hpp"

namespace ulearn {

enum class PoisonMethod { em, ops, tap, lsp };
enum class PoisonScope { sample_wise, class_wise };

std::string to_string(PoisonMethod m);
PoisonMethod parse_poison_method(const std::string& name);
std::string to_string(PoisonScope s);

struct GenerationReport {
  std::size_t rounds = 0;
  bool converged = true;
  double proxy_accuracy = 0.0;
  std::string note;
};

/// A clean dataset plus per-sample additive perturbations. deltas are the
/// effective perturbations: base + deltas already lies in [0, 1].
struct PoisonedDataset {
  std::shared_ptr<const Dataset> base;
  Tensor deltas;
  PoisonMethod method = PoisonMethod::em;
  double budget = 0.0;
  PoisonScope scope = PoisonScope::sample_wise;
  /// Class-wise methods only, n_classes x d. LSP: the additive direction of
  /// each class. OPS: the written value at the class's shortcut coordinate,
  /// zero elsewhere.
  std::optional<Tensor> class_pattern;
  std::uint64_t seed = 0;
  GenerationReport report;

  /// Dataset with features clamp(base + deltas, 0, 1) and the base labels.
  Dataset materialize() const;
  /// max_i ||deltas[i]||_inf
  double max_linf() const { return deltas.max_abs(); }
};

/// Clamp each coordinate to [-budget, budget], then move x + delta back into
/// [0, 1]. Coordinates already inside both constraints are returned unchanged.
Tensor project_linf(const Tensor& delta, double budget, const Tensor& x);

/// clamp(x + delta, 0, 1)
Tensor apply_deltas(const Tensor& x, const Tensor& delta);

/// Default PGD step: 2.5 * budget / steps.
double default_step_size(double budget, std::size_t steps);

struct EmOptions {
  ModelSpec arch;
  double budget = 8.0 / 255.0;
  std::size_t outer_rounds = 10;
  std::size_t train_steps = 100;
  std::size_t pgd_steps = 20;
  double step_size = 0.0;  // 0 selects default_step_size
  double lr = 0.1;
  std::size_t batch_size = 64;
  double stop_accuracy = 0.99;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct EmResult {
  PoisonedDataset poison;
  /// The proxy the final perturbation pass minimized against.
  Model proxy;
};

/// Error-minimizing noise: alternate proxy training on the current poisoned
/// set with per-sample signed-gradient descent on the perturbations. Each
/// sample keeps the best iterate seen under the current proxy (including the
/// zero perturbation), so the final proxy's loss on a poisoned sample never
/// exceeds its loss on the clean sample.
EmResult em_perturb(std::shared_ptr<const Dataset> ds, const EmOptions& opts);

/// Class-wise shortcut: feature (class mod d) of every sample is overwritten
/// with `value`.
PoisonedDataset ops_perturb(std::shared_ptr<const Dataset> ds, double value = 1.0);

struct TapOptions {
  double budget = 8.0 / 255.0;
  std::size_t pgd_steps = 10;
  double step_size = 0.0;  // 0 selects default_step_size
  unsigned jobs = 1;
};

/// Targeted PGD toward label (y + 1) mod C against a clean-trained model.
/// Starts from zero perturbation.
PoisonedDataset tap_perturb(std::shared_ptr<const Dataset> ds, const Model& clean_model, const TapOptions& opts);

/// One Uniform[-1,1]^d direction per class, scaled to ||.||_inf = budget and
/// added to every sample of that class.
PoisonedDataset lsp_perturb(std::shared_ptr<const Dataset> ds, double budget, std::uint64_t seed);

/// Writes `dir/deltas.csv` (header d0..d{d-1}) and `dir/poison.json`.
void write_poison(const std::filesystem::path& dir, const PoisonedDataset& p, const std::string& config_hash);
PoisonedDataset read_poison(const std::filesystem::path& dir, std::shared_ptr<const Dataset> base);

}  // namespace ulearn
