#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulearn/dataset.hpp"
#include "ulearn/model.hpp"
#include "ulearn/poisons.hpp"
#include "ulearn/sal.hpp"
#include "ulearn/trainer.hpp"
#include "ulearn/unlearnability.hpp"

namespace ulearn {

inline constexpr int kConfigVersion = 1;

struct DataConfig {
  ClassificationSpec spec;  // seed is derived from the master seed
  double test_frac = 0.2;
  /// Optional CSV (f0..,label) used instead of the synthetic generator.
  std::string csv;
};

struct PoisonConfig {
  std::vector<PoisonMethod> methods{PoisonMethod::em, PoisonMethod::ops, PoisonMethod::tap, PoisonMethod::lsp};
  double budget = 8.0 / 255.0;
  double ops_value = 1.0;
  EmOptions em;    // arch, budget, seed and jobs are filled in per run
  TapOptions tap;  // budget and jobs are filled in per run
};

struct LandscapeConfig {
  std::size_t res = 51;
  double pad = 0.2;
  std::vector<std::pair<std::size_t, std::size_t>> planes{{1, 2}, {3, 4}};
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  ModelSpec model;
  PoisonConfig poison;
  TrainConfig train;  // seed derived; defense lives in train.defense
  SalProbeConfig sal;  // seed derived
  LandscapeConfig landscape;

  void validate() const;
};

/// Strict parse: unknown keys and a missing or wrong `version` are
/// ConfigErrors. Absent keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config as JSON.
std::string config_to_json(const ExperimentConfig& cfg);
/// FNV-1a of the resolved config without output_dir.
std::string config_hash(const ExperimentConfig& cfg);

/// Sub-seeds derived from the master seed.
struct Seeds {
  std::uint64_t data, split, init, train, em, lsp, sal;
};
Seeds derive_seeds(std::uint64_t master);

struct DataBundle {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
};

/// Generate (or load), split and normalize. Test features use the training
/// split's scaling.
DataBundle prepare_data(const ExperimentConfig& cfg);
Model initial_model(const ExperimentConfig& cfg);
/// Undefended training config with the derived seed.
TrainConfig train_config(const ExperimentConfig& cfg, bool with_defense);
SalProbeConfig probe_config(const ExperimentConfig& cfg);

/// Poison the training split. TAP attacks `clean_model`.
PoisonedDataset make_poison(const ExperimentConfig& cfg, const DataBundle& data, PoisonMethod method,
                            const Model& clean_model, unsigned jobs);

struct MethodOutcome {
  std::string method;  // "vanilla" or the poison name
  std::optional<double> test_acc;
  std::optional<double> lp;
  std::optional<double> ud;
  std::optional<double> median_abs_param;
  std::string error;  // empty on success
  double seconds = 0.0;
};

struct BenchReport {
  std::string config_hash;
  std::vector<MethodOutcome> rows;

  bool all_ok() const;
  /// method, test_acc, lp, ud, median_abs_param, status, config_hash.
  std::string to_csv() const;
  /// Adds wall-clock runtimes; kept out of bench.csv so reruns compare equal.
  std::string to_json() const;
};

/// Clean run plus every configured poison from the same initialization; SAL,
/// UD, CDF and landscape outputs per method under out_dir/<method>/.
BenchReport cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, unsigned jobs = 1);

struct LandscapeOutcome {
  std::string run;
  std::pair<std::size_t, std::size_t> ranks;
  std::filesystem::path dir;
  double pc12 = 0.0;
};

/// Clean run and the first configured poison; one landscape per plane each.
std::vector<LandscapeOutcome> cmd_landscape(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                            unsigned jobs = 1);

/// Stage commands operating on an output directory.
void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
/// Writes out_dir/<method>/poison/ for each requested method.
void cmd_poison(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                const std::vector<PoisonMethod>& methods, unsigned jobs = 1);
/// Trains "vanilla" or a method whose poison stage has run.
TrainRecord cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method);
SalMatrix cmd_sal(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method,
                  unsigned jobs = 1);
UdReport cmd_ud(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method);

}  // namespace ulearn
