// ulearn command line: data generation, poisoning, training, SAL probing,
// UD scoring, landscapes and the full benchmark.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulearn/error.hpp"
#include "ulearn/experiment.hpp"
#include "ulearn/io.hpp"
#include "ulearn/table_check.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kPartialFailure = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "override the master seed");
  cmd->add_option("--out", c.out, "output directory (default: output_dir from the config)");
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

ulearn::ExperimentConfig load(const Common& c) {
  ulearn::ExperimentConfig cfg = ulearn::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

std::vector<ulearn::PoisonMethod> pick_methods(const ulearn::ExperimentConfig& cfg, const std::string& method) {
  if (method.empty()) return cfg.poison.methods;
  return {ulearn::parse_poison_method(method)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unlearnability benchmark: SAL probes and unlearnable distance"};
  app.require_subcommand(1);
  Common common;
  std::string method;
  std::string table_path;

  auto* gen = app.add_subcommand("gen-data", "generate, normalize and split the dataset");
  add_common(gen, common);
  auto* poison = app.add_subcommand("poison", "craft poisons for the configured (or one) method");
  add_common(poison, common);
  poison->add_option("--method", method, "EM, OPS, TAP or LSP");
  auto* trn = app.add_subcommand("train", "train on clean (vanilla) or poisoned data");
  add_common(trn, common);
  trn->add_option("--method", method, "vanilla or a poison method")->default_val("vanilla");
  auto* sal = app.add_subcommand("sal", "probe SAL for every checkpoint and layer of a trained run");
  add_common(sal, common);
  sal->add_option("--method", method, "vanilla or a poison method")->default_val("vanilla");
  auto* ud = app.add_subcommand("ud", "unlearnable distance of a poisoned run against vanilla");
  add_common(ud, common);
  ud->add_option("--method", method, "poison method")->required();
  auto* land = app.add_subcommand("landscape", "PCA loss landscapes for the clean and first poisoned run");
  add_common(land, common);
  auto* run = app.add_subcommand("run", "full benchmark: every method, SAL, UD, CDF, landscapes, bench.csv");
  add_common(run, common);
  auto* table = app.add_subcommand("table-check", "verify UD = #LP / #LP_vanilla and the bold minimum in a table");
  table->add_option("table", table_path, "CSV with dataset, method, lp, ud, bold columns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigFailure;
  }

  try {
    if (table->parsed()) {
      const auto result = ulearn::check_table(ulearn::read_table_csv(table_path));
      std::cout << result.report();
      return result.passed() ? kOk : kPartialFailure;
    }

    const ulearn::ExperimentConfig cfg = load(common);
    const std::filesystem::path out = cfg.output_dir;

    if (gen->parsed()) {
      ulearn::cmd_gen_data(cfg, out);
      std::cout << "wrote " << (out / "data").string() << '\n';
    } else if (poison->parsed()) {
      ulearn::cmd_poison(cfg, out, pick_methods(cfg, method), common.jobs);
    } else if (trn->parsed()) {
      const auto rec = ulearn::cmd_train(cfg, out, method);
      if (!rec.curves.empty()) std::cout << method << " test_acc " << ulearn::format_double(rec.curves.back().test_acc) << '\n';
      if (rec.failure) {
        std::cerr << "training failed: " << *rec.failure << '\n';
        return kPartialFailure;
      }
    } else if (sal->parsed()) {
      const auto m = ulearn::cmd_sal(cfg, out, method, common.jobs);
      if (m.missing_count() > 0) {
        std::cerr << m.missing_count() << " SAL cells failed\n";
        return kPartialFailure;
      }
    } else if (ud->parsed()) {
      const auto r = ulearn::cmd_ud(cfg, out, method);
      if (!r.ok()) {
        std::cerr << r.error << '\n';
        return kPartialFailure;
      }
      std::cout << method << " lp " << ulearn::format_double(r.lp_poisoned) << " ud " << ulearn::format_double(*r.ud) << '\n';
    } else if (land->parsed()) {
      for (const auto& o : ulearn::cmd_landscape(cfg, out, common.jobs)) {
        std::cout << o.run << " pc" << o.ranks.first << "/pc" << o.ranks.second << " -> " << o.dir.string()
                  << " (pc1+pc2 " << ulearn::format_double(o.pc12) << ")\n";
      }
    } else if (run->parsed()) {
      const auto report = ulearn::cmd_run(cfg, out, common.jobs);
      std::cout << report.to_csv();
      return report.all_ok() ? kOk : kPartialFailure;
    }
  } catch (const ulearn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartialFailure;
  }
  return kOk;
}
