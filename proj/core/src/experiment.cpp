#include "ulearn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <json.hpp>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"
#include "ulearn/landscape.hpp"

namespace ulearn {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

json probe_json(const SalProbeConfig& p) {
  return {{"epsilon", p.epsilon}, {"norm", to_string(p.norm)}, {"ascent_iters", p.ascent_iters}, {"eval_subset", p.eval_subset}};
}

json config_body(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.poison.methods) methods.push_back(to_string(m));
  json planes = json::array();
  for (auto [a, b] : c.landscape.planes) planes.push_back({a, b});
  const auto& d = c.train.defense;
  return {{"version", c.version},
          {"seed", c.seed},
          {"data",
           {{"n", c.data.spec.n},
            {"d", c.data.spec.d},
            {"n_classes", c.data.spec.n_classes},
            {"n_informative", c.data.spec.n_informative},
            {"class_sep", c.data.spec.class_sep},
            {"clusters_per_class", c.data.spec.clusters_per_class},
            {"test_frac", c.data.test_frac},
            {"csv", c.data.csv}}},
          {"model", {{"input_dim", c.model.input_dim}, {"hidden", c.model.hidden}, {"output_dim", c.model.output_dim}}},
          {"poison",
           {{"methods", methods},
            {"budget", c.poison.budget},
            {"ops_value", c.poison.ops_value},
            {"em",
             {{"outer_rounds", c.poison.em.outer_rounds},
              {"train_steps", c.poison.em.train_steps},
              {"pgd_steps", c.poison.em.pgd_steps},
              {"step_size", c.poison.em.step_size},
              {"lr", c.poison.em.lr},
              {"batch_size", c.poison.em.batch_size},
              {"stop_accuracy", c.poison.em.stop_accuracy}}},
            {"tap", {{"pgd_steps", c.poison.tap.pgd_steps}, {"step_size", c.poison.tap.step_size}}}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"lr", c.train.lr},
            {"momentum", c.train.momentum},
            {"lr_decay", c.train.lr_decay},
            {"milestones", c.train.milestones},
            {"batch_size", c.train.batch_size},
            {"snapshot_every", c.train.snapshot_every}}},
          {"defense",
           {{"kind", to_string(d.kind)},
            {"mixup_alpha", d.mixup_alpha},
            {"cutout_width", d.cutout_width},
            {"cutout_fill", d.cutout_fill},
            {"adv_budget", d.adv_budget},
            {"adv_inner_steps", d.adv_inner_steps}}},
          {"sal", probe_json(c.sal)},
          {"landscape", {{"res", c.landscape.res}, {"pad", c.landscape.pad}, {"planes", planes}}}};
}

std::string method_dir(const std::string& method) {
  std::string s = method;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
  if (!(data.test_frac > 0.0 && data.test_frac < 1.0)) throw ConfigError("data.test_frac must be in (0, 1)");
  if (data.csv.empty()) {
    if (data.spec.n_classes < 2) throw ConfigError("data.n_classes must be >= 2");
    if (data.spec.n_informative == 0 || data.spec.n_informative > data.spec.d) {
      throw ConfigError("data.n_informative must be in [1, d]");
    }
    if (model.input_dim != data.spec.d) throw ConfigError("model.input_dim must equal data.d");
    if (model.output_dim != static_cast<std::size_t>(data.spec.n_classes)) {
      throw ConfigError("model.output_dim must equal data.n_classes");
    }
  }
  if (model.hidden.size() > 3) throw ConfigError("model.hidden supports at most 3 layers");
  if (!(poison.budget > 0.0)) throw ConfigError("poison.budget must be > 0");
  std::set<PoisonMethod> seen(poison.methods.begin(), poison.methods.end());
  if (seen.size() != poison.methods.size()) throw ConfigError("poison.methods contains duplicates");
  if (poison.em.outer_rounds == 0 || poison.em.batch_size == 0) throw ConfigError("poison.em rounds and batch size must be > 0");
  train.validate();
  sal.validate();
  if (landscape.res < 2) throw ConfigError("landscape.res must be >= 2");
  if (landscape.pad < 0.0) throw ConfigError("landscape.pad must be >= 0");
  for (auto [a, b] : landscape.planes) {
    if (a == 0 || b == 0 || a == b) throw ConfigError("landscape.planes entries must be distinct 1-based ranks");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"version", "seed", "output_dir", "data", "model", "poison", "train", "defense", "sal", "landscape"});
  if (!j.contains("version")) throw ConfigError("config is missing 'version'");
  ExperimentConfig c;
  read(j, "version", "config", c.version);
  read(j, "seed", "config", c.seed);
  read(j, "output_dir", "config", c.output_dir);

  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"n", "d", "n_classes", "n_informative", "class_sep", "clusters_per_class", "test_frac", "csv"});
    read(d, "n", "data", c.data.spec.n);
    read(d, "d", "data", c.data.spec.d);
    c.data.spec.n_informative = c.data.spec.d;
    read(d, "n_classes", "data", c.data.spec.n_classes);
    read(d, "n_informative", "data", c.data.spec.n_informative);
    read(d, "class_sep", "data", c.data.spec.class_sep);
    read(d, "clusters_per_class", "data", c.data.spec.clusters_per_class);
    read(d, "test_frac", "data", c.data.test_frac);
    read(d, "csv", "data", c.data.csv);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"input_dim", "hidden", "output_dim"});
    read(m, "input_dim", "model", c.model.input_dim);
    read(m, "hidden", "model", c.model.hidden);
    read(m, "output_dim", "model", c.model.output_dim);
  }
  if (j.contains("poison")) {
    const auto& p = j["poison"];
    check_keys(p, "poison", {"methods", "budget", "ops_value", "em", "tap"});
    if (p.contains("methods")) {
      std::vector<std::string> names;
      read(p, "methods", "poison", names);
      c.poison.methods.clear();
      for (const auto& n : names) c.poison.methods.push_back(parse_poison_method(n));
    }
    read(p, "budget", "poison", c.poison.budget);
    read(p, "ops_value", "poison", c.poison.ops_value);
    if (p.contains("em")) {
      const auto& e = p["em"];
      check_keys(e, "poison.em", {"outer_rounds", "train_steps", "pgd_steps", "step_size", "lr", "batch_size", "stop_accuracy"});
      read(e, "outer_rounds", "poison.em", c.poison.em.outer_rounds);
      read(e, "train_steps", "poison.em", c.poison.em.train_steps);
      read(e, "pgd_steps", "poison.em", c.poison.em.pgd_steps);
      read(e, "step_size", "poison.em", c.poison.em.step_size);
      read(e, "lr", "poison.em", c.poison.em.lr);
      read(e, "batch_size", "poison.em", c.poison.em.batch_size);
      read(e, "stop_accuracy", "poison.em", c.poison.em.stop_accuracy);
    }
    if (p.contains("tap")) {
      const auto& t = p["tap"];
      check_keys(t, "poison.tap", {"pgd_steps", "step_size"});
      read(t, "pgd_steps", "poison.tap", c.poison.tap.pgd_steps);
      read(t, "step_size", "poison.tap", c.poison.tap.step_size);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train", {"epochs", "lr", "momentum", "lr_decay", "milestones", "batch_size", "snapshot_every"});
    read(t, "epochs", "train", c.train.epochs);
    read(t, "lr", "train", c.train.lr);
    read(t, "momentum", "train", c.train.momentum);
    read(t, "lr_decay", "train", c.train.lr_decay);
    read(t, "milestones", "train", c.train.milestones);
    read(t, "batch_size", "train", c.train.batch_size);
    read(t, "snapshot_every", "train", c.train.snapshot_every);
  }
  if (j.contains("defense")) {
    const auto& d = j["defense"];
    auto& def = c.train.defense;
    check_keys(d, "defense", {"kind", "mixup_alpha", "cutout_width", "cutout_fill", "adv_budget", "adv_inner_steps"});
    std::string kind = to_string(def.kind);
    read(d, "kind", "defense", kind);
    def.kind = parse_defense(kind);
    read(d, "mixup_alpha", "defense", def.mixup_alpha);
    read(d, "cutout_width", "defense", def.cutout_width);
    read(d, "cutout_fill", "defense", def.cutout_fill);
    read(d, "adv_budget", "defense", def.adv_budget);
    read(d, "adv_inner_steps", "defense", def.adv_inner_steps);
  }
  if (j.contains("sal")) {
    const auto& s = j["sal"];
    check_keys(s, "sal", {"epsilon", "norm", "ascent_iters", "eval_subset"});
    read(s, "epsilon", "sal", c.sal.epsilon);
    std::string norm = to_string(c.sal.norm);
    read(s, "norm", "sal", norm);
    c.sal.norm = parse_probe_norm(norm);
    read(s, "ascent_iters", "sal", c.sal.ascent_iters);
    read(s, "eval_subset", "sal", c.sal.eval_subset);
  }
  if (j.contains("landscape")) {
    const auto& l = j["landscape"];
    check_keys(l, "landscape", {"res", "pad", "planes"});
    read(l, "res", "landscape", c.landscape.res);
    read(l, "pad", "landscape", c.landscape.pad);
    read(l, "planes", "landscape", c.landscape.planes);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(read_text_file(path));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j = config_body(cfg);
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(config_body(cfg).dump()); }

Seeds derive_seeds(std::uint64_t master) {
  return {derive_seed(master, "data"), derive_seed(master, "split"), derive_seed(master, "init"),
          derive_seed(master, "train"), derive_seed(master, "em"), derive_seed(master, "lsp"),
          derive_seed(master, "sal")};
}

DataBundle prepare_data(const ExperimentConfig& cfg) {
  const Seeds s = derive_seeds(cfg.seed);
  Dataset raw;
  if (cfg.data.csv.empty()) {
    ClassificationSpec spec = cfg.data.spec;
    spec.seed = s.data;
    raw = make_classification(spec);
  } else {
    raw = read_dataset_csv(cfg.data.csv, static_cast<int>(cfg.model.output_dim));
    if (raw.dims() != cfg.model.input_dim) throw ConfigError("CSV feature count does not match model.input_dim");
  }
  // Normalized once before the split so train and test share one scale.
  SplitResult parts = split(normalize(raw), cfg.data.test_frac, s.split);
  return {std::make_shared<const Dataset>(std::move(parts.train)), std::make_shared<const Dataset>(std::move(parts.test))};
}

Model initial_model(const ExperimentConfig& cfg) { return make_model(cfg.model, derive_seeds(cfg.seed).init); }

TrainConfig train_config(const ExperimentConfig& cfg, bool with_defense) {
  TrainConfig t = cfg.train;
  t.seed = derive_seeds(cfg.seed).train;
  if (!with_defense) t.defense.kind = DefenseKind::none;
  return t;
}

SalProbeConfig probe_config(const ExperimentConfig& cfg) {
  SalProbeConfig p = cfg.sal;
  p.seed = derive_seeds(cfg.seed).sal;
  return p;
}

PoisonedDataset make_poison(const ExperimentConfig& cfg, const DataBundle& data, PoisonMethod method,
                            const Model& clean_model, unsigned jobs) {
  const Seeds s = derive_seeds(cfg.seed);
  switch (method) {
    case PoisonMethod::em: {
      EmOptions o = cfg.poison.em;
      o.arch = cfg.model;
      o.budget = cfg.poison.budget;
      o.seed = s.em;
      o.jobs = jobs;
      return em_perturb(data.train, o).poison;
    }
    case PoisonMethod::ops:
      return ops_perturb(data.train, cfg.poison.ops_value);
    case PoisonMethod::tap: {
      TapOptions o = cfg.poison.tap;
      o.budget = cfg.poison.budget;
      o.jobs = jobs;
      return tap_perturb(data.train, clean_model, o);
    }
    case PoisonMethod::lsp:
      return lsp_perturb(data.train, cfg.poison.budget, s.lsp);
  }
  throw ConfigError("unknown poison method");
}

bool BenchReport::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const MethodOutcome& r) { return r.error.empty(); });
}

std::string BenchReport::to_csv() const {
  CsvTable t{{"method", "test_acc", "lp", "ud", "median_abs_param", "status", "config_hash"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.method, format_optional(r.test_acc), format_optional(r.lp), format_optional(r.ud),
                      format_optional(r.median_abs_param), r.error.empty() ? "ok" : "error: " + sanitize(r.error),
                      config_hash});
  }
  return ulearn::to_csv(t);
}

std::string BenchReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json row{{"method", r.method},
             {"test_acc", opt(r.test_acc)},
             {"lp", opt(r.lp)},
             {"ud", opt(r.ud)},
             {"median_abs_param", opt(r.median_abs_param)},
             {"seconds", r.seconds}};
    if (!r.error.empty()) row["error"] = r.error;
    rows_json.push_back(std::move(row));
  }
  return json{{"format", "ulearn-bench"}, {"version", 1}, {"config_hash", config_hash}, {"rows", rows_json}}.dump(2) + "\n";
}

namespace {

struct RunArtifacts {
  TrainRecord record;
  SalMatrix sal;
};

RunArtifacts train_and_probe(const Model& init, const Dataset& train_data, const Dataset& test_data,
                             const TrainConfig& tc, const SalProbeConfig& probe, const std::string& run_id, unsigned jobs) {
  RunArtifacts a;
  a.record = train(init, train_data, test_data, tc, run_id);
  if (a.record.checkpoints.empty()) throw NumericError(a.record.failure.value_or("training produced no checkpoints"));
  a.sal = sal_matrix(a.record, train_data, probe, jobs);
  return a;
}

void write_landscapes(const std::filesystem::path& dir, const ExperimentConfig& cfg, const TrainRecord& rec,
                      const Dataset& train_data, const std::string& hash, unsigned jobs,
                      std::vector<LandscapeOutcome>* outcomes = nullptr) {
  const Trajectory traj{rec.run_id, rec.snapshots};
  const SalProbeConfig probe = probe_config(cfg);
  const Batch batch = eval_batch(train_data, probe.eval_subset, probe.seed);
  for (auto ranks : cfg.landscape.planes) {
    const LandscapePlane plane = build_plane(traj, ranks);
    const LossGrid grid = loss_grid(plane, rec.final_model(), batch, cfg.landscape.res, cfg.landscape.pad, jobs);
    const auto sub = dir / ("landscape_pc" + std::to_string(ranks.first) + "_pc" + std::to_string(ranks.second));
    write_landscape(sub, plane, grid, hash);
    if (outcomes) {
      double pc12 = plane.explained_variance.at(0);
      if (plane.explained_variance.size() > 1) pc12 += plane.explained_variance[1];
      outcomes->push_back({rec.run_id, ranks, sub, pc12});
    }
  }
}

void write_run(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunArtifacts& a,
               const Dataset& train_data, const std::string& hash, unsigned jobs) {
  write_record(dir, a.record, hash);
  write_sal_csv(dir / "sal.csv", a.sal, hash);
  write_sal_manifest(dir / "sal.json", a.sal, hash);
  write_cdf_csv(dir / "cdf.csv", param_cdf(a.record.final_model()), hash);
  write_landscapes(dir, cfg, a.record, train_data, hash, jobs);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BenchReport cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, unsigned jobs) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "config.json", config_to_json(cfg));

  const DataBundle data = prepare_data(cfg);
  const Model init = initial_model(cfg);
  const SalProbeConfig probe = probe_config(cfg);
  const bool defended = cfg.train.defense.kind != DefenseKind::none;

  BenchReport report;
  report.config_hash = hash;

  // Undefended clean run: source of the threshold and the UD denominator.
  auto t0 = std::chrono::steady_clock::now();
  const std::string ref_name = defended ? "reference" : "vanilla";
  std::optional<RunArtifacts> reference;
  MethodOutcome vanilla{"vanilla", {}, {}, {}, {}, {}, 0.0};
  try {
    reference = train_and_probe(init, *data.train, *data.test, train_config(cfg, false), probe, ref_name, jobs);
    write_run(out_dir / ref_name, cfg, *reference, *data.train, hash, jobs);
  } catch (const std::exception& e) {
    vanilla.error = std::string("clean run failed: ") + e.what();
  }

  auto score = [&](MethodOutcome& row, const RunArtifacts& a, const std::filesystem::path& dir) {
    row.test_acc = a.record.curves.empty() ? std::optional<double>{} : a.record.curves.back().test_acc;
    row.median_abs_param = median_abs_param(a.record.final_model());
    const UdReport ud = unlearnable_distance(a.sal, reference->sal);
    write_text_file(dir / "ud.json", ud_report_json(ud, hash));
    row.lp = ud.lp_poisoned;
    row.ud = ud.ud;
    if (a.record.failure) {
      row.error = "training failed: " + *a.record.failure;
    } else if (!ud.ok()) {
      row.error = ud.error;
    }
  };

  if (reference) {
    try {
      if (defended) {
        const RunArtifacts a = train_and_probe(init, *data.train, *data.test, train_config(cfg, true), probe, "vanilla", jobs);
        write_run(out_dir / "vanilla", cfg, a, *data.train, hash, jobs);
        score(vanilla, a, out_dir / "vanilla");
      } else {
        score(vanilla, *reference, out_dir / "vanilla");
      }
    } catch (const std::exception& e) {
      vanilla.error = e.what();
    }
  }
  vanilla.seconds = seconds_since(t0);
  report.rows.push_back(vanilla);

  for (PoisonMethod m : cfg.poison.methods) {
    t0 = std::chrono::steady_clock::now();
    MethodOutcome row{to_string(m), {}, {}, {}, {}, {}, 0.0};
    const auto dir = out_dir / method_dir(row.method);
    try {
      if (!reference) throw Error("no clean reference run");
      const PoisonedDataset p = make_poison(cfg, data, m, reference->record.final_model(), jobs);
      write_poison(dir / "poison", p, hash);
      const Dataset poisoned = p.materialize();
      const RunArtifacts a = train_and_probe(init, poisoned, *data.test, train_config(cfg, true), probe, row.method, jobs);
      write_run(dir, cfg, a, poisoned, hash, jobs);
      score(row, a, dir);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.seconds = seconds_since(t0);
    report.rows.push_back(row);
  }

  write_text_file(out_dir / "bench.csv", report.to_csv());
  write_text_file(out_dir / "bench.json", report.to_json());
  return report;
}

std::vector<LandscapeOutcome> cmd_landscape(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                            unsigned jobs) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const DataBundle data = prepare_data(cfg);
  const Model init = initial_model(cfg);
  std::vector<LandscapeOutcome> out;

  const TrainRecord clean = train(init, *data.train, *data.test, train_config(cfg, false), "vanilla");
  if (clean.failure) throw NumericError("clean run failed: " + *clean.failure);
  write_landscapes(out_dir / "vanilla", cfg, clean, *data.train, hash, jobs, &out);

  if (!cfg.poison.methods.empty()) {
    const PoisonMethod m = cfg.poison.methods.front();
    const Dataset poisoned = make_poison(cfg, data, m, clean.final_model(), jobs).materialize();
    const TrainRecord rec = train(init, poisoned, *data.test, train_config(cfg, true), to_string(m));
    if (rec.failure) throw NumericError(to_string(m) + " run failed: " + *rec.failure);
    write_landscapes(out_dir / method_dir(to_string(m)), cfg, rec, poisoned, hash, jobs, &out);
  }
  return out;
}

void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const DataBundle data = prepare_data(cfg);
  const auto dir = out_dir / "data";
  std::filesystem::create_directories(dir);
  write_dataset_csv(dir / "train.csv", *data.train);
  write_dataset_csv(dir / "test.csv", *data.test);
  json j{{"format", "ulearn-data"},
         {"version", 1},
         {"train_size", data.train->size()},
         {"test_size", data.test->size()},
         {"dims", data.train->dims()},
         {"n_classes", data.train->n_classes},
         {"config_hash", config_hash(cfg)}};
  write_text_file(dir / "data.json", j.dump(2) + "\n");
}

void cmd_poison(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                const std::vector<PoisonMethod>& methods, unsigned jobs) {
  const DataBundle data = prepare_data(cfg);
  const std::string hash = config_hash(cfg);
  std::optional<Model> clean;
  for (PoisonMethod m : methods) {
    if (m == PoisonMethod::tap && !clean) {
      const TrainRecord rec = train(initial_model(cfg), *data.train, *data.test, train_config(cfg, false), "vanilla");
      if (rec.failure) throw NumericError("clean run failed: " + *rec.failure);
      clean = rec.final_model();
    }
    const PoisonedDataset p = make_poison(cfg, data, m, clean.value_or(initial_model(cfg)), jobs);
    write_poison(out_dir / method_dir(to_string(m)) / "poison", p, hash);
  }
}

namespace {

Dataset run_training_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method,
                          const DataBundle& data) {
  if (method_dir(method) == "vanilla") return *data.train;
  const auto dir = out_dir / method_dir(method) / "poison";
  if (!std::filesystem::exists(dir / "poison.json")) {
    throw ConfigError("no poison for " + method + " under " + dir.string() + "; run the poison stage first");
  }
  (void)cfg;
  return read_poison(dir, data.train).materialize();
}

}  // namespace

TrainRecord cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method) {
  const DataBundle data = prepare_data(cfg);
  const Dataset train_data = run_training_data(cfg, out_dir, method, data);
  TrainRecord rec = train(initial_model(cfg), train_data, *data.test, train_config(cfg, true), method);
  write_record(out_dir / method_dir(method), rec, config_hash(cfg));
  return rec;
}

SalMatrix cmd_sal(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method,
                  unsigned jobs) {
  const DataBundle data = prepare_data(cfg);
  const Dataset train_data = run_training_data(cfg, out_dir, method, data);
  const auto dir = out_dir / method_dir(method);
  TrainRecord rec = read_record(dir);
  rec.run_id = method;
  const SalMatrix m = sal_matrix(rec, train_data, probe_config(cfg), jobs);
  const std::string hash = config_hash(cfg);
  write_sal_csv(dir / "sal.csv", m, hash);
  write_sal_manifest(dir / "sal.json", m, hash);
  return m;
}

UdReport cmd_ud(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const std::string& method) {
  const auto clean_path = out_dir / "vanilla" / "sal.csv";
  const auto dir = out_dir / method_dir(method);
  if (!std::filesystem::exists(clean_path)) throw ConfigError("missing " + clean_path.string() + "; run sal for vanilla first");
  if (!std::filesystem::exists(dir / "sal.csv")) throw ConfigError("missing " + (dir / "sal.csv").string());
  SalMatrix clean = read_sal_csv(clean_path);
  SalMatrix poisoned = read_sal_csv(dir / "sal.csv");
  clean.run_id = "vanilla";
  poisoned.run_id = method;
  const UdReport r = unlearnable_distance(poisoned, clean);
  write_text_file(dir / "ud.json", ud_report_json(r, config_hash(cfg)));
  return r;
}

}  // namespace ulearn
