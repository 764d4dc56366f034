#include "ulearn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ulearn/checkpoint.hpp"
#include "ulearn/error.hpp"
#include "ulearn/poisons.hpp"

namespace ulearn {

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::mixup: return "mixup";
    case DefenseKind::cutout: return "cutout";
    case DefenseKind::adv_train: return "adv_train";
  }
  return "?";
}

DefenseKind parse_defense(const std::string& name) {
  if (name == "none") return DefenseKind::none;
  if (name == "mixup") return DefenseKind::mixup;
  if (name == "cutout") return DefenseKind::cutout;
  if (name == "adv_train") return DefenseKind::adv_train;
  throw ConfigError("unknown defense '" + name + "' (expected none, mixup, cutout or adv_train)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (snapshot_every < 1) throw ConfigError("snapshot_every must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  for (double m : milestones) {
    if (!(m > 0.0 && m < 1.0)) throw ConfigError("milestones must be fractions in (0, 1)");
  }
  if (defense.kind == DefenseKind::mixup && !(defense.mixup_alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
  if (defense.kind == DefenseKind::adv_train && !(defense.adv_budget > 0.0)) {
    throw ConfigError("adversarial training budget must be > 0");
  }
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  double r = lr;
  for (double m : milestones) {
    if (epoch >= static_cast<std::size_t>(std::floor(m * static_cast<double>(epochs)))) r *= lr_decay;
  }
  return r;
}

const Model& TrainRecord::final_model() const {
  if (checkpoints.empty()) throw Error("training record has no checkpoints");
  return checkpoints.back();
}

MixupResult mixup_with(const Tensor& x, std::span<const int> y, int n_classes, double lambda,
                       std::span<const std::size_t> perm) {
  const std::size_t n = x.rows(), d = x.cols(), c = static_cast<std::size_t>(n_classes);
  if (y.size() != n || perm.size() != n) throw ShapeError("mixup: batch, labels and permutation differ in length");
  MixupResult out{Tensor::matrix(n, d), Tensor::matrix(n, c)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = perm[i];
    for (std::size_t k = 0; k < d; ++k) out.inputs(i, k) = lambda * x(i, k) + (1.0 - lambda) * x(j, k);
    out.soft_labels(i, static_cast<std::size_t>(y[i])) += lambda;
    out.soft_labels(i, static_cast<std::size_t>(y[j])) += 1.0 - lambda;
  }
  return out;
}

MixupResult mixup_batch(const Tensor& x, std::span<const int> y, int n_classes, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
  std::gamma_distribution<double> g(alpha, 1.0);
  const double a = g(rng), b = g(rng);
  const double lambda = a + b > 0.0 ? a / (a + b) : 0.5;
  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return mixup_with(x, y, n_classes, lambda, perm);
}

Tensor cutout_batch(const Tensor& x, std::size_t width, double fill, Rng& rng) {
  const std::size_t d = x.cols();
  if (width > d) throw ConfigError("cutout width exceeds feature count");
  Tensor out = x;
  if (width == 0) return out;
  std::uniform_int_distribution<std::size_t> start(0, d - width);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const std::size_t s = start(rng);
    for (std::size_t k = s; k < s + width; ++k) out(i, k) = fill;
  }
  return out;
}

AdvStepResult craft_adversarial(const Model& model, const Tensor& x, std::span<const int> y, const AdvOptions& opts) {
  AdvStepResult res;
  res.delta = Tensor(x.shape());
  const std::vector<int> labels(y.begin(), y.end());
  res.clean_loss = forward(model, Batch{x, labels}).loss;
  const double step = opts.step_size > 0.0 ? opts.step_size : default_step_size(opts.budget, opts.inner_steps);
  for (std::size_t s = 0; s < opts.inner_steps; ++s) {
    const Tensor g = input_gradients(model, Batch{apply_deltas(x, res.delta), labels});
    for (std::size_t k = 0; k < g.size(); ++k) res.delta[k] += step * ((g[k] > 0.0) - (g[k] < 0.0));
    res.delta = project_linf(res.delta, opts.budget, x);
  }
  res.adversarial_loss =
      opts.inner_steps == 0 ? res.clean_loss : forward(model, Batch{apply_deltas(x, res.delta), labels}).loss;
  return res;
}

AdvStepResult adv_train_step(Model& model, const Tensor& x, std::span<const int> y, const AdvOptions& opts, double lr,
                             double momentum, SgdState& state) {
  AdvStepResult res = craft_adversarial(model, x, y, opts);
  const std::vector<int> labels(y.begin(), y.end());
  const Tensor inputs = opts.inner_steps == 0 ? x : apply_deltas(x, res.delta);
  sgd_step(model, backward(model, Batch{inputs, labels}), lr, momentum, state);
  return res;
}

namespace {

EpochMetrics evaluate_epoch(const Model& m, const Dataset& train_data, const Dataset& test_data, std::size_t epoch) {
  EpochMetrics e;
  e.epoch = epoch;
  const auto fr = forward(m, train_data.batch());
  e.train_loss = fr.loss;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < fr.logits.rows(); ++i) {
    const auto r = fr.logits.row(i);
    hit += static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) == train_data.labels[i];
  }
  e.train_acc = static_cast<double>(hit) / static_cast<double>(train_data.size());
  e.test_acc = accuracy(m, test_data.features, test_data.labels);
  return e;
}

}  // namespace

TrainRecord train(const Model& model0, const Dataset& train_data, const Dataset& test_data, const TrainConfig& cfg,
                  std::string run_id) {
  cfg.validate();
  train_data.validate();
  if (model0.input_dim() != train_data.dims() || test_data.dims() != train_data.dims()) {
    throw ShapeError("model and datasets disagree on feature width");
  }
  TrainRecord rec;
  rec.run_id = std::move(run_id);
  rec.config = cfg;

  Model model = model0;
  SgdState sgd;
  Rng rng(cfg.seed);
  const std::size_t n = train_data.size(), d = train_data.dims();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  rec.snapshots.push_back({0, flatten_params(model)});

  try {
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = cfg.lr_at_epoch(epoch);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t m = std::min(cfg.batch_size, n - start);
        Tensor x = Tensor::matrix(m, d);
        std::vector<int> y(m);
        for (std::size_t i = 0; i < m; ++i) {
          std::copy_n(train_data.features.row(order[start + i]).begin(), d, x.row(i).begin());
          y[i] = train_data.labels[order[start + i]];
        }
        switch (cfg.defense.kind) {
          case DefenseKind::none:
            sgd_step(model, backward(model, Batch{std::move(x), std::move(y)}), lr, cfg.momentum, sgd);
            break;
          case DefenseKind::mixup: {
            auto mix = mixup_batch(x, y, train_data.n_classes, cfg.defense.mixup_alpha, rng);
            sgd_step(model, backward(model, Batch{std::move(mix.inputs), SoftLabels{std::move(mix.soft_labels)}}), lr,
                     cfg.momentum, sgd);
            break;
          }
          case DefenseKind::cutout: {
            Tensor cut = cutout_batch(x, cfg.defense.cutout_width, cfg.defense.cutout_fill, rng);
            sgd_step(model, backward(model, Batch{std::move(cut), std::move(y)}), lr, cfg.momentum, sgd);
            break;
          }
          case DefenseKind::adv_train:
            adv_train_step(model, x, y, AdvOptions{cfg.defense.adv_budget, cfg.defense.adv_inner_steps, 0.0}, lr,
                           cfg.momentum, sgd);
            break;
        }
        ++step;
        const auto flat = flatten_params(model);
        for (double v : flat) {
          if (!std::isfinite(v)) throw NumericError("non-finite parameter after step " + std::to_string(step));
        }
        if (step % cfg.snapshot_every == 0) rec.snapshots.push_back({step, flat});
      }
      rec.curves.push_back(evaluate_epoch(model, train_data, test_data, epoch + 1));
      rec.checkpoints.push_back(model);
    }
  } catch (const NumericError& e) {
    rec.failure = e.what();
  }
  return rec;
}

std::vector<CdfPoint> param_cdf(const Model& model) {
  auto flat = flatten_params(model);
  for (double& v : flat) v = std::abs(v);
  std::sort(flat.begin(), flat.end());
  std::vector<CdfPoint> cdf;
  const double total = static_cast<double>(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (i + 1 < flat.size() && flat[i + 1] == flat[i]) continue;
    cdf.push_back({flat[i], static_cast<double>(i + 1) / total});
  }
  return cdf;
}

double median_abs_param(const Model& model) {
  auto flat = flatten_params(model);
  for (double& v : flat) v = std::abs(v);
  std::sort(flat.begin(), flat.end());
  const std::size_t n = flat.size();
  if (n == 0) return 0.0;
  return n % 2 ? flat[n / 2] : 0.5 * (flat[n / 2 - 1] + flat[n / 2]);
}

void write_record(const std::filesystem::path& dir, const TrainRecord& rec, const std::string& config_hash) {
  std::filesystem::create_directories(dir / "checkpoints");
  for (std::size_t t = 0; t < rec.checkpoints.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.json", t + 1);
    save_checkpoint(dir / "checkpoints" / name, Checkpoint{rec.checkpoints[t], t + 1, config_hash});
  }
  CsvTable curves;
  curves.header = {"epoch", "train_loss", "train_acc", "test_acc", "config_hash"};
  for (const auto& e : rec.curves) {
    curves.rows.push_back({std::to_string(e.epoch), format_double(e.train_loss), format_double(e.train_acc),
                           format_double(e.test_acc), config_hash});
  }
  write_csv_file(dir / "curves.csv", curves);
  write_snapshots(dir / "snapshots.bin", rec.snapshots, config_hash);
}

TrainRecord read_record(const std::filesystem::path& dir) {
  TrainRecord rec;
  rec.run_id = dir.filename().string();
  const CsvTable curves = read_csv_file(dir / "curves.csv");
  for (const auto& r : curves.rows) {
    EpochMetrics e;
    e.epoch = static_cast<std::size_t>(std::stoul(r[curves.column("epoch")]));
    e.train_loss = parse_double(r[curves.column("train_loss")]);
    e.train_acc = parse_double(r[curves.column("train_acc")]);
    e.test_acc = parse_double(r[curves.column("test_acc")]);
    rec.curves.push_back(e);
  }
  for (std::size_t t = 1;; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu.json", t);
    const auto path = dir / "checkpoints" / name;
    if (!std::filesystem::exists(path)) break;
    rec.checkpoints.push_back(load_checkpoint(path).model);
  }
  if (rec.checkpoints.empty()) throw Error("no checkpoints under " + dir.string());
  rec.config.epochs = rec.checkpoints.size();
  if (std::filesystem::exists(dir / "snapshots.bin")) rec.snapshots = read_snapshots(dir / "snapshots.bin");
  return rec;
}

void write_cdf_csv(const std::filesystem::path& path, const std::vector<CdfPoint>& cdf, const std::string& config_hash) {
  CsvTable t;
  t.header = {"abs_value", "cumulative_fraction", "config_hash"};
  for (const auto& p : cdf) t.rows.push_back({format_double(p.value), format_double(p.fraction), config_hash});
  write_csv_file(path, t);
}

}  // namespace ulearn
