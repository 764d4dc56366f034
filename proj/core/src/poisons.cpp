#include "ulearn/poisons.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"
#include "ulearn/parallel.hpp"
#include "ulearn/random.hpp"

namespace ulearn {

std::string to_string(PoisonMethod m) {
  switch (m) {
    case PoisonMethod::em: return "EM";
    case PoisonMethod::ops: return "OPS";
    case PoisonMethod::tap: return "TAP";
    case PoisonMethod::lsp: return "LSP";
  }
  return "?";
}

PoisonMethod parse_poison_method(const std::string& name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "EM") return PoisonMethod::em;
  if (up == "OPS") return PoisonMethod::ops;
  if (up == "TAP") return PoisonMethod::tap;
  if (up == "LSP") return PoisonMethod::lsp;
  throw ConfigError("unknown poison method '" + name + "' (expected EM, OPS, TAP or LSP)");
}

std::string to_string(PoisonScope s) { return s == PoisonScope::class_wise ? "class-wise" : "sample-wise"; }

Tensor apply_deltas(const Tensor& x, const Tensor& delta) {
  if (!x.same_shape(delta)) throw ShapeError("perturbation shape does not match features");
  Tensor out = x;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::clamp(x[k] + delta[k], 0.0, 1.0);
  return out;
}

Dataset PoisonedDataset::materialize() const {
  if (!base) throw Error("poisoned dataset has no base");
  Dataset out = *base;
  out.features = apply_deltas(base->features, deltas);
  return out;
}

Tensor project_linf(const Tensor& delta, double budget, const Tensor& x) {
  if (!x.same_shape(delta)) throw ShapeError("project_linf: shapes differ");
  if (budget < 0.0) throw ConfigError("budget must be non-negative");
  Tensor out = delta;
  for (std::size_t k = 0; k < out.size(); ++k) {
    double v = std::clamp(out[k], -budget, budget);
    if (x[k] + v > 1.0) {
      v = 1.0 - x[k];
    } else if (x[k] + v < 0.0) {
      v = -x[k];
    }
    out[k] = v;
  }
  return out;
}

double default_step_size(double budget, std::size_t steps) {
  return steps == 0 ? 0.0 : 2.5 * budget / static_cast<double>(steps);
}

namespace {

void check_base(const std::shared_ptr<const Dataset>& ds) {
  if (!ds) throw ConfigError("poison generator needs a dataset");
  ds->validate();
}

PoisonedDataset empty_poison(std::shared_ptr<const Dataset> ds, PoisonMethod m, double budget, PoisonScope scope) {
  PoisonedDataset p;
  p.deltas = Tensor(ds->features.shape());
  p.base = std::move(ds);
  p.method = m;
  p.budget = budget;
  p.scope = scope;
  return p;
}

/// Sign-gradient descent on per-sample perturbations over index range
/// [begin, end). When `keep_best` is set, each row keeps the lowest-loss
/// iterate, seeded with the zero perturbation and the incoming one.
void descend_rows(const Model& model, const Tensor& x, const std::vector<int>& targets, Tensor& delta,
                  std::size_t begin, std::size_t end, double budget, std::size_t steps, double step,
                  bool keep_best) {
  const std::size_t d = x.cols();
  const std::size_t n = end - begin;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), begin);

  auto slice = [&](const Tensor& t) {
    Tensor s = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(t.row(rows[i]).begin(), d, s.row(i).begin());
    return s;
  };
  const Tensor xs = slice(x);
  Tensor ds = slice(delta);
  const std::vector<int> ys(targets.begin() + static_cast<std::ptrdiff_t>(begin),
                            targets.begin() + static_cast<std::ptrdiff_t>(end));

  Tensor best;
  std::vector<double> best_loss;
  if (keep_best) {
    best_loss = per_sample_losses(model, Batch{xs, ys});
    best = Tensor::matrix(n, d);
    const auto cur = per_sample_losses(model, Batch{apply_deltas(xs, ds), ys});
    for (std::size_t i = 0; i < n; ++i) {
      if (cur[i] <= best_loss[i]) {
        best_loss[i] = cur[i];
        std::copy_n(ds.row(i).begin(), d, best.row(i).begin());
      }
    }
  }

  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor g = input_gradients(model, Batch{apply_deltas(xs, ds), ys});
    for (std::size_t k = 0; k < ds.size(); ++k) {
      const double sg = (g[k] > 0.0) - (g[k] < 0.0);
      ds[k] -= step * sg;
    }
    ds = project_linf(ds, budget, xs);
    if (keep_best) {
      const auto cur = per_sample_losses(model, Batch{apply_deltas(xs, ds), ys});
      for (std::size_t i = 0; i < n; ++i) {
        if (cur[i] < best_loss[i]) {
          best_loss[i] = cur[i];
          std::copy_n(ds.row(i).begin(), d, best.row(i).begin());
        }
      }
    }
  }
  const Tensor& result = keep_best ? best : ds;
  for (std::size_t i = 0; i < n; ++i) std::copy_n(result.row(i).begin(), d, delta.row(rows[i]).begin());
}

/// Splits rows into fixed-size blocks so the result is independent of the
/// number of worker threads.
void descend_all(const Model& model, const Tensor& x, const std::vector<int>& targets, Tensor& delta, double budget,
                 std::size_t steps, double step, bool keep_best, unsigned jobs) {
  constexpr std::size_t kBlock = 256;
  const std::size_t n = x.rows();
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, jobs, [&](std::size_t b) {
    const std::size_t begin = b * kBlock, end = std::min(n, begin + kBlock);
    descend_rows(model, x, targets, delta, begin, end, budget, steps, step, keep_best);
  });
}

}  // namespace

EmResult em_perturb(std::shared_ptr<const Dataset> ds, const EmOptions& opts) {
  check_base(ds);
  if (opts.budget < 0.0) throw ConfigError("EM budget must be non-negative");
  if (opts.batch_size == 0) throw ConfigError("EM batch_size must be positive");
  ModelSpec arch = opts.arch;
  arch.input_dim = ds->dims();
  arch.output_dim = static_cast<std::size_t>(ds->n_classes);

  EmResult res{empty_poison(ds, PoisonMethod::em, opts.budget, PoisonScope::sample_wise),
               make_model(arch, derive_seed(opts.seed, "em-proxy-init"))};
  PoisonedDataset& p = res.poison;
  p.seed = opts.seed;
  p.report.converged = false;
  if (opts.budget == 0.0) {
    p.report.converged = true;
    p.report.note = "zero budget";
    return res;
  }

  const double step = opts.step_size > 0.0 ? opts.step_size : default_step_size(opts.budget, opts.pgd_steps);
  const Tensor& x = ds->features;
  const std::size_t n = ds->size();
  Rng rng(derive_seed(opts.seed, "em-batches"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  SgdState sgd;

  for (std::size_t round = 1; round <= std::max<std::size_t>(opts.outer_rounds, 1); ++round) {
    const Tensor poisoned = apply_deltas(x, p.deltas);
    for (std::size_t s = 0; s < opts.train_steps; ++s) {
      if (cursor >= n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t m = std::min(opts.batch_size, n - cursor);
      Batch b{Tensor::matrix(m, ds->dims()), std::vector<int>(m)};
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t r = order[cursor + i];
        std::copy_n(poisoned.row(r).begin(), ds->dims(), b.inputs.row(i).begin());
        std::get<std::vector<int>>(b.targets)[i] = ds->labels[r];
      }
      cursor += m;
      sgd_step(res.proxy, backward(res.proxy, b), opts.lr, 0.0, sgd);
    }
    descend_all(res.proxy, x, ds->labels, p.deltas, opts.budget, opts.pgd_steps, step, true, opts.jobs);
    p.report.rounds = round;
    p.report.proxy_accuracy = accuracy(res.proxy, apply_deltas(x, p.deltas), ds->labels);
    if (p.report.proxy_accuracy >= opts.stop_accuracy) {
      p.report.converged = true;
      break;
    }
  }
  if (!p.report.converged) {
    p.report.note = "proxy accuracy " + format_double(p.report.proxy_accuracy) + " below stop threshold after " +
                    std::to_string(p.report.rounds) + " rounds";
  }
  return res;
}

PoisonedDataset ops_perturb(std::shared_ptr<const Dataset> ds, double value) {
  check_base(ds);
  const std::size_t d = ds->dims();
  if (static_cast<std::size_t>(ds->n_classes) > d) {
    throw ConfigError("OPS needs n_classes <= d (one shortcut coordinate per class)");
  }
  if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("OPS value must lie in [0, 1]");
  PoisonedDataset p = empty_poison(ds, PoisonMethod::ops, 0.0, PoisonScope::class_wise);
  Tensor pattern = Tensor::matrix(static_cast<std::size_t>(ds->n_classes), d);
  for (int c = 0; c < ds->n_classes; ++c) pattern(static_cast<std::size_t>(c), static_cast<std::size_t>(c) % d) = value;
  for (std::size_t i = 0; i < ds->size(); ++i) {
    const std::size_t coord = static_cast<std::size_t>(ds->labels[i]) % d;
    p.deltas(i, coord) = value - ds->features(i, coord);
  }
  p.budget = p.deltas.max_abs();
  p.class_pattern = std::move(pattern);
  return p;
}

PoisonedDataset tap_perturb(std::shared_ptr<const Dataset> ds, const Model& clean_model, const TapOptions& opts) {
  check_base(ds);
  if (opts.budget < 0.0) throw ConfigError("TAP budget must be non-negative");
  if (clean_model.input_dim() != ds->dims() || clean_model.output_dim() != static_cast<std::size_t>(ds->n_classes)) {
    throw ShapeError("clean model does not match dataset dimensions");
  }
  PoisonedDataset p = empty_poison(ds, PoisonMethod::tap, opts.budget, PoisonScope::sample_wise);
  if (opts.budget == 0.0 || opts.pgd_steps == 0) return p;
  std::vector<int> target(ds->size());
  for (std::size_t i = 0; i < ds->size(); ++i) target[i] = (ds->labels[i] + 1) % ds->n_classes;
  const double step = opts.step_size > 0.0 ? opts.step_size : default_step_size(opts.budget, opts.pgd_steps);
  descend_all(clean_model, ds->features, target, p.deltas, opts.budget, opts.pgd_steps, step, false, opts.jobs);
  return p;
}

PoisonedDataset lsp_perturb(std::shared_ptr<const Dataset> ds, double budget, std::uint64_t seed) {
  check_base(ds);
  if (budget < 0.0) throw ConfigError("LSP budget must be non-negative");
  const std::size_t d = ds->dims(), classes = static_cast<std::size_t>(ds->n_classes);
  PoisonedDataset p = empty_poison(ds, PoisonMethod::lsp, budget, PoisonScope::class_wise);
  p.seed = seed;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor pattern = Tensor::matrix(classes, d);
  for (std::size_t c = 0; c < classes; ++c) {
    auto r = pattern.row(c);
    double m = 0.0;
    for (double& v : r) {
      v = u(rng);
      m = std::max(m, std::abs(v));
    }
    for (double& v : r) v = m > 0.0 ? v * budget / m : 0.0;
  }
  Tensor raw = Tensor(ds->features.shape());
  for (std::size_t i = 0; i < ds->size(); ++i) {
    std::copy_n(pattern.row(static_cast<std::size_t>(ds->labels[i])).begin(), d, raw.row(i).begin());
  }
  p.deltas = project_linf(raw, budget, ds->features);
  p.class_pattern = std::move(pattern);
  return p;
}

void write_poison(const std::filesystem::path& dir, const PoisonedDataset& p, const std::string& config_hash) {
  CsvTable t;
  const std::size_t d = p.deltas.cols();
  for (std::size_t j = 0; j < d; ++j) t.header.push_back("d" + std::to_string(j));
  for (std::size_t i = 0; i < p.deltas.rows(); ++i) {
    std::vector<std::string> r;
    for (double v : p.deltas.row(i)) r.push_back(format_double(v));
    t.rows.push_back(std::move(r));
  }
  write_csv_file(dir / "deltas.csv", t);

  nlohmann::json m{{"format", "ulearn-poison"},
                   {"version", 1},
                   {"method", to_string(p.method)},
                   {"budget", p.budget},
                   {"scope", to_string(p.scope)},
                   {"seed", p.seed},
                   {"n", p.deltas.rows()},
                   {"d", d},
                   {"max_linf", p.max_linf()},
                   {"rounds", p.report.rounds},
                   {"converged", p.report.converged},
                   {"proxy_accuracy", p.report.proxy_accuracy},
                   {"note", p.report.note},
                   {"config_hash", config_hash}};
  if (p.class_pattern) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t c = 0; c < p.class_pattern->rows(); ++c) {
      auto r = p.class_pattern->row(c);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    m["class_pattern"] = std::move(rows);
  }
  write_text_file(dir / "poison.json", m.dump(2) + "\n");
}

PoisonedDataset read_poison(const std::filesystem::path& dir, std::shared_ptr<const Dataset> base) {
  if (!base) throw ConfigError("read_poison needs the base dataset");
  const auto m = nlohmann::json::parse(read_text_file(dir / "poison.json"));
  if (m.value("format", "") != "ulearn-poison" || m.value("version", 0) != 1) {
    throw Error((dir / "poison.json").string() + " is not a version-1 poison manifest");
  }
  const CsvTable t = read_csv_file(dir / "deltas.csv");
  if (t.rows.size() != base->size() || t.header.size() != base->dims()) {
    throw ShapeError("poison deltas do not match the base dataset");
  }
  PoisonedDataset p;
  p.deltas = Tensor::matrix(base->size(), base->dims());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) p.deltas(i, j) = parse_double(t.rows[i][j]);
  }
  p.base = std::move(base);
  p.method = parse_poison_method(m.at("method").get<std::string>());
  p.budget = m.at("budget").get<double>();
  p.scope = m.at("scope").get<std::string>() == "class-wise" ? PoisonScope::class_wise : PoisonScope::sample_wise;
  p.seed = m.value("seed", std::uint64_t{0});
  p.report.rounds = m.value("rounds", std::size_t{0});
  p.report.converged = m.value("converged", true);
  p.report.proxy_accuracy = m.value("proxy_accuracy", 0.0);
  p.report.note = m.value("note", "");
  if (m.contains("class_pattern")) {
    const auto rows = m.at("class_pattern").get<std::vector<std::vector<double>>>();
    Tensor pat = Tensor::matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t c = 0; c < rows.size(); ++c) std::copy(rows[c].begin(), rows[c].end(), pat.row(c).begin());
    p.class_pattern = std::move(pat);
  }
  return p;
}

}  // namespace ulearn
