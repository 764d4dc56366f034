#include "ulearn/sal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"
#include "ulearn/parallel.hpp"
#include "ulearn/random.hpp"

namespace ulearn {

std::string to_string(ProbeNorm n) { return n == ProbeNorm::l2 ? "l2" : "linf"; }

ProbeNorm parse_probe_norm(const std::string& name) {
  if (name == "l2") return ProbeNorm::l2;
  if (name == "linf") return ProbeNorm::linf;
  throw ConfigError("unknown probe norm '" + name + "' (expected l2 or linf)");
}

void SalProbeConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("SAL epsilon must be > 0");
  if (ascent_iters < 1) throw ConfigError("SAL ascent_iters must be >= 1");
  if (eval_subset < 1) throw ConfigError("SAL eval_subset must be >= 1");
}

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void project(std::vector<double>& v, double eps, ProbeNorm norm) {
  if (norm == ProbeNorm::l2) {
    const double n = l2_norm(v);
    if (n > eps) {
      for (double& x : v) x *= eps / n;
    }
  } else {
    for (double& x : v) x = std::clamp(x, -eps, eps);
  }
}

}  // namespace

SalResult projected_ascent(const LocalObjective& f, const SalProbeConfig& cfg) {
  if (!(cfg.epsilon > 0.0) || cfg.ascent_iters < 1) cfg.validate();
  const double eta = 2.0 * cfg.epsilon / static_cast<double>(cfg.ascent_iters);
  std::vector<double> v(f.dim, 0.0);
  const double base = f.value(v);
  SalResult res;
  double best = 0.0;

  for (std::size_t it = 0; it < cfg.ascent_iters; ++it) {
    std::vector<double> g = f.gradient(v);
    double gn = l2_norm(g);
    if (gn == 0.0) {
      if (it != 0) break;
      // Exact critical point: start along a seeded random direction.
      res.degenerate = true;
      Rng rng(derive_seed(cfg.seed, "sal-restart"));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (double& x : g) x = normal(rng);
      gn = l2_norm(g);
      if (gn == 0.0) break;
    }
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += eta * g[k] / gn;
    project(v, cfg.epsilon, cfg.norm);
    best = std::max(best, std::abs(f.value(v) - base));
  }
  res.value = best;
  return res;
}

SalResult sal_layer(const Model& model, std::size_t layer, const Batch& data, const SalProbeConfig& cfg) {
  cfg.validate();
  const Layer& target = model.layer(layer);
  if (!target.is_dense()) throw ShapeError("SAL layer " + std::to_string(layer) + " is not a dense layer");

  Model probe = model;
  probe.freeze_all_except(layer);
  ParamBlock block = ParamBlock::zeros_like(target);

  LocalObjective f;
  f.dim = block.size();
  f.value = [&](std::span<const double> v) {
    block.assign(v);
    return loss(perturb_layer(probe, layer, block), data);
  };
  f.gradient = [&](std::span<const double> v) {
    block.assign(v);
    return backward(perturb_layer(probe, layer, block), data)[layer].flatten();
  };
  return projected_ascent(f, cfg);
}

double disk_oracle_2d(const std::function<double(double, double)>& delta_loss, double epsilon, std::size_t grid_n) {
  if (epsilon <= 0.0) return 0.0;
  if (grid_n < 2) throw ConfigError("oracle grid_n must be >= 2");
  double best = std::abs(delta_loss(0.0, 0.0));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 1; i < grid_n; ++i) {
    const double r = epsilon * static_cast<double>(i) / static_cast<double>(grid_n - 1);
    for (std::size_t j = 0; j < grid_n; ++j) {
      const double a = two_pi * static_cast<double>(j) / static_cast<double>(grid_n);
      best = std::max(best, std::abs(delta_loss(r * std::cos(a), r * std::sin(a))));
    }
  }
  const std::size_t ring = grid_n * grid_n;
  for (std::size_t j = 0; j < ring; ++j) {
    const double a = two_pi * static_cast<double>(j) / static_cast<double>(ring);
    best = std::max(best, std::abs(delta_loss(epsilon * std::cos(a), epsilon * std::sin(a))));
  }
  return best;
}

double sal_oracle_2param(const Model& model, std::size_t layer, const Batch& data, double epsilon,
                         std::size_t grid_n) {
  const Layer& target = model.layer(layer);
  if (!target.is_dense() || target.parameter_count() != 2) {
    throw ShapeError("sal_oracle_2param needs a dense layer with exactly two parameters");
  }
  const double base = loss(model, data);
  ParamBlock block = ParamBlock::zeros_like(target);
  return disk_oracle_2d(
      [&](double a, double b) {
        const double v[2] = {a, b};
        block.assign(v);
        return loss(perturb_layer(model, layer, block), data) - base;
      },
      epsilon, grid_n);
}

Batch eval_batch(const Dataset& ds, std::size_t count, std::uint64_t seed) {
  if (count >= ds.size()) return ds.batch();
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return subset(ds, idx).batch();
}

std::vector<double> SalMatrix::epoch_values(std::size_t t) const {
  std::vector<double> out;
  for (std::size_t l = 0; l < layers(); ++l) {
    if (const auto& v = at(t, l)) out.push_back(*v);
  }
  return out;
}

double SalMatrix::epoch_mean(std::size_t t) const {
  const auto v = epoch_values(t);
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t SalMatrix::missing_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](const auto& v) { return !v; }));
}

SalMatrix SalMatrix::from_rows(const std::vector<std::vector<double>>& rows, std::string run_id) {
  SalMatrix m;
  m.run_id = std::move(run_id);
  m.epochs = rows.size();
  const std::size_t layers = rows.empty() ? 0 : rows.front().size();
  for (std::size_t l = 0; l < layers; ++l) m.layer_ids.push_back(l);
  for (const auto& r : rows) {
    if (r.size() != layers) throw ShapeError("SAL rows must have equal length");
    for (double v : r) m.values.emplace_back(v);
  }
  m.degenerate.assign(m.values.size(), false);
  return m;
}

SalMatrix sal_matrix(const TrainRecord& record, const Dataset& train_data, const SalProbeConfig& cfg, unsigned jobs) {
  cfg.validate();
  if (record.checkpoints.empty()) throw Error("SAL matrix needs at least one checkpoint");
  SalMatrix m;
  m.run_id = record.run_id;
  m.probe = cfg;
  m.layer_ids = record.checkpoints.front().dense_indices();
  m.epochs = record.checkpoints.size();
  m.values.assign(m.epochs * m.layers(), std::nullopt);
  std::vector<char> degenerate(m.values.size(), 0);

  const Batch data = eval_batch(train_data, cfg.eval_subset, cfg.seed);
  parallel_for(m.values.size(), jobs, [&](std::size_t cell) {
    const std::size_t t = cell / m.layers(), l = cell % m.layers();
    try {
      const SalResult r = sal_layer(record.checkpoints[t], m.layer_ids[l], data, cfg);
      m.values[cell] = r.value;
      degenerate[cell] = r.degenerate;
    } catch (const NumericError&) {
      m.values[cell] = std::nullopt;
    }
  });
  m.degenerate.assign(degenerate.begin(), degenerate.end());
  return m;
}

void write_sal_csv(const std::filesystem::path& path, const SalMatrix& m, const std::string& config_hash) {
  CsvTable t;
  t.header.push_back("epoch");
  for (std::size_t id : m.layer_ids) t.header.push_back("L" + std::to_string(id));
  t.header.push_back("config_hash");
  for (std::size_t e = 0; e < m.epochs; ++e) {
    std::vector<std::string> r{std::to_string(e + 1)};
    for (std::size_t l = 0; l < m.layers(); ++l) r.push_back(format_optional(m.at(e, l)));
    r.push_back(config_hash);
    t.rows.push_back(std::move(r));
  }
  write_csv_file(path, t);
}

SalMatrix read_sal_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv_file(path);
  SalMatrix m;
  m.run_id = path.parent_path().filename().string();
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto& h = t.header[c];
    if (h.size() > 1 && h[0] == 'L') {
      m.layer_ids.push_back(static_cast<std::size_t>(std::stoul(h.substr(1))));
      cols.push_back(c);
    }
  }
  m.epochs = t.rows.size();
  for (const auto& r : t.rows) {
    for (std::size_t c : cols) {
      if (r[c].empty()) {
        m.values.emplace_back(std::nullopt);
      } else {
        m.values.emplace_back(parse_double(r[c]));
      }
    }
  }
  m.degenerate.assign(m.values.size(), false);
  const auto manifest = path.parent_path() / "sal.json";
  if (std::filesystem::exists(manifest)) m.probe = read_probe_manifest(manifest);
  return m;
}

void write_sal_manifest(const std::filesystem::path& path, const SalMatrix& m, const std::string& config_hash) {
  nlohmann::json degenerate = nlohmann::json::array();
  for (std::size_t c = 0; c < m.degenerate.size(); ++c) {
    if (m.degenerate[c]) degenerate.push_back({{"epoch", c / m.layers() + 1}, {"layer", m.layer_ids[c % m.layers()]}});
  }
  nlohmann::json j{{"format", "ulearn-sal"},
                   {"version", 1},
                   {"run_id", m.run_id},
                   {"epochs", m.epochs},
                   {"layer_ids", m.layer_ids},
                   {"missing_cells", m.missing_count()},
                   {"degenerate_cells", std::move(degenerate)},
                   {"probe",
                    {{"epsilon", m.probe.epsilon},
                     {"norm", to_string(m.probe.norm)},
                     {"ascent_iters", m.probe.ascent_iters},
                     {"eval_subset", m.probe.eval_subset},
                     {"seed", m.probe.seed}}},
                   {"config_hash", config_hash}};
  write_text_file(path, j.dump(2) + "\n");
}

SalProbeConfig read_probe_manifest(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(read_text_file(path));
  const auto& p = j.at("probe");
  SalProbeConfig cfg;
  cfg.epsilon = p.at("epsilon").get<double>();
  cfg.norm = parse_probe_norm(p.at("norm").get<std::string>());
  cfg.ascent_iters = p.at("ascent_iters").get<std::size_t>();
  cfg.eval_subset = p.at("eval_subset").get<std::size_t>();
  cfg.seed = p.at("seed").get<std::uint64_t>();
  return cfg;
}

Model MultiHeadModel::task_model(std::size_t task) const {
  std::vector<Layer> layers = trunk.layers();
  const auto& head = heads.at(task).layers();
  layers.insert(layers.end(), head.begin(), head.end());
  return Model(std::move(layers));
}

MultiHeadModel make_multihead(std::size_t input_dim, const std::vector<std::size_t>& trunk_hidden,
                              const std::vector<std::size_t>& head_dims, std::uint64_t seed) {
  if (trunk_hidden.empty()) throw ConfigError("multi-head model needs at least one trunk layer");
  MultiHeadModel mh;
  // Trunk: the hidden stack of an MLP spec, with its output layer dropped.
  ModelSpec spec{input_dim, trunk_hidden, 1};
  Model full = make_model(spec, derive_seed(seed, "trunk"));
  std::vector<Layer> trunk_layers(full.layers().begin(), full.layers().end() - 1);
  mh.trunk = Model(std::move(trunk_layers));
  for (std::size_t h = 0; h < head_dims.size(); ++h) {
    mh.heads.push_back(make_model(ModelSpec{trunk_hidden.back(), {}, head_dims[h]}, derive_seed(seed, h)));
  }
  return mh;
}

std::vector<MultiHeadModel> train_multihead(const MultiHeadModel& init, const Tensor& inputs,
                                            const std::vector<Targets>& task_targets, std::size_t epochs, double lr,
                                            std::size_t batch_size, std::uint64_t seed) {
  if (task_targets.size() != init.heads.size()) throw ShapeError("one target set per head is required");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  MultiHeadModel mh = init;
  std::vector<MultiHeadModel> out;
  const std::size_t n = inputs.rows(), d = inputs.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  const std::size_t trunk_layers = mh.trunk.layer_count();

  auto slice_targets = [](const Targets& t, const std::vector<std::size_t>& rows) -> Targets {
    return std::visit(
        [&](const auto& v) -> Targets {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::vector<int>>) {
            std::vector<int> s;
            for (auto r : rows) s.push_back(v[r]);
            return s;
          } else {
            const Tensor& src = [&]() -> const Tensor& {
              if constexpr (std::is_same_v<T, SoftLabels>) {
                return v.probs;
              } else {
                return v.values;
              }
            }();
            Tensor s = Tensor::matrix(rows.size(), src.cols());
            for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.row(rows[i]).begin(), src.cols(), s.row(i).begin());
            return T{std::move(s)};
          }
        },
        t);
  };

  std::vector<SgdState> head_states(mh.heads.size());
  SgdState trunk_state;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t m = std::min(batch_size, n - start);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(start + m));
      Tensor x = Tensor::matrix(m, d);
      for (std::size_t i = 0; i < m; ++i) std::copy_n(inputs.row(rows[i]).begin(), d, x.row(i).begin());

      Gradients trunk_grad = zero_gradients(mh.trunk);
      std::vector<Gradients> head_grads;
      for (std::size_t task = 0; task < mh.heads.size(); ++task) {
        const Model composed = mh.task_model(task);
        const Gradients g = backward(composed, Batch{x, slice_targets(task_targets[task], rows)});
        for (std::size_t l = 0; l < trunk_layers; ++l) {
          if (!g[l].empty()) trunk_grad[l].add_scaled(g[l], 1.0);
        }
        head_grads.emplace_back(g.begin() + static_cast<std::ptrdiff_t>(trunk_layers), g.end());
      }
      sgd_step(mh.trunk, trunk_grad, lr, 0.0, trunk_state);
      for (std::size_t task = 0; task < mh.heads.size(); ++task) {
        sgd_step(mh.heads[task], head_grads[task], lr, 0.0, head_states[task]);
      }
    }
    out.push_back(mh);
  }
  return out;
}

TaskSimilarity sal_task_similarity(const MultiHeadModel& model, const std::vector<Batch>& task_batches,
                                   const SalProbeConfig& cfg) {
  if (task_batches.size() != model.heads.size()) throw ShapeError("one evaluation batch per task is required");
  const auto trunk_ids = model.trunk_dense_indices();
  TaskSimilarity res;
  for (std::size_t task = 0; task < model.heads.size(); ++task) {
    const Model composed = model.task_model(task);
    std::vector<double> vec;
    for (std::size_t id : trunk_ids) vec.push_back(sal_layer(composed, id, task_batches[task], cfg).value);
    res.sal_vectors.push_back(std::move(vec));
  }
  const std::size_t k = res.sal_vectors.size();
  res.matrix = Tensor::matrix(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    res.matrix(a, a) = 1.0;
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto& u = res.sal_vectors[a];
      const auto& w = res.sal_vectors[b];
      const double nu = l2_norm(u), nw = l2_norm(w);
      double c = 0.0;
      if (nu == 0.0 || nw == 0.0) {
        res.zero_vector = true;
      } else {
        c = std::inner_product(u.begin(), u.end(), w.begin(), 0.0) / (nu * nw);
        c = std::clamp(c, -1.0, 1.0);
      }
      res.matrix(a, b) = res.matrix(b, a) = c;
    }
  }
  return res;
}

}  // namespace ulearn
