#include "ulearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ulearn/error.hpp"
#include "ulearn/random.hpp"

namespace ulearn {

Layer Layer::dense(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ShapeError("dense layer dimensions must be positive");
  Layer l;
  l.kind = LayerKind::dense;
  l.weight = Tensor::matrix(in, out);
  l.bias = Tensor::vector(out);
  return l;
}

Layer Layer::relu() {
  Layer l;
  l.kind = LayerKind::relu;
  return l;
}

bool operator==(const Layer& a, const Layer& b) {
  return a.kind == b.kind && a.weight == b.weight && a.bias == b.bias && a.frozen == b.frozen;
}

Model::Model(std::vector<Layer> layers) : layers_(std::move(layers)) {
  std::size_t width = 0;
  bool seen_dense = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (!l.is_dense()) continue;
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.weight.cols()) {
      throw ShapeError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    }
    if (seen_dense && l.in_dim() != width) {
      throw ShapeError("layer " + std::to_string(i) + " expects input width " +
                       std::to_string(l.in_dim()) + " but receives " + std::to_string(width));
    }
    width = l.out_dim();
    seen_dense = true;
  }
  if (!seen_dense) throw ShapeError("model needs at least one dense layer");
}

const Layer& Model::layer(std::size_t l) const {
  if (l >= layers_.size()) throw ShapeError("layer index " + std::to_string(l) + " out of range");
  return layers_[l];
}

Layer& Model::mutable_layer(std::size_t l) {
  if (l >= layers_.size()) throw ShapeError("layer index " + std::to_string(l) + " out of range");
  return layers_[l];
}

std::size_t Model::input_dim() const {
  for (const auto& l : layers_) {
    if (l.is_dense()) return l.in_dim();
  }
  return 0;
}

std::size_t Model::output_dim() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (it->is_dense()) return it->out_dim();
  }
  return 0;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

std::vector<std::size_t> Model::dense_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].is_dense()) idx.push_back(i);
  }
  return idx;
}

void Model::set_frozen(std::size_t l, bool frozen) { mutable_layer(l).frozen = frozen; }

void Model::freeze_all_except(std::size_t l) {
  layer(l);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].frozen = (i != l);
}

void Model::unfreeze_all() {
  for (auto& l : layers_) l.frozen = false;
}

bool Model::operator==(const Model& other) const { return layers_ == other.layers_; }

Model make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.output_dim == 0) throw ConfigError("model dimensions must be positive");
  if (spec.hidden.size() > 3) throw ConfigError("at most 3 hidden layers are supported");
  Rng rng(seed);
  std::vector<Layer> layers;
  std::size_t width = spec.input_dim;
  auto add_dense = [&](std::size_t out) {
    Layer l = Layer::dense(width, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : l.weight.data()) w = u(rng);
    for (double& b : l.bias.data()) b = u(rng);
    layers.push_back(std::move(l));
    width = out;
  };
  for (std::size_t h : spec.hidden) {
    if (h == 0) throw ConfigError("hidden layer width must be positive");
    add_dense(h);
    layers.push_back(Layer::relu());
  }
  add_dense(spec.output_dim);
  return Model(std::move(layers));
}

ParamBlock ParamBlock::zeros_like(const Layer& layer) {
  if (!layer.is_dense()) return {};
  return {Tensor(layer.weight.shape()), Tensor(layer.bias.shape())};
}

double ParamBlock::squared_norm() const { return dot(*this); }

double ParamBlock::dot(const ParamBlock& other) const {
  if (!weight.same_shape(other.weight) || !bias.same_shape(other.bias)) {
    throw ShapeError("parameter block shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) s += weight[i] * other.weight[i];
  for (std::size_t i = 0; i < bias.size(); ++i) s += bias[i] * other.bias[i];
  return s;
}

void ParamBlock::add_scaled(const ParamBlock& other, double scale) {
  if (!weight.same_shape(other.weight) || !bias.same_shape(other.bias)) {
    throw ShapeError("parameter block shape mismatch");
  }
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] += scale * other.weight[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += scale * other.bias[i];
}

void ParamBlock::scale(double s) {
  for (double& v : weight.data()) v *= s;
  for (double& v : bias.data()) v *= s;
}

std::vector<double> ParamBlock::flatten() const {
  std::vector<double> out(weight.values());
  out.insert(out.end(), bias.values().begin(), bias.values().end());
  return out;
}

void ParamBlock::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw ShapeError("flat vector length does not match parameter block");
  std::copy_n(flat.begin(), weight.size(), weight.data().begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(weight.size()), flat.end(), bias.data().begin());
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  g.reserve(model.layer_count());
  for (const auto& l : model.layers()) g.push_back(ParamBlock::zeros_like(l));
  return g;
}

namespace {

void check_inputs(const Model& model, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.cols() != model.input_dim()) {
    throw ShapeError("input shape " + shape_string(inputs.shape()) + " incompatible with model input width " +
                     std::to_string(model.input_dim()));
  }
  if (inputs.rows() == 0) throw ShapeError("empty batch");
}

/// activations[i] is the input of layer i; activations.back() are the logits.
std::vector<Tensor> run_layers(const Model& model, const Tensor& inputs) {
  check_inputs(model, inputs);
  std::vector<Tensor> acts;
  acts.reserve(model.layer_count() + 1);
  acts.push_back(inputs);
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& l = model.layer(i);
    const Tensor& x = acts.back();
    Tensor y;
    if (l.is_dense()) {
      y = matmul(x, l.weight);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += l.bias[c];
      }
    } else {
      y = x;
      for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    }
    if (!y.all_finite()) throw NumericError("non-finite activation after layer " + std::to_string(i));
    acts.push_back(std::move(y));
  }
  return acts;
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

/// Per-sample losses and d loss_i / d logits_i (unscaled).
struct OutputLoss {
  std::vector<double> losses;
  Tensor dlogits;
};

OutputLoss output_loss(const Tensor& logits, const Targets& targets, bool want_grad) {
  const std::size_t n = logits.rows(), c = logits.cols();
  OutputLoss out;
  out.losses.resize(n);
  if (want_grad) out.dlogits = Tensor::matrix(n, c);

  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, std::vector<int>>) {
          if (t.size() != n) throw ShapeError("label count does not match batch size");
          for (std::size_t i = 0; i < n; ++i) {
            const int y = t[i];
            if (y < 0 || static_cast<std::size_t>(y) >= c) {
              throw ShapeError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
            }
            const auto z = logits.row(i);
            const double lse = log_sum_exp(z);
            out.losses[i] = lse - z[static_cast<std::size_t>(y)];
            if (want_grad) {
              auto g = out.dlogits.row(i);
              for (std::size_t j = 0; j < c; ++j) g[j] = std::exp(z[j] - lse);
              g[static_cast<std::size_t>(y)] -= 1.0;
            }
          }
        } else if constexpr (std::is_same_v<T, SoftLabels>) {
          if (t.probs.rank() != 2 || t.probs.rows() != n || t.probs.cols() != c) {
            throw ShapeError("soft label shape does not match logits");
          }
          for (std::size_t i = 0; i < n; ++i) {
            const auto z = logits.row(i);
            const auto p = t.probs.row(i);
            const double lse = log_sum_exp(z);
            double l = 0.0;
            for (std::size_t j = 0; j < c; ++j) l += p[j] * (lse - z[j]);
            out.losses[i] = l;
            if (want_grad) {
              double mass = 0.0;
              for (double v : p) mass += v;
              auto g = out.dlogits.row(i);
              for (std::size_t j = 0; j < c; ++j) g[j] = mass * std::exp(z[j] - lse) - p[j];
            }
          }
        } else {
          if (t.values.rank() != 2 || t.values.rows() != n || t.values.cols() != c) {
            throw ShapeError("regression target shape does not match outputs");
          }
          for (std::size_t i = 0; i < n; ++i) {
            const auto z = logits.row(i);
            const auto y = t.values.row(i);
            double l = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = z[j] - y[j];
              l += 0.5 * d * d;
              if (want_grad) out.dlogits(i, j) = d;
            }
            out.losses[i] = l;
          }
        }
      },
      targets);

  for (double l : out.losses) {
    if (!std::isfinite(l)) throw NumericError("non-finite loss");
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Backpropagates `dout` (gradient w.r.t. logits). Fills parameter gradients
/// when `params` is non-null and returns the gradient w.r.t. the inputs when
/// `want_input` is set.
Tensor backprop(const Model& model, const std::vector<Tensor>& acts, Tensor dout, Gradients* params,
                bool want_input) {
  for (std::size_t i = model.layer_count(); i-- > 0;) {
    const Layer& l = model.layer(i);
    const Tensor& x = acts[i];
    if (l.is_dense()) {
      if (params && !l.frozen) {
        ParamBlock& g = (*params)[i];
        const std::size_t n = x.rows(), in = l.in_dim(), out = l.out_dim();
        for (std::size_t r = 0; r < n; ++r) {
          const auto xr = x.row(r);
          const auto dr = dout.row(r);
          for (std::size_t a = 0; a < in; ++a) {
            const double xv = xr[a];
            if (xv == 0.0) continue;
            double* gw = &g.weight(a, 0);
            for (std::size_t b = 0; b < out; ++b) gw[b] += xv * dr[b];
          }
          for (std::size_t b = 0; b < out; ++b) g.bias[b] += dr[b];
        }
      }
      const bool need_below = i > 0 || want_input;
      if (!need_below) break;
      Tensor dx = Tensor::matrix(x.rows(), l.in_dim());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto dr = dout.row(r);
        auto dxr = dx.row(r);
        for (std::size_t a = 0; a < l.in_dim(); ++a) {
          const double* w = &l.weight(a, 0);
          double s = 0.0;
          for (std::size_t b = 0; b < l.out_dim(); ++b) s += w[b] * dr[b];
          dxr[a] = s;
        }
      }
      dout = std::move(dx);
    } else {
      for (std::size_t k = 0; k < dout.size(); ++k) {
        if (!(x[k] > 0.0)) dout[k] = 0.0;
      }
    }
  }
  return dout;
}

Batch make_batch(const Tensor& inputs, std::span<const int> labels) {
  return Batch{inputs, std::vector<int>(labels.begin(), labels.end())};
}

}  // namespace

ForwardResult forward(const Model& model, const Batch& batch) {
  auto acts = run_layers(model, batch.inputs);
  auto out = output_loss(acts.back(), batch.targets, false);
  return {mean(out.losses), std::move(acts.back())};
}

ForwardResult forward(const Model& model, const Tensor& inputs, std::span<const int> labels) {
  return forward(model, make_batch(inputs, labels));
}

double loss(const Model& model, const Batch& batch) { return forward(model, batch).loss; }

LossAndGradients value_and_gradients(const Model& model, const Batch& batch) {
  auto acts = run_layers(model, batch.inputs);
  auto out = output_loss(acts.back(), batch.targets, true);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& g : out.dlogits.data()) g *= inv_n;
  LossAndGradients res;
  res.loss = mean(out.losses);
  res.params = zero_gradients(model);
  backprop(model, acts, std::move(out.dlogits), &res.params, false);
  return res;
}

Gradients backward(const Model& model, const Batch& batch) { return value_and_gradients(model, batch).params; }

Gradients backward(const Model& model, const Tensor& inputs, std::span<const int> labels) {
  return backward(model, make_batch(inputs, labels));
}

Tensor input_gradients(const Model& model, const Batch& batch) {
  auto acts = run_layers(model, batch.inputs);
  auto out = output_loss(acts.back(), batch.targets, true);
  return backprop(model, acts, std::move(out.dlogits), nullptr, true);
}

std::vector<double> per_sample_losses(const Model& model, const Batch& batch) {
  auto acts = run_layers(model, batch.inputs);
  return output_loss(acts.back(), batch.targets, false).losses;
}

std::vector<int> predict(const Model& model, const Tensor& inputs) {
  const auto acts = run_layers(model, inputs);
  const Tensor& z = acts.back();
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto r = z.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const Model& model, const Tensor& inputs, std::span<const int> labels) {
  const auto pred = predict(model, inputs);
  if (pred.size() != labels.size()) throw ShapeError("label count does not match batch size");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

void sgd_step(Model& model, const Gradients& grads, double lr, double momentum, SgdState& state) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (grads.size() != model.layer_count()) throw ShapeError("gradient list does not match model layers");
  const bool fresh = state.momentum_buffers.empty();
  if (fresh) state.momentum_buffers = zero_gradients(model);
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    Layer& l = model.mutable_layer(i);
    if (!l.is_dense() || l.frozen) continue;
    const ParamBlock& g = grads[i];
    ParamBlock& buf = state.momentum_buffers[i];
    if (!g.weight.same_shape(l.weight) || !g.bias.same_shape(l.bias)) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(i));
    }
    if (momentum == 0.0) {
      buf = g;
    } else if (fresh) {
      buf = g;
    } else {
      buf.scale(momentum);
      buf.add_scaled(g, 1.0);
    }
    if (lr == 0.0) continue;
    for (std::size_t k = 0; k < l.weight.size(); ++k) l.weight[k] -= lr * buf.weight[k];
    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= lr * buf.bias[k];
  }
}

std::vector<double> flatten_params(const Model& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  for (const auto& l : model.layers()) {
    if (!l.is_dense()) continue;
    flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
    flat.insert(flat.end(), l.bias.values().begin(), l.bias.values().end());
  }
  return flat;
}

Model unflatten_params(const Model& like, std::span<const double> flat) {
  if (flat.size() != like.parameter_count()) {
    throw ShapeError("flat vector has " + std::to_string(flat.size()) + " values, model has " +
                     std::to_string(like.parameter_count()));
  }
  Model out = like;
  std::size_t off = 0;
  for (std::size_t i = 0; i < out.layer_count(); ++i) {
    Layer& l = out.mutable_layer(i);
    if (!l.is_dense()) continue;
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.weight.size(), l.weight.data().begin());
    off += l.weight.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.bias.size(), l.bias.data().begin());
    off += l.bias.size();
  }
  return out;
}

Model perturb_layer(const Model& model, std::size_t l, const ParamBlock& v) {
  const Layer& layer = model.layer(l);
  if (!layer.is_dense()) throw ShapeError("layer " + std::to_string(l) + " has no parameters to perturb");
  if (!v.weight.same_shape(layer.weight) || !v.bias.same_shape(layer.bias)) {
    throw ShapeError("perturbation shape does not match layer " + std::to_string(l));
  }
  Model out = model;
  Layer& target = out.mutable_layer(l);
  for (std::size_t k = 0; k < target.weight.size(); ++k) target.weight[k] += v.weight[k];
  for (std::size_t k = 0; k < target.bias.size(); ++k) target.bias[k] += v.bias[k];
  return out;
}

}  // namespace ulearn
