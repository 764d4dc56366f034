#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "ulearn/tensor.hpp"

namespace ulearn {

enum class LayerKind { dense, relu };

/// One block of the network. Dense layers compute `x * weight + bias` with
/// weight shaped (in, out); ReLU layers carry no parameters.
struct Layer {
  LayerKind kind = LayerKind::dense;
  Tensor weight;
  Tensor bias;
  bool frozen = false;

  static Layer dense(std::size_t in, std::size_t out);
  static Layer relu();

  bool is_dense() const { return kind == LayerKind::dense; }
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

/// Architecture description: input -> [dense + relu]* -> dense(output).
struct ModelSpec {
  std::size_t input_dim = 12;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 10;
};

class Model {
 public:
  Model() = default;
  explicit Model(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t l) const;
  std::size_t layer_count() const { return layers_.size(); }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  /// Indices (into layers()) of the dense blocks, in order.
  std::vector<std::size_t> dense_indices() const;

  void set_frozen(std::size_t l, bool frozen);
  void freeze_all_except(std::size_t l);
  void unfreeze_all();

  /// Mutable access for optimizers. Shapes must not be changed.
  Layer& mutable_layer(std::size_t l);

  bool operator==(const Model& other) const;

 private:
  std::vector<Layer> layers_;
};

bool operator==(const Layer& a, const Layer& b);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
Model make_model(const ModelSpec& spec, std::uint64_t seed);

/// Weight and bias of one dense layer; also used for gradients and
/// perturbations of that layer. Empty for parameter-free layers.
struct ParamBlock {
  Tensor weight;
  Tensor bias;

  std::size_t size() const { return weight.size() + bias.size(); }
  bool empty() const { return size() == 0; }
  static ParamBlock zeros_like(const Layer& layer);
  double squared_norm() const;
  double dot(const ParamBlock& other) const;
  /// this += scale * other
  void add_scaled(const ParamBlock& other, double scale);
  void scale(double s);
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

using Gradients = std::vector<ParamBlock>;

Gradients zero_gradients(const Model& model);

/// Probability-vector targets (mixup).
struct SoftLabels {
  Tensor probs;
};

/// Real-valued targets, loss is mean over samples of squared error summed
/// over outputs, halved.
struct RegressionTargets {
  Tensor values;
};

/// Integer labels select softmax cross-entropy; the other alternatives select
/// soft cross-entropy and squared error.
using Targets = std::variant<std::vector<int>, SoftLabels, RegressionTargets>;

struct Batch {
  Tensor inputs;
  Targets targets;

  std::size_t size() const { return inputs.rows(); }
};

struct ForwardResult {
  double loss = 0.0;
  Tensor logits;
};

ForwardResult forward(const Model& model, const Tensor& inputs, std::span<const int> labels);
ForwardResult forward(const Model& model, const Batch& batch);
double loss(const Model& model, const Batch& batch);

/// Gradients of the mean loss w.r.t. every unfrozen parameter. Frozen layers
/// get zero blocks.
Gradients backward(const Model& model, const Tensor& inputs, std::span<const int> labels);
Gradients backward(const Model& model, const Batch& batch);

struct LossAndGradients {
  double loss = 0.0;
  Gradients params;
};
LossAndGradients value_and_gradients(const Model& model, const Batch& batch);

/// Row i holds d loss_i / d x_i, the gradient of sample i's own loss.
Tensor input_gradients(const Model& model, const Batch& batch);

std::vector<double> per_sample_losses(const Model& model, const Batch& batch);

/// argmax of the logits per row.
std::vector<int> predict(const Model& model, const Tensor& inputs);
double accuracy(const Model& model, const Tensor& inputs, std::span<const int> labels);

struct SgdState {
  Gradients momentum_buffers;
};

/// buf = momentum * buf + g (buf = g on the first step); theta -= lr * buf.
/// Frozen layers are left untouched.
void sgd_step(Model& model, const Gradients& grads, double lr, double momentum, SgdState& state);

/// Dense layers in order, each as row-major weight then bias.
std::vector<double> flatten_params(const Model& model);
Model unflatten_params(const Model& like, std::span<const double> flat);

/// Copy of `model` with `v` added to dense layer `l`.
Model perturb_layer(const Model& model, std::size_t l, const ParamBlock& v);

}  // namespace ulearn
