#pragma once

// Small fully-connected networks with hand-written reverse-mode derivatives,
// first-order optimizers and target-network synchronization.
//
// Parameters live in one flat vector, layer by layer: the weight matrix
// (out x in, row-major) followed by the bias. Gradient buffers and optimizer
// accumulators share that layout.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "quota/rng.hpp"

namespace quota::nn {

enum class Activation : std::uint32_t { identity = 0, tanh = 1, relu = 2 };

struct LayerSpec {
  std::size_t out = 1;
  Activation activation = Activation::identity;
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// Zero-initialized network.
  DenseNet(std::size_t input_dim, std::span<const LayerSpec> layers);

  /// hidden layers with `hidden_activation`, then an identity output layer.
  static DenseNet mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                      std::size_t output_dim, Activation hidden_activation = Activation::tanh,
                      Activation output_activation = Activation::identity);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<double> bias(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;

  bool same_shape(const DenseNet& other) const;

 private:
  std::size_t input_dim_ = 0;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

/// Fan-in uniform init U(-1/sqrt(in), 1/sqrt(in)); the last layer is scaled by
/// `output_scale`. Biases start at zero.
void initialize(DenseNet& net, Rng& rng, double output_scale = 1.0);

/// Layer inputs and the final output of one forward pass.
struct Trace {
  std::vector<std::vector<double>> values;  // values[0] = input, values[L] = output
  std::span<const double> output() const { return values.back(); }
};

struct GradientBuffer {
  std::vector<double> values;

  GradientBuffer() = default;
  explicit GradientBuffer(const DenseNet& net) : values(net.parameter_count(), 0.0) {}
  void zero();
  void scale(double s);
  void add(const GradientBuffer& other);
  bool finite() const;
};

/// Throws std::invalid_argument on an input-size mismatch.
std::vector<double> forward(const DenseNet& net, std::span<const double> input);
Trace forward_trace(const DenseNet& net, std::span<const double> input);

struct BackwardResult {
  GradientBuffer grads;
  std::vector<double> input_grad;
};

/// Gradient of dot(output, output_grad) with respect to the parameters and the
/// input. The network is not modified.
BackwardResult backward(const DenseNet& net, const Trace& trace,
                        std::span<const double> output_grad);

/// Same, accumulating parameter gradients into `accum`. Returns the input gradient.
std::vector<double> backward_into(const DenseNet& net, const Trace& trace,
                                  std::span<const double> output_grad, GradientBuffer& accum);

/// Input gradient only; skips the parameter gradients.
std::vector<double> input_gradient(const DenseNet& net, const Trace& trace,
                                   std::span<const double> output_grad);

enum class OptimizerKind { sgd, rmsprop, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double learning_rate = 1e-3;
  double decay = 0.99;  // rmsprop
  double epsilon = 1e-8;
  double beta1 = 0.9;  // adam
  double beta2 = 0.999;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, std::size_t n_params);

  /// Descends along `grads`. Returns false and leaves everything untouched if a
  /// gradient is not finite.
  [[nodiscard]] bool step(std::span<double> params, std::span<const double> grads);
  [[nodiscard]] bool step(DenseNet& net, const GradientBuffer& grads) {
    return step(net.params(), grads.values);
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::int64_t t_ = 0;
};

/// Copy of source into target. Throws std::invalid_argument on a shape mismatch.
void sync_hard(DenseNet& target, const DenseNet& source);
/// target <- (1 - tau) * target + tau * source.
void sync_soft(DenseNet& target, const DenseNet& source, double tau);

struct TargetSync {
  enum class Mode { hard, soft };
  Mode mode = Mode::hard;
  std::int64_t every = 200;  // hard mode period, in updates
  double tau = 0.005;        // soft mode blend factor
};

/// Frozen copy of a network plus its synchronization policy.
class TargetNet {
 public:
  TargetNet() = default;
  TargetNet(const DenseNet& source, TargetSync policy) : net_(source), policy_(policy) {}

  /// Call once after every learner update.
  void after_update(const DenseNet& source);
  void sync(const DenseNet& source);

  const DenseNet& net() const { return net_; }
  const TargetSync& policy() const { return policy_; }

 private:
  DenseNet net_;
  TargetSync policy_;
  std::int64_t updates_ = 0;
};

/// Header: u32 input_dim, u32 layer count, then (u32 out, u32 activation) per
/// layer. Body: parameters as little-endian IEEE-754 doubles in flat order.
void save_snapshot(std::ostream& os, const DenseNet& net);
/// Throws std::runtime_error on a truncated or malformed stream.
DenseNet load_snapshot(std::istream& is);

}  // namespace quota::nn
