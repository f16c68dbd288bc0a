#include "quota/nnkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace quota::nn {

DenseNet::DenseNet(std::size_t input_dim, std::span<const LayerSpec> layers)
    : input_dim_(input_dim) {
  if (input_dim == 0) throw std::invalid_argument("DenseNet: input_dim must be positive");
  std::size_t in = input_dim;
  std::size_t offset = 0;
  for (const LayerSpec& spec : layers) {
    if (spec.out == 0) throw std::invalid_argument("DenseNet: empty layer");
    LayerShape shape{in, spec.out, spec.activation, offset, offset + in * spec.out};
    offset = shape.bias_offset + spec.out;
    layers_.push_back(shape);
    in = spec.out;
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                       std::size_t output_dim, Activation hidden_activation,
                       Activation output_activation) {
  std::vector<LayerSpec> specs;
  for (std::size_t h : hidden) specs.push_back({h, hidden_activation});
  specs.push_back({output_dim, output_activation});
  return DenseNet(input_dim, specs);
}

std::span<double> DenseNet::weights(std::size_t layer) {
  const LayerShape& s = layers_.at(layer);
  return std::span<double>(params_).subspan(s.weight_offset, s.in * s.out);
}

std::span<double> DenseNet::bias(std::size_t layer) {
  const LayerShape& s = layers_.at(layer);
  return std::span<double>(params_).subspan(s.bias_offset, s.out);
}

std::span<const double> DenseNet::weights(std::size_t layer) const {
  const LayerShape& s = layers_.at(layer);
  return std::span<const double>(params_).subspan(s.weight_offset, s.in * s.out);
}

std::span<const double> DenseNet::bias(std::size_t layer) const {
  const LayerShape& s = layers_.at(layer);
  return std::span<const double>(params_).subspan(s.bias_offset, s.out);
}

bool DenseNet::same_shape(const DenseNet& other) const {
  if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].out != other.layers_[l].out ||
        layers_[l].activation != other.layers_[l].activation) {
      return false;
    }
  }
  return true;
}

void initialize(DenseNet& net, Rng& rng, double output_scale) {
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layers[l].in));
    const double scale = l + 1 == layers.size() ? output_scale : 1.0;
    for (double& w : net.weights(l)) w = scale * rng.uniform(-bound, bound);
    for (double& b : net.bias(l)) b = 0.0;
  }
}

void GradientBuffer::zero() { std::fill(values.begin(), values.end(), 0.0); }

void GradientBuffer::scale(double s) {
  for (double& v : values) v *= s;
}

void GradientBuffer::add(const GradientBuffer& other) {
  if (other.values.size() != values.size()) {
    throw std::invalid_argument("GradientBuffer::add: shape mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
}

bool GradientBuffer::finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

// Derivative expressed through the activation's output y.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

void affine(const DenseNet& net, std::size_t l, std::span<const double> x, std::vector<double>& y) {
  const LayerShape& s = net.layers()[l];
  const auto w = net.weights(l);
  const auto b = net.bias(l);
  y.resize(s.out);
  for (std::size_t o = 0; o < s.out; ++o) {
    const double* row = w.data() + o * s.in;
    double acc = b[o];
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
    y[o] = activate(s.activation, acc);
  }
}

void check_input(const DenseNet& net, std::span<const double> input) {
  if (input.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) +
                                " entries, network expects " + std::to_string(net.input_dim()));
  }
}

}  // namespace

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  check_input(net, input);
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    affine(net, l, x, y);
    x.swap(y);
  }
  return x;
}

Trace forward_trace(const DenseNet& net, std::span<const double> input) {
  check_input(net, input);
  Trace trace;
  trace.values.resize(net.layers().size() + 1);
  trace.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    affine(net, l, trace.values[l], trace.values[l + 1]);
  }
  return trace;
}

std::vector<double> backward_into(const DenseNet& net, const Trace& trace,
                                  std::span<const double> output_grad, GradientBuffer& accum) {
  const auto& layers = net.layers();
  if (trace.values.size() != layers.size() + 1 || output_grad.size() != net.output_dim() ||
      accum.values.size() != net.parameter_count()) {
    throw std::invalid_argument("backward: trace, output_grad or buffer does not match network");
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> next;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerShape& s = layers[l];
    const auto& x = trace.values[l];
    const auto& y = trace.values[l + 1];
    for (std::size_t o = 0; o < s.out; ++o) delta[o] *= activation_slope(s.activation, y[o]);

    double* gw = accum.values.data() + s.weight_offset;
    double* gb = accum.values.data() + s.bias_offset;
    const auto w = net.weights(l);
    next.assign(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* grow = gw + o * s.in;
      const double* wrow = w.data() + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) {
        grow[i] += d * x[i];
        next[i] += d * wrow[i];
      }
    }
    delta.swap(next);
  }
  return delta;
}

std::vector<double> input_gradient(const DenseNet& net, const Trace& trace,
                                   std::span<const double> output_grad) {
  const auto& layers = net.layers();
  if (trace.values.size() != layers.size() + 1 || output_grad.size() != net.output_dim()) {
    throw std::invalid_argument("input_gradient: trace or output_grad does not match network");
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> next;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerShape& s = layers[l];
    const auto& y = trace.values[l + 1];
    const auto w = net.weights(l);
    next.assign(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o] * activation_slope(s.activation, y[o]);
      const double* wrow = w.data() + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) next[i] += d * wrow[i];
    }
    delta.swap(next);
  }
  return delta;
}

BackwardResult backward(const DenseNet& net, const Trace& trace,
                        std::span<const double> output_grad) {
  BackwardResult out{GradientBuffer(net), {}};
  out.input_grad = backward_into(net, trace, output_grad, out.grads);
  return out;
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t n_params) : cfg_(cfg) {
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (cfg.kind != OptimizerKind::sgd) second_.assign(n_params, 0.0);
  if (cfg.kind == OptimizerKind::adam) first_.assign(n_params, 0.0);
}

bool Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (grads.size() != params.size()) throw std::invalid_argument("optimizer: shape mismatch");
  if (cfg_.kind != OptimizerKind::sgd && second_.size() != params.size()) {
    throw std::invalid_argument("optimizer: state built for a different network");
  }
  if (!std::all_of(grads.begin(), grads.end(), [](double g) { return std::isfinite(g); })) {
    return false;
  }
  ++t_;
  const double lr = cfg_.learning_rate;
  switch (cfg_.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
      break;
    case OptimizerKind::rmsprop:
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        second_[i] = cfg_.decay * second_[i] + (1.0 - cfg_.decay) * g * g;
        params[i] -= lr * g / (std::sqrt(second_[i]) + cfg_.epsilon);
      }
      break;
    case OptimizerKind::adam: {
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        first_[i] = cfg_.beta1 * first_[i] + (1.0 - cfg_.beta1) * g;
        second_[i] = cfg_.beta2 * second_[i] + (1.0 - cfg_.beta2) * g * g;
        params[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + cfg_.epsilon);
      }
      break;
    }
  }
  return true;
}

void sync_hard(DenseNet& target, const DenseNet& source) {
  if (!target.same_shape(source)) throw std::invalid_argument("sync: shape mismatch");
  std::copy(source.params().begin(), source.params().end(), target.params().begin());
}

void sync_soft(DenseNet& target, const DenseNet& source, double tau) {
  if (!target.same_shape(source)) throw std::invalid_argument("sync: shape mismatch");
  auto t = target.params();
  const auto s = source.params();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * s[i];
}

void TargetNet::sync(const DenseNet& source) {
  if (policy_.mode == TargetSync::Mode::hard) {
    sync_hard(net_, source);
  } else {
    sync_soft(net_, source, policy_.tau);
  }
}

void TargetNet::after_update(const DenseNet& source) {
  ++updates_;
  if (policy_.mode == TargetSync::Mode::soft) {
    sync_soft(net_, source, policy_.tau);
  } else if (policy_.every > 0 && updates_ % policy_.every == 0) {
    sync_hard(net_, source);
  }
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

std::uint64_t get_bytes(std::istream& is, int n) {
  unsigned char b[8] = {};
  if (!is.read(reinterpret_cast<char*>(b), n)) {
    throw std::runtime_error("snapshot: unexpected end of stream");
  }
  std::uint64_t v = 0;
  for (int i = n; i-- > 0;) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_snapshot(std::ostream& os, const DenseNet& net) {
  put_u32(os, static_cast<std::uint32_t>(net.input_dim()));
  put_u32(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const LayerShape& s : net.layers()) {
    put_u32(os, static_cast<std::uint32_t>(s.out));
    put_u32(os, static_cast<std::uint32_t>(s.activation));
  }
  for (double p : net.params()) put_f64(os, p);
}

DenseNet load_snapshot(std::istream& is) {
  const auto input_dim = static_cast<std::size_t>(get_bytes(is, 4));
  const auto n_layers = static_cast<std::size_t>(get_bytes(is, 4));
  if (input_dim == 0 || n_layers > 4096) throw std::runtime_error("snapshot: malformed header");
  std::vector<LayerSpec> specs(n_layers);
  for (LayerSpec& s : specs) {
    s.out = static_cast<std::size_t>(get_bytes(is, 4));
    const auto act = static_cast<std::uint32_t>(get_bytes(is, 4));
    if (act > 2 || s.out == 0) throw std::runtime_error("snapshot: malformed layer");
    s.activation = static_cast<Activation>(act);
  }
  DenseNet net(input_dim, specs);
  for (double& p : net.params()) p = std::bit_cast<double>(get_bytes(is, 8));
  return net;
}

}  // namespace quota::nn
