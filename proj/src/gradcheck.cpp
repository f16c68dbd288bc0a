#include "quota/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "quota/distcore.hpp"
#include "quota/rng.hpp"

namespace quota::gradcheck {

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0;
  double na = 0.0;
  double nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn_);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

namespace {

bool near_kink(std::span<const double> pred, std::span<const double> targets, double kappa) {
  for (double t : targets) {
    for (double p : pred) {
      const double u = t - p;
      if (std::abs(u) < 1e-4 || std::abs(std::abs(u) - kappa) < 1e-4) return true;
    }
  }
  return false;
}

std::vector<double> uniform_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

nn::DenseNet random_net(Rng& rng, nn::Activation act) {
  const std::size_t in = 1 + rng.index(8);
  std::vector<nn::LayerSpec> specs;
  for (std::size_t l = 0; l < 3; ++l) specs.push_back({1 + rng.index(8), act});
  nn::DenseNet net(in, specs);
  nn::initialize(net, rng);
  for (double& p : net.params()) p += rng.uniform(-0.1, 0.1);
  return net;
}

bool relu_near_kink(const nn::DenseNet& net, std::span<const double> x) {
  for (const auto& layer : pre_activations(net, x)) {
    for (double z : layer) {
      if (std::abs(z) < 1e-4) return true;
    }
  }
  return false;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename Check>
Stats run_net_cases(std::size_t cases, std::uint64_t seed, nn::Activation act, Check&& check) {
  Stats st;
  Rng rng(seed);
  while (st.cases < cases) {
    nn::DenseNet net = random_net(rng, act);
    const auto x = uniform_vector(net.input_dim(), rng);
    const auto g = uniform_vector(net.output_dim(), rng);
    if (act == nn::Activation::relu && relu_near_kink(net, x)) {
      ++st.skipped;
      continue;
    }
    st.max_rel_error = std::max(st.max_rel_error, check(net, x, g));
    ++st.cases;
  }
  return st;
}

}  // namespace

std::vector<std::vector<double>> pre_activations(const nn::DenseNet& net,
                                                 std::span<const double> input) {
  std::vector<std::vector<double>> out;
  const nn::Trace trace = nn::forward_trace(net, input);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& shape = net.layers()[l];
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    const auto& x = trace.values[l];
    std::vector<double> z(shape.out);
    for (std::size_t o = 0; o < shape.out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < shape.in; ++i) s += w[o * shape.in + i] * x[i];
      z[o] = s;
    }
    out.push_back(std::move(z));
  }
  return out;
}

Stats check_qr_loss(std::size_t cases, std::uint64_t seed) {
  constexpr double h = 1e-6;
  Stats st;
  Rng rng(seed);
  while (st.cases < cases) {
    const std::size_t n = 1 + rng.index(8);
    const double kappa = rng.uniform(0.1, 2.0);
    auto pred = uniform_vector(n, rng);
    const auto targets = uniform_vector(n, rng);
    if (near_kink(pred, targets, kappa)) {
      ++st.skipped;
      continue;
    }
    const auto levels = dist::quantile_midpoints(n);
    const dist::HuberConfig cfg{kappa};
    const auto lg = dist::qr_loss_and_grad(pred, targets, levels, cfg);
    std::vector<double> numeric(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = pred[i];
      pred[i] = keep + h;
      const double up = dist::qr_loss_and_grad(pred, targets, levels, cfg).loss;
      pred[i] = keep - h;
      const double down = dist::qr_loss_and_grad(pred, targets, levels, cfg).loss;
      pred[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    st.max_rel_error = std::max(st.max_rel_error, relative_error(lg.grad, numeric));
    ++st.cases;
  }
  return st;
}

Stats check_net_params(std::size_t cases, std::uint64_t seed, nn::Activation act) {
  constexpr double h = 1e-5;
  return run_net_cases(cases, seed, act,
                       [](nn::DenseNet& net, const std::vector<double>& x,
                          const std::vector<double>& g) {
                         const auto analytic = nn::backward(net, nn::forward_trace(net, x), g);
                         std::vector<double> numeric(net.parameter_count());
                         auto p = net.params();
                         for (std::size_t k = 0; k < p.size(); ++k) {
                           const double keep = p[k];
                           p[k] = keep + h;
                           const double up = dot(nn::forward(net, x), g);
                           p[k] = keep - h;
                           const double down = dot(nn::forward(net, x), g);
                           p[k] = keep;
                           numeric[k] = (up - down) / (2.0 * h);
                         }
                         return relative_error(analytic.grads.values, numeric);
                       });
}

Stats check_net_input(std::size_t cases, std::uint64_t seed, nn::Activation act) {
  constexpr double h = 1e-5;
  return run_net_cases(cases, seed, act,
                       [](nn::DenseNet& net, const std::vector<double>& x0,
                          const std::vector<double>& g) {
                         const auto analytic = nn::backward(net, nn::forward_trace(net, x0), g);
                         std::vector<double> x = x0;
                         std::vector<double> numeric(x.size());
                         for (std::size_t k = 0; k < x.size(); ++k) {
                           x[k] = x0[k] + h;
                           const double up = dot(nn::forward(net, x), g);
                           x[k] = x0[k] - h;
                           const double down = dot(nn::forward(net, x), g);
                           x[k] = x0[k];
                           numeric[k] = (up - down) / (2.0 * h);
                         }
                         return relative_error(analytic.input_grad, numeric);
                       });
}

}  // namespace quota::gradcheck
