#include "quota/distcore.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace quota::dist {

QuantileLevels quantile_midpoints(std::size_t n) {
  if (n == 0) throw std::invalid_argument("quantile_midpoints: n must be >= 1");
  QuantileLevels levels;
  levels.midpoints.resize(n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    levels.midpoints[i] = (2.0 * static_cast<double>(i) + 1.0) / denom;
  }
  return levels;
}

double huber(double x, HuberConfig cfg) {
  const double ax = std::abs(x);
  if (ax <= cfg.kappa) return 0.5 * x * x;
  return cfg.kappa * (ax - 0.5 * cfg.kappa);
}

double huber_derivative(double x, HuberConfig cfg) {
  if (std::abs(x) <= cfg.kappa) return x;
  return x > 0.0 ? cfg.kappa : -cfg.kappa;
}

double quantile_huber(double u, double tau_hat, HuberConfig cfg) {
  const double weight = std::abs(tau_hat - (u < 0.0 ? 1.0 : 0.0));
  return weight * huber(u, cfg);
}

LossAndGrad qr_loss_and_grad(std::span<const double> pred,
                             std::span<const double> targets,
                             const QuantileLevels& levels, HuberConfig cfg) {
  const std::size_t n = pred.size();
  if (targets.size() != n || levels.size() != n) {
    throw std::invalid_argument("qr_loss_and_grad: length mismatch (pred " + std::to_string(n) +
                                ", targets " + std::to_string(targets.size()) + ", levels " +
                                std::to_string(levels.size()) + ")");
  }
  LossAndGrad out;
  out.grad.assign(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = levels.midpoints[i];
    double g = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double u = targets[j] - pred[i];
      const double weight = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
      out.loss += weight * huber(u, cfg);
      // du/dpred = -1
      g -= weight * huber_derivative(u, cfg);
    }
    out.grad[i] = g * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

double window_mean(std::span<const double> q, std::size_t j, std::size_t k) {
  if (k == 0 || (j + 1) * k > q.size()) {
    throw std::invalid_argument("window_mean: window " + std::to_string(j) + " of size " +
                                std::to_string(k) + " exceeds " + std::to_string(q.size()) +
                                " quantiles");
  }
  const auto first = q.begin() + static_cast<std::ptrdiff_t>(j * k);
  return std::accumulate(first, first + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

double mean(std::span<const double> q) {
  if (q.empty()) return 0.0;
  return std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
}

}  // namespace quota::dist
