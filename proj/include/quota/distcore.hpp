#pragma once

// Quantile-distribution mathematics shared by every agent.
//
// A return distribution Z(s,a) is represented by N quantile estimates at the
// midpoint levels (2i-1)/(2N). Estimates are regressed with the asymmetric
// Huber (quantile-Huber) loss.

#include <span>
#include <vector>

namespace quota::dist {

using QuantileVector = std::vector<double>;

struct QuantileLevels {
  std::vector<double> midpoints;
  std::size_t size() const { return midpoints.size(); }
};

struct HuberConfig {
  double kappa = 1.0;
};

/// Midpoint levels (2i-1)/(2n), i = 1..n. Throws std::invalid_argument for n = 0.
QuantileLevels quantile_midpoints(std::size_t n);

double huber(double x, HuberConfig cfg);

/// dL/dx of the Huber loss; x at |x| = kappa takes the quadratic branch.
double huber_derivative(double x, HuberConfig cfg);

/// |tau_hat - 1{u < 0}| * huber(u).
double quantile_huber(double u, double tau_hat, HuberConfig cfg);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d pred[i]
};

/// (1/N) * sum_i sum_j rho_{tau_i}(targets[j] - pred[i]).
///
/// The inner sum over targets is not averaged. pred, targets and levels must
/// share the same length, otherwise std::invalid_argument.
LossAndGrad qr_loss_and_grad(std::span<const double> pred,
                             std::span<const double> targets,
                             const QuantileLevels& levels, HuberConfig cfg);

/// Mean of window j (0-based) of k consecutive quantiles: q[j*k .. j*k+k).
/// Throws std::invalid_argument when the window does not fit.
double window_mean(std::span<const double> q, std::size_t j, std::size_t k);

double mean(std::span<const double> q);

}  // namespace quota::dist
