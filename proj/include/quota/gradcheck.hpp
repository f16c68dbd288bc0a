#pragma once

// Central finite-difference checks for the hand-written gradients.
// Relative error per case is ||analytic - numeric|| / (||analytic|| + ||numeric||).

#include <cstdint>
#include <span>
#include <vector>

#include "quota/nnkit.hpp"

namespace quota::gradcheck {

struct Stats {
  std::size_t cases = 0;
  std::size_t skipped = 0;  // draws rejected for sitting near a kink
  double max_rel_error = 0.0;
};

double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Random (pred, targets, N, kappa) draws; residuals within 1e-4 of 0 or
/// +-kappa are redrawn. Step 1e-6.
Stats check_qr_loss(std::size_t cases, std::uint64_t seed);

/// Random nets of up to 3 layers (dims <= 8, inputs and parameters in
/// [-2, 2]) using `act` on every layer. Relu pre-activations within 1e-4 of 0
/// are redrawn. Step 1e-5 on the scalar dot(output, g).
Stats check_net_params(std::size_t cases, std::uint64_t seed, nn::Activation act);
Stats check_net_input(std::size_t cases, std::uint64_t seed, nn::Activation act);

/// Pre-activations of every layer for one input.
std::vector<std::vector<double>> pre_activations(const nn::DenseNet& net,
                                                 std::span<const double> input);

}  // namespace quota::gradcheck
