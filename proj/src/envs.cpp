#include "quota/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace quota::env {

DiscreteEnvSpec chain_spec(const ChainConfig& cfg) {
  if (cfg.length < 1) throw std::invalid_argument("chain length must be >= 1");
  return DiscreteEnvSpec{cfg.length, 2, 1.0};
}

StepResult chain_step(const ChainConfig& cfg, int state, int action, Rng& rng) {
  if (state < 1 || state > cfg.length) {
    throw std::invalid_argument("chain_step: state " + std::to_string(state) + " outside 1.." +
                                std::to_string(cfg.length));
  }
  const bool chain1 = cfg.variant == ChainVariant::chain1;
  switch (action) {
    case kUp: {
      const double r = chain1 ? 0.0 : rng.normal(0.0, std::sqrt(cfg.up_reward_variance));
      return {kTerminal, r, true};
    }
    case kLeft: {
      if (state == cfg.length) return {kTerminal, cfg.goal_reward, true};
      const double r = chain1 ? rng.normal(0.0, std::sqrt(cfg.left_reward_variance)) : cfg.left_cost;
      return {state + 1, r, false};
    }
    default:
      throw std::invalid_argument("chain_step: unknown action " + std::to_string(action));
  }
}

bool chain_optimal_policy_check(std::span<const int> policy_actions) {
  if (policy_actions.empty()) {
    throw std::invalid_argument("chain_optimal_policy_check: empty policy");
  }
  return std::all_of(policy_actions.begin(), policy_actions.end(),
                     [](int a) { return a == kLeft; });
}

ChainEnv::ChainEnv(ChainConfig cfg) : cfg_(cfg) { chain_spec(cfg_); }

StepResult ChainEnv::step(int action, Rng& rng) {
  StepResult r = chain_step(cfg_, state_, action, rng);
  state_ = r.terminal ? 1 : r.next_state;
  return r;
}

std::vector<double> ChainEnv::observe(int state) const {
  std::vector<double> x(observation_size(), 0.0);
  if (state >= 1 && state <= cfg_.length) x[static_cast<std::size_t>(state - 1)] = 1.0;
  return x;
}

ContinuousEnvState reach1d_reset(Rng& rng) { return {rng.uniform(-1.0, 1.0), 0}; }

ContinuousStep reach1d_step(const ContinuousEnvState& state, double action, Rng& rng,
                            const Reach1dConfig& cfg) {
  ContinuousStep out;
  out.next.position = std::clamp(state.position + cfg.step_scale * action, -1.0, 1.0);
  out.next.steps_elapsed = state.steps_elapsed + 1;
  const double p = out.next.position;
  const double noise = p < 0.0 ? rng.normal(0.0, std::sqrt(cfg.noise_variance)) : 0.0;
  out.reward = -p * p + noise;
  out.terminal = out.next.steps_elapsed >= cfg.horizon;
  return out;
}

double reach1d_greedy_action(double position, const Reach1dConfig& cfg) {
  return std::clamp(-position / cfg.step_scale, -1.0, 1.0);
}

namespace {

template <typename Policy>
ReturnStats rollout_stats(std::size_t episodes, std::uint64_t seed, const Reach1dConfig& cfg,
                          Policy&& policy) {
  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    ContinuousEnvState s = reach1d_reset(rng);
    double ret = 0.0;
    for (;;) {
      const ContinuousStep st = reach1d_step(s, policy(s.position, rng), rng, cfg);
      ret += st.reward;
      s = st.next;
      if (st.terminal) break;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double n = static_cast<double>(episodes);
  const double m = sum / n;
  const double var = episodes > 1 ? (sum_sq - n * m * m) / (n - 1.0) : 0.0;
  return {m, std::sqrt(std::max(var, 0.0) / n)};
}

}  // namespace

ReturnStats reach1d_random_baseline(std::size_t episodes, std::uint64_t seed,
                                    const Reach1dConfig& cfg) {
  return rollout_stats(episodes, seed, cfg,
                       [](double, Rng& rng) { return rng.uniform(-1.0, 1.0); });
}

ReturnStats reach1d_oracle_baseline(std::size_t episodes, std::uint64_t seed,
                                    const Reach1dConfig& cfg) {
  return rollout_stats(episodes, seed, cfg,
                       [&cfg](double p, Rng&) { return reach1d_greedy_action(p, cfg); });
}

}  // namespace quota::env
