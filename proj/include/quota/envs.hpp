#pragma once

// Diagnostic chain MDPs and a one-dimensional continuous reaching task.

#include <span>
#include <vector>

#include "quota/rng.hpp"

namespace quota::env {

struct DiscreteEnvSpec {
  int n_states = 1;  // non-terminal states
  int n_actions = 1;
  double gamma = 1.0;
};

/// Terminal marker; non-terminal chain states are 1..N.
inline constexpr int kTerminal = 0;

enum ChainAction : int { kLeft = 0, kUp = 1 };
/// Marker for "no unique greedy action" in derived policies.
inline constexpr int kNoAction = -1;

enum class ChainVariant { chain1, chain2 };

struct ChainConfig {
  int length = 10;
  ChainVariant variant = ChainVariant::chain1;
  double left_reward_variance = 1.0;  // chain 1 LEFT noise
  double up_reward_variance = 0.2;    // chain 2 UP noise
  double goal_reward = 10.0;
  double left_cost = -0.1;  // chain 2 LEFT reward before the goal
};

struct StepResult {
  int next_state = kTerminal;
  double reward = 0.0;
  bool terminal = false;
};

DiscreteEnvSpec chain_spec(const ChainConfig& cfg);

/// One transition of the chain. Throws std::invalid_argument for a state
/// outside 1..length or an unknown action.
StepResult chain_step(const ChainConfig& cfg, int state, int action, Rng& rng);

/// True iff every entry is LEFT. Throws on an empty policy.
bool chain_optimal_policy_check(std::span<const int> policy_actions);

/// Episodic wrapper with one-hot observations, used by the deep agents.
class ChainEnv {
 public:
  explicit ChainEnv(ChainConfig cfg);

  int reset() { state_ = 1; return state_; }
  StepResult step(int action, Rng& rng);

  int state() const { return state_; }
  const ChainConfig& config() const { return cfg_; }
  std::size_t observation_size() const { return static_cast<std::size_t>(cfg_.length); }
  std::size_t n_actions() const { return 2; }

  /// One-hot encoding of a non-terminal state (all zeros for the terminal).
  std::vector<double> observe(int state) const;

 private:
  ChainConfig cfg_;
  int state_ = 1;
};

// ---------------------------------------------------------------------------
// reach1d: move a point on [-1, 1] toward the origin. Noise is added to the
// reward only on the negative half-line.

struct Reach1dConfig {
  double step_scale = 0.2;
  double noise_variance = 0.1;
  int horizon = 32;
  double gamma = 0.99;
};

struct ContinuousEnvState {
  double position = 0.0;
  int steps_elapsed = 0;
};

struct ContinuousStep {
  ContinuousEnvState next;
  double reward = 0.0;
  bool terminal = false;
};

ContinuousEnvState reach1d_reset(Rng& rng);

/// Caller clamps the action to [-1, 1].
ContinuousStep reach1d_step(const ContinuousEnvState& state, double action, Rng& rng,
                            const Reach1dConfig& cfg = {});

/// Action that moves straight to the origin (or as far as one step allows).
double reach1d_greedy_action(double position, const Reach1dConfig& cfg = {});

struct ReturnStats {
  double mean = 0.0;
  double std_err = 0.0;
};

/// Monte-Carlo mean undiscounted episodic return of the uniform-random policy.
ReturnStats reach1d_random_baseline(std::size_t episodes, std::uint64_t seed,
                                    const Reach1dConfig& cfg = {});
/// Same for the greedy-step policy.
ReturnStats reach1d_oracle_baseline(std::size_t episodes, std::uint64_t seed,
                                    const Reach1dConfig& cfg = {});

}  // namespace quota::env
