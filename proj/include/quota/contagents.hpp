#pragma once

// Continuous-action agents: DDPG, quantile-regression DDPG and continuous
// QUOTA (M quantile actors plus a mean actor, selected by an option-value net).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "quota/distcore.hpp"
#include "quota/envs.hpp"
#include "quota/nnkit.hpp"
#include "quota/rng.hpp"
#include "quota/schedule.hpp"
#include "quota/tabular.hpp"

namespace quota::cont {

/// Ornstein-Uhlenbeck exploration noise.
struct NoiseProcess {
  double theta = 0.15;
  double sigma = 0.2;
  double dt = 1.0;
  double x = 0.0;

  void reset() { x = 0.0; }
};

/// x <- x + theta * (0 - x) * dt + sigma * sqrt(dt) * N(0, 1); returns x.
double ou_step(NoiseProcess& np, Rng& rng);

struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool terminal = false;
  std::size_t option = 0;
};

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  /// Indices into the buffer. Throws std::logic_error when size() < batch.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

using Batch = std::span<const Transition* const>;

/// Gradient of the actor objective with respect to the action, evaluated at
/// (obs, action). The actor ascends this direction.
using ActionGradient =
    std::function<std::vector<double>(std::span<const double> obs, std::span<const double> action)>;

/// Descent-direction gradient for the actor parameters: -(1/B) sum_b
/// dmu/dphi^T * action_grad(s_b, mu(s_b)).
nn::GradientBuffer actor_gradient(const nn::DenseNet& actor, Batch batch,
                                  const ActionGradient& action_grad);

/// Action gradient of dot(weights, critic(s, a)); weights = 1/N gives the
/// quantile mean, a one-hot window of 1/K gives a window mean.
ActionGradient critic_action_gradient(const nn::DenseNet& critic, std::vector<double> weights);

std::vector<double> concat(std::span<const double> a, std::span<const double> b);

struct CriticGrad {
  nn::GradientBuffer grads;
  double loss = 0.0;
};

/// Scalar critic: mean over the batch of 1/2 (r + gamma Q'(s', mu'(s')) - Q(s, a))^2.
CriticGrad ddpg_critic_gradient(const nn::DenseNet& critic, const nn::DenseNet& target_actor,
                                const nn::DenseNet& target_critic, Batch batch, double gamma);

/// Quantile critic targets y_i = r + gamma q_i'(s', mu'(s')), terminal-masked.
std::vector<double> quantile_critic_targets(const Transition& t, const nn::DenseNet& target_actor,
                                            const nn::DenseNet& target_critic, double gamma);

/// Quantile critic: batch mean of the QR loss against quantile_critic_targets.
CriticGrad qr_critic_gradient(const nn::DenseNet& critic, const nn::DenseNet& target_actor,
                              const nn::DenseNet& target_critic, Batch batch, double gamma,
                              const dist::QuantileLevels& levels, double kappa);

struct ActorCritic {
  nn::DenseNet actor;
  nn::DenseNet critic;
  nn::DenseNet target_actor;
  nn::DenseNet target_critic;
  nn::Optimizer actor_opt;
  nn::Optimizer critic_opt;
};

struct UpdateConfig {
  double gamma = 0.99;
  double kappa = 1.0;
  double tau_soft = 0.005;
  double beta = 1.0;
};

struct UpdateReport {
  bool applied = false;
  double critic_loss = 0.0;
  double option_loss = 0.0;
};

/// Critic step, then actor ascent on Q(s, mu(s)), then soft target sync.
UpdateReport ddpg_update(ActorCritic& ac, Batch batch, const UpdateConfig& cfg);

/// Same with a quantile critic; the actor ascends the quantile mean.
UpdateReport qr_ddpg_update(ActorCritic& ac, Batch batch, const dist::QuantileLevels& levels,
                            const UpdateConfig& cfg);

/// Continuous QUOTA. actors[0] is the mean actor, actors[j] (j = 1..M) is the
/// quantile actor for window j-1. The option net maps state -> M+1 values.
struct QuotaAgent {
  std::vector<nn::DenseNet> actors;
  std::vector<nn::DenseNet> target_actors;
  std::vector<nn::Optimizer> actor_opts;
  nn::DenseNet critic;
  nn::DenseNet target_critic;
  nn::Optimizer critic_opt;
  nn::DenseNet option_net;
  nn::DenseNet target_option_net;
  nn::Optimizer option_opt;
  std::size_t window = 4;

  std::size_t m_quantile_actors() const { return actors.size() - 1; }
};

/// Objective weights over the critic output for actor j.
std::vector<double> actor_objective_weights(std::size_t actor, std::size_t n_quantiles,
                                            std::size_t window);

struct ContinuousDecision {
  std::vector<double> action;
  std::size_t option = 0;
};

/// Reselects the option (keep w.p. 1-beta, else epsilon_omega-greedy on the
/// option net), then acts with that actor plus one OU sample per action
/// dimension, clamped to [-1, 1].
ContinuousDecision quota_continuous_step(const QuotaAgent& agent, std::span<const double> obs,
                                         tabular::OptionState& ostate, double epsilon_omega,
                                         double beta, NoiseProcess& noise, Rng& rng);

UpdateReport quota_continuous_update(QuotaAgent& agent, Batch batch,
                                     const dist::QuantileLevels& levels, const UpdateConfig& cfg);

enum class ContAlgorithm { ddpg, qr_ddpg, quota };
ContAlgorithm parse_cont_algorithm(std::string_view id);

struct ContConfig {
  ContAlgorithm algorithm = ContAlgorithm::quota;
  env::Reach1dConfig env;
  std::vector<std::size_t> hidden{64};
  std::size_t n_quantiles = 20;
  std::size_t m_options = 5;  // quantile actors, plus the mean actor
  std::size_t replay_capacity = 100000;
  std::size_t batch = 64;
  std::int64_t learning_starts = 1000;
  double tau_soft = 0.005;
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double kappa = 1.0;
  double beta = 1.0;
  Schedule epsilon_omega = Schedule::linear(1.0, 0.0, 50000);
  NoiseProcess noise;
  std::int64_t total_steps = 50000;
  std::int64_t eval_every = 10000;
  std::size_t eval_episodes = 20;
  std::uint64_t seed = 0;
};

ContConfig default_cont_config(ContAlgorithm algo, std::int64_t total_steps);

struct EvalRow {
  std::int64_t train_step = 0;
  double mean_return = 0.0;
  double std_err = 0.0;
};

struct ContTrainingResult {
  std::vector<EvalRow> eval_log;
  std::int64_t skipped_updates = 0;
  bool aborted = false;
  ActorCritic ac;  // ddpg / qr_ddpg
  QuotaAgent quota;
  std::vector<std::size_t> option_events;
};

/// Deterministic policy used for evaluation: the actor (or, for QUOTA, the
/// actor of the greedy option) without noise.
std::vector<double> greedy_action(const ContTrainingResult& res, ContAlgorithm algo,
                                  std::span<const double> obs);

ContTrainingResult train_continuous(const ContConfig& cfg);

/// Undiscounted mean return (and standard error) of the deterministic policy
/// over `episodes` episodes. Episodes are independent and may run in parallel.
env::ReturnStats evaluate_policy(
    const std::function<std::vector<double>(std::span<const double>)>& policy,
    std::size_t episodes, std::uint64_t seed, const env::Reach1dConfig& env_cfg);

}  // namespace quota::cont
