#pragma once

// Function-approximation agents for discrete actions: QR-DQN and deep QUOTA,
// trained from synchronous multi-worker n-step rollouts.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "quota/distcore.hpp"
#include "quota/envs.hpp"
#include "quota/nnkit.hpp"
#include "quota/rng.hpp"
#include "quota/schedule.hpp"
#include "quota/tabular.hpp"

namespace quota::deep {

/// Shared tanh trunk feeding a quantile head (|A| x N values) and, for QUOTA,
/// an option-value head (M values).
class QuantileNet {
 public:
  QuantileNet() = default;
  QuantileNet(std::size_t obs_dim, std::size_t n_actions, std::size_t n_quantiles,
              std::span<const std::size_t> hidden, std::size_t m_options);

  void initialize(Rng& rng);

  struct Output {
    nn::Trace trunk;
    nn::Trace quantile_head;
    nn::Trace option_head;
    std::span<const double> quantiles() const { return quantile_head.output(); }
    std::span<const double> options() const;
  };

  Output evaluate(std::span<const double> obs) const;
  /// Quantile output only, no traces.
  std::vector<double> quantiles(std::span<const double> obs) const;
  std::vector<double> option_values(std::span<const double> obs) const;

  struct Grads {
    nn::GradientBuffer trunk;
    nn::GradientBuffer quantile_head;
    nn::GradientBuffer option_head;
    void zero();
    void scale(double s);
    bool finite() const;
  };
  Grads make_grads() const;

  /// Accumulates gradients of dot(quantiles, quantile_grad) + dot(options, option_grad).
  /// Either span may be empty to skip that head.
  void backward(const Output& out, std::span<const double> quantile_grad,
                std::span<const double> option_grad, Grads& grads) const;

  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_quantiles() const { return n_quantiles_; }
  std::size_t m_options() const { return m_options_; }
  bool has_option_head() const { return m_options_ > 0; }

  nn::DenseNet trunk;
  nn::DenseNet quantile_head;
  nn::DenseNet option_head;

 private:
  std::size_t n_actions_ = 0;
  std::size_t n_quantiles_ = 0;
  std::size_t m_options_ = 0;
};

/// Slice of the flat quantile output for one action.
std::span<const double> action_quantiles(std::span<const double> flat, std::size_t n_quantiles,
                                         std::size_t action);

/// Action whose quantile mean is largest (lowest index on ties).
std::size_t greedy_mean_action(std::span<const double> flat, std::size_t n_actions,
                               std::size_t n_quantiles);

class Optimizers {
 public:
  Optimizers() = default;
  Optimizers(const QuantileNet& net, nn::OptimizerConfig cfg);
  /// One step over all parts; false (and nothing applied) if any gradient is non-finite.
  [[nodiscard]] bool step(QuantileNet& net, const QuantileNet::Grads& grads);

 private:
  nn::Optimizer trunk_;
  nn::Optimizer quantile_head_;
  nn::Optimizer option_head_;
};

void sync_hard(QuantileNet& target, const QuantileNet& source);

struct SegmentStep {
  std::vector<double> obs;
  int state = 1;
  int action = 0;
  std::size_t option = 0;         // option active when the action was taken
  std::size_t greedy_option = 0;  // argmax of the option head at obs
  double reward = 0.0;
  bool terminal = false;
};

struct RolloutSegment {
  std::vector<SegmentStep> steps;
  /// Observation after the last step; empty when the segment ended at a terminal.
  std::vector<double> bootstrap_obs;
  std::vector<double> finished_returns;  // episodes completed during the segment

  bool bootstraps() const { return !bootstrap_obs.empty(); }
  /// Observation following step t, or nullptr if step t was terminal.
  const std::vector<double>* next_obs(std::size_t t) const;
};

struct Worker {
  env::ChainEnv env;
  Rng rng;
  int state = 1;
  tabular::OptionState option_state;
  double episode_return = 0.0;
};

struct Decision {
  int action = 0;
  std::size_t option = 0;
  std::size_t greedy_option = 0;
};

/// Behaviour policy called once per worker step. Must only read shared state.
using BehaviourPolicy =
    std::function<Decision(std::span<const double> obs, tabular::OptionState&, Rng&)>;

class WorkerPool {
 public:
  /// Worker i owns the random stream seeded with seed ^ i.
  WorkerPool(const env::ChainConfig& chain, std::size_t n_workers, std::uint64_t seed);

  std::size_t size() const { return workers_.size(); }
  std::vector<Worker>& workers() { return workers_; }

 private:
  std::vector<Worker> workers_;
};

/// Steps every worker up to n times. A terminal resets that worker's
/// environment and option state and truncates its segment. Workers run in
/// parallel; the result is identical to collect_segments_serial.
std::vector<RolloutSegment> collect_segments(WorkerPool& pool, const BehaviourPolicy& policy,
                                             std::size_t n);
std::vector<RolloutSegment> collect_segments_serial(WorkerPool& pool,
                                                    const BehaviourPolicy& policy, std::size_t n);

/// Per-step targets y_t = sum_l gamma^l r_{t+l} + gamma^L q(s_bootstrap, a*; target)
/// where a* maximizes the target net's quantile mean; no bootstrap after a terminal.
std::vector<dist::QuantileVector> nstep_quantile_targets(const RolloutSegment& segment,
                                                         const QuantileNet& target_net,
                                                         double gamma);

struct UpdateConfig {
  double gamma = 1.0;
  double kappa = 1.0;
  double beta = 0.01;
};

struct UpdateResult {
  bool applied = false;
  double loss = 0.0;  // quantile loss averaged over the batch
  double option_loss = 0.0;
};

/// One optimizer step on the averaged QR loss of every (worker, t) pair.
UpdateResult qr_dqn_update(QuantileNet& net, const QuantileNet& target_net,
                           std::span<const RolloutSegment> segments, Optimizers& optimizers,
                           const dist::QuantileLevels& levels, const UpdateConfig& cfg);

/// QR loss as in qr_dqn_update plus the one-step intra-option loss on the
/// option head, both flowing into the trunk in a single step.
UpdateResult quota_deep_update(QuantileNet& net, const QuantileNet& target_net,
                               std::span<const RolloutSegment> segments, Optimizers& optimizers,
                               const dist::QuantileLevels& levels, const UpdateConfig& cfg);

struct ActSchedules {
  double epsilon = 0.1;
  double epsilon_omega = 0.1;
  double beta = 0.01;
};

/// Epsilon-greedy on the quantile mean.
int qr_dqn_act(const QuantileNet& net, std::span<const double> obs, double epsilon, Rng& rng);

/// Option reselection as in tabular QUOTA with scores from the option head, then
/// epsilon-greedy on the committed option's window mean.
Decision quota_deep_act(const QuantileNet& net, std::span<const double> obs,
                        tabular::OptionState& ostate, const ActSchedules& schedules,
                        std::size_t window, Rng& rng);

struct OptionFrequencies {
  std::size_t m_options = 0;
  std::size_t n_bins = 0;
  std::vector<double> freq;       // freq[bin * m_options + option]
  std::vector<bool> empty_bin;

  double at(std::size_t bin, std::size_t option) const { return freq[bin * m_options + option]; }
};

/// Partitions the event stream into n_bins equal consecutive bins and returns
/// per-bin option frequencies. Every non-empty column sums to exactly 1.
OptionFrequencies option_frequency_tracker(std::span<const std::size_t> events,
                                           std::size_t m_options, std::size_t n_bins);

enum class DeepAlgorithm { qr_dqn, quota };

struct DeepConfig {
  DeepAlgorithm algorithm = DeepAlgorithm::quota;
  env::ChainConfig chain{5, env::ChainVariant::chain1};
  std::size_t n_quantiles = 5;
  std::size_t m_options = 5;
  std::size_t window = 1;
  std::size_t workers = 8;
  std::size_t rollout = 5;
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 1.0;
  double kappa = 1.0;
  double beta = 0.01;
  nn::OptimizerConfig optimizer{nn::OptimizerKind::rmsprop, 1e-3};
  std::int64_t target_sync_every = 200;
  std::int64_t total_steps = 200000;
  Schedule epsilon = Schedule::linear(1.0, 0.05, 20000);
  Schedule epsilon_omega = Schedule::linear(1.0, 0.0, 200000);
  std::int64_t log_every_updates = 50;
  bool stop_when_optimal = false;
  std::uint64_t seed = 0;
};

/// Desk defaults with schedules scaled to the step budget.
DeepConfig default_deep_config(DeepAlgorithm algo, std::int64_t total_steps);

struct TrainingLogRow {
  std::int64_t global_step = 0;
  double mean_return_last_100 = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
  double epsilon_omega = 0.0;
};

struct DeepTrainingResult {
  std::vector<TrainingLogRow> log;
  std::vector<std::size_t> greedy_option_events;
  std::optional<std::int64_t> steps_to_optimal;
  std::int64_t global_steps = 0;
  std::int64_t skipped_updates = 0;
  bool aborted = false;
  QuantileNet net;
};

/// Greedy mean policy is LEFT (strictly) at every chain state.
bool greedy_policy_optimal(const QuantileNet& net, const env::ChainEnv& env);

DeepTrainingResult train_deep(const DeepConfig& cfg);

}  // namespace quota::deep
