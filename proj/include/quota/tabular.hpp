#pragma once

// Tabular agents on the chain MDPs: Q-learning, QR and its optimistic and
// pessimistic behaviour variants, and QUOTA with table-backed quantile and
// option-value estimates.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quota/distcore.hpp"
#include "quota/envs.hpp"
#include "quota/rng.hpp"

namespace quota::tabular {

struct LearningConfig {
  double alpha = 0.1;
  double epsilon = 0.1;
  double gamma = 1.0;
  double kappa = 1.0;
  std::int64_t step_cap = 100000;
};

struct OptionConfig {
  std::size_t m_options = 3;
  std::size_t window = 1;  // K; m_options * window must equal the quantile count
  double beta = 0.0;
  double epsilon_omega = 0.1;
};

struct Transition {
  int state = 1;
  int action = 0;
  double reward = 0.0;
  int next_state = env::kTerminal;
  bool terminal = true;
};

/// Rows are state ids 0..n_states (row 0 is the terminal and never updated).
class QTable {
 public:
  QTable(int n_states, int n_actions);

  double& at(int s, int a);
  double at(int s, int a) const;
  std::span<const double> row(int s) const;
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  std::span<const double> values() const { return values_; }

 private:
  void check(int s, int a) const;
  int n_states_;
  int n_actions_;
  std::vector<double> values_;
};

class QuantileTable {
 public:
  QuantileTable(int n_states, int n_actions, std::size_t n_quantiles);

  std::span<double> at(int s, int a);
  std::span<const double> at(int s, int a) const;
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  std::size_t n_quantiles() const { return n_quantiles_; }
  std::span<const double> values() const { return values_; }

 private:
  void check(int s, int a) const;
  int n_states_;
  int n_actions_;
  std::size_t n_quantiles_;
  std::vector<double> values_;
};

/// Q_Omega(s, option) with options 0..M-1.
using OptionValueTable = QTable;

struct OptionState {
  std::optional<std::size_t> current_option;
};

/// Score used to rank actions from a quantile table.
struct ScoreMode {
  enum class Kind { mean, quantile, window };
  Kind kind = Kind::mean;
  std::size_t index = 0;   // quantile index or window index, 0-based
  std::size_t window = 1;  // window size K

  static ScoreMode mean() { return {}; }
  static ScoreMode quantile(std::size_t j) { return {Kind::quantile, j, 1}; }
  static ScoreMode window_of(std::size_t j, std::size_t k) { return {Kind::window, j, k}; }
};

double score(std::span<const double> q, const ScoreMode& mode);

/// Uniform-random argmax over scores; draws from rng only when there is a tie.
std::size_t argmax_random_tie(std::span<const double> scores, Rng& rng);
/// Lowest-index argmax.
std::size_t argmax_first(std::span<const double> scores);

void q_learning_update(QTable& table, const Transition& t, const LearningConfig& cfg);

void qr_update_tabular(QuantileTable& table, const Transition& t, const LearningConfig& cfg,
                       const dist::QuantileLevels& levels);

/// Epsilon-greedy on the mode's score. One uniform draw decides exploration,
/// a second picks the random action or breaks a tie.
int select_action(const QuantileTable& table, int state, const ScoreMode& mode, double epsilon,
                  Rng& rng);
int select_action(const QTable& table, int state, double epsilon, Rng& rng);

void intra_option_update(OptionValueTable& ovt, const Transition& t, std::size_t option,
                         double beta, const LearningConfig& cfg);

/// Option (re)selection: keep w.p. 1-beta, otherwise epsilon_omega-greedy on
/// Q_Omega(state, .). With no current option a reselection is forced.
std::size_t select_option(const OptionValueTable& ovt, OptionState& ostate, int state,
                          const OptionConfig& cfg, Rng& rng);

struct QuotaTables {
  QuantileTable quantiles;
  OptionValueTable options;
};

struct QuotaStep {
  int action = 0;
  std::size_t option = 0;
  env::StepResult result;
};

/// Selects option and action, steps the chain, then applies the QR update and
/// the intra-option update to the same transition. Clears the option at a
/// terminal.
QuotaStep quota_tabular_step(QuotaTables& tables, OptionState& ostate, int state,
                             const env::ChainConfig& chain, const LearningConfig& learning,
                             const OptionConfig& options, const dist::QuantileLevels& levels,
                             Rng& agent_rng, Rng& env_rng);

enum class Algorithm { qlearning, qr, oqr, pqr, quota };

std::string_view to_string(Algorithm a);
/// Throws std::invalid_argument for an unknown id.
Algorithm parse_algorithm(std::string_view id);
inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::qlearning, Algorithm::qr,
                                               Algorithm::oqr, Algorithm::pqr, Algorithm::quota};

struct TrialConfig {
  LearningConfig learning;
  OptionConfig options;
  std::size_t n_quantiles = 3;
};

/// Greedy action per non-terminal state, kNoAction where the maximum is tied.
std::vector<int> derived_policy(const QTable& table);
std::vector<int> derived_policy(const QuantileTable& table);

/// Steps until the greedy policy (Q for Q-learning, quantile mean otherwise)
/// is LEFT at every state, checked after each environment step; step_cap if
/// never reached.
std::int64_t run_trial(Algorithm algo, const env::ChainConfig& chain, const TrialConfig& cfg,
                       std::uint64_t seed);

}  // namespace quota::tabular
