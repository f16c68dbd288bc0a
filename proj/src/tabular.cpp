#include "quota/tabular.hpp"

#include <algorithm>
#include <stdexcept>

namespace quota::tabular {

namespace {

void check_index(int s, int a, int n_states, int n_actions) {
  if (s < 0 || s > n_states || a < 0 || a >= n_actions) {
    throw std::invalid_argument("table index (" + std::to_string(s) + ", " + std::to_string(a) +
                                ") out of range");
  }
}

}  // namespace

QTable::QTable(int n_states, int n_actions)
    : n_states_(n_states),
      n_actions_(n_actions),
      values_(static_cast<std::size_t>((n_states + 1) * n_actions), 0.0) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("QTable: empty dimensions");
}

void QTable::check(int s, int a) const { check_index(s, a, n_states_, n_actions_); }

double& QTable::at(int s, int a) {
  check(s, a);
  return values_[static_cast<std::size_t>(s * n_actions_ + a)];
}

double QTable::at(int s, int a) const {
  check(s, a);
  return values_[static_cast<std::size_t>(s * n_actions_ + a)];
}

std::span<const double> QTable::row(int s) const {
  check(s, 0);
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(s * n_actions_),
                                                  static_cast<std::size_t>(n_actions_));
}

QuantileTable::QuantileTable(int n_states, int n_actions, std::size_t n_quantiles)
    : n_states_(n_states),
      n_actions_(n_actions),
      n_quantiles_(n_quantiles),
      values_(static_cast<std::size_t>((n_states + 1) * n_actions) * n_quantiles, 0.0) {
  if (n_states < 1 || n_actions < 1 || n_quantiles < 1) {
    throw std::invalid_argument("QuantileTable: empty dimensions");
  }
}

void QuantileTable::check(int s, int a) const { check_index(s, a, n_states_, n_actions_); }

std::span<double> QuantileTable::at(int s, int a) {
  check(s, a);
  return std::span<double>(values_).subspan(
      static_cast<std::size_t>(s * n_actions_ + a) * n_quantiles_, n_quantiles_);
}

std::span<const double> QuantileTable::at(int s, int a) const {
  check(s, a);
  return std::span<const double>(values_).subspan(
      static_cast<std::size_t>(s * n_actions_ + a) * n_quantiles_, n_quantiles_);
}

double score(std::span<const double> q, const ScoreMode& mode) {
  switch (mode.kind) {
    case ScoreMode::Kind::mean:
      return dist::mean(q);
    case ScoreMode::Kind::quantile:
      if (mode.index >= q.size()) throw std::invalid_argument("quantile index out of range");
      return q[mode.index];
    case ScoreMode::Kind::window:
      return dist::window_mean(q, mode.index, mode.window);
  }
  return 0.0;
}

std::size_t argmax_random_tie(std::span<const double> scores, Rng& rng) {
  const double best = *std::max_element(scores.begin(), scores.end());
  std::size_t ties = 0;
  for (double v : scores) ties += v == best ? 1 : 0;
  if (ties == 1) return argmax_first(scores);
  std::size_t pick = rng.index(ties);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == best && pick-- == 0) return i;
  }
  return 0;
}

std::size_t argmax_first(std::span<const double> scores) {
  return static_cast<std::size_t>(
      std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
}

void q_learning_update(QTable& table, const Transition& t, const LearningConfig& cfg) {
  double& q = table.at(t.state, t.action);
  double bootstrap = 0.0;
  if (!t.terminal) {
    const auto next = table.row(t.next_state);
    bootstrap = *std::max_element(next.begin(), next.end());
  }
  q += cfg.alpha * (t.reward + cfg.gamma * bootstrap - q);
}

void qr_update_tabular(QuantileTable& table, const Transition& t, const LearningConfig& cfg,
                       const dist::QuantileLevels& levels) {
  const std::size_t n = table.n_quantiles();
  std::vector<double> targets(n, t.reward);
  if (!t.terminal) {
    std::vector<double> means(static_cast<std::size_t>(table.n_actions()));
    for (int a = 0; a < table.n_actions(); ++a) {
      means[static_cast<std::size_t>(a)] = dist::mean(table.at(t.next_state, a));
    }
    const auto next = table.at(t.next_state, static_cast<int>(argmax_first(means)));
    for (std::size_t i = 0; i < n; ++i) targets[i] += cfg.gamma * next[i];
  }
  auto q = table.at(t.state, t.action);
  const auto lg = dist::qr_loss_and_grad(q, targets, levels, {cfg.kappa});
  for (std::size_t i = 0; i < n; ++i) q[i] -= cfg.alpha * lg.grad[i];
}

int select_action(const QuantileTable& table, int state, const ScoreMode& mode, double epsilon,
                  Rng& rng) {
  const auto n_actions = static_cast<std::size_t>(table.n_actions());
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(n_actions));
  std::vector<double> scores(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) {
    scores[a] = score(table.at(state, static_cast<int>(a)), mode);
  }
  return static_cast<int>(argmax_random_tie(scores, rng));
}

int select_action(const QTable& table, int state, double epsilon, Rng& rng) {
  const auto n_actions = static_cast<std::size_t>(table.n_actions());
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(n_actions));
  return static_cast<int>(argmax_random_tie(table.row(state), rng));
}

void intra_option_update(OptionValueTable& ovt, const Transition& t, std::size_t option,
                         double beta, const LearningConfig& cfg) {
  const int w = static_cast<int>(option);
  double& q = ovt.at(t.state, w);
  double y = 0.0;
  if (!t.terminal) {
    const auto next = ovt.row(t.next_state);
    const double best = *std::max_element(next.begin(), next.end());
    y = beta * best + (1.0 - beta) * next[option];
  }
  q += cfg.alpha * (t.reward + cfg.gamma * y - q);
}

std::size_t select_option(const OptionValueTable& ovt, OptionState& ostate, int state,
                          const OptionConfig& cfg, Rng& rng) {
  bool reselect = !ostate.current_option.has_value();
  if (!reselect) reselect = rng.bernoulli(cfg.beta);
  if (reselect) {
    if (rng.bernoulli(cfg.epsilon_omega)) {
      ostate.current_option = rng.index(cfg.m_options);
    } else {
      ostate.current_option = argmax_random_tie(ovt.row(state), rng);
    }
  }
  return *ostate.current_option;
}

QuotaStep quota_tabular_step(QuotaTables& tables, OptionState& ostate, int state,
                             const env::ChainConfig& chain, const LearningConfig& learning,
                             const OptionConfig& options, const dist::QuantileLevels& levels,
                             Rng& agent_rng, Rng& env_rng) {
  QuotaStep out;
  out.option = select_option(tables.options, ostate, state, options, agent_rng);
  out.action = select_action(tables.quantiles, state,
                             ScoreMode::window_of(out.option, options.window), learning.epsilon,
                             agent_rng);
  out.result = env::chain_step(chain, state, out.action, env_rng);
  const Transition t{state, out.action, out.result.reward, out.result.next_state,
                     out.result.terminal};
  qr_update_tabular(tables.quantiles, t, learning, levels);
  intra_option_update(tables.options, t, out.option, options.beta, learning);
  if (t.terminal) ostate.current_option.reset();
  return out;
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::qlearning: return "qlearning";
    case Algorithm::qr: return "qr";
    case Algorithm::oqr: return "oqr";
    case Algorithm::pqr: return "pqr";
    case Algorithm::quota: return "quota";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view id) {
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == id) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(id) + "'");
}

namespace {

int greedy_or_none(double left, double up) {
  if (left > up) return env::kLeft;
  if (up > left) return env::kUp;
  return env::kNoAction;
}

bool optimal(const QTable& table) {
  for (int s = 1; s <= table.n_states(); ++s) {
    if (!(table.at(s, env::kLeft) > table.at(s, env::kUp))) return false;
  }
  return true;
}

bool optimal(const QuantileTable& table) {
  for (int s = 1; s <= table.n_states(); ++s) {
    if (!(dist::mean(table.at(s, env::kLeft)) > dist::mean(table.at(s, env::kUp)))) return false;
  }
  return true;
}

}  // namespace

std::vector<int> derived_policy(const QTable& table) {
  std::vector<int> policy;
  for (int s = 1; s <= table.n_states(); ++s) {
    policy.push_back(greedy_or_none(table.at(s, env::kLeft), table.at(s, env::kUp)));
  }
  return policy;
}

std::vector<int> derived_policy(const QuantileTable& table) {
  std::vector<int> policy;
  for (int s = 1; s <= table.n_states(); ++s) {
    policy.push_back(greedy_or_none(dist::mean(table.at(s, env::kLeft)),
                                    dist::mean(table.at(s, env::kUp))));
  }
  return policy;
}

std::int64_t run_trial(Algorithm algo, const env::ChainConfig& chain, const TrialConfig& cfg,
                       std::uint64_t seed) {
  const env::DiscreteEnvSpec spec = env::chain_spec(chain);
  const LearningConfig& lc = cfg.learning;
  Rng env_rng(mix_seed(seed, 1));
  Rng agent_rng(mix_seed(seed, 2));
  const std::int64_t cap = lc.step_cap;

  if (algo == Algorithm::qlearning) {
    QTable q(spec.n_states, spec.n_actions);
    int s = 1;
    for (std::int64_t t = 1; t <= cap; ++t) {
      const int a = select_action(q, s, lc.epsilon, agent_rng);
      const env::StepResult r = env::chain_step(chain, s, a, env_rng);
      q_learning_update(q, {s, a, r.reward, r.next_state, r.terminal}, lc);
      s = r.terminal ? 1 : r.next_state;
      if (optimal(q)) return t;
    }
    return cap;
  }

  const dist::QuantileLevels levels = dist::quantile_midpoints(cfg.n_quantiles);

  if (algo == Algorithm::quota) {
    if (cfg.options.m_options * cfg.options.window != cfg.n_quantiles) {
      throw std::invalid_argument("QUOTA requires m_options * window == n_quantiles");
    }
    QuotaTables tables{QuantileTable(spec.n_states, spec.n_actions, cfg.n_quantiles),
                       OptionValueTable(spec.n_states, static_cast<int>(cfg.options.m_options))};
    OptionState ostate;
    int s = 1;
    for (std::int64_t t = 1; t <= cap; ++t) {
      const QuotaStep step = quota_tabular_step(tables, ostate, s, chain, lc, cfg.options, levels,
                                                agent_rng, env_rng);
      s = step.result.terminal ? 1 : step.result.next_state;
      if (optimal(tables.quantiles)) return t;
    }
    return cap;
  }

  ScoreMode mode = ScoreMode::mean();
  if (algo == Algorithm::oqr) mode = ScoreMode::quantile(cfg.n_quantiles - 1);
  if (algo == Algorithm::pqr) mode = ScoreMode::quantile(0);

  QuantileTable table(spec.n_states, spec.n_actions, cfg.n_quantiles);
  int s = 1;
  for (std::int64_t t = 1; t <= cap; ++t) {
    const int a = select_action(table, s, mode, lc.epsilon, agent_rng);
    const env::StepResult r = env::chain_step(chain, s, a, env_rng);
    qr_update_tabular(table, {s, a, r.reward, r.next_state, r.terminal}, lc, levels);
    s = r.terminal ? 1 : r.next_state;
    if (optimal(table)) return t;
  }
  return cap;
}

}  // namespace quota::tabular
