#include "quota/deepagents.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace quota::deep {

QuantileNet::QuantileNet(std::size_t obs_dim, std::size_t n_actions, std::size_t n_quantiles,
                         std::span<const std::size_t> hidden, std::size_t m_options)
    : n_actions_(n_actions), n_quantiles_(n_quantiles), m_options_(m_options) {
  if (hidden.empty()) throw std::invalid_argument("QuantileNet: at least one hidden layer");
  std::vector<nn::LayerSpec> trunk_specs;
  for (std::size_t h : hidden) trunk_specs.push_back({h, nn::Activation::tanh});
  trunk = nn::DenseNet(obs_dim, trunk_specs);
  const nn::LayerSpec qspec{n_actions * n_quantiles, nn::Activation::identity};
  quantile_head = nn::DenseNet(hidden.back(), std::span(&qspec, 1));
  if (m_options > 0) {
    const nn::LayerSpec ospec{m_options, nn::Activation::identity};
    option_head = nn::DenseNet(hidden.back(), std::span(&ospec, 1));
  }
}

void QuantileNet::initialize(Rng& rng) {
  nn::initialize(trunk, rng);
  nn::initialize(quantile_head, rng, 0.1);
  if (has_option_head()) nn::initialize(option_head, rng, 0.1);
}

std::span<const double> QuantileNet::Output::options() const {
  if (option_head.values.empty()) return {};
  return option_head.output();
}

QuantileNet::Output QuantileNet::evaluate(std::span<const double> obs) const {
  Output out;
  out.trunk = nn::forward_trace(trunk, obs);
  out.quantile_head = nn::forward_trace(quantile_head, out.trunk.output());
  if (has_option_head()) out.option_head = nn::forward_trace(option_head, out.trunk.output());
  return out;
}

std::vector<double> QuantileNet::quantiles(std::span<const double> obs) const {
  return nn::forward(quantile_head, nn::forward(trunk, obs));
}

std::vector<double> QuantileNet::option_values(std::span<const double> obs) const {
  if (!has_option_head()) throw std::logic_error("QuantileNet has no option head");
  return nn::forward(option_head, nn::forward(trunk, obs));
}

void QuantileNet::Grads::zero() {
  trunk.zero();
  quantile_head.zero();
  option_head.zero();
}

void QuantileNet::Grads::scale(double s) {
  trunk.scale(s);
  quantile_head.scale(s);
  option_head.scale(s);
}

bool QuantileNet::Grads::finite() const {
  return trunk.finite() && quantile_head.finite() && option_head.finite();
}

QuantileNet::Grads QuantileNet::make_grads() const {
  return Grads{nn::GradientBuffer(trunk), nn::GradientBuffer(quantile_head),
               nn::GradientBuffer(option_head)};
}

void QuantileNet::backward(const Output& out, std::span<const double> quantile_grad,
                           std::span<const double> option_grad, Grads& grads) const {
  std::vector<double> feature_grad(trunk.output_dim(), 0.0);
  if (!quantile_grad.empty()) {
    const auto g = nn::backward_into(quantile_head, out.quantile_head, quantile_grad,
                                     grads.quantile_head);
    for (std::size_t i = 0; i < g.size(); ++i) feature_grad[i] += g[i];
  }
  if (!option_grad.empty()) {
    if (!has_option_head()) throw std::logic_error("QuantileNet has no option head");
    const auto g = nn::backward_into(option_head, out.option_head, option_grad, grads.option_head);
    for (std::size_t i = 0; i < g.size(); ++i) feature_grad[i] += g[i];
  }
  nn::backward_into(trunk, out.trunk, feature_grad, grads.trunk);
}

std::span<const double> action_quantiles(std::span<const double> flat, std::size_t n_quantiles,
                                         std::size_t action) {
  return flat.subspan(action * n_quantiles, n_quantiles);
}

std::size_t greedy_mean_action(std::span<const double> flat, std::size_t n_actions,
                               std::size_t n_quantiles) {
  std::vector<double> means(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) {
    means[a] = dist::mean(action_quantiles(flat, n_quantiles, a));
  }
  return tabular::argmax_first(means);
}

Optimizers::Optimizers(const QuantileNet& net, nn::OptimizerConfig cfg)
    : trunk_(cfg, net.trunk.parameter_count()),
      quantile_head_(cfg, net.quantile_head.parameter_count()),
      option_head_(cfg, net.option_head.parameter_count()) {}

bool Optimizers::step(QuantileNet& net, const QuantileNet::Grads& grads) {
  if (!grads.finite()) return false;
  bool ok = trunk_.step(net.trunk, grads.trunk);
  ok = quantile_head_.step(net.quantile_head, grads.quantile_head) && ok;
  if (net.has_option_head()) ok = option_head_.step(net.option_head, grads.option_head) && ok;
  return ok;
}

void sync_hard(QuantileNet& target, const QuantileNet& source) {
  nn::sync_hard(target.trunk, source.trunk);
  nn::sync_hard(target.quantile_head, source.quantile_head);
  if (source.has_option_head()) nn::sync_hard(target.option_head, source.option_head);
}

const std::vector<double>* RolloutSegment::next_obs(std::size_t t) const {
  if (steps.at(t).terminal) return nullptr;
  if (t + 1 < steps.size()) return &steps[t + 1].obs;
  return bootstraps() ? &bootstrap_obs : nullptr;
}

WorkerPool::WorkerPool(const env::ChainConfig& chain, std::size_t n_workers, std::uint64_t seed) {
  if (n_workers == 0) throw std::invalid_argument("WorkerPool: need at least one worker");
  workers_.reserve(n_workers);
  for (std::size_t i = 0; i < n_workers; ++i) {
    Worker w{env::ChainEnv(chain), Rng(seed ^ static_cast<std::uint64_t>(i)), 1, {}, 0.0};
    w.state = w.env.reset();
    workers_.push_back(std::move(w));
  }
}

namespace {

RolloutSegment collect_one(Worker& w, const BehaviourPolicy& policy, std::size_t n) {
  RolloutSegment seg;
  seg.steps.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    SegmentStep step;
    step.state = w.state;
    step.obs = w.env.observe(w.state);
    const Decision d = policy(step.obs, w.option_state, w.rng);
    step.action = d.action;
    step.option = d.option;
    step.greedy_option = d.greedy_option;
    const env::StepResult r = w.env.step(d.action, w.rng);
    step.reward = r.reward;
    step.terminal = r.terminal;
    w.episode_return += r.reward;
    seg.steps.push_back(std::move(step));
    if (r.terminal) {
      seg.finished_returns.push_back(w.episode_return);
      w.episode_return = 0.0;
      w.option_state.current_option.reset();
      w.state = w.env.reset();
      return seg;
    }
    w.state = r.next_state;
  }
  seg.bootstrap_obs = w.env.observe(w.state);
  return seg;
}

}  // namespace

std::vector<RolloutSegment> collect_segments(WorkerPool& pool, const BehaviourPolicy& policy,
                                             std::size_t n) {
  auto& workers = pool.workers();
  std::vector<RolloutSegment> out(workers.size());
  const auto count = static_cast<std::ptrdiff_t>(workers.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = collect_one(workers[static_cast<std::size_t>(i)], policy, n);
  }
  return out;
}

std::vector<RolloutSegment> collect_segments_serial(WorkerPool& pool,
                                                    const BehaviourPolicy& policy,
                                                    std::size_t n) {
  std::vector<RolloutSegment> out;
  for (Worker& w : pool.workers()) out.push_back(collect_one(w, policy, n));
  return out;
}

std::vector<dist::QuantileVector> nstep_quantile_targets(const RolloutSegment& segment,
                                                         const QuantileNet& target_net,
                                                         double gamma) {
  const std::size_t n_q = target_net.n_quantiles();
  dist::QuantileVector running(n_q, 0.0);
  if (segment.bootstraps()) {
    const auto q = target_net.quantiles(segment.bootstrap_obs);
    const std::size_t a = greedy_mean_action(q, target_net.n_actions(), n_q);
    const auto qa = action_quantiles(q, n_q, a);
    running.assign(qa.begin(), qa.end());
  }
  std::vector<dist::QuantileVector> targets(segment.steps.size());
  for (std::size_t t = segment.steps.size(); t-- > 0;) {
    const double r = segment.steps[t].reward;
    for (double& v : running) v = r + gamma * v;
    targets[t] = running;
  }
  return targets;
}

namespace {

UpdateResult update_impl(QuantileNet& net, const QuantileNet& target_net,
                         std::span<const RolloutSegment> segments, Optimizers& optimizers,
                         const dist::QuantileLevels& levels, const UpdateConfig& cfg,
                         bool train_options) {
  const std::size_t n_q = net.n_quantiles();
  if (levels.size() != n_q) throw std::invalid_argument("update: levels do not match network");
  QuantileNet::Grads grads = net.make_grads();
  UpdateResult res;
  std::size_t batch = 0;
  std::vector<double> qgrad(net.n_actions() * n_q);
  std::vector<double> ograd(train_options ? net.m_options() : 0);

  for (const RolloutSegment& seg : segments) {
    const auto targets = nstep_quantile_targets(seg, target_net, cfg.gamma);
    for (std::size_t t = 0; t < seg.steps.size(); ++t) {
      const SegmentStep& step = seg.steps[t];
      const QuantileNet::Output out = net.evaluate(step.obs);
      const auto a = static_cast<std::size_t>(step.action);
      const auto pred = action_quantiles(out.quantiles(), n_q, a);
      const auto lg = dist::qr_loss_and_grad(pred, targets[t], levels, {cfg.kappa});
      res.loss += lg.loss;
      std::fill(qgrad.begin(), qgrad.end(), 0.0);
      std::copy(lg.grad.begin(), lg.grad.end(), qgrad.begin() + static_cast<std::ptrdiff_t>(a * n_q));

      if (train_options) {
        double y = 0.0;
        if (const auto* next = seg.next_obs(t)) {
          const auto next_options = target_net.option_values(*next);
          const double best = *std::max_element(next_options.begin(), next_options.end());
          y = cfg.beta * best + (1.0 - cfg.beta) * next_options[step.option];
        }
        const double td = step.reward + cfg.gamma * y - out.options()[step.option];
        res.option_loss += 0.5 * td * td;
        std::fill(ograd.begin(), ograd.end(), 0.0);
        ograd[step.option] = -td;
      }
      net.backward(out, qgrad, ograd, grads);
      ++batch;
    }
  }
  if (batch == 0) return res;
  const double inv = 1.0 / static_cast<double>(batch);
  res.loss *= inv;
  res.option_loss *= inv;
  grads.scale(inv);
  if (!std::isfinite(res.loss) || !std::isfinite(res.option_loss)) return res;
  res.applied = optimizers.step(net, grads);
  return res;
}

}  // namespace

UpdateResult qr_dqn_update(QuantileNet& net, const QuantileNet& target_net,
                           std::span<const RolloutSegment> segments, Optimizers& optimizers,
                           const dist::QuantileLevels& levels, const UpdateConfig& cfg) {
  return update_impl(net, target_net, segments, optimizers, levels, cfg, false);
}

UpdateResult quota_deep_update(QuantileNet& net, const QuantileNet& target_net,
                               std::span<const RolloutSegment> segments, Optimizers& optimizers,
                               const dist::QuantileLevels& levels, const UpdateConfig& cfg) {
  if (!net.has_option_head()) throw std::invalid_argument("quota_deep_update: no option head");
  return update_impl(net, target_net, segments, optimizers, levels, cfg, true);
}

int qr_dqn_act(const QuantileNet& net, std::span<const double> obs, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(net.n_actions()));
  const auto q = net.quantiles(obs);
  std::vector<double> scores(net.n_actions());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    scores[a] = dist::mean(action_quantiles(q, net.n_quantiles(), a));
  }
  return static_cast<int>(tabular::argmax_random_tie(scores, rng));
}

Decision quota_deep_act(const QuantileNet& net, std::span<const double> obs,
                        tabular::OptionState& ostate, const ActSchedules& schedules,
                        std::size_t window, Rng& rng) {
  const QuantileNet::Output out = net.evaluate(obs);
  const auto options = out.options();
  Decision d;
  d.greedy_option = tabular::argmax_first(options);

  bool reselect = !ostate.current_option.has_value();
  if (!reselect) reselect = rng.bernoulli(schedules.beta);
  if (reselect) {
    ostate.current_option = rng.bernoulli(schedules.epsilon_omega)
                                ? rng.index(net.m_options())
                                : tabular::argmax_random_tie(options, rng);
  }
  d.option = *ostate.current_option;

  if (rng.uniform() < schedules.epsilon) {
    d.action = static_cast<int>(rng.index(net.n_actions()));
    return d;
  }
  std::vector<double> scores(net.n_actions());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    scores[a] = dist::window_mean(action_quantiles(out.quantiles(), net.n_quantiles(), a), d.option,
                                  window);
  }
  d.action = static_cast<int>(tabular::argmax_random_tie(scores, rng));
  return d;
}

OptionFrequencies option_frequency_tracker(std::span<const std::size_t> events,
                                           std::size_t m_options, std::size_t n_bins) {
  if (n_bins == 0) throw std::invalid_argument("option_frequency_tracker: n_bins must be >= 1");
  if (m_options == 0) throw std::invalid_argument("option_frequency_tracker: no options");
  OptionFrequencies out{m_options, n_bins, std::vector<double>(m_options * n_bins, 0.0),
                        std::vector<bool>(n_bins, true)};
  std::vector<std::size_t> counts(m_options * n_bins, 0);
  std::vector<std::size_t> totals(n_bins, 0);
  const std::size_t n = events.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (events[k] >= m_options) throw std::invalid_argument("option index out of range");
    const std::size_t bin = k * n_bins / n;
    ++counts[bin * m_options + events[k]];
    ++totals[bin];
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (totals[b] == 0) continue;
    out.empty_bin[b] = false;
    std::size_t last = 0;
    for (std::size_t j = 0; j < m_options; ++j) {
      if (counts[b * m_options + j] > 0) last = j;
    }
    // The last populated entry absorbs rounding so the column sums to 1 in order.
    double partial = 0.0;
    for (std::size_t j = 0; j < last; ++j) {
      const double f =
          static_cast<double>(counts[b * m_options + j]) / static_cast<double>(totals[b]);
      out.freq[b * m_options + j] = f;
      partial += f;
    }
    out.freq[b * m_options + last] = 1.0 - partial;
  }
  return out;
}

DeepConfig default_deep_config(DeepAlgorithm algo, std::int64_t total_steps) {
  DeepConfig cfg;
  cfg.algorithm = algo;
  cfg.total_steps = total_steps;
  cfg.epsilon = Schedule::linear(1.0, 0.05, std::max<std::int64_t>(1, total_steps / 10));
  cfg.epsilon_omega = Schedule::linear(1.0, 0.0, std::max<std::int64_t>(1, total_steps));
  if (algo == DeepAlgorithm::qr_dqn) cfg.m_options = 0;
  return cfg;
}

bool greedy_policy_optimal(const QuantileNet& net, const env::ChainEnv& env) {
  const std::size_t n_q = net.n_quantiles();
  for (int s = 1; s <= env.config().length; ++s) {
    const auto q = net.quantiles(env.observe(s));
    const double left = dist::mean(action_quantiles(q, n_q, env::kLeft));
    const double up = dist::mean(action_quantiles(q, n_q, env::kUp));
    if (!(left > up)) return false;
  }
  return true;
}

DeepTrainingResult train_deep(const DeepConfig& cfg) {
  const bool quota = cfg.algorithm == DeepAlgorithm::quota;
  if (quota && cfg.m_options * cfg.window != cfg.n_quantiles) {
    throw std::invalid_argument("deep QUOTA requires m_options * window == n_quantiles");
  }
  const env::ChainEnv probe(cfg.chain);
  DeepTrainingResult res;
  res.net = QuantileNet(probe.observation_size(), probe.n_actions(), cfg.n_quantiles, cfg.hidden,
                        quota ? cfg.m_options : 0);
  Rng init_rng(mix_seed(cfg.seed, 0x1417));
  res.net.initialize(init_rng);
  QuantileNet target = res.net;
  Optimizers optimizers(res.net, cfg.optimizer);
  WorkerPool pool(cfg.chain, cfg.workers, cfg.seed);
  const dist::QuantileLevels levels = dist::quantile_midpoints(cfg.n_quantiles);
  const UpdateConfig ucfg{cfg.gamma, cfg.kappa, cfg.beta};

  std::deque<double> recent;
  std::int64_t updates = 0;
  std::int64_t consecutive_skips = 0;
  double last_loss = 0.0;

  while (res.global_steps < cfg.total_steps) {
    const double eps = resolve_schedule(cfg.epsilon, res.global_steps);
    const double eps_omega = resolve_schedule(cfg.epsilon_omega, res.global_steps);
    const QuantileNet& snapshot = res.net;
    BehaviourPolicy policy;
    if (quota) {
      const ActSchedules sched{eps, eps_omega, cfg.beta};
      policy = [&snapshot, sched, w = cfg.window](std::span<const double> obs,
                                                  tabular::OptionState& os, Rng& rng) {
        return quota_deep_act(snapshot, obs, os, sched, w, rng);
      };
    } else {
      policy = [&snapshot, eps](std::span<const double> obs, tabular::OptionState&, Rng& rng) {
        return Decision{qr_dqn_act(snapshot, obs, eps, rng), 0, 0};
      };
    }
    const auto segments = collect_segments(pool, policy, cfg.rollout);
    for (const RolloutSegment& seg : segments) {
      res.global_steps += static_cast<std::int64_t>(seg.steps.size());
      if (quota) {
        for (const SegmentStep& s : seg.steps) res.greedy_option_events.push_back(s.greedy_option);
      }
      for (double r : seg.finished_returns) {
        recent.push_back(r);
        if (recent.size() > 100) recent.pop_front();
      }
    }

    const UpdateResult u = quota ? quota_deep_update(res.net, target, segments, optimizers, levels, ucfg)
                                 : qr_dqn_update(res.net, target, segments, optimizers, levels, ucfg);
    if (!u.applied) {
      ++res.skipped_updates;
      if (++consecutive_skips >= 10) {
        res.aborted = true;
        break;
      }
      continue;
    }
    consecutive_skips = 0;
    last_loss = u.loss;
    ++updates;
    if (cfg.target_sync_every > 0 && updates % cfg.target_sync_every == 0) sync_hard(target, res.net);

    if (!res.steps_to_optimal && greedy_policy_optimal(res.net, probe)) {
      res.steps_to_optimal = res.global_steps;
    }
    if (cfg.log_every_updates > 0 && updates % cfg.log_every_updates == 0) {
      const double mean_ret =
          recent.empty() ? 0.0
                         : std::accumulate(recent.begin(), recent.end(), 0.0) /
                               static_cast<double>(recent.size());
      res.log.push_back({res.global_steps, mean_ret, last_loss, eps, eps_omega});
    }
    if (cfg.stop_when_optimal && res.steps_to_optimal) break;
  }
  return res;
}

}  // namespace quota::deep
