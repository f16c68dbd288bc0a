#include "quota/contagents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace quota::cont {

double ou_step(NoiseProcess& np, Rng& rng) {
  np.x += np.theta * (0.0 - np.x) * np.dt + np.sigma * std::sqrt(np.dt) * rng.normal();
  return np.x;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (items_.size() < batch) throw std::logic_error("ReplayBuffer: fewer items than batch size");
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.index(items_.size());
  return idx;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : sample_indices(batch, rng)) out.push_back(&items_[i]);
  return out;
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

nn::GradientBuffer actor_gradient(const nn::DenseNet& actor, Batch batch,
                                  const ActionGradient& action_grad) {
  nn::GradientBuffer grads(actor);
  if (batch.empty()) return grads;
  for (const Transition* t : batch) {
    const nn::Trace trace = nn::forward_trace(actor, t->obs);
    std::vector<double> g = action_grad(t->obs, trace.output());
    for (double& v : g) v = -v;  // ascend the objective
    nn::backward_into(actor, trace, g, grads);
  }
  grads.scale(1.0 / static_cast<double>(batch.size()));
  return grads;
}

ActionGradient critic_action_gradient(const nn::DenseNet& critic, std::vector<double> weights) {
  if (weights.size() != critic.output_dim()) {
    throw std::invalid_argument("critic_action_gradient: weights do not match critic output");
  }
  return [&critic, w = std::move(weights)](std::span<const double> obs,
                                           std::span<const double> action) {
    const nn::Trace trace = nn::forward_trace(critic, concat(obs, action));
    const auto input_grad = nn::input_gradient(critic, trace, w);
    return std::vector<double>(input_grad.begin() + static_cast<std::ptrdiff_t>(obs.size()),
                               input_grad.end());
  };
}

CriticGrad ddpg_critic_gradient(const nn::DenseNet& critic, const nn::DenseNet& target_actor,
                                const nn::DenseNet& target_critic, Batch batch, double gamma) {
  CriticGrad out{nn::GradientBuffer(critic), 0.0};
  if (batch.empty()) return out;
  for (const Transition* t : batch) {
    double y = t->reward;
    if (!t->terminal) {
      const auto a_next = nn::forward(target_actor, t->next_obs);
      y += gamma * nn::forward(target_critic, concat(t->next_obs, a_next))[0];
    }
    const nn::Trace trace = nn::forward_trace(critic, concat(t->obs, t->action));
    const double err = trace.output()[0] - y;
    out.loss += 0.5 * err * err;
    const double g = err;
    nn::backward_into(critic, trace, std::span(&g, 1), out.grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grads.scale(inv);
  return out;
}

std::vector<double> quantile_critic_targets(const Transition& t, const nn::DenseNet& target_actor,
                                            const nn::DenseNet& target_critic, double gamma) {
  std::vector<double> y(target_critic.output_dim(), t.reward);
  if (!t.terminal) {
    const auto a_next = nn::forward(target_actor, t.next_obs);
    const auto q_next = nn::forward(target_critic, concat(t.next_obs, a_next));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += gamma * q_next[i];
  }
  return y;
}

CriticGrad qr_critic_gradient(const nn::DenseNet& critic, const nn::DenseNet& target_actor,
                              const nn::DenseNet& target_critic, Batch batch, double gamma,
                              const dist::QuantileLevels& levels, double kappa) {
  CriticGrad out{nn::GradientBuffer(critic), 0.0};
  if (batch.empty()) return out;
  for (const Transition* t : batch) {
    const auto y = quantile_critic_targets(*t, target_actor, target_critic, gamma);
    const nn::Trace trace = nn::forward_trace(critic, concat(t->obs, t->action));
    const auto lg = dist::qr_loss_and_grad(trace.output(), y, levels, {kappa});
    out.loss += lg.loss;
    nn::backward_into(critic, trace, lg.grad, out.grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  out.grads.scale(inv);
  return out;
}

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

UpdateReport ddpg_update(ActorCritic& ac, Batch batch, const UpdateConfig& cfg) {
  UpdateReport rep;
  const CriticGrad cg = ddpg_critic_gradient(ac.critic, ac.target_actor, ac.target_critic, batch,
                                             cfg.gamma);
  rep.critic_loss = cg.loss;
  if (!finite(cg.loss) || !ac.critic_opt.step(ac.critic, cg.grads)) return rep;
  const auto ag = actor_gradient(ac.actor, batch, critic_action_gradient(ac.critic, {1.0}));
  if (!ac.actor_opt.step(ac.actor, ag)) return rep;
  nn::sync_soft(ac.target_critic, ac.critic, cfg.tau_soft);
  nn::sync_soft(ac.target_actor, ac.actor, cfg.tau_soft);
  rep.applied = true;
  return rep;
}

UpdateReport qr_ddpg_update(ActorCritic& ac, Batch batch, const dist::QuantileLevels& levels,
                            const UpdateConfig& cfg) {
  UpdateReport rep;
  const CriticGrad cg = qr_critic_gradient(ac.critic, ac.target_actor, ac.target_critic, batch,
                                           cfg.gamma, levels, cfg.kappa);
  rep.critic_loss = cg.loss;
  if (!finite(cg.loss) || !ac.critic_opt.step(ac.critic, cg.grads)) return rep;
  const std::size_t n = ac.critic.output_dim();
  const auto ag = actor_gradient(
      ac.actor, batch,
      critic_action_gradient(ac.critic, std::vector<double>(n, 1.0 / static_cast<double>(n))));
  if (!ac.actor_opt.step(ac.actor, ag)) return rep;
  nn::sync_soft(ac.target_critic, ac.critic, cfg.tau_soft);
  nn::sync_soft(ac.target_actor, ac.actor, cfg.tau_soft);
  rep.applied = true;
  return rep;
}

std::vector<double> actor_objective_weights(std::size_t actor, std::size_t n_quantiles,
                                            std::size_t window) {
  std::vector<double> w(n_quantiles, 0.0);
  if (actor == 0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n_quantiles));
    return w;
  }
  const std::size_t first = (actor - 1) * window;
  if (window == 0 || first + window > n_quantiles) {
    throw std::invalid_argument("actor_objective_weights: window out of range");
  }
  for (std::size_t k = first; k < first + window; ++k) w[k] = 1.0 / static_cast<double>(window);
  return w;
}

ContinuousDecision quota_continuous_step(const QuotaAgent& agent, std::span<const double> obs,
                                         tabular::OptionState& ostate, double epsilon_omega,
                                         double beta, NoiseProcess& noise, Rng& rng) {
  const std::size_t n_options = agent.actors.size();
  bool reselect = !ostate.current_option.has_value();
  if (!reselect) reselect = rng.bernoulli(beta);
  if (reselect) {
    if (rng.bernoulli(epsilon_omega)) {
      ostate.current_option = rng.index(n_options);
    } else {
      ostate.current_option =
          tabular::argmax_random_tie(nn::forward(agent.option_net, obs), rng);
    }
  }
  ContinuousDecision d;
  d.option = *ostate.current_option;
  d.action = nn::forward(agent.actors[d.option], obs);
  for (double& a : d.action) a = std::clamp(a + ou_step(noise, rng), -1.0, 1.0);
  return d;
}

UpdateReport quota_continuous_update(QuotaAgent& agent, Batch batch,
                                     const dist::QuantileLevels& levels, const UpdateConfig& cfg) {
  UpdateReport rep;
  const std::size_t n = agent.critic.output_dim();

  // Actor ascent on the pre-update critic; actors have disjoint parameters.
  std::vector<nn::GradientBuffer> actor_grads;
  for (std::size_t j = 0; j < agent.actors.size(); ++j) {
    actor_grads.push_back(actor_gradient(
        agent.actors[j], batch,
        critic_action_gradient(agent.critic, actor_objective_weights(j, n, agent.window))));
    if (!actor_grads.back().finite()) return rep;
  }

  const CriticGrad cg = qr_critic_gradient(agent.critic, agent.target_actors[0],
                                           agent.target_critic, batch, cfg.gamma, levels,
                                           cfg.kappa);
  rep.critic_loss = cg.loss;
  if (!finite(cg.loss) || !cg.grads.finite()) return rep;

  nn::GradientBuffer option_grads(agent.option_net);
  for (const Transition* t : batch) {
    double y = 0.0;
    if (!t->terminal) {
      const auto next = nn::forward(agent.target_option_net, t->next_obs);
      const double best = *std::max_element(next.begin(), next.end());
      y = cfg.beta * best + (1.0 - cfg.beta) * next[t->option];
    }
    const nn::Trace trace = nn::forward_trace(agent.option_net, t->obs);
    const double td = t->reward + cfg.gamma * y - trace.output()[t->option];
    rep.option_loss += 0.5 * td * td;
    std::vector<double> g(agent.option_net.output_dim(), 0.0);
    g[t->option] = -td;
    nn::backward_into(agent.option_net, trace, g, option_grads);
  }
  if (!batch.empty()) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    rep.option_loss *= inv;
    option_grads.scale(inv);
  }
  if (!finite(rep.option_loss) || !option_grads.finite()) return rep;

  for (std::size_t j = 0; j < agent.actors.size(); ++j) {
    if (!agent.actor_opts[j].step(agent.actors[j], actor_grads[j])) return rep;
  }
  if (!agent.critic_opt.step(agent.critic, cg.grads)) return rep;
  if (!agent.option_opt.step(agent.option_net, option_grads)) return rep;

  for (std::size_t j = 0; j < agent.actors.size(); ++j) {
    nn::sync_soft(agent.target_actors[j], agent.actors[j], cfg.tau_soft);
  }
  nn::sync_soft(agent.target_critic, agent.critic, cfg.tau_soft);
  nn::sync_soft(agent.target_option_net, agent.option_net, cfg.tau_soft);
  rep.applied = true;
  return rep;
}

ContAlgorithm parse_cont_algorithm(std::string_view id) {
  if (id == "ddpg") return ContAlgorithm::ddpg;
  if (id == "qr-ddpg" || id == "qr_ddpg") return ContAlgorithm::qr_ddpg;
  if (id == "quota") return ContAlgorithm::quota;
  throw std::invalid_argument("unknown continuous algorithm '" + std::string(id) + "'");
}

ContConfig default_cont_config(ContAlgorithm algo, std::int64_t total_steps) {
  ContConfig cfg;
  cfg.algorithm = algo;
  cfg.total_steps = total_steps;
  cfg.epsilon_omega = Schedule::linear(1.0, 0.0, std::max<std::int64_t>(1, total_steps));
  if (algo == ContAlgorithm::ddpg) cfg.n_quantiles = 1;
  return cfg;
}

namespace {

nn::DenseNet make_actor(std::size_t obs_dim, std::size_t act_dim,
                        std::span<const std::size_t> hidden, Rng& rng) {
  nn::DenseNet net =
      nn::DenseNet::mlp(obs_dim, hidden, act_dim, nn::Activation::tanh, nn::Activation::tanh);
  nn::initialize(net, rng, 0.1);
  return net;
}

nn::DenseNet make_value_net(std::size_t in_dim, std::size_t out_dim,
                            std::span<const std::size_t> hidden, Rng& rng) {
  nn::DenseNet net = nn::DenseNet::mlp(in_dim, hidden, out_dim);
  nn::initialize(net, rng, 0.1);
  return net;
}

nn::OptimizerConfig adam(double lr) { return {nn::OptimizerKind::adam, lr}; }

}  // namespace

std::vector<double> greedy_action(const ContTrainingResult& res, ContAlgorithm algo,
                                  std::span<const double> obs) {
  if (algo != ContAlgorithm::quota) return nn::forward(res.ac.actor, obs);
  const auto values = nn::forward(res.quota.option_net, obs);
  return nn::forward(res.quota.actors[tabular::argmax_first(values)], obs);
}

env::ReturnStats evaluate_policy(
    const std::function<std::vector<double>(std::span<const double>)>& policy,
    std::size_t episodes, std::uint64_t seed, const env::Reach1dConfig& env_cfg) {
  std::vector<double> returns(episodes, 0.0);
  const auto count = static_cast<std::ptrdiff_t>(episodes);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < count; ++e) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    env::ContinuousEnvState s = env::reach1d_reset(rng);
    double ret = 0.0;
    for (;;) {
      const std::vector<double> obs{s.position};
      const double a = std::clamp(policy(obs)[0], -1.0, 1.0);
      const env::ContinuousStep st = env::reach1d_step(s, a, rng, env_cfg);
      ret += st.reward;
      s = st.next;
      if (st.terminal) break;
    }
    returns[static_cast<std::size_t>(e)] = ret;
  }
  const double n = static_cast<double>(episodes);
  const double m = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - m) * (r - m);
  const double se = episodes > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {m, se};
}

ContTrainingResult train_continuous(const ContConfig& cfg) {
  constexpr std::size_t kObs = 1;
  constexpr std::size_t kAct = 1;
  const bool quota = cfg.algorithm == ContAlgorithm::quota;
  const std::size_t n_q = cfg.algorithm == ContAlgorithm::ddpg ? 1 : cfg.n_quantiles;
  if (quota && (cfg.m_options == 0 || n_q % cfg.m_options != 0)) {
    throw std::invalid_argument("continuous QUOTA requires n_quantiles divisible by m_options");
  }

  ContTrainingResult res;
  Rng init_rng(mix_seed(cfg.seed, 0x1417));
  if (quota) {
    QuotaAgent& q = res.quota;
    q.window = n_q / cfg.m_options;
    for (std::size_t j = 0; j <= cfg.m_options; ++j) {
      q.actors.push_back(make_actor(kObs, kAct, cfg.hidden, init_rng));
      q.actor_opts.emplace_back(adam(cfg.actor_lr), q.actors.back().parameter_count());
    }
    q.target_actors = q.actors;
    q.critic = make_value_net(kObs + kAct, n_q, cfg.hidden, init_rng);
    q.target_critic = q.critic;
    q.critic_opt = nn::Optimizer(adam(cfg.critic_lr), q.critic.parameter_count());
    q.option_net = make_value_net(kObs, cfg.m_options + 1, cfg.hidden, init_rng);
    q.target_option_net = q.option_net;
    q.option_opt = nn::Optimizer(adam(cfg.critic_lr), q.option_net.parameter_count());
  } else {
    ActorCritic& ac = res.ac;
    ac.actor = make_actor(kObs, kAct, cfg.hidden, init_rng);
    ac.critic = make_value_net(kObs + kAct, n_q, cfg.hidden, init_rng);
    ac.target_actor = ac.actor;
    ac.target_critic = ac.critic;
    ac.actor_opt = nn::Optimizer(adam(cfg.actor_lr), ac.actor.parameter_count());
    ac.critic_opt = nn::Optimizer(adam(cfg.critic_lr), ac.critic.parameter_count());
  }

  const dist::QuantileLevels levels = dist::quantile_midpoints(n_q);
  const UpdateConfig ucfg{cfg.env.gamma, cfg.kappa, cfg.tau_soft, cfg.beta};
  ReplayBuffer replay(cfg.replay_capacity);
  Rng env_rng(mix_seed(cfg.seed, 1));
  Rng agent_rng(mix_seed(cfg.seed, 2));
  NoiseProcess noise = cfg.noise;
  noise.reset();
  tabular::OptionState ostate;
  env::ContinuousEnvState state = env::reach1d_reset(env_rng);
  std::int64_t consecutive_skips = 0;

  auto evaluate = [&](std::int64_t step) {
    const auto stats = evaluate_policy(
        [&](std::span<const double> obs) { return greedy_action(res, cfg.algorithm, obs); },
        cfg.eval_episodes, mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(step)), cfg.env);
    res.eval_log.push_back({step, stats.mean, stats.std_err});
  };

  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const std::vector<double> obs{state.position};
    std::vector<double> action;
    std::size_t option = 0;
    if (quota) {
      const double eps_omega = resolve_schedule(cfg.epsilon_omega, step - 1);
      ContinuousDecision d =
          quota_continuous_step(res.quota, obs, ostate, eps_omega, cfg.beta, noise, agent_rng);
      action = std::move(d.action);
      option = d.option;
      res.option_events.push_back(option);
    } else {
      action = nn::forward(res.ac.actor, obs);
      for (double& a : action) a = std::clamp(a + ou_step(noise, agent_rng), -1.0, 1.0);
    }
    const env::ContinuousStep st = env::reach1d_step(state, action[0], env_rng, cfg.env);
    replay.push({obs, action, st.reward, {st.next.position}, st.terminal, option});
    if (st.terminal) {
      state = env::reach1d_reset(env_rng);
      noise.reset();
      ostate.current_option.reset();
    } else {
      state = st.next;
    }

    if (step >= cfg.learning_starts && replay.size() >= cfg.batch) {
      const auto batch = replay.sample(cfg.batch, agent_rng);
      UpdateReport rep;
      switch (cfg.algorithm) {
        case ContAlgorithm::ddpg: rep = ddpg_update(res.ac, batch, ucfg); break;
        case ContAlgorithm::qr_ddpg: rep = qr_ddpg_update(res.ac, batch, levels, ucfg); break;
        case ContAlgorithm::quota: rep = quota_continuous_update(res.quota, batch, levels, ucfg); break;
      }
      if (rep.applied) {
        consecutive_skips = 0;
      } else {
        ++res.skipped_updates;
        if (++consecutive_skips >= 10) {
          res.aborted = true;
          break;
        }
      }
    }
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) evaluate(step);
  }
  return res;
}

}  // namespace quota::cont
