#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "quota/deepagents.hpp"

using namespace quota;
using namespace quota::deep;

namespace {

env::ChainConfig chain(int n, env::ChainVariant v = env::ChainVariant::chain1) {
  env::ChainConfig c;
  c.length = n;
  c.variant = v;
  return c;
}

BehaviourPolicy always(int action) {
  return [action](std::span<const double>, tabular::OptionState&, Rng&) {
    return Decision{action, 0, 0};
  };
}

BehaviourPolicy random_policy() {
  return [](std::span<const double>, tabular::OptionState&, Rng& rng) {
    return Decision{rng.bernoulli(0.3) ? env::kUp : env::kLeft, 0, 0};
  };
}

QuantileNet make_net(std::size_t obs, std::size_t n_q, std::size_t m, std::uint64_t seed) {
  const std::vector<std::size_t> hidden{8};
  QuantileNet net(obs, 2, n_q, hidden, m);
  Rng rng(seed);
  net.initialize(rng);
  return net;
}

bool same_segments(const std::vector<RolloutSegment>& a, const std::vector<RolloutSegment>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t w = 0; w < a.size(); ++w) {
    if (a[w].steps.size() != b[w].steps.size() || a[w].bootstrap_obs != b[w].bootstrap_obs) {
      return false;
    }
    for (std::size_t t = 0; t < a[w].steps.size(); ++t) {
      const auto& x = a[w].steps[t];
      const auto& y = b[w].steps[t];
      if (x.state != y.state || x.action != y.action || x.reward != y.reward ||
          x.terminal != y.terminal) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST(Collect, TerminalTruncatesSegment) {
  WorkerPool pool(chain(3), 2, 1);
  const auto segs = collect_segments(pool, always(env::kLeft), 5);
  for (const auto& s : segs) {
    ASSERT_EQ(s.steps.size(), 3u);
    EXPECT_TRUE(s.steps.back().terminal);
    EXPECT_FALSE(s.bootstraps());
    ASSERT_EQ(s.finished_returns.size(), 1u);
  }
  for (auto& w : pool.workers()) EXPECT_EQ(w.state, 1);
}

TEST(Collect, FullSegmentBootstraps) {
  WorkerPool pool(chain(10), 1, 1);
  const auto segs = collect_segments(pool, always(env::kLeft), 4);
  ASSERT_EQ(segs[0].steps.size(), 4u);
  EXPECT_TRUE(segs[0].bootstraps());
  EXPECT_EQ(segs[0].bootstrap_obs, env::ChainEnv(chain(10)).observe(5));
}

TEST(Collect, ParallelMatchesSerialAndSeedsRepeat) {
  WorkerPool a(chain(6), 8, 7), b(chain(6), 8, 7), c(chain(6), 8, 7);
  for (int round = 0; round < 20; ++round) {
    const auto sa = collect_segments(a, random_policy(), 5);
    const auto sb = collect_segments_serial(b, random_policy(), 5);
    const auto sc = collect_segments(c, random_policy(), 5);
    ASSERT_TRUE(same_segments(sa, sb));
    ASSERT_TRUE(same_segments(sa, sc));
  }
}

TEST(Collect, WorkerStreamsAreSeedXorIndex) {
  WorkerPool pool(chain(4), 3, 100);
  for (std::size_t i = 0; i < 3; ++i) {
    Rng expected(100 ^ i);
    EXPECT_EQ(pool.workers()[i].rng.uniform(), expected.uniform());
  }
}

TEST(NStepTargets, ZeroRewardsAndZeroNetGiveZero) {
  const std::vector<std::size_t> hidden{8};
  const QuantileNet zero(4, 2, 3, hidden, 0);
  WorkerPool pool(chain(4), 1, 1);
  RolloutSegment seg;
  for (int t = 0; t < 3; ++t) seg.steps.push_back({{}, 1, 0, 0, 0, 0.0, false});
  seg.bootstrap_obs = env::ChainEnv(chain(4)).observe(4);
  for (const auto& y : nstep_quantile_targets(seg, zero, 1.0)) {
    for (double v : y) EXPECT_EQ(v, 0.0);
  }
}

TEST(NStepTargets, OneStepIsQrDqnTarget) {
  const QuantileNet net = make_net(4, 3, 0, 5);
  const env::ChainEnv env(chain(4));
  RolloutSegment seg;
  seg.steps.push_back({env.observe(1), 1, env::kLeft, 0, 0, 0.7, false});
  seg.bootstrap_obs = env.observe(2);
  const auto y = nstep_quantile_targets(seg, net, 0.9);
  const auto q = net.quantiles(seg.bootstrap_obs);
  const auto a = greedy_mean_action(q, 2, 3);
  const auto qa = action_quantiles(q, 3, a);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[0][i], 0.7 + 0.9 * qa[i]);
}

TEST(NStepTargets, DiscountedSumWithoutBootstrapAfterTerminal) {
  const QuantileNet net = make_net(4, 2, 0, 6);
  RolloutSegment seg;
  seg.steps.push_back({{}, 1, 0, 0, 0, 1.0, false});
  seg.steps.push_back({{}, 2, 0, 0, 0, 2.0, false});
  seg.steps.push_back({{}, 3, 0, 0, 0, 4.0, true});
  const auto y = nstep_quantile_targets(seg, net, 0.5);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(y[0][i], 1.0 + 0.5 * 2.0 + 0.25 * 4.0);
    EXPECT_DOUBLE_EQ(y[2][i], 4.0);
  }
}

TEST(QuantileNetGrad, BackwardMatchesFiniteDifferences) {
  QuantileNet net = make_net(3, 2, 2, 9);
  const std::vector<double> obs{0.3, -1.0, 0.5};
  const std::vector<double> qg{0.1, -0.4, 0.3, 0.8};
  const std::vector<double> og{-0.6, 0.2};
  auto objective = [&] {
    const auto out = net.evaluate(obs);
    double s = 0;
    for (std::size_t i = 0; i < qg.size(); ++i) s += out.quantiles()[i] * qg[i];
    for (std::size_t i = 0; i < og.size(); ++i) s += out.options()[i] * og[i];
    return s;
  };
  auto grads = net.make_grads();
  net.backward(net.evaluate(obs), qg, og, grads);
  const double h = 1e-6;
  for (auto [part, g] : {std::pair{&net.trunk, &grads.trunk},
                         std::pair{&net.quantile_head, &grads.quantile_head},
                         std::pair{&net.option_head, &grads.option_head}}) {
    auto p = part->params();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double keep = p[k];
      p[k] = keep + h;
      const double up = objective();
      p[k] = keep - h;
      const double down = objective();
      p[k] = keep;
      EXPECT_NEAR(g->values[k], (up - down) / (2 * h), 1e-7);
    }
  }
}

TEST(QuotaAct, HoldingTimeIsGeometric) {
  // Many options so a reselection almost always changes the option.
  const std::size_t m = 100;
  const QuantileNet net = make_net(1, m, m, 3);
  const ActSchedules sched{0.0, 1.0, 0.01};
  tabular::OptionState os;
  Rng rng(12);
  const std::vector<double> obs{1.0};
  std::vector<double> runs;
  std::size_t current = quota_deep_act(net, obs, os, sched, 1, rng).option;
  double run = 1;
  for (int t = 1; t < 1000000; ++t) {
    const std::size_t o = quota_deep_act(net, obs, os, sched, 1, rng).option;
    if (o != current) {
      runs.push_back(run);
      run = 0;
      current = o;
    }
    ++run;
  }
  const double mean_run = std::accumulate(runs.begin(), runs.end(), 0.0) / runs.size();
  EXPECT_NEAR(mean_run, 100.0 * m / (m - 1.0), 4.0);
}

TEST(QuotaAct, SingleOptionMatchesQrDqnActionMarginal) {
  const std::size_t n_q = 4;
  const QuantileNet q_net = make_net(3, n_q, 0, 21);
  QuantileNet o_net = make_net(3, n_q, 1, 21);
  o_net.trunk = q_net.trunk;
  o_net.quantile_head = q_net.quantile_head;
  const ActSchedules sched{0.3, 0.5, 0.2};
  const std::vector<double> obs{1.0, 0.0, 0.0};
  Rng a(5), b(5);
  tabular::OptionState os;
  const int n = 20000;
  int left_q = 0, left_o = 0;
  for (int i = 0; i < n; ++i) {
    left_q += qr_dqn_act(q_net, obs, sched.epsilon, a) == env::kLeft;
    left_o += quota_deep_act(o_net, obs, os, sched, n_q, b).action == env::kLeft;
  }
  const double greedy_left =
      greedy_mean_action(q_net.quantiles(obs), 2, n_q) == env::kLeft ? 1.0 : 0.0;
  const double expected = (1 - sched.epsilon) * greedy_left + sched.epsilon * 0.5;
  EXPECT_NEAR(static_cast<double>(left_q) / n, expected, 0.015);
  EXPECT_NEAR(static_cast<double>(left_o) / n, expected, 0.015);
}

TEST(OptionFrequencies, ColumnsSumToOne) {
  Rng rng(2);
  std::vector<std::size_t> events(12345);
  for (auto& e : events) e = rng.index(5);
  const auto f = option_frequency_tracker(events, 5, 10);
  for (std::size_t b = 0; b < 10; ++b) {
    ASSERT_FALSE(f.empty_bin[b]);
    double s = 0;
    for (std::size_t o = 0; o < 5; ++o) s += f.at(b, o);
    EXPECT_EQ(s, 1.0);
  }
}

TEST(OptionFrequencies, FewerEventsThanBins) {
  const std::vector<std::size_t> events{0, 1, 1};
  const auto f = option_frequency_tracker(events, 2, 5);
  std::size_t filled = 0;
  for (std::size_t b = 0; b < 5; ++b) filled += !f.empty_bin[b];
  EXPECT_EQ(filled, 3u);
  EXPECT_THROW(option_frequency_tracker(events, 1, 5), std::invalid_argument);
  EXPECT_THROW(option_frequency_tracker(events, 2, 0), std::invalid_argument);
}

TEST(Update, OptionHeadMovesTowardIntraOptionTarget) {
  QuantileNet net = make_net(4, 2, 2, 31);
  QuantileNet target = net;
  Optimizers opt(net, {nn::OptimizerKind::sgd, 0.05});
  const env::ChainEnv env(chain(4));
  RolloutSegment seg;
  seg.steps.push_back({env.observe(4), 4, env::kLeft, 1, 0, 10.0, true});
  const std::vector<RolloutSegment> segs{seg};
  const auto levels = dist::quantile_midpoints(2);
  const double before = net.option_values(env.observe(4))[1];
  for (int i = 0; i < 200; ++i) {
    ASSERT_TRUE(quota_deep_update(net, target, segs, opt, levels, {1.0, 1.0, 0.01}).applied);
  }
  const double after = net.option_values(env.observe(4))[1];
  EXPECT_LT(std::abs(after - 10.0), std::abs(before - 10.0));
  EXPECT_NEAR(after, 10.0, 0.5);
}

TEST(Train, LockstepDeterminism) {
  auto cfg = default_deep_config(DeepAlgorithm::quota, 20000);
  cfg.seed = 77;
  cfg.log_every_updates = 10;
  const auto a = train_deep(cfg);
  const auto b = train_deep(cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.log[i], &b.log[i], sizeof(TrainingLogRow)), 0);
  }
  EXPECT_EQ(a.greedy_option_events, b.greedy_option_events);
  const auto pa = a.net.trunk.params();
  const auto pb = b.net.trunk.params();
  EXPECT_EQ(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)), 0);
}

TEST(Train, ZeroBudgetProducesNoLog) {
  auto cfg = default_deep_config(DeepAlgorithm::qr_dqn, 0);
  const auto r = train_deep(cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.global_steps, 0);
}
