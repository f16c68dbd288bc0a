#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "quota/tabular.hpp"

using namespace quota;
using namespace quota::tabular;

namespace {

void set_q(QuantileTable& t, int s, int a, std::vector<double> v) {
  auto q = t.at(s, a);
  std::copy(v.begin(), v.end(), q.begin());
}

Transition tr(int s, int a, double r, int s2, bool terminal) { return {s, a, r, s2, terminal}; }

}  // namespace

TEST(QLearning, Examples) {
  LearningConfig cfg;
  QTable q(3, 2);
  q_learning_update(q, tr(1, 0, 1.0, 2, false), cfg);
  EXPECT_DOUBLE_EQ(q.at(1, 0), 0.1);

  QTable t(3, 2);
  q_learning_update(t, tr(1, 0, 10.0, env::kTerminal, true), cfg);
  EXPECT_DOUBLE_EQ(t.at(1, 0), 1.0);

  QTable f(3, 2);
  f.at(1, 0) = 5;
  f.at(2, 1) = 5;
  q_learning_update(f, tr(1, 0, 0.0, 2, false), cfg);
  EXPECT_EQ(f.at(1, 0), 5.0);
}

TEST(QLearning, InvalidIndexThrows) {
  QTable q(3, 2);
  EXPECT_THROW(q_learning_update(q, tr(4, 0, 0, 1, false), {}), std::invalid_argument);
  EXPECT_THROW(q_learning_update(q, tr(1, 2, 0, 1, false), {}), std::invalid_argument);
}

TEST(QrTabular, SingleQuantileTerminal) {
  QuantileTable t(2, 2, 1);
  qr_update_tabular(t, tr(1, 0, 1.0, env::kTerminal, true), {}, dist::quantile_midpoints(1));
  EXPECT_DOUBLE_EQ(t.at(1, 0)[0], 0.05);
}

TEST(QrTabular, ZeroResidualIsFixedPoint) {
  QuantileTable t(2, 2, 3);
  set_q(t, 1, 0, {1, 1, 1});
  set_q(t, 2, 0, {1, 1, 1});
  qr_update_tabular(t, tr(1, 0, 0.0, 2, false), {}, dist::quantile_midpoints(3));
  for (double v : t.at(1, 0)) EXPECT_EQ(v, 1.0);
}

TEST(QrTabular, TerminalTargetsEqualReward) {
  QuantileTable a(2, 2, 3), b(2, 2, 3);
  set_q(a, 2, 0, {50, 60, 70});
  const auto levels = dist::quantile_midpoints(3);
  qr_update_tabular(a, tr(1, 1, 2.0, 2, true), {}, levels);
  qr_update_tabular(b, tr(1, 1, 2.0, 2, true), {}, levels);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.at(1, 1)[i], b.at(1, 1)[i]);
}

// Single-state bandit with rewards uniform on {-1, +1}.
TEST(QrTabular, RecoversBanditQuantiles) {
  LearningConfig cfg;
  cfg.alpha = 0.05;
  const auto levels = dist::quantile_midpoints(2);
  QuantileTable t(1, 1, 2);
  Rng rng(21);
  for (int i = 0; i < 100000; ++i) {
    const double r = rng.bernoulli(0.5) ? 1.0 : -1.0;
    qr_update_tabular(t, tr(1, 0, r, env::kTerminal, true), cfg, levels);
  }
  EXPECT_NEAR(t.at(1, 0)[0], -1.0, 0.15);
  EXPECT_NEAR(t.at(1, 0)[1], 1.0, 0.15);
}

// Huber drift balance tau * kappa = (1 - tau) * |u| puts the estimates at -+2/3.
TEST(QrTabular, BanditSettlesAtSmoothedFixedPoint) {
  LearningConfig cfg;
  cfg.alpha = 0.01;
  const auto levels = dist::quantile_midpoints(2);
  QuantileTable t(1, 1, 2);
  Rng rng(22);
  double lo = 0.0, hi = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double r = rng.bernoulli(0.5) ? 1.0 : -1.0;
    qr_update_tabular(t, tr(1, 0, r, env::kTerminal, true), cfg, levels);
    if (i >= n / 2) {
      lo += t.at(1, 0)[0];
      hi += t.at(1, 0)[1];
    }
  }
  EXPECT_NEAR(lo / (n / 2), -2.0 / 3.0, 0.03);
  EXPECT_NEAR(hi / (n / 2), 2.0 / 3.0, 0.03);
}

TEST(SelectAction, QuantileModes) {
  QuantileTable t(1, 2, 3);
  set_q(t, 1, env::kLeft, {-1, 0, 1});
  Rng rng(1);
  EXPECT_EQ(select_action(t, 1, ScoreMode::quantile(2), 0.0, rng), env::kLeft);
  EXPECT_EQ(select_action(t, 1, ScoreMode::quantile(0), 0.0, rng), env::kUp);
}

TEST(SelectAction, MeanTieIsUniform) {
  QuantileTable t(1, 2, 3);
  set_q(t, 1, env::kLeft, {-1, 0, 1});
  Rng rng(2);
  int left = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) left += select_action(t, 1, ScoreMode::mean(), 0.0, rng) == env::kLeft;
  EXPECT_NEAR(static_cast<double>(left) / n, 0.5, 0.02);
}

TEST(SelectAction, DispatchEqualityForOqrPqr) {
  Rng fill(3);
  QuantileTable t(4, 2, 3);
  for (int s = 1; s <= 4; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (double& v : t.at(s, a)) v = std::round(fill.uniform(-2, 2));
    }
  }
  for (auto [mode, window] : {std::pair{ScoreMode::quantile(2), ScoreMode::window_of(2, 1)},
                              std::pair{ScoreMode::quantile(0), ScoreMode::window_of(0, 1)},
                              std::pair{ScoreMode::mean(), ScoreMode::window_of(0, 3)}}) {
    Rng a(7), b(7);
    for (int i = 0; i < 2000; ++i) {
      const int s = 1 + i % 4;
      EXPECT_EQ(select_action(t, s, mode, 0.1, a), select_action(t, s, window, 0.1, b));
    }
  }
}

TEST(IntraOption, Examples) {
  LearningConfig cfg;
  OptionValueTable o(2, 3);
  intra_option_update(o, tr(1, 0, 1.0, 2, false), 1, 0.0, cfg);
  EXPECT_DOUBLE_EQ(o.at(1, 1), 0.1);

  LearningConfig g = cfg;
  g.gamma = 0.9;
  OptionValueTable p(2, 3);
  p.at(2, 1) = 2;
  p.at(2, 2) = 4;
  intra_option_update(p, tr(1, 0, 1.0, 2, false), 1, 0.5, g);
  EXPECT_NEAR(p.at(1, 1), 0.37, 1e-15);
}

TEST(IntraOption, BetaOneIsQLearningOverOptions) {
  Rng rng(5);
  LearningConfig cfg;
  cfg.gamma = 0.95;
  OptionValueTable a(4, 3), b(4, 3);
  for (int s = 1; s <= 4; ++s) {
    for (int w = 0; w < 3; ++w) a.at(s, w) = b.at(s, w) = rng.uniform(-3, 3);
  }
  for (int i = 0; i < 1000; ++i) {
    const int s = 1 + static_cast<int>(rng.index(4));
    const int s2 = 1 + static_cast<int>(rng.index(4));
    const int w = static_cast<int>(rng.index(3));
    const bool term = rng.bernoulli(0.2);
    const Transition t = tr(s, w, rng.normal(), s2, term);
    intra_option_update(a, t, static_cast<std::size_t>(w), 1.0, cfg);
    q_learning_update(b, t, cfg);
    ASSERT_EQ(a.at(s, w), b.at(s, w));
  }
}

TEST(Quota, BetaZeroKeepsOptionMidEpisode) {
  env::ChainConfig chain;
  chain.length = 50;
  LearningConfig lc;
  lc.epsilon = 0.0;
  OptionConfig oc;  // beta = 0
  const auto levels = dist::quantile_midpoints(3);
  QuotaTables tables{QuantileTable(50, 2, 3), OptionValueTable(50, 3)};
  for (int s = 1; s <= 50; ++s) set_q(tables.quantiles, s, env::kLeft, {1, 1, 1});
  OptionState os;
  Rng ar(1), er(2);
  int s = 1;
  const auto first = quota_tabular_step(tables, os, s, chain, lc, oc, levels, ar, er);
  s = first.result.next_state;
  for (int i = 0; i < 40; ++i) {
    const auto st = quota_tabular_step(tables, os, s, chain, lc, oc, levels, ar, er);
    ASSERT_FALSE(st.result.terminal);
    EXPECT_EQ(st.option, first.option);
    s = st.result.next_state;
  }
}

TEST(Quota, UniformOptionsWhenAlwaysRandom) {
  OptionValueTable o(1, 3);
  o.at(1, 2) = 5.0;
  OptionConfig oc;
  oc.beta = 1.0;
  oc.epsilon_omega = 1.0;
  OptionState os;
  Rng rng(9);
  std::array<int, 3> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[select_option(o, os, 1, oc, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.02);
}

TEST(Quota, CommittedTopOptionActsLikeTopQuantile) {
  QuotaTables tables{QuantileTable(1, 2, 3), OptionValueTable(1, 3)};
  set_q(tables.quantiles, 1, env::kLeft, {-1, 0, 1});
  env::ChainConfig chain;
  chain.length = 1;
  LearningConfig lc;
  lc.epsilon = 0.0;
  OptionConfig oc;
  OptionState os{2};
  Rng ar(1), er(1);
  const auto st =
      quota_tabular_step(tables, os, 1, chain, lc, oc, dist::quantile_midpoints(3), ar, er);
  EXPECT_EQ(st.option, 2u);
  EXPECT_EQ(st.action, env::kLeft);
}

TEST(Quota, ForcedReselectionAtEpisodeStart) {
  OptionValueTable o(1, 3);
  OptionConfig oc;
  oc.beta = 0.0;
  OptionState os;
  Rng rng(4);
  select_option(o, os, 1, oc, rng);
  EXPECT_TRUE(os.current_option.has_value());
}

TEST(Quota, SingleOptionMatchesMeanGreedy) {
  Rng fill(8);
  QuantileTable t(6, 2, 4);
  for (int s = 1; s <= 6; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (double& v : t.at(s, a)) v = std::round(fill.uniform(-2, 2) * 2) / 2;
    }
  }
  Rng a(3), b(3);
  for (int i = 0; i < 5000; ++i) {
    const int s = 1 + i % 6;
    EXPECT_EQ(select_action(t, s, ScoreMode::window_of(0, 4), 0.0, a),
              select_action(t, s, ScoreMode::mean(), 0.0, b));
  }
}

TEST(RunTrial, LengthOneIsQuickForAll) {
  TrialConfig cfg;
  for (auto v : {env::ChainVariant::chain1, env::ChainVariant::chain2}) {
    env::ChainConfig chain;
    chain.variant = v;
    chain.length = 1;
    for (auto algo : kAllAlgorithms) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EXPECT_LT(run_trial(algo, chain, cfg, seed), 2000) << to_string(algo) << " seed " << seed;
      }
    }
  }
}

TEST(RunTrial, Deterministic) {
  TrialConfig cfg;
  env::ChainConfig chain;
  chain.length = 5;
  for (auto algo : kAllAlgorithms) {
    EXPECT_EQ(run_trial(algo, chain, cfg, 42), run_trial(algo, chain, cfg, 42));
  }
}

TEST(RunTrial, QuotaRequiresMatchingWindows) {
  TrialConfig cfg;
  cfg.options.window = 2;
  env::ChainConfig chain;
  EXPECT_THROW(run_trial(Algorithm::quota, chain, cfg, 1), std::invalid_argument);
}

TEST(RunTrial, TablesStayFinite) {
  for (auto v : {env::ChainVariant::chain1, env::ChainVariant::chain2}) {
    env::ChainConfig chain;
    chain.variant = v;
    chain.length = 10;
    LearningConfig lc;
    lc.alpha = 0.5;
    const auto levels = dist::quantile_midpoints(3);
    QuotaTables tables{QuantileTable(10, 2, 3), OptionValueTable(10, 3)};
    OptionConfig oc;
    OptionState os;
    Rng ar(1), er(2);
    int s = 1;
    for (int i = 0; i < 100000; ++i) {
      const auto st = quota_tabular_step(tables, os, s, chain, lc, oc, levels, ar, er);
      s = st.result.terminal ? 1 : st.result.next_state;
    }
    for (double x : tables.quantiles.values()) ASSERT_TRUE(std::isfinite(x));
    for (double x : tables.options.values()) ASSERT_TRUE(std::isfinite(x));
  }
}

TEST(ParseAlgorithm, RoundTripAndUnknown) {
  for (auto a : kAllAlgorithms) EXPECT_EQ(parse_algorithm(to_string(a)), a);
  EXPECT_THROW(parse_algorithm("sarsa"), std::invalid_argument);
}

TEST(RunTrial, Chain1OqrBeatsQrAtLengthTen) {
  TrialConfig cfg;
  env::ChainConfig chain;
  chain.length = 10;
  std::vector<std::int64_t> oqr, qr;
  for (std::uint64_t s = 0; s < 10; ++s) {
    oqr.push_back(run_trial(Algorithm::oqr, chain, cfg, s));
    qr.push_back(run_trial(Algorithm::qr, chain, cfg, s));
  }
  std::sort(oqr.begin(), oqr.end());
  std::sort(qr.begin(), qr.end());
  EXPECT_LT(oqr[4] + oqr[5], qr[4] + qr[5]);
}

TEST(RunTrial, Chain2PqrBeatsOqrAtLengthTen) {
  TrialConfig cfg;
  env::ChainConfig chain;
  chain.length = 10;
  chain.variant = env::ChainVariant::chain2;
  std::vector<std::int64_t> pqr, oqr;
  for (std::uint64_t s = 0; s < 10; ++s) {
    pqr.push_back(run_trial(Algorithm::pqr, chain, cfg, s));
    oqr.push_back(run_trial(Algorithm::oqr, chain, cfg, s));
  }
  std::sort(pqr.begin(), pqr.end());
  std::sort(oqr.begin(), oqr.end());
  EXPECT_LT(pqr[4] + pqr[5], oqr[4] + oqr[5]);
}
