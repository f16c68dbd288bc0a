// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quota/contagents.hpp"
#include "quota/deepagents.hpp"
#include "quota/distcore.hpp"
#include "quota/envs.hpp"
#include "quota/gradcheck.hpp"
#include "quota/sweep.hpp"
#include "quota/tabular.hpp"

using namespace quota;
namespace fs = std::filesystem;
using harness::SummaryRow;
using tabular::Algorithm;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::uint64_t kSweepSeed = 0;
constexpr std::int64_t kCap = 100000;

using Table = std::map<std::pair<env::ChainVariant, int>, std::map<Algorithm, SummaryRow>>;

Table chain_table(double* elapsed) {
  harness::ExperimentConfig cfg;
  cfg.seed = kSweepSeed;
  cfg.tabular.learning.step_cap = kCap;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cells = harness::enumerate_cells(cfg.sweep, cfg.seed);
  const auto results = harness::run_cells(cells, cfg, harness::pool_size());
  *elapsed = seconds_since(t0);
  Table t;
  for (const auto& row : harness::summarize(results)) t[{row.chain, row.length}][row.algorithm] = row;
  return t;
}

std::string medians(const std::map<Algorithm, SummaryRow>& m) {
  std::string s;
  for (const auto& [a, row] : m) s += fmt("%s=%g ", std::string(tabular::to_string(a)).c_str(), row.median);
  return s;
}

// Best specialised agent vs QR and Q-learning, and the opposite specialist far behind.
void check_ordering(int id, const Table& t, env::ChainVariant chain, Algorithm best, Algorithm other,
                    double elapsed, bool timed) {
  bool ok = !timed || elapsed < 300.0;
  std::string detail;
  for (int len : {6, 10, 14}) {
    const auto& m = t.at({chain, len});
    const double b = m.at(best).median;
    const bool cell = b < m.at(Algorithm::qr).median && b < m.at(Algorithm::qlearning).median &&
                      (m.at(other).median >= 5.0 * b || m.at(other).median >= kCap);
    ok = ok && cell;
    detail += fmt("[L=%d %s%s] ", len, medians(m).c_str(), cell ? "ok" : "violated");
  }
  if (timed) detail += fmt("sweep %.1fs", elapsed);
  report(id, ok, detail);
}

void criterion3(const Table& t) {
  bool ok = true;
  std::string detail;
  for (auto chain : {env::ChainVariant::chain1, env::ChainVariant::chain2}) {
    for (int len : {6, 10, 14}) {
      const auto& m = t.at({chain, len});
      const auto& q = m.at(Algorithm::quota);
      const bool cell = q.median < m.at(Algorithm::qr).median &&
                        q.median < m.at(Algorithm::qlearning).median && q.capped <= 2;
      ok = ok && cell;
      detail += fmt("[chain%d L=%d quota=%g qr=%g q=%g capped=%zu %s] ",
                    chain == env::ChainVariant::chain1 ? 1 : 2, len, q.median,
                    m.at(Algorithm::qr).median, m.at(Algorithm::qlearning).median, q.capped,
                    cell ? "ok" : "violated");
    }
  }
  report(3, ok, detail);
}

void criterion4() {
  constexpr double tol = 1e-5;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, gradcheck::Stats>> runs;
  runs.emplace_back("qr_loss", gradcheck::check_qr_loss(100, 401));
  const std::pair<const char*, nn::Activation> acts[] = {
      {"identity", nn::Activation::identity}, {"tanh", nn::Activation::tanh}, {"relu", nn::Activation::relu}};
  for (const auto& [name, act] : acts) {
    runs.emplace_back(std::string("params_") + name, gradcheck::check_net_params(100, 402, act));
    runs.emplace_back(std::string("input_") + name, gradcheck::check_net_input(100, 403, act));
  }
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 30.0;
  std::string detail;
  for (const auto& [name, s] : runs) {
    ok = ok && s.cases >= 100 && s.max_rel_error < tol;
    detail += fmt("%s max=%.2e ", name.c_str(), s.max_rel_error);
  }
  report(4, ok, detail + fmt("in %.2fs", elapsed));
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto levels = dist::quantile_midpoints(2);
  std::vector<double> samples;
  Rng mc(5001);
  for (int i = 0; i < 1000000; ++i) samples.push_back(mc.bernoulli(0.5) ? 1.0 : -1.0);
  std::sort(samples.begin(), samples.end());
  std::vector<double> empirical;
  for (double tau : levels.midpoints) {
    empirical.push_back(samples[static_cast<std::size_t>(tau * static_cast<double>(samples.size()))]);
  }
  bool ok = true;
  double worst = 0.0;
  std::string finals;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    tabular::LearningConfig cfg;
    cfg.alpha = 0.05;
    tabular::QuantileTable table(1, 1, 2);
    Rng rng(mix_seed(5002, seed));
    for (int i = 0; i < 100000; ++i) {
      const double r = rng.bernoulli(0.5) ? 1.0 : -1.0;
      tabular::qr_update_tabular(table, {1, 0, r, env::kTerminal, true}, cfg, levels);
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const double err = std::abs(table.at(1, 0)[i] - empirical[i]);
      worst = std::max(worst, err);
      ok = ok && err <= 0.15;
    }
    finals += fmt("(%.3f, %.3f) ", table.at(1, 0)[0], table.at(1, 0)[1]);
  }
  const double elapsed = seconds_since(t0);
  report(5, ok && elapsed < 60.0,
         fmt("empirical (%g, %g) learned %smax error %.4f in %.2fs", empirical[0], empirical[1],
             finals.c_str(), worst, elapsed));
}

void criterion6() {
  struct Run {
    const char* name;
    deep::DeepAlgorithm algo;
    std::int64_t budget;
    std::size_t workers;
  };
  bool ok = true;
  std::string detail;
  for (const Run& run : {Run{"qr-dqn", deep::DeepAlgorithm::qr_dqn, 200000, 16},
                         Run{"quota", deep::DeepAlgorithm::quota, 300000, 8}}) {
    int solved = 0;
    std::string steps;
    for (std::uint64_t k = 0; k < 5; ++k) {
      auto cfg = deep::default_deep_config(run.algo, run.budget);
      cfg.workers = run.workers;
      cfg.seed = mix_seed(6000, k);
      cfg.stop_when_optimal = true;
      const auto res = deep::train_deep(cfg);
      if (res.steps_to_optimal) {
        ++solved;
        steps += fmt("%lld ", static_cast<long long>(*res.steps_to_optimal));
      } else {
        steps += "- ";
      }
    }
    ok = ok && solved >= 4;
    detail += fmt("%s %d/5 (steps %s) ", run.name, solved, steps.c_str());
  }
  bool lockstep = true;
  for (auto algo : {deep::DeepAlgorithm::qr_dqn, deep::DeepAlgorithm::quota}) {
    auto cfg = deep::default_deep_config(algo, 30000);
    cfg.seed = 99;
    cfg.log_every_updates = 10;
    const auto a = deep::train_deep(cfg);
    const auto b = deep::train_deep(cfg);
    lockstep = lockstep && a.log.size() == b.log.size() && !a.log.empty() &&
               std::memcmp(a.log.data(), b.log.data(), a.log.size() * sizeof(deep::TrainingLogRow)) == 0 &&
               a.greedy_option_events == b.greedy_option_events;
  }
  report(6, ok && lockstep, detail + (lockstep ? "lockstep logs identical" : "lockstep logs differ"));
}

bool analytic_dpg() {
  const std::vector<std::size_t> hidden{16};
  nn::DenseNet actor = nn::DenseNet::mlp(1, hidden, 1, nn::Activation::tanh, nn::Activation::tanh);
  Rng rng(4);
  nn::initialize(actor, rng);
  nn::Optimizer opt({nn::OptimizerKind::adam, 1e-2}, actor.parameter_count());
  std::vector<cont::Transition> data;
  for (int i = 0; i < 64; ++i) data.push_back({{rng.uniform(-1, 1)}, {0.0}, 0.0, {0.0}, false, 0});
  std::vector<const cont::Transition*> batch;
  for (const auto& t : data) batch.push_back(&t);
  const cont::ActionGradient grad = [](std::span<const double>, std::span<const double> a) {
    return std::vector<double>{-2.0 * (a[0] - 0.3)};
  };
  for (int i = 0; i < 2000; ++i) {
    if (!opt.step(actor, cont::actor_gradient(actor, batch, grad))) return false;
  }
  for (double s : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    if (std::abs(nn::forward(actor, std::vector<double>{s})[0] - 0.3) > 0.01) return false;
  }
  return true;
}

void criterion7() {
  const env::Reach1dConfig env_cfg;
  const double b_rand = env::reach1d_random_baseline(100000, 7001, env_cfg).mean;
  const double b_opt = env::reach1d_oracle_baseline(100000, 7002, env_cfg).mean;
  const double threshold = b_rand + 0.5 * (b_opt - b_rand);
  bool ok = true;
  std::string detail = fmt("B_rand=%.3f B_opt=%.3f threshold=%.3f ", b_rand, b_opt, threshold);
  const std::pair<const char*, cont::ContAlgorithm> algos[] = {
      {"ddpg", cont::ContAlgorithm::ddpg},
      {"qr-ddpg", cont::ContAlgorithm::qr_ddpg},
      {"quota", cont::ContAlgorithm::quota}};
  for (const auto& [name, algo] : algos) {
    int passed = 0, ran = 0;
    std::string finals;
    for (std::uint64_t k = 0; k < 5; ++k) {
      if (passed >= 3 || passed + (5 - ran) < 3) break;  // outcome already decided
      auto cfg = cont::default_cont_config(algo, 50000);
      cfg.seed = mix_seed(7000, k);
      const auto res = cont::train_continuous(cfg);
      ++ran;
      const double final_return = res.eval_log.empty() ? b_rand : res.eval_log.back().mean_return;
      if (!res.aborted && final_return >= threshold) ++passed;
      finals += fmt("%.3f ", final_return);
    }
    ok = ok && passed >= 3;
    detail += fmt("%s %d/%d (final %s) ", name, passed, ran, finals.c_str());
  }
  const bool dpg = analytic_dpg();
  report(7, ok && dpg, detail + (dpg ? "analytic DPG -> 0.3" : "analytic DPG off target"));
}

bool m1_matches_mean_greedy() {
  Rng fill(81);
  tabular::QuantileTable t(8, 2, 6);
  for (int s = 1; s <= 8; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (double& v : t.at(s, a)) v = std::round(fill.uniform(-2, 2) * 2) / 2;
    }
  }
  Rng a(3), b(3);
  for (int i = 0; i < 20000; ++i) {
    const int s = 1 + i % 8;
    if (tabular::select_action(t, s, tabular::ScoreMode::window_of(0, 6), 0.0, a) !=
        tabular::select_action(t, s, tabular::ScoreMode::mean(), 0.0, b)) {
      return false;
    }
  }
  return true;
}

bool beta_one_is_q_learning() {
  Rng rng(82);
  tabular::LearningConfig cfg;
  cfg.gamma = 0.95;
  tabular::OptionValueTable a(6, 4), b(6, 4);
  for (int s = 1; s <= 6; ++s) {
    for (int w = 0; w < 4; ++w) a.at(s, w) = b.at(s, w) = rng.uniform(-3, 3);
  }
  for (int i = 0; i < 20000; ++i) {
    const int s = 1 + static_cast<int>(rng.index(6));
    const int s2 = 1 + static_cast<int>(rng.index(6));
    const int w = static_cast<int>(rng.index(4));
    const tabular::Transition t{s, w, rng.normal(), s2, rng.bernoulli(0.2)};
    tabular::intra_option_update(a, t, static_cast<std::size_t>(w), 1.0, cfg);
    tabular::q_learning_update(b, t, cfg);
    if (a.at(s, w) != b.at(s, w)) return false;
  }
  return true;
}

bool single_quantile_is_scaled_huber() {
  const std::vector<std::size_t> hidden{16};
  nn::DenseNet actor = nn::DenseNet::mlp(1, hidden, 1, nn::Activation::tanh, nn::Activation::tanh);
  nn::DenseNet critic = nn::DenseNet::mlp(2, hidden, 1);
  Rng rng(83);
  nn::initialize(actor, rng);
  nn::initialize(critic, rng);
  std::vector<cont::Transition> data;
  for (int i = 0; i < 64; ++i) {
    data.push_back({{rng.uniform(-1, 1)}, {rng.uniform(-1, 1)}, 0.1 * rng.normal(),
                    {rng.uniform(-1, 1)}, rng.bernoulli(0.2), 0});
  }
  std::vector<const cont::Transition*> batch;
  for (const auto& t : data) {
    const double y = cont::quantile_critic_targets(t, actor, critic, 0.9)[0];
    if (std::abs(y - nn::forward(critic, cont::concat(t.obs, t.action))[0]) >= 1.0) return false;
    batch.push_back(&t);
  }
  const auto qr = cont::qr_critic_gradient(critic, actor, critic, batch, 0.9,
                                           dist::quantile_midpoints(1), 1.0);
  const auto dd = cont::ddpg_critic_gradient(critic, actor, critic, batch, 0.9);
  for (std::size_t i = 0; i < qr.grads.values.size(); ++i) {
    if (std::abs(qr.grads.values[i] - 0.5 * dd.grads.values[i]) > 1e-12) return false;
  }
  return std::abs(qr.loss - 0.5 * dd.loss) <= 1e-12;
}

void criterion8() {
  const bool m1 = m1_matches_mean_greedy();
  const bool b1 = beta_one_is_q_learning();
  const bool n1 = single_quantile_is_scaled_huber();
  report(8, m1 && b1 && n1,
         fmt("M=1 argmax %s, beta=1 update %s, N=1 critic %s", m1 ? "equal" : "differs",
             b1 ? "equal" : "differs", n1 ? "scaled Huber" : "differs"));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void criterion9() {
  const fs::path root = fs::temp_directory_path() / "quota_lab_acceptance";
  fs::remove_all(root);
  harness::ExperimentConfig cfg;
  cfg.seed = 9;
  cfg.sweep.lengths = {3, 5, 7};
  cfg.sweep.trials = 5;
  cfg.out_dir = root / "a";
  const auto a = harness::run_chain_sweep(cfg, harness::pool_size());
  cfg.out_dir = root / "b";
  const auto b = harness::run_chain_sweep(cfg, 1);
  const std::string da = slurp(a), db = slurp(b);
  report(9, !da.empty() && da == db, fmt("%zu bytes, %s", da.size(), da == db ? "identical" : "different"));
  fs::remove_all(root);
}

}  // namespace

int main() {
  double elapsed = 0.0;
  const Table t = chain_table(&elapsed);
  check_ordering(1, t, env::ChainVariant::chain1, Algorithm::oqr, Algorithm::pqr, elapsed, true);
  check_ordering(2, t, env::ChainVariant::chain2, Algorithm::pqr, Algorithm::oqr, elapsed, false);
  criterion3(t);
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  return failures == 0 ? 0 : 1;
}
