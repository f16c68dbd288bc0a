// quota-lab: chain sweeps, training runs, gradient checks and baselines.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "quota/config.hpp"
#include "quota/contagents.hpp"
#include "quota/csv.hpp"
#include "quota/gradcheck.hpp"
#include "quota/sweep.hpp"
#include "quota/training.hpp"

#ifndef QUOTA_LAB_VERSION
#define QUOTA_LAB_VERSION "dev"
#endif

namespace {

using namespace quota;
using namespace quota::harness;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeAbort = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "INI experiment config");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "base seed (u64)");
  cmd->add_option("--trials", f.trials, "trials per cell / seeds / cases");
  cmd->add_option("--override", f.overrides, "section.key=value (repeatable)");
}

IniDocument load_document(const CommonFlags& f) {
  IniDocument doc = f.config.empty() ? IniDocument{} : parse_ini_file(f.config);
  for (const auto& o : f.overrides) apply_override(doc, o);
  if (f.seed) doc.sections["experiment"]["seed"] = std::to_string(*f.seed);
  if (f.trials) doc.sections["experiment"]["trials"] = std::to_string(*f.trials);
  if (!f.out.empty()) doc.sections["experiment"]["out"] = f.out;
  return doc;
}

int cmd_chain_sweep(const CommonFlags& f) {
  const ExperimentConfig cfg = build_experiment(load_document(f), true);
  const int threads = pool_size();
  const auto path = run_chain_sweep(cfg, threads);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  std::printf("%-8s %-6s %-9s %12s %12s %9s\n", "chain", "length", "algorithm", "median",
              "mean", "capped");
  while (std::getline(is, line)) {
    const auto fields = csv::parse_line(line);
    if (fields[0] != "summary") continue;
    std::printf("%-8s %-6s %-9s %12s %12s %9s\n", fields[1].c_str(), fields[2].c_str(),
                fields[3].c_str(), fields[8].c_str(), fields[9].c_str(), fields[7].c_str());
  }
  std::printf("wrote %s\n", path.string().c_str());
  return kOk;
}

int cmd_train(const CommonFlags& f) {
  const IniDocument doc = load_document(f);
  ExperimentConfig cfg = build_experiment(doc, false);
  const std::size_t runs = doc.has("experiment", "trials") ? cfg.sweep.trials : 1;
  bool aborted = false;
  for (std::size_t k = 0; k < runs; ++k) {
    ExperimentConfig run = cfg;
    if (runs > 1) {
      const std::uint64_t seed = mix_seed(cfg.seed, k);
      run.deep.seed = seed;
      run.cont.seed = seed;
      run.out_dir = cfg.out_dir / ("trial_" + std::to_string(k));
    }
    const TrainingOutcome out = run_training(run);
    for (const auto& p : out.files) std::printf("wrote %s\n", p.string().c_str());
    if (out.aborted) {
      std::fprintf(stderr, "training aborted after %lld skipped updates (non-finite loss)\n",
                   static_cast<long long>(out.skipped_updates));
      aborted = true;
    }
  }
  return aborted ? kRuntimeAbort : kOk;
}

int cmd_grad_check(const CommonFlags& f) {
  const std::uint64_t seed = f.seed.value_or(1);
  const std::size_t cases = f.trials.value_or(100);
  constexpr double kTol = 1e-5;
  struct Line {
    std::string name;
    gradcheck::Stats stats;
  };
  std::vector<Line> lines{{"qr_loss", gradcheck::check_qr_loss(cases, seed)}};
  const std::pair<const char*, nn::Activation> acts[] = {{"identity", nn::Activation::identity},
                                                         {"tanh", nn::Activation::tanh},
                                                         {"relu", nn::Activation::relu}};
  for (const auto& [name, act] : acts) {
    lines.push_back({std::string("net_params_") + name, gradcheck::check_net_params(cases, seed, act)});
    lines.push_back({std::string("net_input_") + name, gradcheck::check_net_input(cases, seed, act)});
  }
  bool ok = true;
  for (const auto& l : lines) {
    const bool pass = l.stats.max_rel_error < kTol;
    ok = ok && pass;
    std::printf("%-20s cases=%zu skipped=%zu max_rel_error=%.3e %s\n", l.name.c_str(),
                l.stats.cases, l.stats.skipped, l.stats.max_rel_error, pass ? "ok" : "FAIL");
  }
  if (!f.out.empty()) {
    ensure_writable_dir(f.out);
    std::ofstream os(std::filesystem::path(f.out) / "grad_check.csv", std::ios::binary);
    csv::write_header(os, {"check", "cases", "skipped", "max_rel_error"});
    for (const auto& l : lines) {
      csv::write_row(os, csv::Row()
                             .add(l.name)
                             .add(static_cast<std::uint64_t>(l.stats.cases))
                             .add(static_cast<std::uint64_t>(l.stats.skipped))
                             .add(l.stats.max_rel_error));
    }
  }
  return ok ? kOk : kRuntimeAbort;
}

int cmd_oracle(const CommonFlags& f) {
  const IniDocument doc = load_document(f);
  IniDocument probe = doc;
  probe.sections["env"].try_emplace("name", "reach1d");
  const ExperimentConfig cfg = build_experiment(probe, false);
  const std::uint64_t seed = cfg.seed;
  const std::size_t episodes = f.trials.value_or(100000);
  const auto& env_cfg = cfg.cont.env;
  const auto rand = env::reach1d_random_baseline(episodes, mix_seed(seed, 11), env_cfg);
  const auto opt = env::reach1d_oracle_baseline(episodes, mix_seed(seed, 12), env_cfg);

  const cont::NoiseProcess np = cfg.cont.noise;
  const double closed = np.sigma * np.sigma * np.dt /
                        (2.0 * np.theta * np.dt - np.theta * np.theta * np.dt * np.dt);
  cont::NoiseProcess sim = np;
  sim.reset();
  Rng rng(mix_seed(seed, 13));
  constexpr std::size_t kBurn = 1000;
  constexpr std::size_t kSteps = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < kBurn + kSteps; ++t) {
    const double x = cont::ou_step(sim, rng);
    if (t < kBurn) continue;
    sum += x;
    sum_sq += x * x;
  }
  const double m = sum / kSteps;
  const double simulated = sum_sq / kSteps - m * m;

  std::printf("B_rand  %.6f +- %.6f (%zu episodes)\n", rand.mean, rand.std_err, episodes);
  std::printf("B_opt   %.6f +- %.6f (%zu episodes)\n", opt.mean, opt.std_err, episodes);
  std::printf("OU stationary variance: closed form %.6f, simulated %.6f\n", closed, simulated);
  if (!cfg.out_dir.empty() && (doc.has("experiment", "out") || !f.out.empty())) {
    ensure_writable_dir(cfg.out_dir);
    std::ofstream os(cfg.out_dir / "oracle.csv", std::ios::binary);
    csv::write_header(os, {"quantity", "value", "std_err"});
    csv::write_row(os, csv::Row().add("B_rand").add(rand.mean).add(rand.std_err));
    csv::write_row(os, csv::Row().add("B_opt").add(opt.mean).add(opt.std_err));
    csv::write_row(os, csv::Row().add("ou_variance_closed_form").add(closed).empty());
    csv::write_row(os, csv::Row().add("ou_variance_simulated").add(simulated).empty());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quota-lab: quantile-option distributional RL lab"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto* sweep = app.add_subcommand("chain-sweep", "steps-to-optimal sweep over chain lengths");
  auto* train = app.add_subcommand("train", "deep or continuous training run");
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient checks");
  auto* oracle = app.add_subcommand("oracle", "Monte-Carlo baselines for reach1d and OU noise");
  auto* version = app.add_subcommand("version", "print the version");
  for (auto* cmd : {sweep, train, grad, oracle}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*version) {
      std::printf("quota-lab %s\n", QUOTA_LAB_VERSION);
      return kOk;
    }
    if (*sweep) return cmd_chain_sweep(flags);
    if (*train) return cmd_train(flags);
    if (*grad) return cmd_grad_check(flags);
    if (*oracle) return cmd_oracle(flags);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeAbort;
  }
  return kOk;
}
