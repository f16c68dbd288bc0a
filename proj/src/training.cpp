#include "quota/training.hpp"

#include <fstream>
#include <stdexcept>

#include "quota/csv.hpp"
#include "quota/sweep.hpp"

namespace quota::harness {

void write_training_log(std::ostream& os, const std::vector<deep::TrainingLogRow>& rows) {
  csv::write_header(os, {"global_step", "mean_episode_return_last_100", "loss", "epsilon",
                         "epsilon_omega"});
  for (const auto& r : rows) {
    csv::write_row(os, csv::Row()
                           .add(r.global_step)
                           .add(r.mean_return_last_100)
                           .add(r.loss)
                           .add(r.epsilon)
                           .add(r.epsilon_omega));
  }
}

void write_option_log(std::ostream& os, const deep::OptionFrequencies& f) {
  csv::write_header(os, {"bin_index", "option_index", "frequency"});
  for (std::size_t b = 0; b < f.n_bins; ++b) {
    if (f.empty_bin[b]) continue;
    for (std::size_t o = 0; o < f.m_options; ++o) {
      csv::write_row(os, csv::Row()
                             .add(static_cast<std::uint64_t>(b))
                             .add(static_cast<std::uint64_t>(o))
                             .add(f.freq[b * f.m_options + o]));
    }
  }
}

void write_eval_log(std::ostream& os, const std::vector<cont::EvalRow>& rows) {
  csv::write_header(os, {"train_step", "mean_eval_return_over_20_episodes", "std_err"});
  for (const auto& r : rows) {
    csv::write_row(os, csv::Row().add(r.train_step).add(r.mean_return).add(r.std_err));
  }
}

void write_snapshots(const std::filesystem::path& path,
                     const std::vector<const nn::DenseNet*>& nets) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  for (const nn::DenseNet* net : nets) nn::save_snapshot(os, *net);
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<nn::DenseNet> read_snapshots(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<nn::DenseNet> nets;
  while (is.peek() != std::char_traits<char>::eof()) nets.push_back(nn::load_snapshot(is));
  return nets;
}

namespace {

template <typename Fn>
std::filesystem::path write_file(const std::filesystem::path& dir, const char* name, Fn&& fn) {
  const auto path = dir / name;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  fn(os);
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
  return path;
}

TrainingOutcome run_deep(const ExperimentConfig& cfg) {
  const deep::DeepTrainingResult res = deep::train_deep(cfg.deep);
  TrainingOutcome out{{}, res.aborted, res.skipped_updates};
  const auto& dir = cfg.out_dir;
  out.files.push_back(write_file(dir, kTrainingLogFile,
                                 [&](std::ostream& os) { write_training_log(os, res.log); }));
  if (cfg.deep.algorithm == deep::DeepAlgorithm::quota) {
    const auto freq = deep::option_frequency_tracker(res.greedy_option_events,
                                                     cfg.deep.m_options, cfg.option_bins);
    out.files.push_back(
        write_file(dir, kOptionLogFile, [&](std::ostream& os) { write_option_log(os, freq); }));
  }
  std::vector<const nn::DenseNet*> nets{&res.net.trunk, &res.net.quantile_head};
  if (cfg.deep.algorithm == deep::DeepAlgorithm::quota) nets.push_back(&res.net.option_head);
  write_snapshots(dir / kSnapshotFile, nets);
  out.files.push_back(dir / kSnapshotFile);
  return out;
}

TrainingOutcome run_continuous(const ExperimentConfig& cfg) {
  const cont::ContTrainingResult res = cont::train_continuous(cfg.cont);
  TrainingOutcome out{{}, res.aborted, res.skipped_updates};
  const auto& dir = cfg.out_dir;
  out.files.push_back(
      write_file(dir, kEvalLogFile, [&](std::ostream& os) { write_eval_log(os, res.eval_log); }));
  std::vector<const nn::DenseNet*> nets;
  if (cfg.cont.algorithm == cont::ContAlgorithm::quota) {
    const auto freq = deep::option_frequency_tracker(
        res.option_events, cfg.cont.m_options + 1, cfg.option_bins);
    out.files.push_back(
        write_file(dir, kOptionLogFile, [&](std::ostream& os) { write_option_log(os, freq); }));
    for (const auto& a : res.quota.actors) nets.push_back(&a);
    nets.push_back(&res.quota.critic);
    nets.push_back(&res.quota.option_net);
  } else {
    nets = {&res.ac.actor, &res.ac.critic};
  }
  write_snapshots(dir / kSnapshotFile, nets);
  out.files.push_back(dir / kSnapshotFile);
  return out;
}

}  // namespace

TrainingOutcome run_training(const ExperimentConfig& cfg) {
  ensure_writable_dir(cfg.out_dir);
  switch (cfg.kind) {
    case ExperimentKind::deep: return run_deep(cfg);
    case ExperimentKind::continuous: return run_continuous(cfg);
    case ExperimentKind::chain_sweep: break;
  }
  throw std::logic_error("run_training: not a training experiment");
}

}  // namespace quota::harness
