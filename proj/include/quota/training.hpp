#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "quota/config.hpp"

namespace quota::harness {

inline constexpr const char* kTrainingLogFile = "training_log.csv";
inline constexpr const char* kOptionLogFile = "option_log.csv";
inline constexpr const char* kEvalLogFile = "eval_log.csv";
inline constexpr const char* kSnapshotFile = "snapshot.bin";

struct TrainingOutcome {
  std::vector<std::filesystem::path> files;
  bool aborted = false;
  std::int64_t skipped_updates = 0;
};

void write_training_log(std::ostream& os, const std::vector<deep::TrainingLogRow>& rows);
void write_option_log(std::ostream& os, const deep::OptionFrequencies& f);
void write_eval_log(std::ostream& os, const std::vector<cont::EvalRow>& rows);

/// Networks written back to back, each in the nnkit snapshot format.
void write_snapshots(const std::filesystem::path& path, const std::vector<const nn::DenseNet*>& nets);
std::vector<nn::DenseNet> read_snapshots(const std::filesystem::path& path);

/// Runs the configured deep or continuous training loop and writes its logs
/// and final snapshot into cfg.out_dir. Logs are written even when the run
/// aborts on repeated non-finite updates.
TrainingOutcome run_training(const ExperimentConfig& cfg);

}  // namespace quota::harness
