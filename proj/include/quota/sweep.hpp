#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include "quota/config.hpp"

namespace quota::harness {

struct SweepCell {
  env::ChainVariant chain;
  int length = 0;
  tabular::Algorithm algorithm;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
};

struct CellResult {
  SweepCell cell;
  std::int64_t steps = 0;
  bool hit_cap = false;
};

struct SummaryRow {
  env::ChainVariant chain;
  int length = 0;
  tabular::Algorithm algorithm;
  std::size_t trials = 0;
  std::size_t capped = 0;
  double median = 0.0;
  double mean = 0.0;
  double std_err = 0.0;
};

/// mix_seed(base, length, algorithm index, trial). Independent of cell order.
std::uint64_t cell_seed(std::uint64_t base, int length, tabular::Algorithm algo, std::size_t trial);

/// Cells ordered by chain, length, algorithm, trial.
std::vector<SweepCell> enumerate_cells(const SweepSpec& spec, std::uint64_t base_seed);

/// Worker-pool bound: QUOTA_LAB_THREADS if set (throws ConfigError when it is
/// not a positive integer), otherwise the OpenMP default.
int pool_size();

std::vector<CellResult> run_cells(const std::vector<SweepCell>& cells, const ExperimentConfig& cfg,
                                  int threads);
std::vector<CellResult> run_cells_serial(const std::vector<SweepCell>& cells,
                                         const ExperimentConfig& cfg);

std::vector<SummaryRow> summarize(const std::vector<CellResult>& results);

inline constexpr const char* kSweepFile = "chain_sweep.csv";

/// Columns: row_type, chain, length, algorithm, trial, seed, steps, hit_cap,
/// median, mean, std_err. Detail rows first, then summary rows.
void write_sweep_csv(std::ostream& os, const std::vector<CellResult>& results,
                     const std::vector<SummaryRow>& summary);

/// Throws std::runtime_error if `dir` cannot be created or written to.
void ensure_writable_dir(const std::filesystem::path& dir);

/// Checks the output directory, runs every cell on the pool and writes
/// <out_dir>/chain_sweep.csv. Returns the path written.
std::filesystem::path run_chain_sweep(const ExperimentConfig& cfg, int threads);

}  // namespace quota::harness
