#include "quota/sweep.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "quota/csv.hpp"

namespace quota::harness {

std::uint64_t cell_seed(std::uint64_t base, int length, tabular::Algorithm algo,
                        std::size_t trial) {
  return mix_seed(base, static_cast<std::uint64_t>(length), static_cast<std::uint64_t>(algo),
                  static_cast<std::uint64_t>(trial));
}

std::vector<SweepCell> enumerate_cells(const SweepSpec& spec, std::uint64_t base_seed) {
  std::vector<SweepCell> cells;
  for (auto chain : spec.chains) {
    for (int length : spec.lengths) {
      for (auto algo : spec.algorithms) {
        for (std::size_t t = 0; t < spec.trials; ++t) {
          cells.push_back({chain, length, algo, t, cell_seed(base_seed, length, algo, t)});
        }
      }
    }
  }
  return cells;
}

int pool_size() {
  const char* env = std::getenv("QUOTA_LAB_THREADS");
  if (!env || !*env) return omp_get_max_threads();
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    throw ConfigError("QUOTA_LAB_THREADS", std::string("expected a positive integer, got '") +
                                               env + "'");
  }
  return static_cast<int>(v);
}

namespace {

CellResult run_one(const SweepCell& c, const ExperimentConfig& cfg) {
  env::ChainConfig chain = cfg.chain;
  chain.variant = c.chain;
  chain.length = c.length;
  const std::int64_t steps = tabular::run_trial(c.algorithm, chain, cfg.tabular, c.seed);
  return {c, steps, steps >= cfg.tabular.learning.step_cap};
}

const char* chain_id(env::ChainVariant v) { return v == env::ChainVariant::chain1 ? "1" : "2"; }

}  // namespace

std::vector<CellResult> run_cells(const std::vector<SweepCell>& cells, const ExperimentConfig& cfg,
                                  int threads) {
  std::vector<CellResult> out(cells.size());
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = run_one(cells[static_cast<std::size_t>(i)], cfg);
  }
  return out;
}

std::vector<CellResult> run_cells_serial(const std::vector<SweepCell>& cells,
                                         const ExperimentConfig& cfg) {
  std::vector<CellResult> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(run_one(c, cfg));
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<CellResult>& results) {
  std::vector<SummaryRow> rows;
  std::map<std::tuple<int, int, int>, std::size_t> index;
  std::vector<std::vector<double>> steps;
  for (const auto& r : results) {
    const auto key = std::make_tuple(static_cast<int>(r.cell.chain), r.cell.length,
                                     static_cast<int>(r.cell.algorithm));
    auto [it, fresh] = index.try_emplace(key, rows.size());
    if (fresh) {
      rows.push_back({r.cell.chain, r.cell.length, r.cell.algorithm});
      steps.emplace_back();
    }
    SummaryRow& row = rows[it->second];
    ++row.trials;
    if (r.hit_cap) ++row.capped;
    steps[it->second].push_back(static_cast<double>(r.steps));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& v = steps[i];
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    rows[i].median = k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
    rows[i].mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(k);
    double ss = 0.0;
    for (double x : v) ss += (x - rows[i].mean) * (x - rows[i].mean);
    rows[i].std_err =
        k > 1 ? std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k)) : 0.0;
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<CellResult>& results,
                     const std::vector<SummaryRow>& summary) {
  csv::write_header(os, {"row_type", "chain", "length", "algorithm", "trial", "seed", "steps",
                         "hit_cap", "median", "mean", "std_err"});
  for (const auto& r : results) {
    csv::Row row;
    row.add("detail")
        .add(chain_id(r.cell.chain))
        .add(r.cell.length)
        .add(tabular::to_string(r.cell.algorithm))
        .add(static_cast<std::uint64_t>(r.cell.trial))
        .add(r.cell.seed)
        .add(r.steps)
        .add(r.hit_cap ? 1 : 0)
        .empty()
        .empty()
        .empty();
    csv::write_row(os, row);
  }
  for (const auto& s : summary) {
    csv::Row row;
    row.add("summary")
        .add(chain_id(s.chain))
        .add(s.length)
        .add(tabular::to_string(s.algorithm))
        .empty()
        .empty()
        .empty()
        .add(static_cast<std::uint64_t>(s.capped))
        .add(s.median)
        .add(s.mean)
        .add(s.std_err);
    csv::write_row(os, row);
  }
}

void ensure_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("output directory '" + dir.string() + "' cannot be created");
  }
  const auto probe = dir / ".quota_lab_probe";
  {
    std::ofstream os(probe);
    if (!os || !(os << "x")) {
      throw std::runtime_error("output directory '" + dir.string() + "' is not writable");
    }
  }
  std::filesystem::remove(probe, ec);
}

std::filesystem::path run_chain_sweep(const ExperimentConfig& cfg, int threads) {
  ensure_writable_dir(cfg.out_dir);
  const auto cells = enumerate_cells(cfg.sweep, cfg.seed);
  const auto results = run_cells(cells, cfg, threads);
  const auto path = cfg.out_dir / kSweepFile;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  write_sweep_csv(os, results, summarize(results));
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
  return path;
}

}  // namespace quota::harness
