#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quota/contagents.hpp"
#include "quota/deepagents.hpp"
#include "quota/envs.hpp"
#include "quota/tabular.hpp"

namespace quota::harness {

/// Validation failure tied to one config key ("section.key").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

using IniSection = std::map<std::string, std::string>;

struct IniDocument {
  std::map<std::string, IniSection> sections;

  bool has(const std::string& section, const std::string& key) const;
};

IniDocument parse_ini_string(const std::string& text);
IniDocument parse_ini_file(const std::filesystem::path& path);

/// "section.key=value"; the section is everything before the last dot, so
/// "schedule.epsilon.end=0.1" sets key "end" in [schedule.epsilon].
void apply_override(IniDocument& doc, std::string_view assignment);

enum class ExperimentKind { chain_sweep, deep, continuous };

struct SweepSpec {
  std::vector<env::ChainVariant> chains{env::ChainVariant::chain1, env::ChainVariant::chain2};
  std::vector<int> lengths{6, 10, 14};
  std::vector<tabular::Algorithm> algorithms{std::begin(tabular::kAllAlgorithms),
                                             std::end(tabular::kAllAlgorithms)};
  std::size_t trials = 10;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::chain_sweep;
  std::string id = "experiment";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  SweepSpec sweep;
  env::ChainConfig chain;  // length and variant are overwritten per sweep cell
  tabular::TrialConfig tabular;
  deep::DeepConfig deep;
  cont::ContConfig cont;
  std::size_t option_bins = 10;
};

/// `sweep_verb` selects chain-sweep over train; a conflicting [experiment] kind
/// is a config error. For training verbs the env name picks deep vs continuous.
ExperimentConfig build_experiment(const IniDocument& doc, bool sweep_verb);

}  // namespace quota::harness
