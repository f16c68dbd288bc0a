#include "quota/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace quota::harness {

namespace pt = boost::property_tree;

bool IniDocument::has(const std::string& section, const std::string& key) const {
  const auto it = sections.find(section);
  return it != sections.end() && it->second.count(key) > 0;
}

namespace {

IniDocument from_ptree(const pt::ptree& tree) {
  IniDocument doc;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "key outside of any section");
    auto& out = doc.sections[section];
    for (const auto& [key, value] : body) out[key] = value.data();
  }
  return doc;
}

IniDocument parse_stream(std::istream& is, const std::string& origin) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin, e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return from_ptree(tree);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Reads typed values and tracks which keys were consumed.
class Reader {
 public:
  explicit Reader(const IniDocument& doc) : doc_(doc) {}

  const std::string* raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    const auto s = doc_.sections.find(section);
    if (s == doc_.sections.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  bool has_section(const std::string& section) const { return doc_.sections.count(section) > 0; }

  std::string text(const std::string& section, const std::string& key, std::string fallback) {
    const std::string* v = raw(section, key);
    return v ? trim(*v) : fallback;
  }

  double real(const std::string& section, const std::string& key, double fallback) {
    const std::string* v = raw(section, key);
    if (!v) return fallback;
    const std::string t = trim(*v);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(out)) {
      throw ConfigError(section + "." + key, "expected a finite number, got '" + t + "'");
    }
    return out;
  }

  template <typename Int>
  Int integer(const std::string& section, const std::string& key, Int fallback) {
    const std::string* v = raw(section, key);
    if (!v) return fallback;
    return parse_int<Int>(section + "." + key, trim(*v));
  }

  template <typename Int>
  static Int parse_int(const std::string& key, const std::string& t) {
    Int out{};
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size()) {
      throw ConfigError(key, "expected an integer, got '" + t + "'");
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [section, body] : doc_.sections) {
      for (const auto& [key, value] : body) {
        if (!used_.count(section + "." + key)) {
          throw ConfigError(section + "." + key, "unknown key");
        }
      }
    }
  }

 private:
  const IniDocument& doc_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

Schedule read_schedule(Reader& r, const std::string& name, Schedule fallback) {
  const std::string section = "schedule." + name;
  if (!r.has_section(section)) return fallback;
  Schedule s = fallback;
  const std::string kind = r.text(section, "kind", "");
  if (!kind.empty()) {
    try {
      s.kind = parse_schedule_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(section + ".kind", e.what());
    }
  }
  s.start = r.real(section, "start", s.start);
  s.end = r.real(section, "end", s.kind == Schedule::Kind::constant ? s.start : s.end);
  s.horizon = r.integer<std::int64_t>(section, "horizon", s.horizon);
  require(s.kind == Schedule::Kind::constant || s.horizon > 0, section + ".horizon",
          "linear horizon must be positive");
  return s;
}

env::ChainVariant parse_chain(const std::string& key, const std::string& id) {
  if (id == "1" || id == "chain1") return env::ChainVariant::chain1;
  if (id == "2" || id == "chain2") return env::ChainVariant::chain2;
  throw ConfigError(key, "unknown chain '" + id + "'");
}

std::vector<std::size_t> read_sizes(Reader& r, const std::string& section, const std::string& key,
                                    std::vector<std::size_t> fallback) {
  const std::string* v = r.raw(section, key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(*v)) {
    out.push_back(Reader::parse_int<std::size_t>(section + "." + key, item));
  }
  require(!out.empty(), section + "." + key, "list must not be empty");
  for (std::size_t x : out) require(x > 0, section + "." + key, "entries must be positive");
  return out;
}

}  // namespace

IniDocument parse_ini_string(const std::string& text) {
  std::istringstream is(text);
  return parse_stream(is, "config");
}

IniDocument parse_ini_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot read '" + path.string() + "'");
  return parse_stream(is, path.string());
}

void apply_override(IniDocument& doc, std::string_view assignment) {
  const std::string text(assignment);
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(text, "override must look like section.key=value");
  const std::string path = trim(text.substr(0, eq));
  const auto dot = path.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
    throw ConfigError(path, "override key must look like section.key");
  }
  doc.sections[path.substr(0, dot)][path.substr(dot + 1)] = trim(text.substr(eq + 1));
}

ExperimentConfig build_experiment(const IniDocument& doc, bool sweep_verb) {
  Reader r(doc);
  ExperimentConfig cfg;

  const std::string env_name = r.text("env", "name", "chain1");
  const bool continuous = env_name == "reach1d";
  require(env_name == "chain1" || env_name == "chain2" || continuous, "env.name",
          "unknown environment '" + env_name + "'");
  cfg.kind = sweep_verb ? ExperimentKind::chain_sweep
                        : (continuous ? ExperimentKind::continuous : ExperimentKind::deep);
  const std::string kind = r.text("experiment", "kind", "");
  if (!kind.empty()) {
    const bool ok = sweep_verb ? kind == "chain-sweep" : kind == "train";
    require(ok, "experiment.kind",
            "'" + kind + "' does not match the verb (" + (sweep_verb ? "chain-sweep" : "train") +
                ")");
  }
  require(!(sweep_verb && continuous), "env.name", "chain-sweep needs a chain environment");

  cfg.id = r.text("experiment", "id", cfg.id);
  cfg.seed = r.integer<std::uint64_t>("experiment", "seed", 0);
  cfg.out_dir = r.text("experiment", "out", cfg.out_dir.string());
  cfg.sweep.trials = r.integer<std::size_t>("experiment", "trials", cfg.sweep.trials);
  require(cfg.sweep.trials >= 1, "experiment.trials", "must be at least 1");
  cfg.option_bins = r.integer<std::size_t>("experiment", "option_bins", cfg.option_bins);
  require(cfg.option_bins >= 1, "experiment.option_bins", "must be at least 1");

  // [env]
  env::ChainConfig& ch = cfg.chain;
  if (!continuous) ch.variant = parse_chain("env.name", env_name);
  ch.length = r.integer<int>("env", "length", sweep_verb ? 6 : 5);
  require(ch.length >= 1, "env.length", "must be at least 1");
  ch.left_reward_variance = r.real("env", "left_reward_variance", ch.left_reward_variance);
  ch.up_reward_variance = r.real("env", "up_reward_variance", ch.up_reward_variance);
  require(ch.left_reward_variance >= 0, "env.left_reward_variance", "must be non-negative");
  require(ch.up_reward_variance >= 0, "env.up_reward_variance", "must be non-negative");
  ch.goal_reward = r.real("env", "goal_reward", ch.goal_reward);
  ch.left_cost = r.real("env", "left_cost", ch.left_cost);
  env::Reach1dConfig reach;
  reach.step_scale = r.real("env", "step_scale", reach.step_scale);
  reach.noise_variance = r.real("env", "noise_variance", reach.noise_variance);
  require(reach.noise_variance >= 0, "env.noise_variance", "must be non-negative");
  reach.horizon = r.integer<int>("env", "horizon", reach.horizon);
  require(reach.horizon >= 1, "env.horizon", "must be at least 1");

  // [sweep]
  if (const std::string* v = r.raw("sweep", "chains")) {
    cfg.sweep.chains.clear();
    for (const auto& c : split_list(*v)) cfg.sweep.chains.push_back(parse_chain("sweep.chains", c));
    require(!cfg.sweep.chains.empty(), "sweep.chains", "list must not be empty");
  } else if (r.raw("env", "name")) {
    cfg.sweep.chains = {ch.variant};
  }
  if (r.raw("sweep", "lengths")) {
    cfg.sweep.lengths.clear();
    for (std::size_t l : read_sizes(r, "sweep", "lengths", {})) {
      cfg.sweep.lengths.push_back(static_cast<int>(l));
    }
  }
  if (const std::string* v = r.raw("sweep", "algorithms")) {
    cfg.sweep.algorithms.clear();
    for (const auto& a : split_list(*v)) {
      try {
        cfg.sweep.algorithms.push_back(tabular::parse_algorithm(a));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sweep.algorithms", e.what());
      }
    }
    require(!cfg.sweep.algorithms.empty(), "sweep.algorithms", "list must not be empty");
  }

  // [agent]
  const std::string algo = r.text("agent", "algorithm", "quota");
  std::int64_t total = r.integer<std::int64_t>("agent", "total_steps", -1);
  require(total >= -1, "agent.total_steps", "must be non-negative");

  tabular::TrialConfig& tc = cfg.tabular;
  tc.learning.alpha = r.real("agent", "alpha", tc.learning.alpha);
  tc.learning.epsilon = r.real("agent", "epsilon", tc.learning.epsilon);
  tc.learning.gamma = r.real("agent", "gamma", continuous ? reach.gamma : tc.learning.gamma);
  tc.learning.kappa = r.real("agent", "kappa", tc.learning.kappa);
  tc.learning.step_cap = r.integer<std::int64_t>("agent", "step_cap", tc.learning.step_cap);
  require(tc.learning.alpha > 0 && tc.learning.alpha <= 1, "agent.alpha", "must be in (0, 1]");
  require(tc.learning.epsilon >= 0 && tc.learning.epsilon <= 1, "agent.epsilon",
          "must be in [0, 1]");
  require(tc.learning.gamma >= 0 && tc.learning.gamma <= 1, "agent.gamma", "must be in [0, 1]");
  require(tc.learning.kappa > 0, "agent.kappa", "must be positive");
  require(tc.learning.step_cap >= 1, "agent.step_cap", "must be at least 1");

  const std::size_t default_n = sweep_verb ? 3 : (continuous ? 20 : 5);
  const std::size_t default_m = sweep_verb ? 3 : 5;
  const std::size_t n_q = r.integer<std::size_t>("agent", "n_quantiles", default_n);
  const std::size_t m = r.integer<std::size_t>("agent", "m_options", default_m);
  require(n_q >= 1, "agent.n_quantiles", "must be at least 1");
  require(m >= 1, "agent.m_options", "must be at least 1");
  const std::size_t window = r.integer<std::size_t>("agent", "window", n_q / m);
  require(window >= 1 && window * m <= n_q, "agent.window",
          "window * m_options must not exceed n_quantiles");
  const double beta_default = sweep_verb ? 0.0 : (continuous ? 1.0 : 0.01);
  const double beta = r.real("agent", "beta", beta_default);
  require(beta >= 0 && beta <= 1, "agent.beta", "must be in [0, 1]");
  const double eps_omega = r.real("agent", "epsilon_omega", 0.1);
  require(eps_omega >= 0 && eps_omega <= 1, "agent.epsilon_omega", "must be in [0, 1]");
  tc.n_quantiles = n_q;
  tc.options.m_options = m;
  tc.options.window = window;
  tc.options.beta = beta;
  tc.options.epsilon_omega = eps_omega;
  if (sweep_verb && !r.raw("sweep", "algorithms") && r.raw("agent", "algorithm")) {
    try {
      cfg.sweep.algorithms = {tabular::parse_algorithm(algo)};
    } catch (const std::invalid_argument& e) {
      throw ConfigError("agent.algorithm", e.what());
    }
  }
  if (sweep_verb) {
    for (auto a : cfg.sweep.algorithms) {
      if (a == tabular::Algorithm::quota) {
        require(m * window == n_q, "agent.window", "QUOTA needs m_options * window == n_quantiles");
      }
    }
  }

  const std::vector<std::size_t> hidden = read_sizes(
      r, "agent", "hidden", continuous ? std::vector<std::size_t>{64} : std::vector<std::size_t>{64, 64});
  const std::int64_t log_every = r.integer<std::int64_t>("agent", "log_every_updates", 50);
  require(log_every >= 1, "agent.log_every_updates", "must be at least 1");

  if (cfg.kind == ExperimentKind::deep) {
    deep::DeepAlgorithm da;
    if (algo == "qr-dqn" || algo == "qr_dqn") {
      da = deep::DeepAlgorithm::qr_dqn;
    } else if (algo == "quota") {
      da = deep::DeepAlgorithm::quota;
    } else {
      throw ConfigError("agent.algorithm", "unknown deep algorithm '" + algo + "'");
    }
    deep::DeepConfig d = deep::default_deep_config(da, total < 0 ? 200000 : total);
    d.chain = ch;
    d.n_quantiles = n_q;
    if (da == deep::DeepAlgorithm::quota) {
      d.m_options = m;
      d.window = window;
    }
    d.workers = r.integer<std::size_t>("agent", "workers", d.workers);
    d.rollout = r.integer<std::size_t>("agent", "rollout", d.rollout);
    require(d.workers >= 1, "agent.workers", "must be at least 1");
    require(d.rollout >= 1, "agent.rollout", "must be at least 1");
    d.hidden = hidden;
    d.gamma = tc.learning.gamma;
    d.kappa = tc.learning.kappa;
    d.beta = beta;
    const std::string opt = r.text("agent", "optimizer", "rmsprop");
    if (opt == "sgd") {
      d.optimizer.kind = nn::OptimizerKind::sgd;
    } else if (opt == "rmsprop") {
      d.optimizer.kind = nn::OptimizerKind::rmsprop;
    } else if (opt == "adam") {
      d.optimizer.kind = nn::OptimizerKind::adam;
    } else {
      throw ConfigError("agent.optimizer", "unknown optimizer '" + opt + "'");
    }
    d.optimizer.learning_rate = r.real("agent", "lr", d.optimizer.learning_rate);
    require(d.optimizer.learning_rate > 0, "agent.lr", "must be positive");
    d.target_sync_every = r.integer<std::int64_t>("agent", "target_sync_every", d.target_sync_every);
    require(d.target_sync_every >= 1, "agent.target_sync_every", "must be at least 1");
    d.epsilon = read_schedule(r, "epsilon", d.epsilon);
    d.epsilon_omega = read_schedule(r, "epsilon_omega", d.epsilon_omega);
    d.log_every_updates = log_every;
    d.seed = cfg.seed;
    cfg.deep = d;
  } else if (cfg.kind == ExperimentKind::continuous) {
    cont::ContAlgorithm ca;
    try {
      ca = cont::parse_cont_algorithm(algo);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("agent.algorithm", e.what());
    }
    cont::ContConfig c = cont::default_cont_config(ca, total < 0 ? 50000 : total);
    reach.gamma = tc.learning.gamma;
    c.env = reach;
    c.hidden = hidden;
    if (ca != cont::ContAlgorithm::ddpg) c.n_quantiles = n_q;
    c.m_options = m;
    if (ca == cont::ContAlgorithm::quota) {
      require(n_q % m == 0, "agent.m_options", "must divide n_quantiles");
    }
    c.replay_capacity = r.integer<std::size_t>("agent", "replay_capacity", c.replay_capacity);
    c.batch = r.integer<std::size_t>("agent", "batch", c.batch);
    require(c.replay_capacity >= 1, "agent.replay_capacity", "must be at least 1");
    require(c.batch >= 1 && c.batch <= c.replay_capacity, "agent.batch",
            "must be in [1, replay_capacity]");
    c.learning_starts = r.integer<std::int64_t>("agent", "learning_starts", c.learning_starts);
    c.tau_soft = r.real("agent", "tau_soft", c.tau_soft);
    require(c.tau_soft > 0 && c.tau_soft <= 1, "agent.tau_soft", "must be in (0, 1]");
    c.critic_lr = r.real("agent", "critic_lr", c.critic_lr);
    c.actor_lr = r.real("agent", "actor_lr", c.actor_lr);
    require(c.critic_lr > 0, "agent.critic_lr", "must be positive");
    require(c.actor_lr > 0, "agent.actor_lr", "must be positive");
    c.kappa = tc.learning.kappa;
    c.beta = beta;
    c.epsilon_omega = read_schedule(r, "epsilon_omega", c.epsilon_omega);
    c.noise.theta = r.real("agent", "ou_theta", c.noise.theta);
    c.noise.sigma = r.real("agent", "ou_sigma", c.noise.sigma);
    require(c.noise.sigma >= 0, "agent.ou_sigma", "must be non-negative");
    c.eval_every = r.integer<std::int64_t>("agent", "eval_every", c.eval_every);
    c.eval_episodes = r.integer<std::size_t>("agent", "eval_episodes", c.eval_episodes);
    require(c.eval_episodes >= 1, "agent.eval_episodes", "must be at least 1");
    c.seed = cfg.seed;
    cfg.cont = c;
  } else {
    // Accepted for a shared config file; unused by sweeps.
    for (const char* k : {"workers", "rollout", "optimizer", "lr", "target_sync_every",
                          "replay_capacity", "batch", "learning_starts", "tau_soft", "critic_lr",
                          "actor_lr", "ou_theta", "ou_sigma", "eval_every", "eval_episodes"}) {
      r.raw("agent", k);
    }
    for (const char* s : {"schedule.epsilon", "schedule.epsilon_omega"}) {
      for (const char* k : {"kind", "start", "end", "horizon"}) r.raw(s, k);
    }
  }

  r.reject_unknown();
  return cfg;
}

}  // namespace quota::harness
