#pragma once

// Run configuration: TOML file, dotted-key overrides, resolution of "auto"
// values and validation. The effective config is written back as TOML.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "dggm/pmcmc.hpp"
#include "dggm/returns.hpp"
#include "dggm/simulate.hpp"

namespace dggm::app {

struct RunConfig {
  // [data]; scenario used when path is empty
  std::string data_path;
  bool standardize = true;
  double scale = 1.0;  // multiply raw values, e.g. 0.01 for percent returns
  bool weekly = false;  // treat input as daily simple returns
  ScenarioSpec scenario;

  // [model]
  std::optional<double> omega;  // nullopt: empirical
  double z = 0.1;
  double p0 = 0.1;
  std::optional<int> ell;  // nullopt: p + 2
  double d = 3.0;
  std::string D = "identity";  // "identity", a positive number c (c I), or a CSV path

  // [sampler]
  SmcSettings smc;
  MoveProbabilities moves;
  ChainSettings chain;
  int n_mc = 1000;
  std::vector<int> init;

  // [refit]
  int refit_N = 1000;
  int refit_M = 20;
  int n_draws = 1000;
  double fdr_alpha = 0.05;
  std::vector<double> credible_levels{0.90, 0.95};
  int predictive_reps = 500;
  std::string predictive_mode = "graphs";

  std::string out = "run";
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"data", {"path", "standardize", "scale", "weekly"}},
      {"scenario", {"id", "p", "T", "seed", "changepoints", "edges", "toggle_probability", "garch_a", "garch_b",
                    "garch_start"}},
      {"model", {"omega", "z", "p0", "ell", "d", "D"}},
      {"sampler", {"N", "M", "epsilon", "s0", "n_iter", "burn_in", "thin", "seed", "q_birth", "q_death",
                   "q_death_full", "lambda", "n_mc", "threads", "delayed_acceptance", "surrogate_tuning", "init"}},
      {"refit", {"N", "M", "n_draws", "fdr_alpha", "credible_levels", "predictive_reps", "predictive_mode"}},
      {"output", {"dir"}},
  };
  return s;
}

inline void check_schema(const toml::table& tbl) {
  for (const auto& [section, node] : tbl) {
    const std::string name(section.str());
    auto it = schema().find(name);
    if (it == schema().end()) throw ConfigError("unknown config section [" + name + "]");
    const auto* sub = node.as_table();
    if (!sub) throw ConfigError("[" + name + "] must be a table");
    for (const auto& [key, v] : *sub)
      if (!it->second.count(std::string(key.str())))
        throw ConfigError("unknown config key " + name + "." + std::string(key.str()));
  }
}

inline std::string where(const std::string& s, const std::string& k) { return s + "." + k; }

template <class T>
std::optional<T> get(const toml::table& tbl, const std::string& s, const std::string& k) {
  const toml::node* n = tbl.at_path(where(s, k)).node();
  if (!n) return std::nullopt;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = n->value_exact<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = n->value_exact<std::string>()) return *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) return *v;
  } else {
    if (auto v = n->value_exact<std::int64_t>()) return static_cast<T>(*v);
  }
  throw ConfigError(where(s, k) + " has the wrong type");
}

template <class T>
void read(const toml::table& tbl, const std::string& s, const std::string& k, T& out) {
  if (auto v = get<T>(tbl, s, k)) out = *v;
}

template <class T>
std::optional<std::vector<T>> get_array(const toml::table& tbl, const std::string& s, const std::string& k) {
  const toml::node* n = tbl.at_path(where(s, k)).node();
  if (!n) return std::nullopt;
  const auto* arr = n->as_array();
  if (!arr) throw ConfigError(where(s, k) + " must be an array");
  std::vector<T> out;
  for (const auto& e : *arr) {
    std::optional<T> v;
    if constexpr (std::is_floating_point_v<T>) {
      if (e.is_number()) v = e.value<double>();
    } else {
      v = e.value_exact<std::int64_t>();
    }
    if (!v) throw ConfigError(where(s, k) + " has a non-numeric entry");
    out.push_back(static_cast<T>(*v));
  }
  return out;
}

/// "auto" or a number.
template <class T>
void read_auto(const toml::table& tbl, const std::string& s, const std::string& k, std::optional<T>& out) {
  const toml::node* n = tbl.at_path(where(s, k)).node();
  if (!n) return;
  if (auto str = n->value_exact<std::string>()) {
    if (*str != "auto") throw ConfigError(where(s, k) + " must be a number or \"auto\"");
    out.reset();
    return;
  }
  out = *get<T>(tbl, s, k);
}

}  // namespace detail

/// Parses "section.key=value" with the value in TOML syntax; bare words that
/// are not TOML values are taken as strings.
inline void apply_override(toml::table& tbl, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq), value = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw ConfigError("override key needs a section: " + path);
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed = toml::table{{"v", value}};
  }
  if (!tbl.contains(section)) tbl.insert(section, toml::table{});
  auto* sub = tbl[section].as_table();
  if (!sub) throw ConfigError("[" + section + "] must be a table");
  sub->insert_or_assign(key, std::move(*parsed.get("v")));
}

inline toml::table load_toml(const std::string& path) {
  try {
    return toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
}

inline RunConfig config_from_toml(const toml::table& tbl) {
  using namespace detail;
  check_schema(tbl);
  RunConfig c;
  read(tbl, "data", "path", c.data_path);
  read(tbl, "data", "standardize", c.standardize);
  read(tbl, "data", "scale", c.scale);
  read(tbl, "data", "weekly", c.weekly);
  auto& sc = c.scenario;
  read(tbl, "scenario", "id", sc.id);
  read(tbl, "scenario", "p", sc.p);
  read(tbl, "scenario", "T", sc.T);
  read(tbl, "scenario", "seed", sc.seed);
  if (auto v = get_array<int>(tbl, "scenario", "changepoints")) sc.changepoints = *v;
  read(tbl, "scenario", "edges", sc.edges);
  read(tbl, "scenario", "toggle_probability", sc.toggle_probability);
  read(tbl, "scenario", "garch_a", sc.garch_a);
  read(tbl, "scenario", "garch_b", sc.garch_b);
  read(tbl, "scenario", "garch_start", sc.garch_start);

  read_auto(tbl, "model", "omega", c.omega);
  read(tbl, "model", "z", c.z);
  read(tbl, "model", "p0", c.p0);
  read_auto(tbl, "model", "ell", c.ell);
  read(tbl, "model", "d", c.d);
  if (const toml::node* n = tbl.at_path("model.D").node()) {
    if (auto s = n->value_exact<std::string>()) c.D = *s;
    else if (auto v = n->value<double>(); v && n->is_number()) {
      std::ostringstream os;
      os.precision(17);
      os << *v;
      c.D = os.str();
    } else {
      throw ConfigError("model.D has the wrong type");
    }
  }

  read(tbl, "sampler", "N", c.smc.N);
  read(tbl, "sampler", "M", c.smc.M);
  read(tbl, "sampler", "epsilon", c.smc.epsilon);
  read(tbl, "sampler", "s0", c.smc.s0);
  read(tbl, "sampler", "threads", c.smc.threads);
  read(tbl, "sampler", "delayed_acceptance", c.smc.delayed_acceptance);
  read(tbl, "sampler", "surrogate_tuning", c.smc.surrogate_tuning);
  read(tbl, "sampler", "n_iter", c.chain.n_iter);
  read(tbl, "sampler", "burn_in", c.chain.burn_in);
  read(tbl, "sampler", "thin", c.chain.thin);
  read(tbl, "sampler", "seed", c.chain.seed);
  read(tbl, "sampler", "q_birth", c.moves.q_birth);
  read(tbl, "sampler", "q_death", c.moves.q_death);
  read(tbl, "sampler", "q_death_full", c.moves.q_death_full);
  read(tbl, "sampler", "lambda", c.moves.lambda);
  read(tbl, "sampler", "n_mc", c.n_mc);
  if (auto v = get_array<int>(tbl, "sampler", "init")) c.init = *v;

  read(tbl, "refit", "N", c.refit_N);
  read(tbl, "refit", "M", c.refit_M);
  read(tbl, "refit", "n_draws", c.n_draws);
  read(tbl, "refit", "fdr_alpha", c.fdr_alpha);
  if (auto v = get_array<double>(tbl, "refit", "credible_levels")) c.credible_levels = *v;
  read(tbl, "refit", "predictive_reps", c.predictive_reps);
  read(tbl, "refit", "predictive_mode", c.predictive_mode);
  read(tbl, "output", "dir", c.out);
  return c;
}

inline PredictiveMode parse_predictive_mode(const std::string& s) {
  if (s == "changepoints") return PredictiveMode::kChangePoints;
  if (s == "graphs") return PredictiveMode::kGraphs;
  if (s == "covariances") return PredictiveMode::kCovariances;
  throw ConfigError("predictive mode must be changepoints, graphs or covariances");
}

/// Range checks that do not need the data.
inline void validate(const RunConfig& c) {
  if (c.data_path.empty()) c.scenario.validate();
  if (!(c.scale > 0.0)) throw ConfigError("data.scale must be positive");
  if (c.omega && !(*c.omega >= 0.0)) throw ConfigError("model.omega must be non-negative");
  if (c.ell && *c.ell < 1) throw ConfigError("model.ell must be at least 1");
  if (!(c.d > 2.0)) throw ConfigError("model.d must exceed 2");
  c.moves.validate();
  c.chain.validate();
  if (c.n_mc < 1) throw ConfigError("sampler.n_mc must be positive");
  if (c.refit_N < 1 || c.refit_M < 0) throw ConfigError("refit.N must be positive and refit.M non-negative");
  if (c.n_draws < 1) throw ConfigError("refit.n_draws must be positive");
  if (!(c.fdr_alpha > 0.0 && c.fdr_alpha < 1.0)) throw ConfigError("refit.fdr_alpha must lie in (0, 1)");
  for (double l : c.credible_levels)
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("credible levels must lie in (0, 1)");
  if (c.predictive_reps < 2) throw ConfigError("refit.predictive_reps must be at least 2");
  parse_predictive_mode(c.predictive_mode);
  if (c.out.empty()) throw ConfigError("output.dir must be set");
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path);

inline Eigen::MatrixXd resolve_D(const std::string& spec, int p) {
  if (spec == "identity") return Eigen::MatrixXd::Identity(p, p);
  double v = 0.0;
  const char* end = spec.data() + spec.size();
  if (auto [ptr, ec] = std::from_chars(spec.data(), end, v); ec == std::errc() && ptr == end) {
    if (!(v > 0.0)) throw ConfigError("model.D scale must be positive");
    return v * Eigen::MatrixXd::Identity(p, p);
  }
  Eigen::MatrixXd D = read_matrix_csv(spec);
  if (D.rows() != p || D.cols() != p) throw ConfigError("model.D must be p x p");
  return D;
}

/// Loads or simulates the panel named by the config.
inline ReturnsPanel load_panel(const RunConfig& c, GroundTruth* truth = nullptr) {
  if (c.data_path.empty()) {
    auto sc = simulate_scenario(c.scenario);
    if (truth) *truth = sc.truth;
    return std::move(sc.panel);
  }
  auto panel = load_returns_csv(c.data_path, false);
  panel.Y *= c.scale;
  if (c.weekly) panel = weekly_log_returns(panel);
  if (c.standardize) standardize(panel);
  return panel;
}

/// Fills omega and ell from the data and checks model ranges.
inline ModelHyperparams resolve_model(RunConfig& c, const ReturnsPanel& panel) {
  const int p = panel.p();
  if (!c.omega) c.omega = empirical_omega(panel.Y);
  if (!c.ell) c.ell = p + 2;
  ModelHyperparams hp;
  hp.omega = *c.omega;
  hp.z = c.z;
  hp.p0 = c.p0;
  hp.ell = *c.ell;
  hp.gwishart = GWishartParams{c.d, resolve_D(c.D, p)};
  hp.validate(p);
  if (hp.ell > panel.T()) throw ConfigError("ell exceeds the number of observations");
  c.smc.validate(p);
  return hp;
}

inline toml::table to_toml(const RunConfig& c) {
  toml::table out;
  toml::table data{{"path", c.data_path}, {"standardize", c.standardize}, {"scale", c.scale}, {"weekly", c.weekly}};
  out.insert("data", std::move(data));
  const auto& s = c.scenario;
  toml::table scen{{"id", s.id},
                   {"p", s.p},
                   {"T", s.T},
                   {"seed", static_cast<std::int64_t>(s.seed)},
                   {"edges", s.edges},
                   {"toggle_probability", s.toggle_probability},
                   {"garch_a", s.garch_a},
                   {"garch_b", s.garch_b},
                   {"garch_start", s.garch_start}};
  if (s.changepoints) {
    toml::array a;
    for (int v : *s.changepoints) a.push_back(v);
    scen.insert("changepoints", std::move(a));
  }
  out.insert("scenario", std::move(scen));
  toml::table model{{"z", c.z}, {"p0", c.p0}, {"d", c.d}, {"D", c.D}};
  if (c.omega) model.insert("omega", *c.omega);
  else model.insert("omega", "auto");
  if (c.ell) model.insert("ell", *c.ell);
  else model.insert("ell", "auto");
  out.insert("model", std::move(model));
  toml::array init;
  for (int v : c.init) init.push_back(v);
  out.insert("sampler", toml::table{{"N", c.smc.N},
                                    {"M", c.smc.M},
                                    {"epsilon", c.smc.epsilon},
                                    {"s0", c.smc.s0},
                                    {"threads", c.smc.threads},
                                    {"delayed_acceptance", c.smc.delayed_acceptance},
                                    {"surrogate_tuning", c.smc.surrogate_tuning},
                                    {"n_iter", c.chain.n_iter},
                                    {"burn_in", c.chain.burn_in},
                                    {"thin", c.chain.thin},
                                    {"seed", static_cast<std::int64_t>(c.chain.seed)},
                                    {"q_birth", c.moves.q_birth},
                                    {"q_death", c.moves.q_death},
                                    {"q_death_full", c.moves.q_death_full},
                                    {"lambda", c.moves.lambda},
                                    {"n_mc", c.n_mc},
                                    {"init", std::move(init)}});
  toml::array levels;
  for (double l : c.credible_levels) levels.push_back(l);
  out.insert("refit", toml::table{{"N", c.refit_N},
                                  {"M", c.refit_M},
                                  {"n_draws", c.n_draws},
                                  {"fdr_alpha", c.fdr_alpha},
                                  {"credible_levels", std::move(levels)},
                                  {"predictive_reps", c.predictive_reps},
                                  {"predictive_mode", c.predictive_mode}});
  out.insert("output", toml::table{{"dir", c.out}});
  return out;
}

inline void write_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << to_toml(c) << '\n';
}

}  // namespace dggm::app
