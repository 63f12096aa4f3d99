// dggm: change-point detection for dynamic Gaussian graphical models.

#include <CLI11.hpp>
#include <iostream>

#include "app/commands.hpp"

using namespace dggm;
using namespace dggm::app;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "TOML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config value, e.g. --set sampler.n_iter=500")
      ->type_name("SECTION.KEY=VALUE");
  cmd->add_option("--threads", c.threads, "worker threads for the particle filter")->check(CLI::PositiveNumber);
}

RunConfig build_config(const Common& c, const std::vector<std::string>& extra) {
  toml::table tbl = c.config_file.empty() ? toml::table{} : load_toml(c.config_file);
  for (const auto& o : extra) apply_override(tbl, o);
  for (const auto& o : c.overrides) apply_override(tbl, o);
  if (c.threads) apply_override(tbl, "sampler.threads=" + std::to_string(*c.threads));
  return config_from_toml(tbl);
}

template <class T>
void push(std::vector<std::string>& v, const std::string& key, const std::optional<T>& value) {
  if (!value) return;
  if constexpr (std::is_same_v<T, std::string>) v.push_back(key + "=" + json(*value).dump());
  else v.push_back(key + "=" + std::to_string(*value));
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::out_of_range*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian change-point detection for dynamic Gaussian graphical models"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress output");

  Common sim_c, fit_c;
  std::optional<int> scenario, T, p;
  std::optional<std::uint64_t> sim_seed, fit_seed;
  std::optional<std::string> sim_out, fit_out, data;
  std::optional<std::int64_t> n_iter, burn_in;

  auto* sim = app.add_subcommand("simulate", "simulate a scenario panel and its ground truth");
  add_common(sim, sim_c);
  sim->add_option("--scenario", scenario, "scenario id 1-5");
  sim->add_option("--T", T, "number of time points");
  sim->add_option("--p", p, "number of variables");
  sim->add_option("--seed", sim_seed, "scenario seed");
  sim->add_option("-o,--out", sim_out, "output directory");

  auto* fit = app.add_subcommand("fit", "run the change-point sampler");
  add_common(fit, fit_c);
  fit->add_option("--data", data, "panel CSV (date column, one column per variable)");
  fit->add_option("--scenario", scenario, "simulate this scenario instead of reading data");
  fit->add_option("--seed", fit_seed, "sampler seed");
  fit->add_option("--n-iter", n_iter, "outer iterations");
  fit->add_option("--burn-in", burn_in, "discarded iterations");
  fit->add_option("-o,--out", fit_out, "output directory");

  std::string run_dir, truth_file;
  std::optional<std::string> mode;
  std::optional<int> reps;
  auto* sum = app.add_subcommand("summarize", "posterior summaries and conditional refit of a fitted run");
  sum->add_option("run", run_dir, "run directory written by fit")->required()->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("evaluate", "compare a summarized run with a ground truth");
  eval->add_option("run", run_dir, "summarized run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--truth", truth_file, "truth JSON written by simulate")->required();

  auto* pred = app.add_subcommand("predictive-check", "posterior predictive bands for a fitted run");
  pred->add_option("run", run_dir, "run directory written by fit")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--mode", mode, "changepoints, graphs or covariances");
  pred->add_option("--reps", reps, "simulated panels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::ostream* log = quiet ? nullptr : &std::cerr;
    if (sim->parsed()) {
      std::vector<std::string> extra;
      push(extra, "scenario.id", scenario);
      push(extra, "scenario.T", T);
      push(extra, "scenario.p", p);
      push(extra, "scenario.seed", sim_seed);
      push(extra, "output.dir", sim_out);
      const auto c = build_config(sim_c, extra);
      cmd_simulate(c);
      if (log) *log << "wrote " << c.out << "/panel.csv and truth.json\n";
    } else if (fit->parsed()) {
      std::vector<std::string> extra;
      push(extra, "data.path", data);
      push(extra, "scenario.id", scenario);
      if (scenario && !data) extra.push_back("data.path=\"\"");
      push(extra, "sampler.seed", fit_seed);
      push(extra, "sampler.n_iter", n_iter);
      push(extra, "sampler.burn_in", burn_in);
      push(extra, "output.dir", fit_out);
      const auto c = build_config(fit_c, extra);
      const auto trace = cmd_fit(c, log);
      const auto m = map_config(trace.records);
      std::cout << "MAP (";
      for (std::size_t i = 0; i < m.points.size(); ++i) std::cout << (i ? " " : "") << m.points[i];
      std::cout << ") probability " << m.probability << ", failed steps " << trace.failures << '\n';
    } else if (sum->parsed()) {
      const auto r = cmd_summarize(run_dir);
      std::cout << "MAP " << r.at("map").at("points").dump() << " probability " << r.at("map").at("probability")
                << "\nkappa pmf " << r.at("kappa_pmf").dump() << "\nFDR threshold "
                << r.at("fdr").at("threshold") << " (" << r.at("fdr").at("selected") << " edges)\n";
    } else if (eval->parsed()) {
      const auto m = cmd_evaluate(run_dir, truth_file);
      std::cout << "AUC " << m.at("auc") << "  FPR@0.5 " << m.at("fpr_at_0.5") << "  TPR@0.5 " << m.at("tpr_at_0.5")
                << "  kappa error " << m.at("kappa_error") << '\n';
    } else if (pred->parsed()) {
      const auto m = cmd_predictive_check(run_dir, mode, reps);
      std::cout << "coverage 90% " << m.at("coverage90") << "  95% " << m.at("coverage95") << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  }
  return 0;
}
