#pragma once

// simulate / fit / summarize / evaluate / predictive-check. Each command
// reads and writes plain files in a run directory.

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "dggm/posterior.hpp"
#include "run_config.hpp"
#include "serialize.hpp"

namespace dggm::app {

namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

inline std::string seg_file(const std::string& stem, int j) { return stem + "_segment" + std::to_string(j + 1) + ".csv"; }

inline void write_panel(const fs::path& path, const ReturnsPanel& panel) {
  auto f = open_out(path);
  write_returns_csv(f, panel);
}

/// panel.csv + truth.json + config.toml.
inline void cmd_simulate(RunConfig c) {
  c.data_path.clear();
  validate(c);
  const auto sc = simulate_scenario(c.scenario);
  const fs::path out(c.out);
  ensure_dir(out);
  write_panel(out / "panel.csv", sc.panel);
  auto f = open_out(out / "truth.json");
  f << truth_json(sc.truth, sc.panel, c.scenario.id, c.scenario.seed).dump(1) << '\n';
  write_config(c, out / "config.toml");
}

struct MoveTally {
  std::int64_t proposed = 0, accepted = 0, failed = 0;
  double seconds = 0.0;
};

/// Runs the chain; writes trace.ndjson (kept records), diagnostics.csv (every
/// iteration), acceptance.csv, the analysed panel and the resolved config.
inline PosteriorTrace cmd_fit(RunConfig c, std::ostream* log = nullptr) {
  validate(c);
  GroundTruth truth;
  const auto panel = load_panel(c, &truth);
  const ModelHyperparams hp = resolve_model(c, panel);
  std::optional<ChangePointConfig> init;
  if (!c.init.empty()) {
    init = ChangePointConfig{panel.T(), hp.ell, c.init};
    if (!init->valid()) throw ConfigError("sampler.init is not a feasible configuration");
  }
  const fs::path out(c.out);
  ensure_dir(out);
  write_config(c, out / "config.toml");
  write_panel(out / "panel.csv", panel);
  if (c.data_path.empty()) {
    auto t = open_out(out / "truth.json");
    t << truth_json(truth, panel, c.scenario.id, c.scenario.seed).dump(1) << '\n';
  }

  auto trace_file = open_out(out / "trace.ndjson");
  auto diag = open_out(out / "diagnostics.csv");
  diag << "iteration,move,accepted,failed,seconds,ladder_steps,resamples,kappa\n";
  std::map<MoveType, MoveTally> tally;
  const auto every = std::max<std::int64_t>(1, c.chain.n_iter / 100);
  std::int64_t accepted = 0;
  double elapsed = 0.0;
  SegmentLikelihood lik(panel.Y, hp.gwishart, c.n_mc, c.chain.seed);
  auto observe = [&](const TraceRecord& r, const IterationStats& st, bool kept) {
    if (kept) trace_file << record_json(r).dump() << '\n';
    diag << st.iteration << ',' << move_name(st.move) << ',' << st.accepted << ',' << st.failed << ',' << st.seconds
         << ',' << st.ladder_steps << ',' << st.resamples << ',' << r.kappa() << '\n';
    auto& t = tally[st.move];
    ++t.proposed;
    t.accepted += st.accepted;
    t.failed += st.failed;
    t.seconds += st.seconds;
    accepted += st.accepted;
    elapsed += st.seconds;
    if (log && st.iteration % every == 0)
      *log << "iter " << st.iteration << "/" << c.chain.n_iter << "  kappa " << r.kappa() << "  accept "
           << std::fixed << std::setprecision(3) << static_cast<double>(accepted) / st.iteration << "  s/iter "
           << elapsed / st.iteration << std::defaultfloat << std::endl;
  };
  auto trace = run_chain(lik, hp, c.moves, c.smc, c.chain, init, observe);

  auto acc = open_out(out / "acceptance.csv");
  acc << "move,proposed,accepted,acceptance_rate,failed,mean_seconds\n";
  MoveTally all;
  for (const auto& [m, t] : tally) {
    acc << move_name(m) << ',' << t.proposed << ',' << t.accepted << ','
        << (t.proposed ? static_cast<double>(t.accepted) / t.proposed : 0.0) << ',' << t.failed << ','
        << (t.proposed ? t.seconds / t.proposed : 0.0) << '\n';
    all.proposed += t.proposed;
    all.accepted += t.accepted;
    all.failed += t.failed;
    all.seconds += t.seconds;
  }
  acc << "all," << all.proposed << ',' << all.accepted << ','
      << (all.proposed ? static_cast<double>(all.accepted) / all.proposed : 0.0) << ',' << all.failed << ','
      << (all.proposed ? all.seconds / all.proposed : 0.0) << '\n';
  return trace;
}

/// Everything summarize and predictive-check need from a finished run.
struct RunContext {
  RunConfig config;
  ReturnsPanel panel;
  ModelHyperparams hp;
  std::vector<TraceRecord> records;
  MapEstimate map;
  ChangePointConfig map_config;
};

inline RunContext load_run(const fs::path& run) {
  RunContext ctx;
  ctx.config = config_from_toml(load_toml((run / "config.toml").string()));
  validate(ctx.config);
  ctx.panel = load_returns_csv((run / "panel.csv").string(), false);
  if (!ctx.config.omega || !ctx.config.ell) throw ConfigError("run config has unresolved omega or ell");
  ctx.hp = resolve_model(ctx.config, ctx.panel);
  ctx.records = read_trace(run / "trace.ndjson", ctx.panel.T());
  if (ctx.records.empty()) throw DataError("trace is empty");
  ctx.map = map_config(ctx.records);
  ctx.map_config = ChangePointConfig{ctx.panel.T(), ctx.hp.ell, ctx.map.points};
  return ctx;
}

inline SmcSettings refit_settings(const RunConfig& c) {
  SmcSettings s = c.smc;
  s.N = c.refit_N;
  s.M = c.refit_M;
  return s;
}

struct Refit {
  std::unique_ptr<SegmentLikelihood> lik;  // not movable
  RefitResult result;
  FdrSelection fdr;
  std::vector<Graph> graphs;  // FDR-selected, per segment
};

inline Refit refit_map(const RunContext& ctx) {
  Refit r;
  r.lik = std::make_unique<SegmentLikelihood>(ctx.panel.Y, ctx.hp.gwishart, ctx.config.n_mc, ctx.config.chain.seed);
  r.result = edge_ppi(*r.lik, ctx.map_config, ctx.hp, refit_settings(ctx.config), ctx.config.chain.seed);
  r.fdr = fdr_threshold(pooled_ppi(r.result.ppi), ctx.config.fdr_alpha);
  const int p = ctx.panel.p();
  std::vector<bool> chosen(pooled_ppi(r.result.ppi).size(), false);
  for (auto i : r.fdr.selected) chosen[i] = true;
  std::size_t idx = 0;
  for (std::size_t j = 0; j < r.result.ppi.segments.size(); ++j) {
    Graph g(p);
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k)
        if (chosen[idx++]) g.add_edge(h, k);
    r.graphs.push_back(g);
  }
  return r;
}

inline PredictiveBands run_predictive(const RunContext& ctx, Refit& r, PredictiveMode mode, int n_rep,
                                      const std::vector<PrecisionEstimate>* precision) {
  PredictiveInput in{ctx.map_config, r.result.filter.terminal, r.graphs, {}};
  if (mode == PredictiveMode::kCovariances) {
    if (!precision) throw std::invalid_argument("covariance mode needs precision estimates");
    for (const auto& e : *precision) in.covariances.push_back(e.covariance);
  }
  return posterior_predictive(*r.lik, in, mode, n_rep, ctx.config.chain.seed);
}

inline void write_bands(const fs::path& path, const PredictiveBands& b, const ReturnsPanel& panel) {
  auto f = open_out(path);
  f << "t,variable,observed,lo95,lo90,hi90,hi95\n";
  for (int t = 0; t < panel.T(); ++t)
    for (int i = 0; i < panel.p(); ++i)
      f << (t + 1) << ',' << panel.labels[i] << ',' << panel.Y(t, i) << ',' << b.lo95(t, i) << ',' << b.lo90(t, i)
        << ',' << b.hi90(t, i) << ',' << b.hi95(t, i) << '\n';
}

inline const char* mode_name(PredictiveMode m) {
  switch (m) {
    case PredictiveMode::kChangePoints: return "changepoints";
    case PredictiveMode::kGraphs: return "graphs";
    case PredictiveMode::kCovariances: return "covariances";
  }
  return "?";
}

/// Writes report.json and the per-segment CSVs into the run directory.
inline json cmd_summarize(const fs::path& run) {
  RunContext ctx = load_run(run);
  const auto& c = ctx.config;
  const int T = ctx.panel.T(), p = ctx.panel.p();
  const auto& labels = ctx.panel.labels;
  json report;
  report["n_records"] = ctx.records.size();
  report["map"] = {{"points", ctx.map.points}, {"probability", ctx.map.probability}};
  const auto pmf = kappa_distribution(ctx.records);
  report["kappa_pmf"] = pmf;
  report["modal_kappa"] = modal_kappa(pmf);

  const auto marg = marginal_cp_probability(ctx.records, T);
  {
    auto f = open_out(run / "cp_marginal.csv");
    f << "t,probability\n";
    for (int t = 1; t <= T; ++t) f << t << ',' << marg[t] << '\n';
  }
  json cs = json::array();
  for (double level : c.credible_levels)
    for (const auto& s : credible_set_cp(ctx.records, level))
      cs.push_back({{"level", level},
                    {"index", s.index + 1},
                    {"lower", s.lower},
                    {"upper", s.upper},
                    {"mass", s.mass},
                    {"set", s.set},
                    {"mean", s.mean},
                    {"median", s.median}});
  report["credible_sets"] = cs;

  Refit r = refit_map(ctx);
  report["refit"] = {{"N", c.refit_N}, {"M", c.refit_M}, {"log_likelihood", r.result.filter.estimate.log_value}};
  report["fdr"] = {{"alpha", c.fdr_alpha},
                   {"threshold", r.fdr.threshold},
                   {"expected_fdr", r.fdr.expected_fdr},
                   {"selected", r.fdr.selected.size()}};
  {
    auto f = open_out(run / "fdr_edges.csv");
    f << "segment,node_a,node_b,label_a,label_b,ppi\n";
    for (std::size_t j = 0; j < r.graphs.size(); ++j)
      for (auto [h, k] : r.graphs[j].edges())
        f << (j + 1) << ',' << (h + 1) << ',' << (k + 1) << ',' << labels[h] << ',' << labels[k] << ','
          << r.result.ppi.segments[j](h, k) << '\n';
  }
  const auto precision = precision_posterior(*r.lik, ctx.map_config, r.graphs, c.n_draws, c.chain.seed);
  json segs = json::array();
  auto metrics_file = open_out(run / "graph_metrics.csv");
  metrics_file << "segment,node,label,degree,betweenness,clustering\n";
  for (int j = 0; j < ctx.map_config.segments(); ++j) {
    write_matrix_csv(run / seg_file("ppi", j), r.result.ppi.segments[j], labels);
    write_matrix_csv(run / seg_file("precision", j), precision[j].precision, labels);
    write_matrix_csv(run / seg_file("covariance", j), precision[j].covariance, labels);
    write_matrix_csv(run / seg_file("correlation", j), precision[j].correlation, labels);
    const auto m = graph_metrics(r.graphs[j]);
    for (int v = 0; v < p; ++v)
      metrics_file << (j + 1) << ',' << (v + 1) << ',' << labels[v] << ',' << m.degree[v] << ',' << m.betweenness[v]
                   << ',' << m.local_clustering[v] << '\n';
    segs.push_back({{"start", ctx.map_config.start(j)},
                    {"stop", ctx.map_config.stop(j)},
                    {"edges", edges_json(r.graphs[j])},
                    {"edge_count", r.graphs[j].edge_count()},
                    {"global_clustering", m.global_clustering},
                    {"rejected_draws", precision[j].rejected}});
  }
  report["segments"] = segs;

  const auto mode = parse_predictive_mode(c.predictive_mode);
  const auto bands = run_predictive(ctx, r, mode, c.predictive_reps, &precision);
  write_bands(run / (std::string("predictive_") + mode_name(mode) + ".csv"), bands, ctx.panel);
  report["predictive"] = {{"mode", mode_name(mode)},
                          {"reps", c.predictive_reps},
                          {"coverage90", bands.coverage90},
                          {"coverage95", bands.coverage95}};
  auto f = open_out(run / "report.json");
  f << report.dump(1) << '\n';
  return report;
}

inline json cmd_predictive_check(const fs::path& run, std::optional<std::string> mode_name_opt,
                                 std::optional<int> reps) {
  RunContext ctx = load_run(run);
  const auto mode = parse_predictive_mode(mode_name_opt.value_or(ctx.config.predictive_mode));
  const int n_rep = reps.value_or(ctx.config.predictive_reps);
  if (n_rep < 2) throw ConfigError("need at least two replicates");
  Refit r = refit_map(ctx);
  std::optional<std::vector<PrecisionEstimate>> precision;
  if (mode == PredictiveMode::kCovariances)
    precision = precision_posterior(*r.lik, ctx.map_config, r.graphs, ctx.config.n_draws, ctx.config.chain.seed);
  const auto bands = run_predictive(ctx, r, mode, n_rep, precision ? &*precision : nullptr);
  write_bands(run / (std::string("predictive_") + mode_name(mode) + ".csv"), bands, ctx.panel);
  return {{"mode", mode_name(mode)}, {"reps", n_rep}, {"coverage90", bands.coverage90},
          {"coverage95", bands.coverage95}};
}

/// Needs a summarized run. Writes roc.csv, cp_table.csv and metrics.json.
inline json cmd_evaluate(const fs::path& run, const fs::path& truth_path) {
  const auto truth = read_truth(truth_path);
  const auto panel = load_returns_csv((run / "panel.csv").string(), false);
  if (truth.p != panel.p()) throw DataError("truth has p = " + std::to_string(truth.p) + ", run has " +
                                            std::to_string(panel.p()));
  if (truth.truth.config.T != panel.T()) throw DataError("truth and run differ in T");
  if (truth.labels != panel.labels) throw DataError("truth labels do not match the panel columns");
  json report;
  {
    auto f = open_in(run / "report.json");
    try {
      report = json::parse(f);
    } catch (const json::exception& e) {
      throw DataError("report.json: " + std::string(e.what()));
    }
  }
  const ChangePointConfig est{panel.T(), 1, report.at("map").at("points").get<std::vector<int>>()};
  EdgePPI ppi;
  for (int j = 0; j < est.segments(); ++j) {
    const auto m = read_matrix_csv((run / seg_file("ppi", j)).string());
    if (m.rows() != panel.p() || m.cols() != panel.p()) throw DataError(seg_file("ppi", j) + " has the wrong shape");
    ppi.segments.push_back(m);
  }
  const auto ev = evaluate_vs_truth(ppi, est, truth.truth.graphs, truth.truth.config);
  {
    auto f = open_out(run / "roc.csv");
    f << "threshold,fpr,tpr\n";
    for (const auto& pt : ev.roc) f << pt.threshold << ',' << pt.fpr << ',' << pt.tpr << '\n';
  }
  const auto at = roc_at(ev.roc, 0.5);
  json matches = json::array();
  for (auto [a, b] : ev.matches) matches.push_back({a + 1, b + 1});
  const int true_kappa = truth.truth.config.kappa();
  const auto& pmf = report.at("kappa_pmf");
  const double p_true_kappa = true_kappa < static_cast<int>(pmf.size()) ? pmf.at(true_kappa).get<double>() : 0.0;
  json metrics{{"auc", ev.auc},
               {"fpr_at_0.5", at.fpr},
               {"tpr_at_0.5", at.tpr},
               {"segment_matches", matches},
               {"segment_mismatch", ev.segment_mismatch},
               {"kappa_error", ev.kappa_error},
               {"hausdorff", ev.hausdorff},
               {"true_changepoints", truth.truth.config.points},
               {"map", report.at("map")},
               {"p_true_kappa", p_true_kappa}};
  {
    // one row per ordered change point of the modal kappa
    auto f = open_out(run / "cp_table.csv");
    f << "true_config,map_config,map_probability,p_kappa_true,index,ci90_lower,ci90_upper,ci95_lower,ci95_upper,"
         "mean,median\n";
    auto join = [](const std::vector<int>& v) {
      std::string s = "(";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
      return s + ")";
    };
    std::map<int, std::map<double, json>> by_index;
    for (const auto& s : report.at("credible_sets")) by_index[s.at("index").get<int>()][s.at("level").get<double>()] = s;
    auto bound = [](const std::map<double, json>& sets, double level, const char* key) -> std::string {
      for (const auto& [l, s] : sets)
        if (std::abs(l - level) < 1e-9) return std::to_string(s.at(key).get<int>());
      return "";
    };
    const std::string tc = join(truth.truth.config.points), mc = join(est.points);
    const double mp = report.at("map").at("probability").get<double>();
    if (by_index.empty()) f << tc << ',' << mc << ',' << mp << ',' << p_true_kappa << ",,,,,,,\n";
    for (const auto& [idx, sets] : by_index) {
      const json& any = sets.begin()->second;
      f << tc << ',' << mc << ',' << mp << ',' << p_true_kappa << ',' << idx << ',' << bound(sets, 0.90, "lower") << ','
        << bound(sets, 0.90, "upper") << ',' << bound(sets, 0.95, "lower") << ',' << bound(sets, 0.95, "upper") << ','
        << any.at("mean").get<double>() << ',' << any.at("median").get<double>() << '\n';
    }
  }
  auto f = open_out(run / "metrics.json");
  f << metrics.dump(1) << '\n';
  return metrics;
}

}  // namespace dggm::app
