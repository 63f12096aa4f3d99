// Acceptance run: one PASS/FAIL line per criterion, exit 0 unless something crashes.
// Criteria 4 and 5 run under a wall-clock budget unless --full is given; a
// run cut short by the budget is reported as FAIL together with the partial
// results and the projected full runtime.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "app/commands.hpp"
#include "dggm/posterior.hpp"
#include "oracles.hpp"

using namespace dggm;
using namespace dggm::app;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum class Status { kPass, kFail, kSkip } status = Status::kFail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Status::kPass : Outcome::Status::kFail, std::move(detail)};
}

struct Options {
  bool full = false;
  double budget_minutes = 10.0;
  std::string real_data;
  std::string report;
  std::set<int> only;
  int threads = 1;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << x;
  return s.str();
}

std::string hours(double seconds) { return fmt(seconds / 3600.0, 3) + " h"; }

// Two-variable panel whose correlation switches on at `change` (0-based row).
Eigen::MatrixXd two_regime_panel(int T, int change, double rho_before, double rho_after, std::uint64_t seed) {
  auto rng = make_stream(seed, {78});
  Eigen::MatrixXd Y(T, 2);
  for (int t = 0; t < T; ++t) {
    const double rho = t < change ? rho_before : rho_after;
    const double a = rng.normal(), b = rng.normal();
    Y(t, 0) = a;
    Y(t, 1) = rho * a + std::sqrt(1 - rho * rho) * b;
  }
  return Y;
}

ModelHyperparams tiny_hyper() {
  ModelHyperparams hp;
  hp.omega = 0.25;
  hp.z = 0.25;
  hp.p0 = 0.1;
  hp.ell = 5;
  hp.gwishart = GWishartParams::identity(2);
  return hp;
}

// ---------------------------------------------------------------- 1

Outcome exactness(const Options& o) {
  const Eigen::MatrixXd Y = two_regime_panel(20, 10, 0.0, 0.9, 5);
  const auto hp = tiny_hyper();
  SegmentLikelihood lik(Y, hp.gwishart, 20, 3);
  const auto exact = oracle::kappa_posterior(oracle::config_posterior(lik, hp));
  SmcSettings smc;
  smc.N = 50;
  smc.M = 5;
  smc.threads = o.threads;
  ChainSettings ch;
  ch.n_iter = 50000;
  ch.burn_in = 1000;
  ch.seed = 101;
  const auto trace = run_chain(lik, hp, MoveProbabilities{}, smc, ch);
  std::vector<double> freq(exact.size(), 0.0);
  for (const auto& r : trace.records) freq.at(r.kappa()) += 1.0 / trace.records.size();
  double tv = 0.0;
  std::string pmf;
  for (std::size_t k = 0; k < exact.size(); ++k) {
    tv += 0.5 * std::abs(freq[k] - exact[k]);
    pmf += " k" + std::to_string(k) + " " + fmt(exact[k]) + "/" + fmt(freq[k]);
  }
  return verdict(tv <= 0.05, "TV " + fmt(tv) + " (limit 0.05); exact/chain" + pmf);
}

// ---------------------------------------------------------------- 2

Outcome unbiasedness(const Options& o) {
  const Eigen::MatrixXd Y = two_regime_panel(20, 10, 0.0, 0.9, 5);
  const auto hp = tiny_hyper();
  SegmentLikelihood lik(Y, hp.gwishart, 20, 3);
  const ChangePointConfig c{20, 5, {11}};
  const double exact = oracle::log_marginal_given_config(lik, c, hp);
  SmcSettings s;
  s.N = 50;
  s.M = 5;
  s.threads = o.threads;
  const int runs = 500;
  std::vector<double> ratio(runs);
  for (int r = 0; r < runs; ++r) {
    const StreamContext ctx{5000 + static_cast<std::uint64_t>(r), tag(StreamTag::kFilter), 0};
    auto ladder = tune_temperatures(lik, c, hp, s, ctx);
    auto est = run_particle_filter(lik, c, ladder, hp, s, ctx);
    ratio[r] = std::exp(est.estimate.log_value - exact);
  }
  const double mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / runs;
  double var = 0.0;
  for (double x : ratio) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / (runs - 1) / runs);
  return verdict(std::abs(mean - 1.0) <= 3 * se,
                 "mean ratio " + fmt(mean, 5) + ", SE " + fmt(se, 3) + ", |z| " + fmt(std::abs(mean - 1) / se, 3));
}

// ---------------------------------------------------------------- 3

Outcome normalizing_constants(const Options&) {
  auto rng = make_stream(31, {1});
  const double d = 3.0;
  const int n_mc = 100000;
  int checked = 0, bad = 0, constant = 0;
  double worst = 0.0;
  while (checked < 20) {
    const int p = 3 + static_cast<int>(rng.index(4));
    Graph g(p);
    const double density = 0.3 + 0.5 * rng.uniform();
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k)
        if (rng.bernoulli(density)) g.add_edge(h, k);
    if (!is_decomposable(g) || g.edge_count() == g.pair_count()) continue;
    const Eigen::MatrixXd D = Eigen::MatrixXd::Identity(p, p);
    auto mc_rng = make_stream(32, {static_cast<std::uint64_t>(checked)});
    const auto factorized = log_norm_const(g, d, D, n_mc, mc_rng);
    const auto whole = log_norm_const_mc(g, d, D, n_mc, mc_rng);
    const double se = std::hypot(factorized.std_error, whole.std_error);
    const double diff = std::abs(factorized.value - whole.value);
    if (se == 0.0) {
      // perfect elimination order: the MC integrand is constant
      ++constant;
      bad += diff > 1e-9 * (1.0 + std::abs(whole.value));
    } else {
      worst = std::max(worst, diff / se);
      bad += !(diff <= 3.0 * se);
    }
    ++checked;
  }
  Graph cycle(4);
  cycle.add_edge(0, 1);
  cycle.add_edge(1, 2);
  cycle.add_edge(2, 3);
  cycle.add_edge(0, 3);
  const Eigen::MatrixXd I4 = Eigen::MatrixXd::Identity(4, 4);
  auto ra = make_stream(33, {0}), rb = make_stream(34, {0});
  const auto a = log_norm_const(cycle, d, I4, n_mc, ra);
  const auto b = log_norm_const(cycle, d, I4, n_mc, rb);
  const double zc = std::abs(a.value - b.value) / std::hypot(a.std_error, b.std_error);
  return verdict(bad == 0 && zc <= 3.0, std::to_string(bad) + "/20 decomposable graphs disagree (max |z| " +
                                            fmt(worst, 3) + ", " + std::to_string(constant) +
                                            " with zero MC variance); 4-cycle seeds " + fmt(a.value, 7) + " vs " +
                                            fmt(b.value, 7) + ", |z| " + fmt(zc, 3));
}

// ---------------------------------------------------------------- 4, 5

struct OutOfBudget {};

struct ReplicateResult {
  std::int64_t done = 0;
  std::int64_t planned = 0;
  double seconds = 0.0;
  bool complete = false;
  std::vector<TraceRecord> records;  // kept records, or every state when none were kept yet
  bool post_burn_in = false;
  std::vector<double> kappa_pmf;
  MapEstimate map;
  std::optional<TruthEvaluation> eval;
  ChangePointConfig truth;
};

RunConfig scenario_config(int id, std::uint64_t seed, int threads) {
  RunConfig c;
  c.scenario.id = id;
  c.scenario.seed = seed;
  c.chain.seed = seed;
  c.smc.threads = threads;
  return c;
}

// Fits one replicate until `deadline`, then refits the MAP for edge PPIs.
ReplicateResult fit_replicate(RunConfig c, std::optional<Clock::time_point> deadline, bool refit) {
  GroundTruth truth;
  const auto panel = load_panel(c, &truth);
  const auto hp = resolve_model(c, panel);
  ReplicateResult out;
  out.planned = c.chain.n_iter;
  out.truth = truth.config;
  SegmentLikelihood lik(panel.Y, hp.gwishart, c.n_mc, c.chain.seed);
  std::vector<TraceRecord> kept, all;
  const auto t0 = Clock::now();
  auto observe = [&](const TraceRecord& r, const IterationStats&, bool k) {
    out.done = r.iteration;
    if (k) kept.push_back(r);
    else all.push_back(r);
    if (deadline && Clock::now() > *deadline && r.iteration < c.chain.n_iter) throw OutOfBudget{};
  };
  try {
    run_chain(lik, hp, c.moves, c.smc, c.chain, std::nullopt, observe);
    out.complete = true;
  } catch (const OutOfBudget&) {
  }
  out.seconds = since(t0);
  out.post_burn_in = !kept.empty();
  out.records = kept.empty() ? all : kept;
  if (out.records.empty()) return out;
  out.kappa_pmf = kappa_distribution(out.records);
  out.map = map_config(out.records);
  if (refit) {
    const ChangePointConfig est{panel.T(), hp.ell, out.map.points};
    const auto r = edge_ppi(lik, est, hp, refit_settings(c), c.chain.seed);
    ChangePointConfig tc = truth.config;
    out.eval = evaluate_vs_truth(r.ppi, est, truth.graphs, tc);
  }
  return out;
}

double pk(const ReplicateResult& r, int k) {
  return static_cast<std::size_t>(k) < r.kappa_pmf.size() ? r.kappa_pmf[k] : 0.0;
}

std::string describe(const ReplicateResult& r) {
  std::string s = "iters " + std::to_string(r.done) + "/" + std::to_string(r.planned) + " in " + fmt(r.seconds, 4) +
                  " s";
  if (!r.post_burn_in) s += " (pre-burn-in states)";
  return s;
}

// Mean seconds per outer iteration at Scenario-3 size, over the opening iterations.
double scenario3_seconds_per_iteration(int threads, int iterations) {
  auto c = scenario_config(3, 1, threads);
  c.chain.n_iter = iterations;
  c.chain.burn_in = 0;
  const auto r = fit_replicate(c, std::nullopt, false);
  return r.seconds / static_cast<double>(r.done);
}

Outcome scenarios_1_2(const Options& o) {
  const int reps = 5;
  const double budget = o.budget_minutes * 60.0;
  std::ostringstream d;
  bool ok = true, complete = true;
  double used = 0.0;
  std::map<int, double> projected;  // per-replicate runtime by scenario
  std::vector<double> aucs;
  for (int id : {1, 2}) {
    for (int rep = 1; rep <= reps; ++rep) {
      std::optional<Clock::time_point> deadline;
      if (!o.full) {
        // half the budget per scenario; later replicates only start if time is left
        const double left = budget * (id == 1 ? 0.5 : 1.0) - used;
        if (left <= 0) {
          complete = false;
          break;
        }
        deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(left));
      }
      const auto r = fit_replicate(scenario_config(id, rep, o.threads), deadline, id == 2);
      used += r.seconds;
      projected[id] = std::max(projected[id], r.seconds * r.planned / std::max<std::int64_t>(r.done, 1));
      d << "S" << id << "r" << rep << ": P(k=0) " << fmt(pk(r, 0)) << ", " << describe(r);
      if (r.eval) {
        d << ", AUC " << fmt(r.eval->auc);
        aucs.push_back(r.eval->auc);
      }
      d << "; ";
      ok = ok && pk(r, 0) >= 0.95;
      if (!r.complete) {
        complete = false;
        break;
      }
    }
  }
  const double mean_auc = aucs.empty() ? 0.0 : std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
  ok = ok && !aucs.empty() && mean_auc >= 0.95;
  d << "S2 mean AUC " << fmt(mean_auc) << ". ";

  const double spi = scenario3_seconds_per_iteration(o.threads, 30);
  d << "Scenario-3 size: " << fmt(spi, 3) << " s/iteration (limit 0.5). ";
  ok = ok && spi <= 0.5;
  if (!complete) {
    ok = false;
    d << "Budget of " << fmt(o.budget_minutes, 3) << " min exhausted; projected per replicate";
    double total = 0.0;
    for (int id : {1, 2}) {
      if (!projected.count(id)) {
        d << " S" << id << " not started";
        continue;
      }
      d << " S" << id << " " << hours(projected[id]);
      total += reps * projected[id];
    }
    d << ", started scenarios in full about " << hours(total) << " (rerun with --full).";
  }
  return verdict(ok, d.str());
}

Outcome scenario_3(const Options& o) {
  const int reps = 3;
  const double budget = o.budget_minutes * 60.0;
  std::ostringstream d;
  bool ok = true, complete = true;
  double used = 0.0, projected = 0.0, auc_sum = 0.0, fpr_sum = 0.0;
  int evaluated = 0;
  for (int rep = 1; rep <= reps; ++rep) {
    std::optional<Clock::time_point> deadline;
    if (!o.full) {
      const double left = budget - used;
      if (left <= 0) {
        complete = false;
        break;
      }
      deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(left));
    }
    const auto r = fit_replicate(scenario_config(3, rep, o.threads), deadline, true);
    used += r.seconds;
    projected = std::max(projected, r.seconds * r.planned / std::max<std::int64_t>(r.done, 1));
    const bool map_ok = r.map.points.size() == 1 && r.map.points[0] >= 68 && r.map.points[0] <= 74;
    std::string map = "(";
    for (std::size_t i = 0; i < r.map.points.size(); ++i) map += (i ? "," : "") + std::to_string(r.map.points[i]);
    map += ")";
    const auto at = roc_at(r.eval->roc, 0.5);
    d << "r" << rep << ": MAP " << map << ", P(k=1) " << fmt(pk(r, 1)) << ", AUC " << fmt(r.eval->auc)
      << ", FPR@0.5 " << fmt(at.fpr) << ", " << describe(r) << "; ";
    ok = ok && map_ok && pk(r, 1) >= 0.90;
    auc_sum += r.eval->auc;
    fpr_sum += at.fpr;
    ++evaluated;
    if (!r.complete) {
      complete = false;
      break;
    }
  }
  const double auc = evaluated ? auc_sum / evaluated : 0.0, fpr = evaluated ? fpr_sum / evaluated : 1.0;
  d << "mean AUC " << fmt(auc) << ", mean FPR@0.5 " << fmt(fpr) << ". ";
  ok = ok && auc >= 0.80 && fpr <= 0.25;
  if (!complete) {
    ok = false;
    d << "Budget of " << fmt(o.budget_minutes, 3) << " min exhausted; one replicate needs about " << hours(projected)
      << ", all 3 about " << hours(3 * projected) << " (rerun with --full).";
  }
  return verdict(ok, d.str());
}

// ---------------------------------------------------------------- 6

Outcome prior_kappa(const Options&) {
  const int T = 200, ell = 12, n = 1000000;
  const double p0 = 0.1;
  const int K = max_changepoints(T, ell);
  auto rng = make_stream(61, {0});
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_config_given_kappa(T, ell, sample_kappa(p0, K, rng), rng).kappa();
  const double mean = sum / n, closed = expected_kappa(p0, T, ell);
  const bool ok = std::abs(mean - closed) <= 0.02 * closed && std::abs(closed - 5.361) <= 5e-4;
  return verdict(ok, "empirical " + fmt(mean, 5) + ", closed form " + fmt(closed, 6) + " (reference 5.361)");
}

// ---------------------------------------------------------------- 7

bool has_clique_separator(const Graph& g, NodeSet nodes) {
  if (connected_components(g, nodes).size() > 1) return true;
  const auto list = node_list(nodes);
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << list.size()); ++mask) {
    NodeSet s = 0;
    for (std::size_t i = 0; i < list.size(); ++i)
      if ((mask >> i) & 1U) s |= node_bit(list[i]);
    if (g.is_clique(s) && connected_components(g, nodes & ~s).size() > 1) return true;
  }
  return false;
}

std::string proposal_suite() {
  int bad = 0, checked = 0;
  for (int T = 6; T <= 15; ++T)
    for (int ell : {1, 2, 3, 4}) {
      if (ell == 1 && T > 13) continue;
      for (double lambda : {0.3, 2.0}) {
        MoveProbabilities mp;
        mp.lambda = lambda;
        const auto all = enumerate_configs(T, ell);
        for (const auto& c : all) {
          double total = 0.0;
          for (const auto& e : all) {
            const double f = log_proposal_density(c, e, mp);
            total += std::exp(f);
            bad += (f == kNegInf) != (log_proposal_density(e, c, mp) == kNegInf);
          }
          bad += !(std::abs(total - 1.0) <= 1e-12);
          ++checked;
        }
      }
    }
  return bad ? "proposal normalization: " + std::to_string(bad) + " violations over " + std::to_string(checked) +
                   " states"
             : "";
}

std::string ess_suite() {
  auto rng = make_stream(71, {0});
  int bad = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int N = 20 + static_cast<int>(rng.index(400));
    const double spread = std::exp(6.0 * rng.uniform() - 1.0);
    std::vector<double> ll(N);
    for (double& x : ll) x = spread * rng.normal() - 50.0 * rng.uniform();
    const double phi_prev = 0.9 * rng.uniform();
    const double eps = 0.3 + 0.5 * rng.uniform();
    std::vector<double> buf(N);
    auto ess_at = [&](double phi) {
      for (int i = 0; i < N; ++i) buf[i] = (phi - phi_prev) * ll[i];
      return ess(buf);
    };
    double prev = ess_at(phi_prev);
    for (int k = 1; k <= 50; ++k) {
      const double e = ess_at(phi_prev + (1.0 - phi_prev) * k / 50.0);
      bad += e > prev + 1e-9 * N;
      prev = e;
    }
    const auto next = solve_next_temperature(ll, phi_prev, eps);
    if (!next) {
      ++bad;
      continue;
    }
    if (*next >= 1.0) {
      bad += ess_at(1.0) < eps * N;
    } else {
      const double r = std::abs(ess_at(*next) - eps * N) / N;
      worst = std::max(worst, r);
      bad += r > 1e-3;
    }
  }
  return bad ? "ESS: " + std::to_string(bad) + " violations (max residual " + fmt(worst) + " N)" : "";
}

std::string decomposition_suite() {
  auto rng = make_stream(72, {0});
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = 1 + static_cast<int>(rng.index(8));
    const double density = 0.15 + 0.7 * rng.uniform();
    Graph g(p);
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k)
        if (rng.bernoulli(density)) g.add_edge(h, k);
    const auto dec = prime_decomposition(g);
    bool ok = dec.separators.size() + 1 == dec.components.size();
    NodeSet seen = 0;
    Graph rebuilt(p);
    for (std::size_t m = 0; ok && m < dec.components.size(); ++m) {
      const NodeSet comp = dec.components[m];
      if (m > 0) ok = ok && dec.separators[m - 1] == (comp & seen) && g.is_clique(dec.separators[m - 1]);
      seen |= comp;
      ok = ok && dec.complete_flags[m] == g.is_clique(comp) && !has_clique_separator(g, comp);
      const auto list = node_list(comp);
      for (auto [h, k] : g.induced(comp).edges()) rebuilt.add_edge(list[h], list[k]);
    }
    ok = ok && seen == all_nodes(p) && rebuilt == g;
    bad += !ok;
  }
  return bad ? "decomposition: " + std::to_string(bad) + "/1000 graphs fail" : "";
}

std::string fdr_suite() {
  auto rng = make_stream(73, {0});
  int bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ppi(1 + rng.index(200));
    for (double& x : ppi) x = rng.bernoulli(0.3) ? std::round(100 * rng.uniform()) / 100 : rng.uniform();
    std::vector<std::size_t> prev_sel;
    double prev_t = 2.0;
    for (int a = 1; a < 100; a += 3) {
      const double alpha = a / 100.0;
      const auto s = fdr_threshold(ppi, alpha);
      auto sel = s.selected;
      std::sort(sel.begin(), sel.end());
      bad += s.threshold > prev_t;
      bad += !std::includes(sel.begin(), sel.end(), prev_sel.begin(), prev_sel.end());
      bad += s.expected_fdr > alpha + 1e-12;
      prev_sel = sel;
      prev_t = s.threshold;
    }
  }
  return bad ? "FDR: " + std::to_string(bad) + " monotonicity violations" : "";
}

std::string reproducibility_suite() {
  const fs::path dir = fs::temp_directory_path() / ("dggm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  RunConfig c;
  c.scenario.id = 3;
  c.scenario.p = 5;
  c.scenario.T = 60;
  c.scenario.changepoints = std::vector<int>{31};
  c.scenario.seed = 4;
  c.chain.seed = 9;
  c.chain.n_iter = 150;
  c.chain.burn_in = 50;
  c.smc.N = 40;
  c.smc.M = 3;
  c.n_mc = 100;
  auto slurp = [](const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  c.out = (dir / "one").string();
  cmd_fit(c);
  c.smc.threads = 4;
  c.out = (dir / "four").string();
  cmd_fit(c);
  const bool same = slurp(dir / "one" / "trace.ndjson") == slurp(dir / "four" / "trace.ndjson") &&
                    !slurp(dir / "one" / "trace.ndjson").empty();
  fs::remove_all(dir);
  return same ? "" : "fit traces differ between 1 and 4 threads";
}

Outcome properties(const Options&) {
  std::string failures;
  for (auto suite : {proposal_suite, ess_suite, decomposition_suite, fdr_suite, reproducibility_suite}) {
    const auto f = suite();
    if (!f.empty()) failures += f + "; ";
  }
  return verdict(failures.empty(), failures.empty() ? "proposal normalization, ESS bisection, decomposition, FDR "
                                                      "monotonicity, 1 vs 4 thread fit all hold"
                                                    : failures);
}

// ---------------------------------------------------------------- 8

Outcome real_data(const Options& o) {
  if (o.real_data.empty() || !fs::exists(o.real_data))
    return {Outcome::Status::kSkip, "data unavailable (pass --real-data FILE to run)"};
  RunConfig c;
  c.data_path = o.real_data;
  c.chain.n_iter = 10000;
  c.chain.burn_in = 2000;
  c.chain.thin = 10;
  c.smc.threads = o.threads;
  const auto panel = load_panel(c, nullptr);
  const auto hp = resolve_model(c, panel);
  SegmentLikelihood lik(panel.Y, hp.gwishart, c.n_mc, c.chain.seed);
  const auto trace = run_chain(lik, hp, c.moves, c.smc, c.chain);
  const auto map = map_config(trace.records);
  const auto pmf = kappa_distribution(trace.records);
  const double p2 = pmf.size() > 2 ? pmf[2] : 0.0;
  const bool ok = map.points == std::vector<int>{61, 79} && p2 >= 0.99;
  std::string m;
  for (int v : map.points) m += std::to_string(v) + " ";
  return verdict(ok, "MAP ( " + m + "), P(k=2) " + fmt(p2));
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Acceptance checks"};
  app.add_flag("--full", o.full, "no wall-clock budget for criteria 4 and 5");
  app.add_option("--budget-minutes", o.budget_minutes, "budget per scenario criterion")->check(CLI::PositiveNumber);
  app.add_option("--real-data", o.real_data, "weekly returns CSV for criterion 8");
  app.add_option("--report", o.report, "also write the criterion lines to this file");
  app.add_option("--only", o.only, "criteria to run")->check(CLI::Range(1, 8));
  app.add_option("--threads", o.threads, "particle threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)(const Options&);
  };
  const std::vector<Criterion> all{{1, "exactness oracle", exactness},
                                   {2, "inner estimator unbiased", unbiasedness},
                                   {3, "normalizing constants", normalizing_constants},
                                   {4, "scenarios 1/2 and timing", scenarios_1_2},
                                   {5, "scenario 3", scenario_3},
                                   {6, "prior E[kappa]", prior_kappa},
                                   {7, "property suites", properties},
                                   {8, "real data", real_data}};
  std::ofstream report;
  if (!o.report.empty()) report.open(o.report);
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (report) report << line << std::endl;
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!o.only.empty() && !o.only.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = c.fn(o);
    } catch (const std::exception& e) {
      r = {Outcome::Status::kFail, std::string("error: ") + e.what()};
    }
    const char* tag = r.status == Outcome::Status::kPass ? "PASS" : r.status == Outcome::Status::kFail ? "FAIL" : "SKIP";
    failed += r.status == Outcome::Status::kFail;
    emit("criterion " + std::to_string(c.id) + " " + tag + "  " + c.name + "  [" + fmt(since(t0), 4) + " s]  " +
         r.detail);
  }
  emit(std::to_string(failed) + " criteria failed");
  return 0;
}
