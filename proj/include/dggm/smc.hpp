#pragma once

// Inner particle filter over graph sequences given a change-point
// configuration: adaptive tempering within each segment, resampling when the
// ESS drops below epsilon N, and Metropolis-Hastings mutation of graphs.
//
// A preliminary run (tune_temperatures) fixes the per-segment temperature
// ladders; the estimating run (run_particle_filter) reuses them verbatim and
// returns an unbiased likelihood estimate plus one graph path drawn from the
// terminal cloud through the recorded genealogy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/graph.hpp"
#include "dggm/likelihood.hpp"
#include "dggm/parallel.hpp"
#include "dggm/priors.hpp"
#include "dggm/random.hpp"

namespace dggm {

/// How mutation evaluates the tempered target. kDelayed screens proposals
/// with the surrogate and corrects with the exact value, so the chain still
/// leaves the exact target invariant. kSurrogate runs on the surrogate alone.
enum class Evaluation { kExact, kDelayed, kSurrogate };

struct SmcSettings {
  int N = 200;
  int M = 10;
  double epsilon = 0.5;
  double s0 = 0.0;  // <= 0: default_s0(p)
  int threads = 1;
  bool delayed_acceptance = true;
  bool surrogate_tuning = true;  // tuning run on the surrogate likelihood

  Evaluation filter_mode() const noexcept { return delayed_acceptance ? Evaluation::kDelayed : Evaluation::kExact; }
  Evaluation tuning_mode() const noexcept { return surrogate_tuning ? Evaluation::kSurrogate : filter_mode(); }

  void validate(int p) const {
    if (N < 1) throw ConfigError("N must be at least 1");
    if (M < 0) throw ConfigError("M must be non-negative");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (s0 > 0.0 && p > 1 && !(s0 < 0.5 * (p - 1))) throw ConfigError("s0 must lie in (0, (p-1)/2)");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
};

/// One expected edge flip per proposal (s0 p = 1), kept inside (0, (p-1)/2).
inline double default_s0(int p) {
  if (p < 2) return 0.0;
  return std::min(1.0 / p, 0.25 * (p - 1));
}

/// Seeds for one filter run; every particle draws from its own stream keyed
/// by (phase, iteration, segment, step, particle).
struct StreamContext {
  std::uint64_t seed = 0;
  std::uint64_t phase = tag(StreamTag::kFilter);
  std::uint64_t iteration = 0;

  RandomStream stream(StreamTag purpose, std::uint64_t segment, std::uint64_t step, std::uint64_t index) const {
    return make_stream(seed, {phase, iteration, tag(purpose), segment, step, index});
  }
};

/// Per-segment intermediate temperatures strictly inside (0, 1); the terminal
/// temperature 1 is implicit.
struct TemperatureLadder {
  std::vector<std::vector<double>> steps;

  int segments() const noexcept { return static_cast<int>(steps.size()); }
  std::size_t total_steps() const noexcept {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.size();
    return n;
  }
};

struct LikelihoodFactor {
  int segment = 0;
  int step = 0;  // 1-based tempering step, steps+1 for the final weights
  double log_mean_weight = 0.0;
};

struct LikelihoodEstimate {
  double log_value = 0.0;
  std::vector<LikelihoodFactor> factors;
};

struct SmcDiagnostic {
  int segment = 0;
  int step = 0;
  double phi = 0.0;
  double ess = 0.0;
  bool resampled = false;
  double acceptance = 0.0;  // mutation acceptance rate (NaN when no mutation)
};

struct WeightedCloud {
  std::vector<Graph> graphs;
  std::vector<double> log_weights;
};

struct FilterResult {
  LikelihoodEstimate estimate;
  std::vector<Graph> graphs;          // sampled path, one per segment
  std::vector<WeightedCloud> terminal;  // per-segment terminal clouds
  std::vector<SmcDiagnostic> diagnostics;
  int resamples = 0;
};

/// log of the mean of exp(log_w).
inline double log_mean_exp(std::span<const double> log_w) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_w) top = std::max(top, x);
  if (!std::isfinite(top)) throw DegenerateCloud("all particle weights are zero or non-finite");
  double s = 0.0;
  for (double x : log_w) s += std::exp(x - top);
  return top + std::log(s / static_cast<double>(log_w.size()));
}

/// (sum w)^2 / sum w^2 from log-weights.
inline double ess(std::span<const double> log_w) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_w) {
    if (std::isnan(x)) throw DegenerateCloud("NaN particle weight");
    top = std::max(top, x);
  }
  if (!std::isfinite(top)) throw DegenerateCloud("all particle weights are zero or non-finite");
  double s = 0.0, s2 = 0.0;
  for (double x : log_w) {
    const double w = std::exp(x - top);
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

namespace detail {

inline double tempered_ess(std::span<const double> ll, double dphi, std::vector<double>& buf) {
  buf.resize(ll.size());
  for (std::size_t i = 0; i < ll.size(); ++i) buf[i] = dphi * ll[i];
  return ess(buf);
}

}  // namespace detail

/// Next temperature from incremental weights ll^(phi - phi_prev): 1 when
/// ESS(1) >= epsilon N, otherwise the bisection root of ESS(phi) = epsilon N.
/// Empty once the ladder has reached 1.
inline std::optional<double> solve_next_temperature(std::span<const double> log_likelihoods, double phi_prev,
                                                    double epsilon) {
  if (phi_prev >= 1.0) return std::nullopt;
  const double N = static_cast<double>(log_likelihoods.size());
  const double target = epsilon * N;
  std::vector<double> buf;
  if (detail::tempered_ess(log_likelihoods, 1.0 - phi_prev, buf) >= target) return 1.0;
  double lo = phi_prev, hi = 1.0;
  double ess_lo = N, ess_hi = detail::tempered_ess(log_likelihoods, hi - phi_prev, buf);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double e = detail::tempered_ess(log_likelihoods, mid - phi_prev, buf);
    if (e > ess_lo + 1e-9 * N || e < ess_hi - 1e-9 * N)
      throw NumericalError("ESS is not monotone in the temperature");
    if (e >= target) {
      lo = mid;
      ess_lo = e;
    } else {
      hi = mid;
      ess_hi = e;
    }
    if (hi - lo <= 1e-6 && ess_lo - target <= 1e-3 * N) break;
  }
  return lo > phi_prev ? lo : 0.5 * (phi_prev + hi);
}

/// Multinomial resampling: N ancestor indices drawn i.i.d. from the normalized
/// weights, returned in increasing order.
inline std::vector<int> multinomial_resample(std::span<const double> log_w, RandomStream& rng) {
  const std::size_t n = log_w.size();
  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_w) top = std::max(top, x);
  if (!std::isfinite(top)) throw DegenerateCloud("cannot resample a degenerate cloud");
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::exp(log_w[i] - top);
    cdf[i] = acc;
  }
  std::vector<double> u(n);
  for (auto& x : u) x = rng.uniform() * acc;
  std::sort(u.begin(), u.end());
  std::vector<int> out(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k + 1 < n && cdf[k] < u[i]) ++k;
    out[i] = static_cast<int>(k);
  }
  return out;
}

/// One index drawn proportionally to exp(log_w).
inline std::size_t sample_index(std::span<const double> log_w, RandomStream& rng) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_w) top = std::max(top, x);
  if (!std::isfinite(top)) throw DegenerateCloud("cannot sample from a degenerate cloud");
  double total = 0.0;
  for (double x : log_w) total += std::exp(x - top);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    u -= std::exp(log_w[i] - top);
    if (u <= 0.0) return i;
  }
  return log_w.size() - 1;
}

/// Graph-sequence prior term for segment j: initial prior when there is no
/// predecessor, flip transition otherwise.
inline double log_segment_graph_prior(const Graph& g, const Graph* prev, const ModelHyperparams& hp) {
  return prev ? log_graph_transition_prior(g, *prev, hp.z) : log_graph_initial_prior(g, hp.omega);
}

struct MutationResult {
  Graph graph;
  double log_lik = 0.0;
  int accepted = 0;
  int proposed = 0;
};

inline double evaluate(SegmentLikelihood& lik, const Graph& g, int first, int last, Evaluation mode) {
  return mode == Evaluation::kSurrogate ? lik.surrogate_log_marginal(g, first, last)
                                        : lik.log_marginal(g, first, last);
}

/// M Metropolis-Hastings steps targeting L(G)^phi P(G | prev). Proposals flip
/// each pair independently with probability 2 s0 / (p - 1). In delayed mode a
/// proposal first passes a test on the surrogate; only survivors pay for the
/// exact likelihood, and the second test divides the surrogate ratio back out.
inline MutationResult mutate(const Graph& g, double log_lik, const Graph* prev, SegmentLikelihood& lik, int first,
                             int last, double phi, const ModelHyperparams& hp, int M, double s0,
                             RandomStream& rng, Evaluation mode = Evaluation::kExact) {
  MutationResult r{g, log_lik, 0, 0};
  const int p = g.size();
  if (p < 2 || M <= 0) return r;
  const double q = 2.0 * s0 / (p - 1);
  if (!(q > 0.0)) return r;
  const bool tempered = phi > 0.0;
  const bool delayed = tempered && mode == Evaluation::kDelayed;
  double cur_prior = log_segment_graph_prior(r.graph, prev, hp);
  double cur_sur = delayed ? lik.surrogate_log_marginal(r.graph, first, last) : 0.0;
  for (int m = 0; m < M; ++m) {
    Graph prop = r.graph;
    bool changed = false;
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k)
        if (rng.bernoulli(q)) {
          prop.toggle_edge(h, k);
          changed = true;
        }
    const double u = rng.uniform(), u2 = rng.uniform();
    ++r.proposed;
    if (!changed) {
      ++r.accepted;
      continue;
    }
    const double prop_prior = log_segment_graph_prior(prop, prev, hp);
    if (prop_prior == kNegInf) continue;
    double prop_sur = 0.0;
    if (delayed) {
      prop_sur = lik.surrogate_log_marginal(prop, first, last);
      if (!(std::log(u) < phi * (prop_sur - cur_sur) + prop_prior - cur_prior)) continue;
    }
    const double prop_ll = tempered ? evaluate(lik, prop, first, last, mode) : 0.0;
    const bool accept = delayed ? std::log(u2) < phi * ((prop_ll - r.log_lik) - (prop_sur - cur_sur))
                                : std::log(u) < (tempered ? phi * (prop_ll - r.log_lik) : 0.0) + prop_prior - cur_prior;
    if (accept) {
      r.graph = prop;
      if (tempered) r.log_lik = prop_ll;
      cur_prior = prop_prior;
      cur_sur = prop_sur;
      ++r.accepted;
    }
  }
  if (!tempered && r.accepted > 0) r.log_lik = evaluate(lik, r.graph, first, last, mode);
  return r;
}

namespace detail {

// Shared state of one filter pass.
class ParticleSystem {
 public:
  ParticleSystem(SegmentLikelihood& lik, const ChangePointConfig& config, const ModelHyperparams& hp,
                 const SmcSettings& settings, const StreamContext& ctx, Evaluation mode)
      : lik_(lik), config_(config), hp_(hp), s_(settings), ctx_(ctx), mode_(mode), p_(lik.p()) {
    if (config.T != lik.T()) throw std::invalid_argument("configuration horizon does not match the data");
    if (!config.valid()) throw std::invalid_argument("infeasible change-point configuration");
    s0_ = settings.s0 > 0.0 ? settings.s0 : default_s0(p_);
    const auto N = static_cast<std::size_t>(settings.N);
    graphs_.resize(N, Graph(p_));
    ll_.assign(N, 0.0);
    log_w_.assign(N, 0.0);
    pred_.assign(N, -1);
  }

  std::size_t N() const noexcept { return graphs_.size(); }

  void start_segment(int j) {
    j_ = j;
    first_ = config_.first_row(j);
    last_ = config_.last_row(j);
    const auto N = this->N();
    if (j > 0) {
      terminal_.push_back(graphs_);
      terminal_w_.push_back(log_w_);
      ancestors_.push_back(pred_);
      for (std::size_t n = 0; n < N; ++n) pred_[n] = static_cast<int>(n);
    }
    const double q0 = hp_.edge_probability(p_), qz = hp_.flip_probability(p_);
    const auto& prev = j > 0 ? terminal_.back() : graphs_;
    std::vector<Graph> next(N, Graph(p_));
    parallel_for(N, s_.threads, [&](std::size_t n) {
      auto rng = ctx_.stream(StreamTag::kInit, static_cast<std::uint64_t>(j), 0, n);
      next[n] = j == 0 ? sample_bernoulli_graph(p_, q0, rng) : sample_graph_transition(prev[n], qz, rng);
      ll_[n] = evaluate(lik_, next[n], first_, last_, mode_);
    });
    graphs_ = std::move(next);
  }

  void reweight(double dphi) {
    for (std::size_t n = 0; n < N(); ++n) log_w_[n] += dphi * ll_[n];
  }

  double resample_and_mutate(int step, double phi) {
    auto rng = ctx_.stream(StreamTag::kResample, static_cast<std::uint64_t>(j_), static_cast<std::uint64_t>(step), 0);
    const auto idx = multinomial_resample(log_w_, rng);
    std::vector<Graph> g(N(), Graph(p_));
    std::vector<double> ll(N());
    std::vector<int> pred(N());
    for (std::size_t n = 0; n < N(); ++n) {
      g[n] = graphs_[idx[n]];
      ll[n] = ll_[idx[n]];
      pred[n] = pred_[idx[n]];
    }
    graphs_ = std::move(g);
    ll_ = std::move(ll);
    pred_ = std::move(pred);
    std::fill(log_w_.begin(), log_w_.end(), 0.0);
    if (s_.M == 0 || p_ < 2) return std::numeric_limits<double>::quiet_NaN();
    std::vector<int> acc(N()), tot(N());
    parallel_for(N(), s_.threads, [&](std::size_t n) {
      auto r = ctx_.stream(StreamTag::kMutate, static_cast<std::uint64_t>(j_), static_cast<std::uint64_t>(step), n);
      const Graph* prev = j_ > 0 ? &terminal_.back()[pred_[n]] : nullptr;
      auto m = mutate(graphs_[n], ll_[n], prev, lik_, first_, last_, phi, hp_, s_.M, s0_, r, mode_);
      graphs_[n] = m.graph;
      ll_[n] = m.log_lik;
      acc[n] = m.accepted;
      tot[n] = m.proposed;
    });
    double a = 0.0, t = 0.0;
    for (std::size_t n = 0; n < N(); ++n) {
      a += acc[n];
      t += tot[n];
    }
    return t > 0 ? a / t : std::numeric_limits<double>::quiet_NaN();
  }

  void finish() {
    terminal_.push_back(graphs_);
    terminal_w_.push_back(log_w_);
    ancestors_.push_back(pred_);
  }

  std::vector<Graph> trace_path(std::size_t n) const {
    std::vector<Graph> path(terminal_.size(), Graph(p_));
    int k = static_cast<int>(n);
    for (std::size_t j = terminal_.size(); j-- > 0;) {
      path[j] = terminal_[j][static_cast<std::size_t>(k)];
      k = ancestors_[j][static_cast<std::size_t>(k)];
    }
    return path;
  }

  int segment() const noexcept { return j_; }
  std::vector<double>& log_w() noexcept { return log_w_; }
  const std::vector<double>& log_lik() const noexcept { return ll_; }
  const std::vector<std::vector<Graph>>& terminal() const noexcept { return terminal_; }
  const std::vector<std::vector<double>>& terminal_weights() const noexcept { return terminal_w_; }
  const StreamContext& context() const noexcept { return ctx_; }

 private:
  SegmentLikelihood& lik_;
  const ChangePointConfig& config_;
  const ModelHyperparams& hp_;
  SmcSettings s_;
  StreamContext ctx_;
  Evaluation mode_;
  int p_;
  double s0_ = 0.0;
  int j_ = 0, first_ = 0, last_ = 0;
  std::vector<Graph> graphs_;
  std::vector<double> ll_;
  std::vector<double> log_w_;
  std::vector<int> pred_;  // index into the previous segment's terminal cloud
  std::vector<std::vector<Graph>> terminal_;
  std::vector<std::vector<double>> terminal_w_;
  std::vector<std::vector<int>> ancestors_;
};

}  // namespace detail

/// Preliminary run that fixes the temperature ladders. Temperatures come from
/// the incremental weights; resampling uses the full weights, which also
/// carry the previous segment's terminal weights. By default it runs on the
/// surrogate likelihood: the ladder only has to be fixed before the
/// estimating run, not exact.
inline TemperatureLadder tune_temperatures(SegmentLikelihood& lik, const ChangePointConfig& config,
                                           const ModelHyperparams& hp, const SmcSettings& settings,
                                           StreamContext ctx) {
  ctx.phase = tag(StreamTag::kTuning);
  detail::ParticleSystem ps(lik, config, hp, settings, ctx, settings.tuning_mode());
  TemperatureLadder ladder;
  for (int j = 0; j < config.segments(); ++j) {
    ps.start_segment(j);
    std::vector<double> steps;
    double phi_prev = 0.0;
    for (int s = 1;; ++s) {
      const auto next = solve_next_temperature(ps.log_lik(), phi_prev, settings.epsilon);
      if (!next || *next >= 1.0) break;
      steps.push_back(*next);
      ps.reweight(*next - phi_prev);
      ps.resample_and_mutate(s, *next);
      phi_prev = *next;
    }
    ps.reweight(1.0 - phi_prev);
    ladder.steps.push_back(std::move(steps));
  }
  return ladder;
}

/// Estimating run with a fixed ladder.
inline FilterResult run_particle_filter(SegmentLikelihood& lik, const ChangePointConfig& config,
                                        const TemperatureLadder& ladder, const ModelHyperparams& hp,
                                        const SmcSettings& settings, StreamContext ctx) {
  if (ladder.segments() != config.segments()) throw std::invalid_argument("ladder does not match configuration");
  for (const auto& steps : ladder.steps)
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (!(steps[i] > (i ? steps[i - 1] : 0.0) && steps[i] < 1.0))
        throw std::invalid_argument("ladder temperatures must increase strictly inside (0, 1)");

  detail::ParticleSystem ps(lik, config, hp, settings, ctx, settings.filter_mode());
  FilterResult out;
  const double threshold = settings.epsilon * settings.N;
  for (int j = 0; j < config.segments(); ++j) {
    ps.start_segment(j);
    const auto& steps = ladder.steps[static_cast<std::size_t>(j)];
    double phi_prev = 0.0;
    for (std::size_t s = 0; s <= steps.size(); ++s) {
      const double phi = s < steps.size() ? steps[s] : 1.0;
      ps.reweight(phi - phi_prev);
      const double e = ess(ps.log_w());
      SmcDiagnostic diag{j, static_cast<int>(s + 1), phi, e, false, std::numeric_limits<double>::quiet_NaN()};
      if (e < threshold) {
        const double f = log_mean_exp(ps.log_w());
        out.estimate.log_value += f;
        out.estimate.factors.push_back({j, static_cast<int>(s + 1), f});
        diag.resampled = true;
        diag.acceptance = ps.resample_and_mutate(static_cast<int>(s + 1), phi);
        ++out.resamples;
      }
      out.diagnostics.push_back(diag);
      phi_prev = phi;
    }
  }
  ps.finish();
  const double f = log_mean_exp(ps.log_w());
  out.estimate.log_value += f;
  out.estimate.factors.push_back({config.kappa(), static_cast<int>(ladder.steps.back().size() + 2), f});

  auto rng = ps.context().stream(StreamTag::kTerminal, 0, 0, 0);
  out.graphs = ps.trace_path(sample_index(ps.log_w(), rng));
  for (std::size_t j = 0; j < ps.terminal().size(); ++j)
    out.terminal.push_back({ps.terminal()[j], ps.terminal_weights()[j]});
  return out;
}

}  // namespace dggm
