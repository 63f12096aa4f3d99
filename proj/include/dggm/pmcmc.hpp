#pragma once

// Outer reversible-jump Metropolis-Hastings over change-point configurations.
// Each proposal is scored by a fresh tuning run plus an estimating run of the
// particle filter; the estimate of the current state is never recomputed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/likelihood.hpp"
#include "dggm/priors.hpp"
#include "dggm/random.hpp"
#include "dggm/smc.hpp"

namespace dggm {

struct MoveProbabilities {
  double q_birth = 0.25;
  double q_death = 0.25;
  double q_death_full = 0.5;  // death probability when no birth position is left
  double lambda = 0.3;        // decay of the local-move kernel

  void validate() const {
    if (!(q_birth > 0.0 && q_birth < 1.0)) throw ConfigError("q_B must lie in (0, 1)");
    if (!(q_death > 0.0 && q_death < 1.0)) throw ConfigError("q_D must lie in (0, 1)");
    if (!(q_death_full > 0.0 && q_death_full <= 1.0)) throw ConfigError("q'_D must lie in (0, 1]");
    if (!(q_birth + q_death < 1.0)) throw ConfigError("q_B + q_D must be below 1");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  }
};

enum class MoveType { kBirth, kDeath, kGlobal, kLocal, kStay };

inline const char* move_name(MoveType m) {
  switch (m) {
    case MoveType::kBirth: return "birth";
    case MoveType::kDeath: return "death";
    case MoveType::kGlobal: return "global";
    case MoveType::kLocal: return "local";
    case MoveType::kStay: return "stay";
  }
  return "?";
}

/// Times t in {2, ..., T} that can be added to c while keeping every segment
/// at least ell long.
inline std::vector<int> feasible_positions(const ChangePointConfig& c) {
  std::vector<int> out;
  int left = 1;
  for (int j = 0; j <= c.kappa(); ++j) {
    const int right = c.stop(j);
    for (int t = left + c.ell; t + c.ell <= right; ++t) out.push_back(t);
    left = right;
  }
  return out;
}

inline int count_feasible_positions(const ChangePointConfig& c) {
  int n = 0, left = 1;
  for (int j = 0; j <= c.kappa(); ++j) {
    const int right = c.stop(j);
    n += std::max(0, right - left - 2 * c.ell + 1);
    left = right;
  }
  return n;
}

struct EventProbabilities {
  double birth = 0.0, death = 0.0, global = 0.0, local = 0.0;
  bool stay() const noexcept { return birth + death + global + local <= 0.0; }
};

inline EventProbabilities event_probabilities(const ChangePointConfig& c, const MoveProbabilities& mp) {
  const int n = count_feasible_positions(c);
  EventProbabilities e;
  if (c.kappa() == 0) {
    if (n > 0) e.birth = 1.0;
    return e;
  }
  e.birth = n == 0 ? 0.0 : mp.q_birth;
  e.death = n == 0 ? mp.q_death_full : mp.q_death;
  e.global = e.local = 0.5 * (1.0 - e.birth - e.death);
  return e;
}

namespace detail {

inline ChangePointConfig without(const ChangePointConfig& c, int j) {
  ChangePointConfig r = c;
  r.points.erase(r.points.begin() + j);
  return r;
}

inline ChangePointConfig with(const ChangePointConfig& c, int t) {
  ChangePointConfig r = c;
  r.points.insert(std::lower_bound(r.points.begin(), r.points.end(), t), t);
  return r;
}

// Bounds of the local move for point j of c: [c_l + ell, c_r - ell].
inline std::pair<int, int> local_window(const ChangePointConfig& c, int j) {
  const int left = j == 0 ? 1 : c.points[j - 1];
  const int right = j + 1 == c.kappa() ? c.T + 1 : c.points[j + 1];
  return {left + c.ell, right - c.ell};
}

// The centre always lies in the window, so the largest term is exp(0).
inline double local_log_normalizer(int lo, int hi, int centre, double lambda) {
  double s = 0.0;
  for (int x = lo; x <= hi; ++x) s += std::exp(-lambda * std::abs(x - centre));
  return std::log(s);
}

}  // namespace detail

/// log q(to | from), summing every event and removed point that produce `to`.
inline double log_proposal_density(const ChangePointConfig& from, const ChangePointConfig& to,
                                   const MoveProbabilities& mp) {
  const auto e = event_probabilities(from, mp);
  if (e.stay()) return from == to ? 0.0 : kNegInf;
  const int k = from.kappa();
  if (to.kappa() == k + 1) {
    if (e.birth <= 0.0) return kNegInf;
    if (!std::includes(to.points.begin(), to.points.end(), from.points.begin(), from.points.end()) || !to.valid())
      return kNegInf;
    return std::log(e.birth) - std::log(count_feasible_positions(from));
  }
  if (to.kappa() == k - 1) {
    if (e.death <= 0.0) return kNegInf;
    if (!std::includes(from.points.begin(), from.points.end(), to.points.begin(), to.points.end())) return kNegInf;
    return std::log(e.death) - std::log(static_cast<double>(k));
  }
  if (to.kappa() != k || k == 0 || !to.valid()) return kNegInf;
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const auto rest = detail::without(from, j);
    if (!std::includes(to.points.begin(), to.points.end(), rest.points.begin(), rest.points.end())) continue;
    int added = 0;
    for (int t : to.points)
      if (!std::binary_search(rest.points.begin(), rest.points.end(), t)) added = t;
    total += e.global / (k * count_feasible_positions(rest));
    const auto [lo, hi] = detail::local_window(from, j);
    if (added >= lo && added <= hi) {
      const int centre = from.points[j];
      total += e.local * std::exp(-mp.lambda * std::abs(added - centre) -
                                  detail::local_log_normalizer(lo, hi, centre, mp.lambda)) / k;
    }
  }
  return total > 0.0 ? std::log(total) : kNegInf;
}

struct Proposal {
  ChangePointConfig config;
  MoveType move = MoveType::kStay;
  double log_q_forward = 0.0;
  double log_q_reverse = 0.0;
};

inline Proposal propose(const ChangePointConfig& c, const MoveProbabilities& mp, RandomStream& rng) {
  const auto e = event_probabilities(c, mp);
  Proposal out{c, MoveType::kStay, 0.0, 0.0};
  if (e.stay()) return out;
  const double u = rng.uniform();
  if (u < e.birth) {
    const auto pos = feasible_positions(c);
    out.config = detail::with(c, pos[rng.index(pos.size())]);
    out.move = MoveType::kBirth;
  } else if (u < e.birth + e.death) {
    out.config = detail::without(c, static_cast<int>(rng.index(c.points.size())));
    out.move = MoveType::kDeath;
  } else {
    const int j = static_cast<int>(rng.index(c.points.size()));
    const auto rest = detail::without(c, j);
    if (u < e.birth + e.death + e.global) {
      const auto pos = feasible_positions(rest);
      out.config = detail::with(rest, pos[rng.index(pos.size())]);
      out.move = MoveType::kGlobal;
    } else {
      const auto [lo, hi] = detail::local_window(c, j);
      const int centre = c.points[j];
      std::vector<double> w;
      for (int x = lo; x <= hi; ++x) w.push_back(-mp.lambda * std::abs(x - centre));
      out.config = detail::with(rest, lo + static_cast<int>(sample_index(w, rng)));
      out.move = MoveType::kLocal;
    }
  }
  out.log_q_forward = log_proposal_density(c, out.config, mp);
  out.log_q_reverse = log_proposal_density(out.config, c, mp);
  return out;
}

struct ChainState {
  ChangePointConfig config;
  std::vector<Graph> graphs;
  double log_lik = 0.0;
  double log_prior = 0.0;
  TemperatureLadder ladder;
};

struct TraceRecord {
  std::int64_t iteration = 0;
  std::vector<int> points;
  MoveType move = MoveType::kStay;
  bool accepted = false;
  double log_lik = 0.0;

  int kappa() const noexcept { return static_cast<int>(points.size()); }
};

struct IterationStats {
  std::int64_t iteration = 0;
  MoveType move = MoveType::kStay;
  bool accepted = false;
  bool failed = false;
  double seconds = 0.0;
  std::size_t ladder_steps = 0;
  int resamples = 0;
};

struct ChainSettings {
  std::int64_t n_iter = 10000;
  std::int64_t burn_in = 2000;
  std::int64_t thin = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_iter <= burn_in) throw ConfigError("n_iter must exceed burn_in");
    if (burn_in < 0) throw ConfigError("burn_in must be non-negative");
    if (thin < 1) throw ConfigError("thin must be at least 1");
  }
};

struct PosteriorTrace {
  std::vector<TraceRecord> records;  // kept (post burn-in, thinned)
  std::vector<IterationStats> stats;  // every iteration
  ChainState final_state;
  int failures = 0;

  int T = 0;
  int ell = 1;
};

/// Runs both filter passes on `config`. Throws what the filter throws.
inline std::pair<FilterResult, TemperatureLadder> score_configuration(SegmentLikelihood& lik,
                                                                       const ChangePointConfig& config,
                                                                       const ModelHyperparams& hp,
                                                                       const SmcSettings& smc, std::uint64_t seed,
                                                                       std::uint64_t iteration) {
  const StreamContext ctx{seed, tag(StreamTag::kFilter), iteration};
  auto ladder = tune_temperatures(lik, config, hp, smc, ctx);
  auto result = run_particle_filter(lik, config, ladder, hp, smc, ctx);
  return {std::move(result), std::move(ladder)};
}

inline ChainState initial_state(SegmentLikelihood& lik, const ChangePointConfig& config, const ModelHyperparams& hp,
                                const SmcSettings& smc, std::uint64_t seed) {
  if (!config.valid()) throw ConfigError("initial configuration is infeasible");
  auto [res, ladder] = score_configuration(lik, config, hp, smc, seed, 0);
  return {config, std::move(res.graphs), res.estimate.log_value, log_prior_config(config, hp), std::move(ladder)};
}

/// One outer step at `iteration` (>= 1). Returns the record and timing stats.
inline std::pair<TraceRecord, IterationStats> mh_step(ChainState& state, SegmentLikelihood& lik,
                                                      const ModelHyperparams& hp, const MoveProbabilities& mp,
                                                      const SmcSettings& smc, std::uint64_t seed,
                                                      std::int64_t iteration) {
  const auto start = std::chrono::steady_clock::now();
  const auto it = static_cast<std::uint64_t>(iteration);
  auto rng = make_stream(seed, {tag(StreamTag::kOuterProposal), it});
  const auto prop = propose(state.config, mp, rng);
  const double u = rng.uniform();
  IterationStats st{iteration, prop.move, false, false, 0.0, 0, 0};
  if (prop.move != MoveType::kStay) {
    try {
      auto [res, ladder] = score_configuration(lik, prop.config, hp, smc, seed, it);
      st.ladder_steps = ladder.total_steps();
      st.resamples = res.resamples;
      const double prior = log_prior_config(prop.config, hp);
      const double log_alpha = res.estimate.log_value + prior + prop.log_q_reverse -
                               (state.log_lik + state.log_prior + prop.log_q_forward);
      if (std::log(u) < log_alpha) {
        state = {prop.config, std::move(res.graphs), res.estimate.log_value, prior, std::move(ladder)};
        st.accepted = true;
      }
    } catch (const NumericalError&) {
      st.failed = true;
    }
  }
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {TraceRecord{iteration, state.config.points, prop.move, st.accepted, state.log_lik}, st};
}

/// Called after every iteration; `kept` marks records past burn-in and thinning.
using ChainObserver = std::function<void(const TraceRecord&, const IterationStats&, bool kept)>;

/// Iterations 1..n_iter; records with iteration > burn_in and
/// (iteration - burn_in) % thin == 0 are kept.
inline PosteriorTrace run_chain(SegmentLikelihood& lik, const ModelHyperparams& hp, const MoveProbabilities& mp,
                                const SmcSettings& smc, const ChainSettings& chain,
                                std::optional<ChangePointConfig> init = std::nullopt,
                                const ChainObserver& observe = {}) {
  hp.validate(lik.p());
  smc.validate(lik.p());
  mp.validate();
  chain.validate();
  const ChangePointConfig start = init.value_or(ChangePointConfig{lik.T(), hp.ell, {}});
  if (start.T != lik.T() || start.ell != hp.ell) throw ConfigError("initial configuration does not match T and ell");
  PosteriorTrace trace;
  trace.T = lik.T();
  trace.ell = hp.ell;
  ChainState state = initial_state(lik, start, hp, smc, chain.seed);
  for (std::int64_t i = 1; i <= chain.n_iter; ++i) {
    auto [rec, st] = mh_step(state, lik, hp, mp, smc, chain.seed, i);
    trace.failures += st.failed;
    const bool kept = i > chain.burn_in && (i - chain.burn_in) % chain.thin == 0;
    if (observe) observe(rec, st, kept);
    trace.stats.push_back(st);
    if (kept) trace.records.push_back(std::move(rec));
  }
  trace.final_state = std::move(state);
  return trace;
}

}  // namespace dggm
