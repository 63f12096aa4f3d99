#pragma once

// Priors on change-point configurations and on the graph sequence.
//
// Time is 1-based: a configuration is c_1 < ... < c_kappa in {2, ..., T} with
// c_0 = 1 and c_{kappa+1} = T + 1, and segment j covers times
// c_j, ..., c_{j+1} - 1. Every segment holds at least ell time points.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/graph.hpp"
#include "dggm/gwishart.hpp"
#include "dggm/random.hpp"

namespace dggm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ChangePointConfig {
  int T = 0;
  int ell = 1;
  std::vector<int> points;

  int kappa() const noexcept { return static_cast<int>(points.size()); }
  int segments() const noexcept { return kappa() + 1; }

  /// 1-based first time of segment j (c_j).
  int start(int j) const { return j == 0 ? 1 : points.at(j - 1); }
  /// One past the last 1-based time of segment j (c_{j+1}).
  int stop(int j) const { return j == kappa() ? T + 1 : points.at(j); }
  /// Half-open 0-based row range of segment j.
  int first_row(int j) const { return start(j) - 1; }
  int last_row(int j) const { return stop(j) - 1; }

  bool valid() const noexcept {
    if (ell < 1 || T < ell) return false;
    int prev = 1;
    for (int c : points) {
      if (c - prev < ell) return false;
      prev = c;
    }
    return T + 1 - prev >= ell;
  }

  friend bool operator==(const ChangePointConfig&, const ChangePointConfig&) = default;
  friend auto operator<=>(const ChangePointConfig& a, const ChangePointConfig& b) {
    if (auto c = a.kappa() <=> b.kappa(); c != 0) return c;
    return a.points <=> b.points;
  }
};

struct ModelHyperparams {
  double omega = 1.0;
  double z = 0.1;
  double p0 = 0.1;
  int ell = 1;
  GWishartParams gwishart = GWishartParams::identity(1);

  void validate(int p) const {
    const double top = 0.5 * (p - 1);
    if (!(omega >= 0.0 && omega <= top)) throw ConfigError("omega must lie in [0, (p-1)/2]");
    if (!(z >= 0.0 && z <= top)) throw ConfigError("z must lie in [0, (p-1)/2]");
    if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("p0 must lie in (0, 1)");
    if (ell < 1) throw ConfigError("ell must be at least 1");
    gwishart.validate();
    if (gwishart.dim() != p) throw ConfigError("D must be p x p");
  }

  /// Per-pair edge probability of the initial graph, 2 omega / (p - 1).
  double edge_probability(int p) const noexcept { return p > 1 ? 2.0 * omega / (p - 1) : 0.0; }
  /// Per-pair flip probability at a change point, 2 z / (p - 1).
  double flip_probability(int p) const noexcept { return p > 1 ? 2.0 * z / (p - 1) : 0.0; }
};

/// K_{T ell}: largest kappa with (kappa + 1) ell <= T.
inline int max_changepoints(int T, int ell) {
  if (ell < 1 || T < ell) throw ConfigError("need T >= ell >= 1");
  return T / ell - 1;
}

/// log |T_{kappa ell}|: the T - (kappa+1) ell slack time points are spread
/// over kappa + 1 segments, giving C(T - (kappa+1) ell + kappa, kappa) tuples.
inline double log_config_count(int T, int ell, int kappa) {
  if (kappa < 0 || kappa > max_changepoints(T, ell)) return kNegInf;
  const double slack = T - (kappa + 1.0) * ell;
  return std::lgamma(slack + kappa + 1) - std::lgamma(kappa + 1.0) - std::lgamma(slack + 1);
}

/// Exact count as a double (exact while below 2^53).
inline double config_count(int T, int ell, int kappa) {
  if (kappa < 0 || kappa > max_changepoints(T, ell)) return 0.0;
  const int slack = T - (kappa + 1) * ell;
  double c = 1.0;
  for (int i = 1; i <= kappa; ++i) c = c * (slack + i) / i;
  return std::round(c);
}

/// Truncated geometric log pmf on {0, ..., K}.
inline double log_kappa_prior(int kappa, double p0, int K) {
  if (kappa < 0 || kappa > K) return kNegInf;
  return std::log(p0) + kappa * std::log1p(-p0) - std::log1p(-std::pow(1.0 - p0, K + 1));
}

inline double log_prior_config(const ChangePointConfig& c, double p0) {
  if (!c.valid()) return kNegInf;
  const int K = max_changepoints(c.T, c.ell);
  return log_kappa_prior(c.kappa(), p0, K) - log_config_count(c.T, c.ell, c.kappa());
}

inline double log_prior_config(const ChangePointConfig& c, const ModelHyperparams& hp) {
  return log_prior_config(c, hp.p0);
}

/// Mean of the truncated geometric on {0, ..., K}:
/// (1-p0)/p0 - (K+1)(1-p0)^{K+1} / (1 - (1-p0)^{K+1}).
inline double expected_kappa(double p0, int T, int ell) {
  const int K = max_changepoints(T, ell);
  const double q = 1.0 - p0;
  const double qk = std::pow(q, K + 1);
  return q / p0 - (K + 1) * qk / (1.0 - qk);
}

inline double expected_kappa(const ModelHyperparams& hp, int T) { return expected_kappa(hp.p0, T, hp.ell); }

namespace detail {

inline double bernoulli_log_pmf(int successes, int failures, double q) {
  // 0 log 0 = 0 at the boundaries.
  double out = 0.0;
  if (successes > 0) out += successes * (q > 0.0 ? std::log(q) : kNegInf);
  if (failures > 0) out += failures * (q < 1.0 ? std::log1p(-q) : kNegInf);
  return out;
}

}  // namespace detail

inline double log_graph_initial_prior(const Graph& g, double omega) {
  const int p = g.size();
  if (p < 2) return 0.0;
  const int e = g.edge_count();
  return detail::bernoulli_log_pmf(e, g.pair_count() - e, 2.0 * omega / (p - 1));
}

inline double log_graph_initial_prior(const Graph& g, const ModelHyperparams& hp) {
  return log_graph_initial_prior(g, hp.omega);
}

inline int hamming_distance(const Graph& a, const Graph& b) {
  if (a.size() != b.size()) throw std::invalid_argument("graphs differ in size");
  int d = 0;
  const auto ra = a.rows(), rb = b.rows();
  for (std::size_t i = 0; i < ra.size(); ++i) d += std::popcount(ra[i] ^ rb[i]);
  return d / 2;
}

inline double log_graph_transition_prior(const Graph& g_new, const Graph& g_old, double z) {
  const int p = g_new.size();
  if (p < 2) return 0.0;
  const int flips = hamming_distance(g_new, g_old);
  return detail::bernoulli_log_pmf(flips, g_new.pair_count() - flips, 2.0 * z / (p - 1));
}

inline double log_graph_transition_prior(const Graph& g_new, const Graph& g_old, const ModelHyperparams& hp) {
  return log_graph_transition_prior(g_new, g_old, hp.z);
}

inline Graph sample_bernoulli_graph(int p, double q, RandomStream& rng) {
  Graph g(p);
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k)
      if (rng.bernoulli(q)) g.add_edge(h, k);
  return g;
}

inline Graph sample_graph_transition(const Graph& g_old, double q, RandomStream& rng) {
  Graph g = g_old;
  const int p = g.size();
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k)
      if (rng.bernoulli(q)) g.toggle_edge(h, k);
  return g;
}

inline int sample_kappa(double p0, int K, RandomStream& rng) {
  // Inverse CDF of the truncated geometric.
  const double u = rng.uniform() * (1.0 - std::pow(1.0 - p0, K + 1));
  const int k = static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-p0)));
  return std::clamp(k, 0, K);
}

/// Uniform draw from T_{kappa ell}. The slack is spread over kappa + 1 bins
/// via a uniform kappa-subset of {0, ..., slack + kappa - 1} (stars and bars),
/// the subset drawn with Floyd's algorithm.
inline ChangePointConfig sample_config_given_kappa(int T, int ell, int kappa, RandomStream& rng) {
  if (kappa < 0 || kappa > max_changepoints(T, ell)) throw std::invalid_argument("infeasible kappa");
  const int slack = T - (kappa + 1) * ell;
  const int n = slack + kappa;
  std::set<int> chosen;
  for (int j = n - kappa; j < n; ++j) {
    const int t = static_cast<int>(rng.index(static_cast<std::size_t>(j) + 1));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  ChangePointConfig c{T, ell, {}};
  int j = 1;
  for (int b : chosen) {
    c.points.push_back(1 + j * ell + b - (j - 1));
    ++j;
  }
  return c;
}

struct PriorDraw {
  ChangePointConfig config;
  std::vector<Graph> graphs;  // one per segment
};

inline PriorDraw sample_prior(const ModelHyperparams& hp, int T, int p, RandomStream& rng) {
  const int K = max_changepoints(T, hp.ell);
  PriorDraw out;
  out.config = sample_config_given_kappa(T, hp.ell, sample_kappa(hp.p0, K, rng), rng);
  out.graphs.push_back(sample_bernoulli_graph(p, hp.edge_probability(p), rng));
  for (int j = 1; j < out.config.segments(); ++j)
    out.graphs.push_back(sample_graph_transition(out.graphs.back(), hp.flip_probability(p), rng));
  return out;
}

/// Every feasible configuration with at most max_kappa points, ordered by
/// (kappa, points). Exponential in T; meant for small instances.
inline std::vector<ChangePointConfig> enumerate_configs(int T, int ell,
                                                        int max_kappa = std::numeric_limits<int>::max()) {
  std::vector<ChangePointConfig> out;
  ChangePointConfig cur{T, ell, {}};
  auto rec = [&](auto&& self, int prev) -> void {
    out.push_back(cur);
    if (cur.kappa() >= max_kappa) return;
    for (int c = prev + ell; c + ell <= T + 1; ++c) {
      cur.points.push_back(c);
      self(self, c);
      cur.points.pop_back();
    }
  };
  rec(rec, 1);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dggm
