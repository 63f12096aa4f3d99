#pragma once

// Test-side oracles built by brute-force enumeration. Only valid for p <= 3,
// where every graph is decomposable and the segment marginals are closed form.

#include <cmath>
#include <map>
#include <vector>

#include "dggm/likelihood.hpp"
#include "dggm/priors.hpp"

namespace oracle {

inline double log_add(double a, double b) {
  if (a == dggm::kNegInf) return b;
  if (b == dggm::kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline std::vector<dggm::Graph> all_graphs(int p) {
  std::vector<std::pair<int, int>> pairs;
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k) pairs.emplace_back(h, k);
  std::vector<dggm::Graph> out;
  for (unsigned mask = 0; mask < (1u << pairs.size()); ++mask) {
    dggm::Graph g(p);
    for (std::size_t b = 0; b < pairs.size(); ++b)
      if (mask >> b & 1u) g.add_edge(pairs[b].first, pairs[b].second);
    out.push_back(g);
  }
  return out;
}

/// log P(Y | c) summing over every graph sequence (forward recursion).
inline double log_marginal_given_config(dggm::SegmentLikelihood& lik, const dggm::ChangePointConfig& c,
                                        const dggm::ModelHyperparams& hp) {
  const auto gs = all_graphs(lik.p());
  const std::size_t S = gs.size();
  std::vector<double> alpha(S);
  for (std::size_t k = 0; k < S; ++k)
    alpha[k] = dggm::log_graph_initial_prior(gs[k], hp) + lik.log_marginal(gs[k], c.first_row(0), c.last_row(0));
  for (int j = 1; j < c.segments(); ++j) {
    std::vector<double> next(S, dggm::kNegInf);
    for (std::size_t k = 0; k < S; ++k) {
      for (std::size_t i = 0; i < S; ++i)
        next[k] = log_add(next[k], alpha[i] + dggm::log_graph_transition_prior(gs[k], gs[i], hp));
      next[k] += lik.log_marginal(gs[k], c.first_row(j), c.last_row(j));
    }
    alpha = next;
  }
  double total = dggm::kNegInf;
  for (double a : alpha) total = log_add(total, a);
  return total;
}

/// Exact posterior over configurations, keyed by change points.
inline std::map<std::vector<int>, double> config_posterior(dggm::SegmentLikelihood& lik,
                                                           const dggm::ModelHyperparams& hp) {
  std::map<std::vector<int>, double> logp;
  double norm = dggm::kNegInf;
  for (const auto& c : dggm::enumerate_configs(lik.T(), hp.ell)) {
    const double v = dggm::log_prior_config(c, hp) + log_marginal_given_config(lik, c, hp);
    logp[c.points] = v;
    norm = log_add(norm, v);
  }
  for (auto& [k, v] : logp) v = std::exp(v - norm);
  return logp;
}

inline std::vector<double> kappa_posterior(const std::map<std::vector<int>, double>& post) {
  std::vector<double> out;
  for (const auto& [pts, p] : post) {
    if (out.size() <= pts.size()) out.resize(pts.size() + 1, 0.0);
    out[pts.size()] += p;
  }
  return out;
}

}  // namespace oracle
