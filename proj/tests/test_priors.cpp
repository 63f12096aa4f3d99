#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "dggm/priors.hpp"

using namespace dggm;

namespace {

// Dynamic-programming count of feasible tuples: ways[t][k] = number of ways to
// place k change points in times (.., t] with the last segment ending at t.
double dp_count(int T, int ell, int kappa) {
  // f[k][c] = number of valid (c_1..c_k) with c_k = c (c_0 = 1 when k = 0).
  std::vector<std::vector<double>> f(kappa + 1, std::vector<double>(T + 2, 0.0));
  f[0][1] = 1.0;
  for (int k = 1; k <= kappa; ++k)
    for (int c = 2; c <= T; ++c)
      for (int prev = 1; prev + ell <= c; ++prev) f[k][c] += f[k - 1][prev];
  double total = 0.0;
  for (int c = 1; c <= T; ++c)
    if (T + 1 - c >= ell) total += f[kappa][c];
  return total;
}

}  // namespace

TEST(Priors, MaxChangepoints) {
  EXPECT_EQ(max_changepoints(10, 3), 2);
  EXPECT_EQ(max_changepoints(200, 12), 15);
  EXPECT_EQ(max_changepoints(7, 7), 0);
  EXPECT_THROW(max_changepoints(5, 6), ConfigError);
}

TEST(Priors, ConfigCountSmallExamples) {
  EXPECT_EQ(config_count(10, 3, 1), 5.0);  // positions 4..8
  // kappa = 2 at T=10, ell=3: only (4,7), (4,8), (5,8).
  EXPECT_EQ(config_count(10, 3, 2), 3.0);
  const auto all = enumerate_configs(10, 3);
  int k2 = 0;
  for (const auto& c : all) k2 += c.kappa() == 2;
  EXPECT_EQ(k2, 3);
  EXPECT_EQ(config_count(10, 3, 0), 1.0);
}

TEST(Priors, ConfigCountMatchesEnumeration) {
  for (int T = 1; T <= 30; ++T)
    for (int ell = 1; ell <= std::min(6, T); ++ell) {
      std::map<int, int> counts;
      for (const auto& c : enumerate_configs(T, ell, 4)) {
        EXPECT_TRUE(c.valid());
        ++counts[c.kappa()];
      }
      for (int kappa = 0; kappa <= 4; ++kappa) {
        const double expected = counts.count(kappa) ? counts[kappa] : 0;
        EXPECT_EQ(config_count(T, ell, kappa), expected) << T << " " << ell << " " << kappa;
        EXPECT_EQ(dp_count(T, ell, kappa), expected);
        if (expected > 0) EXPECT_NEAR(std::exp(log_config_count(T, ell, kappa)), expected, 1e-9 * expected);
      }
    }
}

TEST(Priors, ConfigValidity) {
  EXPECT_TRUE((ChangePointConfig{10, 3, {4, 7}}).valid());
  EXPECT_FALSE((ChangePointConfig{10, 3, {3, 7}}).valid());
  EXPECT_FALSE((ChangePointConfig{10, 3, {4, 9}}).valid());
  EXPECT_FALSE((ChangePointConfig{10, 3, {7, 4}}).valid());
  EXPECT_EQ(log_prior_config(ChangePointConfig{10, 3, {4, 6}}, 0.1), kNegInf);
  ChangePointConfig c{10, 3, {4, 7}};
  EXPECT_EQ(c.first_row(0), 0);
  EXPECT_EQ(c.last_row(0), 3);
  EXPECT_EQ(c.first_row(2), 6);
  EXPECT_EQ(c.last_row(2), 10);
}

TEST(Priors, LogPriorConfigKappaZero) {
  const double p0 = 0.1;
  const int K = max_changepoints(10, 3);
  EXPECT_NEAR(log_prior_config(ChangePointConfig{10, 3, {}}, p0),
              std::log(p0) - std::log(1 - std::pow(1 - p0, K + 1)), 1e-12);
  // kappa = 2: conditional prior 1/3 per configuration.
  EXPECT_NEAR(log_prior_config(ChangePointConfig{10, 3, {4, 8}}, p0) - log_kappa_prior(2, p0, K),
              -std::log(3.0), 1e-12);
}

TEST(Priors, LogPriorSumsToOne) {
  for (int T : {5, 10, 17, 20})
    for (int ell : {1, 2, 3, 5}) {
      if (ell > T) continue;
      double total = 0.0;
      for (const auto& c : enumerate_configs(T, ell)) total += std::exp(log_prior_config(c, 0.3));
      EXPECT_NEAR(total, 1.0, 1e-10) << T << " " << ell;
    }
}

TEST(Priors, ExpectedKappa) {
  EXPECT_NEAR(expected_kappa(0.1, 200, 12), 5.3608, 1e-4);
  EXPECT_NEAR(expected_kappa(1.0 - 1e-12, 200, 12), 0.0, 1e-9);
  // Direct sum of the pmf.
  double mean = 0.0;
  for (int k = 0; k <= 15; ++k) mean += k * std::exp(log_kappa_prior(k, 0.1, 15));
  EXPECT_NEAR(expected_kappa(0.1, 200, 12), mean, 1e-10);
}

TEST(Priors, PriorSamplingMatchesPmf) {
  ModelHyperparams hp;
  hp.p0 = 0.1;
  hp.ell = 12;
  hp.omega = 1.0;
  const int T = 200, K = 15, n = 1000000;
  std::vector<double> counts(K + 1, 0.0);
  auto rng = make_stream(1, {2});
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int k = sample_kappa(hp.p0, K, rng);
    counts[k] += 1;
    sum += k;
  }
  for (int k = 0; k <= K; ++k) {
    const double pk = std::exp(log_kappa_prior(k, hp.p0, K));
    EXPECT_NEAR(counts[k] / n, pk, 3 * std::sqrt(pk * (1 - pk) / n) + 1e-12) << k;
  }
  EXPECT_NEAR(sum / n, expected_kappa(hp, T), 0.02 * expected_kappa(hp, T));
}

TEST(Priors, UniformConfigurationSampling) {
  const int T = 14, ell = 3;
  auto rng = make_stream(3, {0});
  for (int kappa = 0; kappa <= max_changepoints(T, ell); ++kappa) {
    std::map<std::vector<int>, int> counts;
    const int n = 60000;
    for (int i = 0; i < n; ++i) {
      auto c = sample_config_given_kappa(T, ell, kappa, rng);
      ASSERT_TRUE(c.valid());
      ASSERT_EQ(c.kappa(), kappa);
      ++counts[c.points];
    }
    const double m = config_count(T, ell, kappa);
    EXPECT_EQ(static_cast<double>(counts.size()), m);
    // Chi-square goodness of fit, loose bound.
    double chi = 0.0;
    for (auto& [pts, k] : counts) chi += std::pow(k - n / m, 2) / (n / m);
    EXPECT_LT(chi, m + 6 * std::sqrt(2 * m) + 10) << kappa;
  }
}

TEST(Priors, GraphInitialPrior) {
  const int p = 10;
  Graph empty(p);
  const double q = 2.0 / 9.0;
  EXPECT_NEAR(log_graph_initial_prior(empty, 1.0), 45 * std::log(1 - q), 1e-12);
  EXPECT_EQ(log_graph_initial_prior(empty, 0.0), 0.0);
  EXPECT_EQ(log_graph_initial_prior(flip_edge(empty, 0, 1), 0.0), kNegInf);
  EXPECT_EQ(log_graph_initial_prior(Graph::complete(3), 1.0), 0.0);
  EXPECT_EQ(log_graph_initial_prior(Graph(1), 0.0), 0.0);

  ModelHyperparams hp;
  hp.omega = 1.0;
  auto rng = make_stream(4, {0});
  const int n = 20000;
  double edges = 0.0;
  for (int i = 0; i < n; ++i) edges += sample_prior(hp, 30, p, rng).graphs.front().edge_count();
  // Expected p * omega = 10 edges, per-edge marginal 2/9.
  EXPECT_NEAR(edges / n / 45.0, q, 3 * std::sqrt(q * (1 - q) / (45.0 * n)));
}

TEST(Priors, GraphTransitionPrior) {
  const int p = 10;
  const Graph a(p);
  EXPECT_NEAR(log_graph_transition_prior(a, a, 0.1), 45 * std::log(1 - 1.0 / 45), 1e-12);
  const Graph b = flip_edge(a, 2, 7);
  EXPECT_NEAR(log_graph_transition_prior(b, a, 0.1), std::log(1.0 / 45) + 44 * std::log(44.0 / 45), 1e-12);
  EXPECT_NEAR(log_graph_transition_prior(b, a, 2.25), -45 * std::log(2.0), 1e-12);
  EXPECT_NEAR(log_graph_transition_prior(Graph::complete(p), a, 2.25), -45 * std::log(2.0), 1e-12);

  auto rng = make_stream(5, {0});
  for (int i = 0; i < 200; ++i) {
    Graph g = sample_bernoulli_graph(p, 0.3, rng), h = sample_bernoulli_graph(p, 0.3, rng);
    EXPECT_EQ(log_graph_transition_prior(g, h, 0.4), log_graph_transition_prior(h, g, 0.4));
  }
}

TEST(Priors, SamplePriorStructure) {
  ModelHyperparams hp;
  hp.ell = 10;
  hp.omega = 1.0;
  hp.z = 0.5;
  auto rng = make_stream(6, {0});
  for (int i = 0; i < 1000; ++i) {
    auto d = sample_prior(hp, 10, 5, rng);
    EXPECT_EQ(d.config.kappa(), 0);
    EXPECT_EQ(d.graphs.size(), 1u);
  }
  hp.ell = 5;
  for (int i = 0; i < 1000; ++i) {
    auto d = sample_prior(hp, 60, 5, rng);
    EXPECT_TRUE(d.config.valid());
    EXPECT_EQ(d.graphs.size(), static_cast<std::size_t>(d.config.segments()));
  }
}

TEST(Priors, HyperparamValidation) {
  ModelHyperparams hp;
  hp.gwishart = GWishartParams::identity(5);
  hp.omega = 2.0;
  EXPECT_NO_THROW(hp.validate(5));
  hp.omega = 2.5;
  EXPECT_THROW(hp.validate(5), ConfigError);
  hp.omega = 1.0;
  hp.p0 = 1.0;
  EXPECT_THROW(hp.validate(5), ConfigError);
  hp.p0 = 0.1;
  hp.ell = 0;
  EXPECT_THROW(hp.validate(5), ConfigError);
}
