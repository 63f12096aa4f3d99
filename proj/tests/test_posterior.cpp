#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dggm/posterior.hpp"
#include "oracles.hpp"

using namespace dggm;

namespace {

std::vector<TraceRecord> trace_of(const std::vector<std::pair<std::vector<int>, int>>& visits) {
  std::vector<TraceRecord> out;
  for (const auto& [pts, n] : visits)
    for (int i = 0; i < n; ++i) out.push_back({static_cast<std::int64_t>(out.size() + 1), pts});
  return out;
}

// Mann-Whitney statistic with ties counted one half.
double mann_whitney(const std::vector<double>& s, const std::vector<bool>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

}  // namespace

TEST(Posterior, MapConfig) {
  auto m = map_config(trace_of({{{}, 5}}));
  EXPECT_TRUE(m.points.empty());
  EXPECT_EQ(m.probability, 1.0);
  m = map_config(trace_of({{{30}, 4}, {{20, 40}, 6}}));
  EXPECT_EQ(m.points, (std::vector<int>{20, 40}));
  EXPECT_DOUBLE_EQ(m.probability, 0.6);
  // ties: smaller kappa first, then lexicographic
  m = map_config(trace_of({{{20, 40}, 3}, {{31}, 3}, {{30}, 3}}));
  EXPECT_EQ(m.points, (std::vector<int>{30}));
  EXPECT_THROW(map_config({}), std::invalid_argument);
}

TEST(Posterior, MarginalsAndKappa) {
  const auto tr = trace_of({{{}, 2}, {{61, 79}, 6}, {{61}, 2}});
  const auto m = marginal_cp_probability(tr, 100);
  EXPECT_DOUBLE_EQ(m[61], 0.8);
  EXPECT_DOUBLE_EQ(m[79], 0.6);
  EXPECT_DOUBLE_EQ(std::accumulate(m.begin(), m.end(), 0.0), 1.4);
  const auto k = kappa_distribution(tr);
  ASSERT_EQ(k.size(), 3u);
  EXPECT_DOUBLE_EQ(k[0], 0.2);
  EXPECT_DOUBLE_EQ(k[1], 0.2);
  EXPECT_DOUBLE_EQ(k[2], 0.6);
  EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
  const auto zero = marginal_cp_probability(trace_of({{{}, 3}}), 10);
  EXPECT_TRUE(std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; }));
}

TEST(Posterior, CredibleSets) {
  auto cs = credible_set_cp(trace_of({{{40}, 6}, {{41}, 4}}), 0.5);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].set, (std::vector<int>{40}));
  EXPECT_EQ(cs[0].lower, 40);
  EXPECT_EQ(cs[0].upper, 40);
  cs = credible_set_cp(trace_of({{{40}, 10}}), 0.95);
  EXPECT_EQ(cs[0].set, (std::vector<int>{40}));
  EXPECT_THROW(credible_set_cp(trace_of({{{40}, 1}}), 1.0), std::invalid_argument);
  EXPECT_THROW(credible_set_cp(trace_of({{{40}, 1}}), 0.0), std::invalid_argument);
  // only records with the modal kappa count
  cs = credible_set_cp(trace_of({{{40}, 1}, {{20, 60}, 3}, {{22, 60}, 1}}), 0.7);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].set, (std::vector<int>{20}));
  EXPECT_EQ(cs[1].set, (std::vector<int>{60}));

  // Minimality against brute-force enumeration of all subsets.
  auto rng = make_stream(11, {0});
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::pair<std::vector<int>, int>> visits;
    for (int t = 10; t < 18; ++t) visits.push_back({{t}, static_cast<int>(rng.index(7))});
    visits.push_back({{10}, 1});
    const auto tr = trace_of(visits);
    const double level = 0.05 + 0.9 * rng.uniform();
    const auto got = credible_set_cp(tr, level).front();
    std::map<int, double> mass;
    for (const auto& r : tr) mass[r.points[0]] += 1.0 / tr.size();
    std::vector<std::pair<int, double>> items(mass.begin(), mass.end());
    std::size_t smallest = items.size();
    for (unsigned s = 1; s < (1u << items.size()); ++s) {
      double m = 0.0;
      for (std::size_t b = 0; b < items.size(); ++b)
        if (s >> b & 1u) m += items[b].second;
      if (m >= level - 1e-12) smallest = std::min<std::size_t>(smallest, std::popcount(s));
    }
    double m = 0.0;
    for (int t : got.set) m += mass[t];
    EXPECT_GE(m, level - 1e-12);
    EXPECT_NEAR(m, got.mass, 1e-12);
    EXPECT_EQ(got.set.size(), smallest);
  }
}

TEST(Posterior, FdrThreshold) {
  auto s = fdr_threshold({0.99, 0.97, 0.6}, 0.05);
  EXPECT_EQ(s.selected, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(s.threshold, 0.97);
  EXPECT_NEAR(s.expected_fdr, 0.02, 1e-12);
  s = fdr_threshold({1.0, 1.0, 1.0}, 0.001);
  EXPECT_EQ(s.selected.size(), 3u);
  s = fdr_threshold({0.5, 0.2}, 0.05);
  EXPECT_TRUE(s.selected.empty());
  EXPECT_EQ(s.threshold, 1.0);
  EXPECT_THROW(fdr_threshold({0.5}, 0.0), std::invalid_argument);

  auto rng = make_stream(12, {0});
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> ppi(1 + rng.index(30));
    for (auto& v : ppi) v = rng.bernoulli(0.2) ? 1.0 : std::round(100 * rng.uniform()) / 100;
    std::vector<std::size_t> prev;
    bool first = true;
    for (double alpha = 0.5; alpha > 0.005; alpha *= 0.7) {
      const auto sel = fdr_threshold(ppi, alpha);
      // oracle: enumerate candidate thresholds from small to large
      std::vector<double> cand = ppi;
      std::sort(cand.begin(), cand.end());
      double expect_t = 1.0;
      std::size_t expect_n = 0;
      for (double t : cand) {
        double loss = 0.0;
        std::size_t n = 0;
        for (double v : ppi)
          if (v >= t) loss += 1 - v, ++n;
        if (loss / n <= alpha + 1e-12) {
          expect_t = t;
          expect_n = n;
          break;
        }
      }
      EXPECT_EQ(sel.selected.size(), expect_n);
      if (expect_n > 0) EXPECT_EQ(sel.threshold, expect_t);
      for (std::size_t i : sel.selected) EXPECT_GE(ppi[i], sel.threshold);
      if (!first) EXPECT_TRUE(std::includes(prev.begin(), prev.end(), sel.selected.begin(), sel.selected.end()));
      prev = sel.selected;
      first = false;
    }
  }
}

TEST(Posterior, RocAndAuc) {
  std::vector<double> scores;
  std::vector<bool> labels;
  auto rng = make_stream(13, {0});
  for (int i = 0; i < 60; ++i) {
    labels.push_back(rng.bernoulli(0.3));
    scores.push_back(labels.back() ? 1.0 : 0.0);
  }
  auto roc = roc_curve(scores, labels);
  EXPECT_EQ(roc.size(), 101u);
  EXPECT_DOUBLE_EQ(auc(roc), 1.0);
  EXPECT_EQ(roc.front().fpr, 1.0);
  EXPECT_EQ(roc.front().tpr, 1.0);
  for (auto& s : scores) s = 1 - s;
  EXPECT_DOUBLE_EQ(auc(roc_curve(scores, labels)), 0.0);
  // Scores on the grid: the trapezoid AUC equals the Mann-Whitney statistic.
  double mean = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    for (auto& s : scores) s = static_cast<double>(rng.index(101)) / 100;
    const double a = auc(roc_curve(scores, labels));
    EXPECT_NEAR(a, mann_whitney(scores, labels), 1e-9);
    mean += a / reps;
  }
  EXPECT_NEAR(mean, 0.5, 0.02);
  EXPECT_THROW(roc_curve({0.1}, {true, false}), std::invalid_argument);
}

TEST(Posterior, EvaluateVsTruth) {
  const int p = 4, T = 100;
  Graph g0(p), g1(p);
  g0.add_edge(0, 1);
  g1.add_edge(2, 3);
  const ChangePointConfig truth{T, 10, {50}};
  EdgePPI perfect;
  for (const auto& g : {g0, g1}) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
    for (auto [h, k] : g.edges()) m(h, k) = m(k, h) = 1.0;
    perfect.segments.push_back(m);
  }
  auto ev = evaluate_vs_truth(perfect, ChangePointConfig{T, 10, {53}}, {g0, g1}, truth);
  EXPECT_DOUBLE_EQ(ev.auc, 1.0);
  EXPECT_FALSE(ev.segment_mismatch);
  EXPECT_EQ(ev.hausdorff, 3.0);
  EXPECT_EQ(ev.kappa_error, 0);
  EXPECT_EQ(roc_at(ev.roc, 0.5).fpr, 0.0);
  // swapped segments are fully wrong
  EdgePPI swapped{{perfect.segments[1], perfect.segments[0]}};
  // true edges score 0 and tie with 8 of 10 non-edges
  EXPECT_DOUBLE_EQ(evaluate_vs_truth(swapped, ChangePointConfig{T, 10, {50}}, {g0, g1}, truth).auc, 0.4);
  // one estimated segment: aligned with the segment it overlaps most
  EdgePPI single{{perfect.segments[1]}};
  ev = evaluate_vs_truth(single, ChangePointConfig{T, 10, {}}, {g0, g1}, ChangePointConfig{T, 10, {30}});
  EXPECT_TRUE(ev.segment_mismatch);
  EXPECT_EQ(ev.matches, (std::vector<std::pair<int, int>>{{0, 1}}));
  EXPECT_DOUBLE_EQ(ev.auc, 1.0);
  EXPECT_EQ(ev.kappa_error, -1);
  EXPECT_EQ(ev.hausdorff, T);
  EXPECT_THROW(evaluate_vs_truth(perfect, ChangePointConfig{T, 10, {50}}, {Graph(3), Graph(3)}, truth),
               std::invalid_argument);
  EXPECT_THROW(roc_at(ev.roc, 0.505), std::invalid_argument);
}

TEST(Posterior, CovarianceToCorrelation) {
  Eigen::MatrixXd S(2, 2);
  S << 4, 1, 1, 9;
  const auto R = covariance_to_correlation(S);
  EXPECT_DOUBLE_EQ(R(0, 0), 1.0);
  EXPECT_NEAR(R(0, 1), 1.0 / 6, 1e-15);
}

TEST(Posterior, PrecisionPosteriorMoments) {
  // p = 1, d = 3, D = 1, no data: Gamma(3/2, rate 1/2) with mean 3.
  {
    SegmentLikelihood lik(Eigen::MatrixXd::Zero(1, 1), GWishartParams{3.0, Eigen::MatrixXd::Identity(1, 1)}, 10, 1);
    auto rng = make_stream(14, {0});
    const auto est = precision_posterior_segment(Graph(1), lik.prior(), SegmentStatistics{}, 40000, rng);
    EXPECT_NEAR(est.precision(0, 0), 3.0, 4 * std::sqrt(6.0 / 40000));
    EXPECT_EQ(est.correlation(0, 0), 1.0);
  }
  // complete graph: Wishart mean (b + p - 1) D^{-1}; empty graph: b / D_ii
  const int p = 3;
  Eigen::MatrixXd D(p, p);
  D << 2, 0.5, 0.2, 0.5, 1.5, 0.3, 0.2, 0.3, 1;
  const GWishartParams prior{4.0, D};
  auto rng = make_stream(15, {0});
  const int n = 20000;
  auto full = precision_posterior_segment(Graph::complete(p), prior, SegmentStatistics{}, n, rng);
  const Eigen::MatrixXd expect = (4.0 + p - 1) * D.inverse();
  EXPECT_LT((full.precision - expect).cwiseAbs().maxCoeff(), 0.05 * expect.cwiseAbs().maxCoeff());
  // inverse-Wishart mean D / (b - 2)
  EXPECT_LT((full.covariance - D / 2.0).cwiseAbs().maxCoeff(), 0.08);
  auto empty = precision_posterior_segment(Graph(p), prior, SegmentStatistics{}, n, rng);
  for (int i = 0; i < p; ++i) EXPECT_NEAR(empty.precision(i, i), 4.0 / D(i, i), 0.05 * 4.0 / D(i, i));
  EXPECT_EQ(empty.precision(0, 1), 0.0);
  EXPECT_EQ(empty.correlation(0, 2), 0.0);
  EXPECT_TRUE(empty.correlation.diagonal().isOnes());
}

TEST(Posterior, PrecisionPosteriorConsistency) {
  // Large segment: the estimate approaches the inverse of the completed
  // sample covariance.
  const int p = 4, T = 10000;
  Graph g(p);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 3);
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(p, p);
  for (auto [h, k] : g.edges()) K(h, k) = K(k, h) = 0.4;
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(K.inverse()).matrixL();
  auto rng = make_stream(16, {0});
  Eigen::MatrixXd Y(T, p);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd z(p);
    for (int i = 0; i < p; ++i) z(i) = rng.normal();
    Y.row(t) = (L * z).transpose();
  }
  SegmentLikelihood lik(Y, GWishartParams::identity(p), 10, 1);
  const auto est = precision_posterior(lik, ChangePointConfig{T, 1, {}}, {g}, 200, 17);
  ASSERT_EQ(est.size(), 1u);
  const Eigen::MatrixXd S = Y.transpose() * Y / T;
  const Eigen::MatrixXd Khat = complete_covariance(g, S).inverse();
  EXPECT_LT((est[0].precision - Khat).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((est[0].precision - K).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_NEAR(est[0].precision(0, 2), 0.0, 1e-12);
  EXPECT_THROW(precision_posterior(lik, ChangePointConfig{T, 1, {}}, {g, g}, 10, 1), std::invalid_argument);
}

TEST(Posterior, PredictiveBands) {
  const int T = 50, p = 2;
  auto rng = make_stream(18, {0});
  Eigen::MatrixXd Y(T, p);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < p; ++i) Y(t, i) = rng.normal();
  SegmentLikelihood lik(Y, GWishartParams::identity(p), 10, 1);
  PredictiveInput in{ChangePointConfig{T, 5, {}}, {}, {}, {Eigen::MatrixXd::Identity(p, p)}};
  const auto b = posterior_predictive(lik, in, PredictiveMode::kCovariances, 4000, 19);
  EXPECT_NEAR(b.hi90.mean(), 1.645, 0.03);
  EXPECT_NEAR(b.lo90.mean(), -1.645, 0.03);
  EXPECT_NEAR(b.hi95.mean(), 1.960, 0.03);
  EXPECT_NEAR(b.lo95.mean(), -1.960, 0.03);
  EXPECT_TRUE((b.hi95.array() >= b.hi90.array()).all());
  EXPECT_TRUE((b.lo95.array() <= b.lo90.array()).all());

  // coverage of well-specified data, averaged over seeds, in every mode
  double cov90 = 0.0, cov95 = 0.0;
  const int seeds = 20;
  Graph g(p);
  g.add_edge(0, 1);
  for (int s = 0; s < seeds; ++s) {
    auto r = make_stream(20 + s, {0});
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < p; ++i) Y(t, i) = r.normal();
    SegmentLikelihood lk(Y, GWishartParams::identity(p), 10, 1);
    const auto mode = static_cast<PredictiveMode>(s % 3);
    PredictiveInput pin{ChangePointConfig{T, 5, {25}},
                        {WeightedCloud{{Graph(p), g}, {0.0, -1.0}}, WeightedCloud{{g}, {0.0}}},
                        {Graph(p), g},
                        {Eigen::MatrixXd::Identity(p, p), Eigen::MatrixXd::Identity(p, p)}};
    const auto bb = posterior_predictive(lk, pin, mode, 400, 100 + s);
    cov90 += bb.coverage90 / seeds;
    cov95 += bb.coverage95 / seeds;
  }
  EXPECT_NEAR(cov90, 0.90, 0.03);
  EXPECT_NEAR(cov95, 0.95, 0.025);
  EXPECT_THROW(posterior_predictive(lik, in, PredictiveMode::kGraphs, 100, 1), std::invalid_argument);
}

TEST(Posterior, EdgePpiMatchesFilteringOracle) {
  // p = 3: filtering distributions of each segment's graph by enumeration.
  const int T = 60, p = 3;
  auto rng = make_stream(21, {0});
  Eigen::MatrixXd Y(T, p);
  for (int t = 0; t < T; ++t) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    const double rho = t < 30 ? 0.6 : 0.0;
    Y(t, 0) = a;
    Y(t, 1) = rho * a + std::sqrt(1 - rho * rho) * b;
    Y(t, 2) = t < 30 ? c : 0.8 * b + 0.6 * c;
  }
  ModelHyperparams hp;
  hp.omega = 0.5;
  hp.z = 0.5;
  hp.ell = 10;
  hp.gwishart = GWishartParams::identity(p);
  SegmentLikelihood lik(Y, hp.gwishart, 1000, 3);
  const ChangePointConfig c{T, 10, {31}};
  SmcSettings smc;
  smc.N = 2000;
  smc.M = 20;
  const auto refit = edge_ppi(lik, c, hp, smc, 5);
  ASSERT_EQ(refit.ppi.segments.size(), 2u);

  const auto gs = oracle::all_graphs(p);
  std::vector<double> alpha(gs.size());
  for (int j = 0; j < c.segments(); ++j) {
    std::vector<double> next(gs.size(), kNegInf);
    for (std::size_t k = 0; k < gs.size(); ++k) {
      if (j == 0) {
        next[k] = log_graph_initial_prior(gs[k], hp);
      } else {
        for (std::size_t i = 0; i < gs.size(); ++i)
          next[k] = oracle::log_add(next[k], alpha[i] + log_graph_transition_prior(gs[k], gs[i], hp));
      }
      next[k] += lik.log_marginal(gs[k], c.first_row(j), c.last_row(j));
    }
    alpha = next;
    double total = kNegInf;
    for (double a : alpha) total = oracle::log_add(total, a);
    Eigen::MatrixXd exact = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t k = 0; k < gs.size(); ++k)
      for (auto [h, l] : gs[k].edges()) {
        exact(h, l) += std::exp(alpha[k] - total);
        exact(l, h) = exact(h, l);
      }
    const auto& got = refit.ppi.segments[j];
    EXPECT_TRUE(got.isApprox(got.transpose()));
    for (int h = 0; h < p; ++h)
      for (int l = h + 1; l < p; ++l) EXPECT_NEAR(got(h, l), exact(h, l), 0.04) << j << " " << h << l;
  }
  // the strong edges are found
  EXPECT_GE(refit.ppi.segments[0](0, 1), 0.95);
  EXPECT_GE(refit.ppi.segments[1](1, 2), 0.95);
}

TEST(Posterior, EdgePpiTrivialGraph) {
  ModelHyperparams hp;
  hp.omega = 0.0;
  hp.z = 0.0;
  hp.ell = 5;
  hp.gwishart = GWishartParams::identity(1);
  SegmentLikelihood lik(Eigen::MatrixXd::Ones(20, 1), hp.gwishart, 10, 1);
  SmcSettings smc;
  smc.N = 20;
  const auto r = edge_ppi(lik, ChangePointConfig{20, 5, {}}, hp, smc, 1);
  ASSERT_EQ(r.ppi.segments.size(), 1u);
  EXPECT_EQ(r.ppi.segments[0].size(), 1);
  EXPECT_EQ(r.ppi.segments[0](0, 0), 0.0);
  EXPECT_TRUE(pooled_ppi(r.ppi).empty());
}

TEST(Posterior, EdgePpiNoiseCalibration) {
  // independent noise: median off-diagonal PPI stays under 2 omega/(p-1) + 0.1
  const int T = 100, p = 5;
  ModelHyperparams hp;
  hp.omega = 1.0;
  hp.z = 0.5;
  hp.ell = 10;
  hp.gwishart = GWishartParams::identity(p);
  SmcSettings smc;
  smc.N = 1000;
  smc.M = 20;
  const double ceiling = hp.edge_probability(p) + 0.1;
  for (int seed = 0; seed < 10; ++seed) {
    auto rng = make_stream(200 + seed, {0});
    Eigen::MatrixXd Y(T, p);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < p; ++i) Y(t, i) = rng.normal();
    SegmentLikelihood lik(Y, hp.gwishart, 100, seed);
    auto v = pooled_ppi(edge_ppi(lik, ChangePointConfig{T, hp.ell, {}}, hp, smc, seed).ppi);
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    EXPECT_LT(v[v.size() / 2], ceiling) << seed;
  }
}
