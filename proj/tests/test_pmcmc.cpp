#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "dggm/pmcmc.hpp"
#include "oracles.hpp"

using namespace dggm;

namespace {

ChangePointConfig cfg(int T, int ell, std::vector<int> pts) { return {T, ell, std::move(pts)}; }

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

ModelHyperparams hyper2(int ell) {
  ModelHyperparams hp;
  hp.omega = 0.25;
  hp.z = 0.25;
  hp.p0 = 0.1;
  hp.ell = ell;
  hp.gwishart = GWishartParams::identity(2);
  return hp;
}

}  // namespace

TEST(Pmcmc, FeasiblePositions) {
  EXPECT_EQ(feasible_positions(cfg(10, 3, {})), (std::vector<int>{4, 5, 6, 7, 8}));
  EXPECT_EQ(feasible_positions(cfg(10, 3, {4})), (std::vector<int>{7, 8}));
  EXPECT_TRUE(feasible_positions(cfg(5, 5, {})).empty());
  for (const auto& c : enumerate_configs(14, 2)) {
    const auto pos = feasible_positions(c);
    EXPECT_EQ(static_cast<int>(pos.size()), count_feasible_positions(c));
    // oracle: every t whose insertion stays feasible
    std::vector<int> brute;
    for (int t = 2; t <= c.T; ++t) {
      if (std::binary_search(c.points.begin(), c.points.end(), t)) continue;
      auto d = c;
      d.points.insert(std::lower_bound(d.points.begin(), d.points.end(), t), t);
      if (d.valid()) brute.push_back(t);
    }
    EXPECT_EQ(pos, brute);
  }
}

TEST(Pmcmc, EventTable) {
  MoveProbabilities mp;
  auto e = event_probabilities(cfg(20, 5, {}), mp);
  EXPECT_EQ(e.birth, 1.0);
  EXPECT_EQ(e.death + e.global + e.local, 0.0);
  // kappa = 1 with no room left: T=10, ell=5, c=(6).
  e = event_probabilities(cfg(10, 5, {6}), mp);
  EXPECT_EQ(e.birth, 0.0);
  EXPECT_EQ(e.death, mp.q_death_full);
  EXPECT_DOUBLE_EQ(e.global, 0.5 * (1 - mp.q_death_full));
  EXPECT_EQ(e.global, e.local);
  e = event_probabilities(cfg(30, 5, {10}), mp);
  EXPECT_EQ(e.birth, 0.25);
  EXPECT_EQ(e.death, 0.25);
  EXPECT_EQ(e.global, 0.25);
  // No legal event at all.
  EXPECT_TRUE(event_probabilities(cfg(9, 5, {}), mp).stay());
  auto rng = make_stream(1, {0});
  auto p = propose(cfg(9, 5, {}), mp, rng);
  EXPECT_EQ(p.move, MoveType::kStay);
  EXPECT_EQ(p.config, cfg(9, 5, {}));
}

TEST(Pmcmc, ProposalDensityNormalizesAndIsReversible) {
  for (int T = 6; T <= 15; ++T)
    for (int ell : {1, 2, 3, 4}) {
      if (ell > T || (ell == 1 && T > 13)) continue;  // ell = 1 at T = 15 has 2^14 configurations
      for (double lambda : {0.3, 2.0}) {
        MoveProbabilities mp;
        mp.lambda = lambda;
        const auto all = enumerate_configs(T, ell);
        for (const auto& c : all) {
          double total = 0.0;
          for (const auto& d : all) {
            const double f = log_proposal_density(c, d, mp);
            total += std::exp(f);
            const double r = log_proposal_density(d, c, mp);
            EXPECT_EQ(f == kNegInf, r == kNegInf) << T << " " << ell;
          }
          EXPECT_NEAR(total, 1.0, 1e-12) << "T=" << T << " ell=" << ell;
        }
      }
    }
}

TEST(Pmcmc, ProposalFrequenciesMatchDensity) {
  MoveProbabilities mp;
  const auto c = cfg(30, 4, {9, 17});
  auto rng = make_stream(2, {0});
  std::map<std::vector<int>, int> counts;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    auto p = propose(c, mp, rng);
    ASSERT_TRUE(p.config.valid());
    ASSERT_NEAR(p.log_q_forward, log_proposal_density(c, p.config, mp), 1e-12);
    ++counts[p.config.points];
  }
  double chi = 0.0;
  int cells = 0;
  for (const auto& d : enumerate_configs(30, 4, 3)) {
    const double e = n * std::exp(log_proposal_density(c, d, mp));
    if (e == 0.0) {
      EXPECT_EQ(counts.count(d.points), 0u);
      continue;
    }
    const double o = counts.count(d.points) ? counts[d.points] : 0;
    chi += (o - e) * (o - e) / e;
    ++cells;
  }
  // chi-square with cells-1 dof; mean + 5 sd
  EXPECT_LT(chi, cells + 5 * std::sqrt(2.0 * cells));
}

TEST(Pmcmc, SharpLocalMoveReturnsToCentre) {
  MoveProbabilities mp;
  mp.lambda = 1e3;
  mp.q_birth = mp.q_death = 0.01;
  const auto c = cfg(40, 3, {10, 25});
  auto rng = make_stream(3, {0});
  int locals = 0;
  for (int i = 0; i < 2000; ++i) {
    auto p = propose(c, mp, rng);
    if (p.move != MoveType::kLocal) continue;
    ++locals;
    EXPECT_EQ(p.config, c);
  }
  EXPECT_GT(locals, 500);
}

TEST(Pmcmc, ChainBookkeepingAndDeterminism) {
  const Eigen::MatrixXd Y = two_regime_panel(20, 10, 0.0, 0.8, 4);
  const auto hp = hyper2(5);
  SmcSettings smc;
  smc.N = 30;
  smc.M = 3;
  ChainSettings ch;
  ch.n_iter = 41;
  ch.burn_in = 40;
  ch.seed = 11;
  SegmentLikelihood lik(Y, hp.gwishart, 20, ch.seed);
  const auto one = run_chain(lik, hp, MoveProbabilities{}, smc, ch);
  EXPECT_EQ(one.records.size(), 1u);
  EXPECT_EQ(one.records.front().iteration, 41);

  ch.n_iter = 300;
  ch.burn_in = 100;
  ch.thin = 7;
  SegmentLikelihood lik_a(Y, hp.gwishart, 20, ch.seed), lik_b(Y, hp.gwishart, 20, ch.seed);
  const auto a = run_chain(lik_a, hp, MoveProbabilities{}, smc, ch);
  smc.threads = 4;
  const auto b = run_chain(lik_b, hp, MoveProbabilities{}, smc, ch);
  ASSERT_EQ(a.records.size(), 200u / 7);
  ASSERT_EQ(a.records.size(), b.records.size());
  int accepted = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].points, b.records[i].points);
    EXPECT_EQ(a.records[i].log_lik, b.records[i].log_lik);
    EXPECT_TRUE((a.records[i].iteration - 100) % 7 == 0);
  }
  for (const auto& s : a.stats) accepted += s.accepted;
  EXPECT_GT(accepted, 0);
  EXPECT_LT(accepted, 300);
  EXPECT_EQ(a.final_state.graphs.size(), static_cast<std::size_t>(a.final_state.config.segments()));
}

TEST(Pmcmc, InvalidSettings) {
  const Eigen::MatrixXd Y = two_regime_panel(20, 10, 0.0, 0.8, 4);
  const auto hp = hyper2(5);
  SegmentLikelihood lik(Y, hp.gwishart, 20, 1);
  ChainSettings ch;
  ch.n_iter = 10;
  ch.burn_in = 10;
  EXPECT_THROW(run_chain(lik, hp, MoveProbabilities{}, SmcSettings{}, ch), ConfigError);
  MoveProbabilities mp;
  mp.q_birth = 0.6;
  mp.q_death = 0.4;
  EXPECT_THROW(mp.validate(), ConfigError);
  mp = MoveProbabilities{};
  mp.lambda = 0.0;
  EXPECT_THROW(mp.validate(), ConfigError);
}

TEST(Pmcmc, ShortChainTracksExactKappaPosterior) {
  // Reduced-length version of the exactness oracle; the full-length run sits
  // in the acceptance suite.
  const Eigen::MatrixXd Y = two_regime_panel(20, 10, 0.0, 0.9, 5);
  const auto hp = hyper2(5);
  SegmentLikelihood lik(Y, hp.gwishart, 20, 3);
  const auto exact = oracle::kappa_posterior(oracle::config_posterior(lik, hp));
  SmcSettings smc;
  smc.N = 50;
  smc.M = 5;
  ChainSettings ch;
  ch.n_iter = 6000;
  ch.burn_in = 500;
  ch.seed = 17;
  const auto trace = run_chain(lik, hp, MoveProbabilities{}, smc, ch);
  std::vector<double> freq(exact.size(), 0.0);
  for (const auto& r : trace.records) freq[r.kappa()] += 1.0 / trace.records.size();
  double tv = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) tv += 0.5 * std::abs(freq[k] - exact[k]);
  EXPECT_LT(tv, 0.1) << "exact k0 " << exact[0] << " k1 " << exact[1];
}
