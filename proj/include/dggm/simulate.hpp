#pragma once

// Synthetic panels with known change points and graphs, positive-definite
// repair, and a pooled-graph estimate of omega.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/graph.hpp"
#include "dggm/gwishart.hpp"
#include "dggm/priors.hpp"
#include "dggm/random.hpp"
#include "dggm/returns.hpp"

namespace dggm {

namespace detail {

inline Eigen::MatrixXd clip_eigenvalues(const Eigen::MatrixXd& A, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline double min_eigenvalue(const Eigen::MatrixXd& A) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline void apply_pattern(Eigen::MatrixXd& A, const Graph& g) {
  for (int h = 0; h < g.size(); ++h)
    for (int k = 0; k < g.size(); ++k)
      if (h != k && !g.has_edge(h, k)) A(h, k) = 0.0;
}

}  // namespace detail

/// Nearest positive-definite matrix by alternating projections with
/// Dykstra's correction. The eigenvalue floor is enforced on the last step.
/// With a pattern, entries off the graph are held at zero.
inline Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& M, double floor = 1e-8, int max_iter = 1000,
                                  const Graph* pattern = nullptr) {
  if (M.rows() != M.cols()) throw std::invalid_argument("nearest_pd needs a square matrix");
  if (!M.isApprox(M.transpose(), 1e-12)) throw std::invalid_argument("nearest_pd needs a symmetric matrix");
  if (pattern && pattern->size() != M.rows()) throw std::invalid_argument("pattern size mismatch");
  Eigen::MatrixXd Y = 0.5 * (M + M.transpose());
  if (pattern) detail::apply_pattern(Y, *pattern);
  if (detail::min_eigenvalue(Y) >= floor) return Y;
  if (!pattern) return detail::clip_eigenvalues(Y, floor);
  // Projecting onto the pattern can push eigenvalues back under the floor,
  // so the cone step aims a little above it.
  double target = floor;
  for (int attempt = 0; attempt < 8; ++attempt, target *= 10.0) {
    Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(M.rows(), M.cols());
    Eigen::MatrixXd X = Y;
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::MatrixXd R = Y - dS;
      X = detail::clip_eigenvalues(R, target);
      dS = X - R;
      Eigen::MatrixXd next = X;
      detail::apply_pattern(next, *pattern);
      const double change = (next - Y).norm() / std::max(1.0, Y.norm());
      Y = next;
      if (change < 1e-12) break;
    }
    // margin so that a second call returns the matrix unchanged
    if (detail::min_eigenvalue(Y) >= 1.01 * floor) return Y;
    Y = 0.5 * (M + M.transpose());
    detail::apply_pattern(Y, *pattern);
  }
  throw NumericalError("nearest_pd did not reach the eigenvalue floor");
}

/// Pooled graph: |partial correlation| > 2 / sqrt(T) on the full sample.
inline Graph pooled_graph(const Eigen::MatrixXd& Y) {
  const int T = static_cast<int>(Y.rows()), p = static_cast<int>(Y.cols());
  if (T <= p) throw DataError("pooled graph needs T > p");
  const Eigen::RowVectorXd mean = Y.colwise().mean();
  const Eigen::MatrixXd C = Y.rowwise() - mean;
  const Eigen::MatrixXd S = C.transpose() * C / (T - 1);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-12 * S.diagonal().maxCoeff())
    throw NumericalError("pooled covariance is singular");
  const Eigen::MatrixXd K = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  const double cut = 2.0 / std::sqrt(static_cast<double>(T));
  Graph g(p);
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k)
      if (std::abs(K(h, k)) / std::sqrt(K(h, h) * K(k, k)) > cut) g.add_edge(h, k);
  return g;
}

/// omega = pooled edge count / p, clipped to [0, (p-1)/2].
inline double empirical_omega(const Eigen::MatrixXd& Y) {
  const int p = static_cast<int>(Y.cols());
  if (p < 2) return 0.0;
  const double w = static_cast<double>(pooled_graph(Y).edge_count()) / p;
  return std::clamp(w, 0.0, 0.5 * (p - 1));
}

struct ScenarioSpec {
  int id = 3;
  int p = 0;  // 0: scenario default
  int T = 200;
  std::uint64_t seed = 1;
  std::optional<std::vector<int>> changepoints;  // override the scenario's
  int edges = -1;                                // initial edge count, -1: default
  double toggle_probability = 0.4;               // scenario 4
  double garch_a = 0.21;                         // scenario 5
  double garch_b = 0.80;
  int garch_start = 100;

  int dim() const { return p > 0 ? p : (id == 4 ? 20 : 10); }

  void validate() const {
    if (id < 1 || id > 5) throw ConfigError("scenario id must be 1..5");
    if (dim() < 2 || dim() > kMaxNodes) throw ConfigError("scenario p out of range");
    if (T < 2) throw ConfigError("scenario T must be at least 2");
    if (!(toggle_probability >= 0.0 && toggle_probability <= 1.0)) throw ConfigError("toggle probability in [0, 1]");
    if (changepoints) {
      int prev = 1;
      for (int c : *changepoints) {
        if (c <= prev || c > T) throw ConfigError("change points must increase within 2..T");
        prev = c;
      }
    }
  }
};

struct GroundTruth {
  ChangePointConfig config;
  std::vector<Graph> graphs;              // per segment
  std::vector<Eigen::MatrixXd> precisions;  // per segment
  int garch_start = 0;                    // scenario 5: first time of the smooth regime, else 0
};

struct Scenario {
  ReturnsPanel panel;
  GroundTruth truth;
};

/// Uniform graph with exactly m edges.
inline Graph random_graph_with_edges(int p, int m, RandomStream& rng) {
  std::vector<std::pair<int, int>> pairs;
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k) pairs.emplace_back(h, k);
  if (m < 0 || m > static_cast<int>(pairs.size())) throw ConfigError("edge count out of range");
  Graph g(p);
  for (int i = 0; i < m; ++i) {
    const std::size_t j = i + rng.index(pairs.size() - i);
    std::swap(pairs[i], pairs[j]);
    g.add_edge(pairs[i].first, pairs[i].second);
  }
  return g;
}

/// Unit-diagonal precision with entries `value` on the edges, shifted to a
/// minimum eigenvalue of 0.2 if needed and rescaled to unit diagonal.
inline Eigen::MatrixXd structured_precision(const Graph& g, double value = 0.45) {
  const int p = g.size();
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(p, p);
  for (auto [h, k] : g.edges()) K(h, k) = K(k, h) = value;
  const double lam = detail::min_eigenvalue(K);
  if (lam < 0.2) K.diagonal().array() += 0.2 - lam;
  const Eigen::VectorXd s = K.diagonal().cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * K * s.asDiagonal();
}

namespace detail {

inline Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  return llt.matrixL();
}

inline Eigen::VectorXd draw_normal(const Eigen::MatrixXd& L, RandomStream& rng) {
  Eigen::VectorXd z(L.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return L * z;
}

}  // namespace detail

/// Rows of each segment drawn from N(0, K_j^{-1}).
inline Eigen::MatrixXd simulate_segments(const ChangePointConfig& c, const std::vector<Eigen::MatrixXd>& precisions,
                                         RandomStream& rng) {
  const int p = static_cast<int>(precisions.front().rows());
  Eigen::MatrixXd Y(c.T, p);
  for (int j = 0; j < c.segments(); ++j) {
    const Eigen::MatrixXd L = detail::cholesky_factor(precisions[j].inverse());
    for (int t = c.first_row(j); t < c.last_row(j); ++t) Y.row(t) = detail::draw_normal(L, rng).transpose();
  }
  return Y;
}

inline Scenario simulate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const int p = spec.dim(), T = spec.T;
  auto rng = make_stream(spec.seed, {tag(StreamTag::kSimulate), static_cast<std::uint64_t>(spec.id)});
  auto cps = [&](std::vector<int> def) { return ChangePointConfig{T, 1, spec.changepoints.value_or(def)}; };
  Scenario out;
  auto& truth = out.truth;
  switch (spec.id) {
    case 1:
      truth.config = cps({});
      truth.graphs.assign(truth.config.segments(), Graph(p));
      truth.precisions.assign(truth.config.segments(), Eigen::MatrixXd::Identity(p, p));
      break;
    case 2: {
      truth.config = cps({});
      const Graph g = random_graph_with_edges(p, spec.edges >= 0 ? spec.edges : 9, rng);
      truth.graphs.assign(truth.config.segments(), g);
      truth.precisions.assign(truth.config.segments(), structured_precision(g));
      break;
    }
    case 3: {
      truth.config = cps({70});
      Graph g(p);
      Eigen::MatrixXd K = Eigen::MatrixXd::Identity(p, p);
      for (int h = 0; h + 1 < p; ++h) {
        g.add_edge(h, h + 1);
        K(h, h + 1) = K(h + 1, h) = 0.5;
      }
      truth.graphs.push_back(g);
      truth.precisions.push_back(K);
      const int swaps = std::min({5, g.edge_count(), g.pair_count() - g.edge_count()});
      for (int j = 1; j < truth.config.segments(); ++j) {
        auto active = truth.graphs.back().edges();
        std::vector<std::pair<int, int>> inactive;
        for (int h = 0; h < p; ++h)
          for (int k = h + 1; k < p; ++k)
            if (!truth.graphs.back().has_edge(h, k)) inactive.emplace_back(h, k);
        Graph next = truth.graphs.back();
        Eigen::MatrixXd Kn = truth.precisions.back();
        for (int i = 0; i < swaps; ++i) {
          std::swap(active[i], active[i + rng.index(active.size() - i)]);
          std::swap(inactive[i], inactive[i + rng.index(inactive.size() - i)]);
          auto [a, b] = active[i];
          auto [c, d] = inactive[i];
          next.remove_edge(a, b);
          Kn(a, b) = Kn(b, a) = 0.0;
          next.add_edge(c, d);
          Kn(c, d) = Kn(d, c) = 0.2;
        }
        truth.graphs.push_back(next);
        truth.precisions.push_back(nearest_pd(Kn, 1e-8, 1000, &next));
      }
      break;
    }
    case 4: {
      truth.config = cps({60, 100, 150});
      const GWishartParams gw = GWishartParams::identity(p);
      truth.graphs.push_back(random_graph_with_edges(p, spec.edges >= 0 ? spec.edges : 11, rng));
      for (int j = 1; j < truth.config.segments(); ++j)
        truth.graphs.push_back(sample_graph_transition(truth.graphs.back(), spec.toggle_probability, rng));
      for (const auto& g : truth.graphs) truth.precisions.push_back(sample_gwishart(g, gw, rng));
      break;
    }
    case 5: {
      truth.config = cps({60});
      const Graph g = random_graph_with_edges(p, spec.edges >= 0 ? spec.edges : 21, rng);
      const Eigen::MatrixXd K = structured_precision(g);
      for (int j = 0; j < truth.config.segments(); ++j) {
        truth.graphs.push_back(g);
        // standard deviations double at every change point
        truth.precisions.push_back(K / std::pow(4.0, j));
      }
      truth.garch_start = spec.garch_start;
      break;
    }
  }
  for (const auto& K : truth.precisions)
    if (detail::min_eigenvalue(K) < 1e-8) throw NumericalError("generated precision is not positive definite");

  auto& panel = out.panel;
  for (int j = 0; j < p; ++j) panel.labels.push_back("V" + std::to_string(j + 1));
  for (int t = 1; t <= T; ++t) panel.dates.push_back(std::to_string(t));
  if (spec.id != 5 || spec.garch_start > T) {
    panel.Y = simulate_segments(truth.config, truth.precisions, rng);
  } else {
    // Diagonal vech-GARCH from garch_start: Sigma_t = a y y' + b Sigma_{t-1}.
    const int g0 = std::max(spec.garch_start, 2);
    ChangePointConfig head = truth.config;
    head.T = g0 - 1;
    while (!head.points.empty() && head.points.back() > head.T) head.points.pop_back();
    std::vector<Eigen::MatrixXd> ks(truth.precisions.begin(), truth.precisions.begin() + head.segments());
    panel.Y.resize(T, p);
    panel.Y.topRows(head.T) = simulate_segments(head, ks, rng);
    Eigen::MatrixXd sigma = ks.back().inverse();
    for (int t = g0; t <= T; ++t) {
      const Eigen::VectorXd y = panel.Y.row(t - 2).transpose();
      sigma = spec.garch_a * y * y.transpose() + spec.garch_b * sigma;
      sigma = 0.5 * (sigma + sigma.transpose());
      panel.Y.row(t - 1) = detail::draw_normal(detail::cholesky_factor(sigma), rng).transpose();
    }
  }
  return out;
}

}  // namespace dggm
