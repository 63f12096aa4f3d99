#pragma once

// G-Wishart distribution W_G(d, D) with density proportional to
// |K|^{(d-2)/2} exp(-tr(D K)/2) on positive-definite K with zeros off G.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/graph.hpp"
#include "dggm/random.hpp"

namespace dggm {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

struct GWishartParams {
  double d = 3.0;
  Eigen::MatrixXd D;

  static GWishartParams identity(int p, double d = 3.0) {
    return {d, Eigen::MatrixXd::Identity(p, p)};
  }

  int dim() const noexcept { return static_cast<int>(D.rows()); }

  void validate() const {
    if (!(d > 2.0)) throw ConfigError("G-Wishart shape d must exceed 2");
    if (D.rows() != D.cols() || D.rows() < 1) throw ConfigError("D must be a non-empty square matrix");
    if (!D.isApprox(D.transpose(), 1e-12)) throw ConfigError("D must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(D);
    if (llt.info() != Eigen::Success) throw ConfigError("D must be positive definite");
  }
};

/// Segment length and scatter matrix H = sum of y y^T over the segment.
struct SegmentStatistics {
  int n = 0;
  Eigen::MatrixXd H;

  /// Rows [first, last) of a T x p data matrix.
  static SegmentStatistics from_rows(const Eigen::MatrixXd& Y, int first, int last) {
    SegmentStatistics s;
    s.n = last - first;
    const auto block = Y.middleRows(first, s.n);
    s.H = block.transpose() * block;
    return s;
  }
};

/// A log-scale Monte Carlo (or exact) estimate with its standard error.
struct LogEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int failures = 0;
};

/// log Gamma_m(a) = m(m-1)/4 log(pi) + sum_{i=0}^{m-1} log Gamma(a - i/2).
inline double log_multivariate_gamma(int m, double a) {
  double out = 0.25 * m * (m - 1) * std::log(std::numbers::pi);
  for (int i = 0; i < m; ++i) out += std::lgamma(a - 0.5 * i);
  return out;
}

inline Eigen::MatrixXd submatrix(const Eigen::MatrixXd& M, NodeSet nodes) {
  const auto idx = node_list(nodes);
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) out(a, b) = M(idx[a], idx[b]);
  return out;
}

inline double log_det_spd(const Eigen::MatrixXd& A) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Analytic log normalizing constant for a complete graph on m = D.rows() nodes:
/// ((d+m-1)m/2) log 2 + log Gamma_m((d+m-1)/2) - ((d+m-1)/2) log|D|.
inline double log_norm_const_complete(double d, const Eigen::MatrixXd& D) {
  const int m = static_cast<int>(D.rows());
  if (m == 0) return 0.0;
  const double a = 0.5 * (d + m - 1);
  return a * m * std::numbers::ln2 + log_multivariate_gamma(m, a) - a * log_det_spd(D);
}

/// Monte Carlo estimate of log I_G(d, D) (Atay-Kayis & Massam 2005).
///
/// With D^{-1} = T'T and K = Phi'Phi, the substitution Psi = Phi T^{-1} leaves
/// the free entries of Psi independent (chi and standard normal) and the
/// constant equals a closed-form prefactor times E[exp(-sum psi_ij^2 / 2)]
/// over the non-free positions, which are fixed by the zeros of K.
inline LogEstimate log_norm_const_mc(const Graph& g, double d, const Eigen::MatrixXd& D, int n_mc,
                                     RandomStream& rng) {
  const int m = g.size();
  if (D.rows() != m) throw std::invalid_argument("D does not match graph size");
  if (n_mc < 1) throw std::invalid_argument("n_mc must be positive");

  Eigen::LLT<Eigen::MatrixXd> llt_inv(D.inverse());
  if (llt_inv.info() != Eigen::Success) throw NumericalError("D^{-1} is not positive definite");
  const Eigen::MatrixXd Tm = llt_inv.matrixL().transpose();  // upper, D^{-1} = T'T

  std::vector<int> nu(m, 0), before(m, 0);
  for (auto [h, k] : g.edges()) {
    ++nu[h];
    ++before[k];
  }
  double prefactor = 0.5 * g.edge_count() * kLogTwoPi;
  for (int i = 0; i < m; ++i) {
    const double a = d + nu[i];
    prefactor += 0.5 * a * std::numbers::ln2 + std::lgamma(0.5 * a) + (a + before[i]) * std::log(Tm(i, i));
  }

  const bool complete = g.edge_count() == g.pair_count();
  if (complete) return {prefactor, 0.0, 0};

  std::vector<double> t(static_cast<std::size_t>(m * m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) t[i * m + j] = Tm(i, j);
  std::vector<double> psi(t.size()), phi(t.size());
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(n_mc));
  int failures = 0;

  // Rows after the last one holding a non-free entry never reach the sum.
  int last_row = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (!g.has_edge(i, j)) last_row = i;

  while (static_cast<int>(log_terms.size()) < n_mc) {
    for (int i = 0; i <= last_row; ++i) {
      psi[i * m + i] = std::sqrt(rng.chi_square(d + nu[i]));
      for (int j = i + 1; j < m; ++j)
        if (g.has_edge(i, j)) psi[i * m + j] = rng.normal();
    }
    double acc = 0.0;
    bool ok = true;
    for (int i = 0; i <= last_row && ok; ++i) {
      phi[i * m + i] = psi[i * m + i] * t[i * m + i];
      if (!(phi[i * m + i] > 0.0)) ok = false;
      for (int j = i + 1; j < m && ok; ++j) {
        if (g.has_edge(i, j)) {
          double s = 0.0;
          for (int k = i; k <= j; ++k) s += psi[i * m + k] * t[k * m + j];
          phi[i * m + j] = s;
        } else {
          double s = 0.0;
          for (int k = 0; k < i; ++k) s += phi[k * m + i] * phi[k * m + j];
          phi[i * m + j] = -s / phi[i * m + i];
          double r = phi[i * m + j];
          for (int k = i; k < j; ++k) r -= psi[i * m + k] * t[k * m + j];
          psi[i * m + j] = r / t[j * m + j];
          acc += psi[i * m + j] * psi[i * m + j];
        }
      }
    }
    if (!ok || !std::isfinite(acc)) {
      if (++failures > n_mc) throw NumericalError("G-Wishart Monte Carlo: failure budget exhausted");
      continue;
    }
    log_terms.push_back(-0.5 * acc);
  }

  double top = -std::numeric_limits<double>::infinity();
  for (double x : log_terms) top = std::max(top, x);
  double sum = 0.0, sum_sq = 0.0;
  for (double x : log_terms) {
    const double e = std::exp(x - top);
    sum += e;
    sum_sq += e * e;
  }
  const double n = static_cast<double>(n_mc);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  return {prefactor + top + std::log(mean), std::sqrt(var / n) / mean, failures};
}

inline LogEstimate log_norm_const_mc(const Graph& g, const GWishartParams& params, int n_mc,
                                     RandomStream& rng) {
  return log_norm_const_mc(g, params.d, params.D, n_mc, rng);
}

/// log I_G(d, D) through the prime-component factorization. Complete
/// components and all separators are analytic; only non-complete prime
/// components are estimated by Monte Carlo.
inline LogEstimate log_norm_const(const Graph& g, double d, const Eigen::MatrixXd& D, int n_mc,
                                  RandomStream& rng) {
  const auto dec = prime_decomposition(g);
  LogEstimate out;
  double var = 0.0;
  for (std::size_t m = 0; m < dec.components.size(); ++m) {
    const NodeSet comp = dec.components[m];
    if (dec.complete_flags[m]) {
      out.value += log_norm_const_complete(d, submatrix(D, comp));
    } else {
      auto est = log_norm_const_mc(g.induced(comp), d, submatrix(D, comp), n_mc, rng);
      out.value += est.value;
      out.failures += est.failures;
      var += est.std_error * est.std_error;
    }
  }
  for (NodeSet sep : dec.separators) out.value -= log_norm_const_complete(d, submatrix(D, sep));
  out.std_error = std::sqrt(var);
  return out;
}

inline LogEstimate log_norm_const(const Graph& g, const GWishartParams& params, int n_mc,
                                  RandomStream& rng) {
  return log_norm_const(g, params.d, params.D, n_mc, rng);
}

/// log P(Y_segment | G) = -(n p / 2) log(2 pi) + log I_G(d+n, D+H) - log I_G(d, D).
inline LogEstimate log_marginal_likelihood(const Graph& g, const SegmentStatistics& stats,
                                           const GWishartParams& params, int n_mc, RandomStream& rng) {
  if (stats.n < 1) throw std::invalid_argument("segment must contain at least one observation");
  const int p = g.size();
  auto post = log_norm_const(g, params.d + stats.n, params.D + stats.H, n_mc, rng);
  auto prior = log_norm_const(g, params.d, params.D, n_mc, rng);
  return {-0.5 * stats.n * p * kLogTwoPi + post.value - prior.value,
          std::hypot(post.std_error, prior.std_error), post.failures + prior.failures};
}

/// Maximum-determinant completion: the covariance W that agrees with S on
/// the diagonal and on the edges of g and whose inverse vanishes off g.
/// Regression sweeps over each node's neighbourhood.
inline Eigen::MatrixXd complete_covariance(const Graph& g, const Eigen::MatrixXd& S, double tol = 1e-12,
                                           int max_sweeps = 10000) {
  const int p = g.size();
  Eigen::MatrixXd W = S;
  if (g.is_complete()) return W;
  std::vector<std::vector<int>> nbs(static_cast<std::size_t>(p));
  int widest = 0;
  for (int j = 0; j < p; ++j) {
    nbs[j] = node_list(g.neighbours(j));
    widest = std::max(widest, static_cast<int>(nbs[j].size()));
  }
  Eigen::MatrixXd Wnn(widest, widest);
  Eigen::VectorXd s(widest), bhat(widest), col(p);
  Eigen::LLT<Eigen::MatrixXd> llt(widest);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (int j = 0; j < p; ++j) {
      const auto& nb = nbs[j];
      const auto q = static_cast<Eigen::Index>(nb.size());
      col.setZero();
      if (q > 0) {
        for (Eigen::Index a = 0; a < q; ++a) {
          s(a) = S(nb[a], j);
          for (Eigen::Index b = 0; b < q; ++b) Wnn(a, b) = W(nb[a], nb[b]);
        }
        llt.compute(Wnn.topLeftCorner(q, q));
        bhat.head(q) = llt.solve(s.head(q));
        for (Eigen::Index a = 0; a < q; ++a) col += bhat(a) * W.col(nb[a]);
      }
      for (int i = 0; i < p; ++i) {
        if (i == j) continue;
        change = std::max(change, std::abs(W(i, j) - col(i)));
        W(i, j) = col(i);
        W(j, i) = col(i);
      }
    }
    if (change < tol * std::max(1.0, W.cwiseAbs().maxCoeff())) return W;
  }
  throw NumericalError("covariance completion did not converge");
}

/// Laplace approximation of log I_G(b, D) for b > 2. The mode is the
/// inverse of the completion of D / (b - 2); the Hessian is taken in the
/// free entries (diagonal plus edges). Cheap and accurate when b is large.
inline double log_norm_const_laplace_whole(const Graph& g, double b, const Eigen::MatrixXd& D) {
  const int m = g.size();
  if (!(b > 2.0)) throw std::invalid_argument("Laplace approximation needs b > 2");
  const double c = b - 2.0;
  const Eigen::MatrixXd W = complete_covariance(g, D / c, 1e-10, 500);
  std::vector<std::pair<int, int>> free;
  for (int i = 0; i < m; ++i) free.emplace_back(i, i);
  for (auto e : g.edges()) free.push_back(e);
  const auto k = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd H(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index bb = a; bb < k; ++bb) {
      const auto [i, j] = free[a];
      const auto [u, v] = free[bb];
      // tr(W E_a W E_b) with E the symmetric indicator of each entry.
      double t = W(j, u) * W(v, i);
      if (i != j) t += W(i, u) * W(v, j);
      if (u != v) t += W(j, v) * W(u, i);
      if (i != j && u != v) t += W(i, v) * W(u, j);
      H(a, bb) = H(bb, a) = 0.5 * c * t;
    }
  Eigen::LLT<Eigen::MatrixXd> hl(H);
  Eigen::LLT<Eigen::MatrixXd> wl(W);
  if (hl.info() != Eigen::Success || wl.info() != Eigen::Success)
    throw NumericalError("Laplace approximation: singular curvature");
  double log_det_h = 0.0, log_det_w = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) log_det_h += 2.0 * std::log(hl.matrixL()(a, a));
  for (int i = 0; i < m; ++i) log_det_w += 2.0 * std::log(wl.matrixL()(i, i));
  return 0.5 * c * (-log_det_w - m) + 0.5 * static_cast<double>(k) * kLogTwoPi - 0.5 * log_det_h;
}

/// Factorized Laplace approximation: complete components and separators
/// exact, non-complete prime components approximated.
inline double log_norm_const_laplace(const Graph& g, double b, const Eigen::MatrixXd& D) {
  const auto dec = prime_decomposition(g);
  double out = 0.0;
  for (std::size_t m = 0; m < dec.components.size(); ++m) {
    const NodeSet comp = dec.components[m];
    out += dec.complete_flags[m] ? log_norm_const_complete(b, submatrix(D, comp))
                                 : log_norm_const_laplace_whole(g.induced(comp), b, submatrix(D, comp));
  }
  for (NodeSet sep : dec.separators) out -= log_norm_const_complete(b, submatrix(D, sep));
  return out;
}

/// Wishart draw for the complete graph: Bartlett factorization with
/// d + p - 1 degrees of freedom and scale D^{-1}. Mean (d + p - 1) D^{-1}.
inline Eigen::MatrixXd sample_wishart(double d, const Eigen::MatrixXd& D, RandomStream& rng) {
  const auto p = D.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(D.inverse());
  if (llt.info() != Eigen::Success) throw NumericalError("D^{-1} is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  const double dof = d + static_cast<double>(p) - 1.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    A(i, i) = std::sqrt(rng.chi_square(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  const Eigen::MatrixXd LA = L * A;
  return LA * LA.transpose();
}

/// Exact G-Wishart draw (Lenkoski 2013): complete Wishart draw, then
/// iterative completion of its inverse so that the precision has the zero
/// pattern of `g`.
inline Eigen::MatrixXd sample_gwishart(const Graph& g, double d, const Eigen::MatrixXd& D,
                                       RandomStream& rng) {
  const int p = g.size();
  Eigen::MatrixXd K = sample_wishart(d, D, rng);
  if (g.is_complete()) return 0.5 * (K + K.transpose());

  const Eigen::MatrixXd W = complete_covariance(g, K.inverse());
  Eigen::MatrixXd out = W.inverse();
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (i != j && !g.has_edge(i, j)) out(i, j) = 0.0;
  out = (0.5 * (out + out.transpose())).eval();
  Eigen::LLT<Eigen::MatrixXd> check(out);
  if (check.info() != Eigen::Success) throw NumericalError("G-Wishart draw is not positive definite");
  return out;
}

inline Eigen::MatrixXd sample_gwishart(const Graph& g, const GWishartParams& params, RandomStream& rng) {
  return sample_gwishart(g, params.d, params.D, rng);
}

}  // namespace dggm
