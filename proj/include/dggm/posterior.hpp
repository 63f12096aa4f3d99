#pragma once

// Post-processing of a chain: change-point summaries, conditional graph
// refits, PPI edge selection, precision estimates, predictive bands and
// comparison against a known truth.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dggm/error.hpp"
#include "dggm/gwishart.hpp"
#include "dggm/likelihood.hpp"
#include "dggm/pmcmc.hpp"
#include "dggm/priors.hpp"
#include "dggm/smc.hpp"

namespace dggm {

struct MapEstimate {
  std::vector<int> points;
  double probability = 0.0;
};

/// Most visited configuration; ties go to smaller kappa, then lexicographic.
inline MapEstimate map_config(const std::vector<TraceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
  std::map<std::vector<int>, std::size_t> counts;
  for (const auto& r : records) ++counts[r.points];
  const std::vector<int>* best = nullptr;
  std::size_t top = 0;
  for (const auto& [pts, n] : counts) {
    const bool better = n > top || (n == top && (pts.size() < best->size() ||
                                                 (pts.size() == best->size() && pts < *best)));
    if (better) {
      best = &pts;
      top = n;
    }
  }
  return {*best, static_cast<double>(top) / static_cast<double>(records.size())};
}

/// Entry t (1..T) holds the share of records with a change point at t.
inline std::vector<double> marginal_cp_probability(const std::vector<TraceRecord>& records, int T) {
  std::vector<double> out(static_cast<std::size_t>(T + 1), 0.0);
  if (records.empty()) return out;
  const double w = 1.0 / static_cast<double>(records.size());
  for (const auto& r : records)
    for (int t : r.points) {
      if (t < 1 || t > T) throw std::out_of_range("change point outside 1..T");
      out[static_cast<std::size_t>(t)] += w;
    }
  return out;
}

inline std::vector<double> kappa_distribution(const std::vector<TraceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
  std::vector<double> counts;
  for (const auto& r : records) {
    if (counts.size() <= static_cast<std::size_t>(r.kappa())) counts.resize(r.kappa() + 1, 0.0);
    counts[r.kappa()] += 1.0;
  }
  for (auto& c : counts) c /= static_cast<double>(records.size());
  return counts;
}

inline int modal_kappa(const std::vector<double>& pmf) {
  return static_cast<int>(std::max_element(pmf.begin(), pmf.end()) - pmf.begin());
}

struct CredibleSet {
  int index = 0;        // 0-based position of the change point
  std::vector<int> set;  // time points, ascending
  int lower = 0;
  int upper = 0;
  double mass = 0.0;
  double mean = 0.0;
  double median = 0.0;
};

/// Smallest sets of time points with mass >= level for each ordered change
/// point, among records whose kappa equals the modal kappa.
inline std::vector<CredibleSet> credible_set_cp(const std::vector<TraceRecord>& records, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  const int k = modal_kappa(kappa_distribution(records));
  std::vector<CredibleSet> out;
  for (int j = 0; j < k; ++j) {
    std::map<int, double> mass;
    std::vector<int> values;
    for (const auto& r : records)
      if (r.kappa() == k) {
        mass[r.points[j]] += 1.0;
        values.push_back(r.points[j]);
      }
    const double n = static_cast<double>(values.size());
    std::vector<std::pair<int, double>> order(mass.begin(), mass.end());
    std::stable_sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.second > b.second; });
    CredibleSet cs;
    cs.index = j;
    for (const auto& [t, m] : order) {
      if (cs.mass >= level - 1e-12) break;
      cs.set.push_back(t);
      cs.mass += m / n;
    }
    std::sort(cs.set.begin(), cs.set.end());
    cs.lower = cs.set.front();
    cs.upper = cs.set.back();
    cs.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    std::sort(values.begin(), values.end());
    const std::size_t h = values.size() / 2;
    cs.median = values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
    out.push_back(std::move(cs));
  }
  return out;
}

/// Per-segment symmetric matrices of posterior edge inclusion probabilities.
struct EdgePPI {
  std::vector<Eigen::MatrixXd> segments;
};

/// Weighted edge frequencies of a cloud.
inline Eigen::MatrixXd cloud_ppi(const WeightedCloud& cloud, int p) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  double top = kNegInf;
  for (double w : cloud.log_weights) top = std::max(top, w);
  if (!std::isfinite(top)) throw DegenerateCloud("terminal cloud has no weight");
  double total = 0.0;
  for (std::size_t n = 0; n < cloud.graphs.size(); ++n) {
    const double w = std::exp(cloud.log_weights[n] - top);
    total += w;
    for (auto [h, k] : cloud.graphs[n].edges()) {
      out(h, k) += w;
      out(k, h) += w;
    }
  }
  return out / total;
}

struct RefitResult {
  EdgePPI ppi;
  FilterResult filter;
  TemperatureLadder ladder;
};

/// High-N filter run on a fixed configuration; PPIs from each segment's
/// terminal weighted cloud.
inline RefitResult edge_ppi(SegmentLikelihood& lik, const ChangePointConfig& config, const ModelHyperparams& hp,
                            const SmcSettings& smc, std::uint64_t seed) {
  const StreamContext ctx{seed, tag(StreamTag::kPosterior), 0};
  RefitResult out;
  out.ladder = tune_temperatures(lik, config, hp, smc, ctx);
  out.filter = run_particle_filter(lik, config, out.ladder, hp, smc, ctx);
  for (const auto& cloud : out.filter.terminal) out.ppi.segments.push_back(cloud_ppi(cloud, lik.p()));
  return out;
}

/// Modal graph per segment: edges with PPI >= 0.5 by default.
inline std::vector<Graph> threshold_graphs(const EdgePPI& ppi, double threshold = 0.5) {
  std::vector<Graph> out;
  for (const auto& m : ppi.segments) {
    const int p = static_cast<int>(m.rows());
    Graph g(p);
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k)
        if (m(h, k) >= threshold) g.add_edge(h, k);
    out.push_back(g);
  }
  return out;
}

struct FdrSelection {
  double threshold = 1.0;
  std::vector<std::size_t> selected;  // indices into the input
  double expected_fdr = 0.0;
};

/// Smallest threshold t with mean(1 - PPI) <= alpha over {PPI >= t}.
/// Tied PPIs enter or leave together. Nothing selected: threshold 1.
inline FdrSelection fdr_threshold(const std::vector<double>& ppi, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  std::vector<std::size_t> idx(ppi.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ppi[a] > ppi[b]; });
  FdrSelection best;
  double loss = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double v = ppi[idx[i]];
    std::size_t j = i;
    double add = 0.0;
    while (j < idx.size() && ppi[idx[j]] == v) add += 1.0 - ppi[idx[j++]];
    const double mean = (loss + add) / static_cast<double>(j);
    if (mean > alpha + 1e-12) break;
    loss += add;
    best.threshold = v;
    best.expected_fdr = mean;
    best.selected.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(j));
    i = j;
  }
  std::sort(best.selected.begin(), best.selected.end());
  return best;
}

/// Upper-triangle PPIs of all segments, segment-major.
inline std::vector<double> pooled_ppi(const EdgePPI& ppi) {
  std::vector<double> out;
  for (const auto& m : ppi.segments)
    for (int h = 0; h < m.rows(); ++h)
      for (int k = h + 1; k < m.cols(); ++k) out.push_back(m(h, k));
  return out;
}

struct PrecisionEstimate {
  Eigen::MatrixXd precision;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd correlation;
  int rejected = 0;
};

inline Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& S) {
  const Eigen::VectorXd sd = S.diagonal().cwiseSqrt();
  Eigen::MatrixXd R = S.array() / (sd * sd.transpose()).array();
  R.diagonal().setOnes();
  return R.cwiseMax(-1.0).cwiseMin(1.0);
}

/// Monte Carlo posterior means given the segment graphs. A segment with
/// first == last uses the prior alone.
inline PrecisionEstimate precision_posterior_segment(const Graph& g, const GWishartParams& prior,
                                                     const SegmentStatistics& stats, int n_draws, RandomStream& rng) {
  if (n_draws < 1) throw std::invalid_argument("n_draws must be positive");
  const int p = g.size();
  const double d = prior.d + stats.n;
  const Eigen::MatrixXd D = stats.n > 0 ? Eigen::MatrixXd(prior.D + stats.H) : prior.D;
  PrecisionEstimate out{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p), {}, 0};
  for (int i = 0; i < n_draws;) {
    try {
      const Eigen::MatrixXd K = sample_gwishart(g, d, D, rng);
      out.precision += K;
      out.covariance += K.inverse();
      ++i;
    } catch (const NumericalError&) {
      if (++out.rejected > 10 * n_draws) throw;
    }
  }
  out.precision /= n_draws;
  out.covariance /= n_draws;
  out.correlation = covariance_to_correlation(out.covariance);
  return out;
}

inline std::vector<PrecisionEstimate> precision_posterior(const SegmentLikelihood& lik, const ChangePointConfig& c,
                                                          const std::vector<Graph>& graphs, int n_draws,
                                                          std::uint64_t seed) {
  if (static_cast<int>(graphs.size()) != c.segments()) throw std::invalid_argument("one graph per segment expected");
  std::vector<PrecisionEstimate> out;
  for (int j = 0; j < c.segments(); ++j) {
    auto rng = make_stream(seed, {tag(StreamTag::kPosterior), 1, static_cast<std::uint64_t>(j)});
    out.push_back(
        precision_posterior_segment(graphs[j], lik.prior(), lik.statistics(c.first_row(j), c.last_row(j)), n_draws, rng));
  }
  return out;
}

enum class PredictiveMode { kChangePoints, kGraphs, kCovariances };

/// What the predictive simulation conditions on. kChangePoints draws a graph
/// per segment from the clouds, kGraphs fixes the graphs, both then draw a
/// precision from the segment posterior; kCovariances fixes the covariances.
struct PredictiveInput {
  ChangePointConfig config;
  std::vector<WeightedCloud> clouds;
  std::vector<Graph> graphs;
  std::vector<Eigen::MatrixXd> covariances;
};

struct PredictiveBands {
  // T x p each
  Eigen::MatrixXd lo90, hi90, lo95, hi95;
  double coverage90 = 0.0;  // share of observed entries inside the band
  double coverage95 = 0.0;
};

namespace detail {

inline double empirical_quantile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? (1 - f) * v[i] + f * v[i + 1] : v[i];
}

}  // namespace detail

inline PredictiveBands posterior_predictive(const SegmentLikelihood& lik, const PredictiveInput& in,
                                            PredictiveMode mode, int n_rep, std::uint64_t seed) {
  if (n_rep < 2) throw std::invalid_argument("n_rep must be at least 2");
  const auto& c = in.config;
  const int T = lik.T(), p = lik.p(), S = c.segments();
  if (c.T != T) throw std::invalid_argument("configuration horizon does not match the data");
  if (mode == PredictiveMode::kChangePoints && static_cast<int>(in.clouds.size()) != S)
    throw std::invalid_argument("one cloud per segment expected");
  if (mode == PredictiveMode::kGraphs && static_cast<int>(in.graphs.size()) != S)
    throw std::invalid_argument("one graph per segment expected");
  if (mode == PredictiveMode::kCovariances && static_cast<int>(in.covariances.size()) != S)
    throw std::invalid_argument("one covariance per segment expected");

  std::vector<std::vector<double>> sims(static_cast<std::size_t>(T * p), std::vector<double>(n_rep));
  for (int r = 0; r < n_rep; ++r) {
    auto rng = make_stream(seed, {tag(StreamTag::kPredictive), static_cast<std::uint64_t>(mode),
                                  static_cast<std::uint64_t>(r)});
    for (int j = 0; j < S; ++j) {
      Eigen::MatrixXd cov;
      if (mode == PredictiveMode::kCovariances) {
        cov = in.covariances[j];
      } else {
        const Graph& g = mode == PredictiveMode::kGraphs
                             ? in.graphs[j]
                             : in.clouds[j].graphs[sample_index(in.clouds[j].log_weights, rng)];
        const auto st = lik.statistics(c.first_row(j), c.last_row(j));
        cov = sample_gwishart(g, lik.prior().d + st.n, lik.prior().D + st.H, rng).inverse();
      }
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) throw NumericalError("predictive covariance is not positive definite");
      const Eigen::MatrixXd L = llt.matrixL();
      Eigen::VectorXd z(p);
      for (int t = c.first_row(j); t < c.last_row(j); ++t) {
        for (int i = 0; i < p; ++i) z(i) = rng.normal();
        const Eigen::VectorXd y = L * z;
        for (int i = 0; i < p; ++i) sims[static_cast<std::size_t>(t * p + i)][r] = y(i);
      }
    }
  }
  PredictiveBands out{Eigen::MatrixXd(T, p), Eigen::MatrixXd(T, p), Eigen::MatrixXd(T, p), Eigen::MatrixXd(T, p)};
  int in90 = 0, in95 = 0;
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < p; ++i) {
      auto& v = sims[static_cast<std::size_t>(t * p + i)];
      out.lo95(t, i) = detail::empirical_quantile(v, 0.025);
      out.lo90(t, i) = detail::empirical_quantile(v, 0.05);
      out.hi90(t, i) = detail::empirical_quantile(v, 0.95);
      out.hi95(t, i) = detail::empirical_quantile(v, 0.975);
      const double y = lik.data()(t, i);
      in90 += y >= out.lo90(t, i) && y <= out.hi90(t, i);
      in95 += y >= out.lo95(t, i) && y <= out.hi95(t, i);
    }
  out.coverage90 = static_cast<double>(in90) / (T * p);
  out.coverage95 = static_cast<double>(in95) / (T * p);
  return out;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// FPR/TPR of the rule score >= t over t = 0, 0.01, ..., 1.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& truth) {
  if (scores.size() != truth.size()) throw std::invalid_argument("scores and labels differ in length");
  const double pos = static_cast<double>(std::count(truth.begin(), truth.end(), true));
  const double neg = static_cast<double>(truth.size()) - pos;
  std::vector<RocPoint> out;
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    double tp = 0.0, fp = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k)
      if (scores[k] >= t - 1e-12) (truth[k] ? tp : fp) += 1.0;
    out.push_back({t, neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0});
  }
  return out;
}

/// Trapezoid area under the ROC points, anchored at (0,0) and (1,1).
inline double auc(const std::vector<RocPoint>& roc) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
  for (const auto& r : roc) pts.emplace_back(r.fpr, r.tpr);
  std::sort(pts.begin(), pts.end());
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    a += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  return a;
}

struct TruthEvaluation {
  std::vector<RocPoint> roc;
  double auc = 0.0;
  std::vector<std::pair<int, int>> matches;  // (estimated segment, true segment)
  bool segment_mismatch = false;
  int kappa_error = 0;
  double hausdorff = 0.0;  // between change-point sets, 0 when both are empty
};

/// Each estimated segment is paired with the true segment it overlaps most
/// (by order on ties); the pairs' upper-triangle entries are pooled.
inline TruthEvaluation evaluate_vs_truth(const EdgePPI& ppi, const ChangePointConfig& est,
                                         const std::vector<Graph>& truth_graphs, const ChangePointConfig& truth) {
  if (static_cast<int>(ppi.segments.size()) != est.segments())
    throw std::invalid_argument("one PPI matrix per estimated segment expected");
  if (static_cast<int>(truth_graphs.size()) != truth.segments())
    throw std::invalid_argument("one true graph per true segment expected");
  if (est.T != truth.T) throw std::invalid_argument("estimated and true horizons differ");
  TruthEvaluation out;
  out.segment_mismatch = est.segments() != truth.segments();
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int j = 0; j < est.segments(); ++j) {
    int best = 0, overlap = -1;
    for (int i = 0; i < truth.segments(); ++i) {
      const int o = std::min(est.stop(j), truth.stop(i)) - std::max(est.start(j), truth.start(i));
      if (o > overlap) {
        overlap = o;
        best = i;
      }
    }
    out.matches.emplace_back(j, best);
    const auto& m = ppi.segments[j];
    const Graph& g = truth_graphs[best];
    if (m.rows() != g.size()) throw std::invalid_argument("PPI and true graph differ in size");
    for (int h = 0; h < g.size(); ++h)
      for (int k = h + 1; k < g.size(); ++k) {
        scores.push_back(m(h, k));
        labels.push_back(g.has_edge(h, k));
      }
  }
  out.roc = roc_curve(scores, labels);
  out.auc = auc(out.roc);
  out.kappa_error = est.kappa() - truth.kappa();
  auto directed = [](const std::vector<int>& a, const std::vector<int>& b, int T) {
    double worst = 0.0;
    for (int x : a) {
      double nearest = T;
      for (int y : b) nearest = std::min(nearest, static_cast<double>(std::abs(x - y)));
      worst = std::max(worst, nearest);
    }
    return worst;
  };
  if (est.kappa() + truth.kappa() > 0)
    out.hausdorff = (est.kappa() == 0 || truth.kappa() == 0)
                        ? static_cast<double>(est.T)
                        : std::max(directed(est.points, truth.points, est.T), directed(truth.points, est.points, est.T));
  return out;
}

/// FPR and TPR at one threshold (read off the grid).
inline RocPoint roc_at(const std::vector<RocPoint>& roc, double threshold) {
  for (const auto& r : roc)
    if (std::abs(r.threshold - threshold) < 1e-9) return r;
  throw std::invalid_argument("threshold not on the 0.01 grid");
}

}  // namespace dggm
