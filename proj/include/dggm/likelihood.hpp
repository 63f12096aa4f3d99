#pragma once

// Memoized segment log-marginals for one data set.
//
// Caches: per (graph, segment) log-marginal and its cheap surrogate, per graph
// prime decomposition, and per (prime component, segment) log constant, exact
// or approximate. Monte Carlo
// constants are seeded from a digest of their key, so every cached number is a
// pure function of its key and the run seed. Eviction (clear when full) and
// thread scheduling therefore never change results.

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "dggm/graph.hpp"
#include "dggm/gwishart.hpp"
#include "dggm/random.hpp"

namespace dggm {

struct CacheKey {
  std::int32_t first = -1;  // -1: prior constant
  std::int32_t last = -1;
  std::vector<std::uint64_t> words;

  bool operator==(const CacheKey&) const = default;

  std::uint64_t digest() const noexcept {
    std::uint64_t h = detail::mix_tag(0x51ED27A5C0FFEEULL, static_cast<std::uint64_t>(first + 1));
    h = detail::mix_tag(h, static_cast<std::uint64_t>(last + 1));
    for (auto w : words) h = detail::mix_tag(h, w);
    return h;
  }
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& k) const noexcept { return static_cast<std::size_t>(k.digest()); }
};

struct CacheCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t mc_calls = 0;
};

template <class V>
class ConcurrentMemo {
 public:
  explicit ConcurrentMemo(std::size_t limit) : limit_(limit) {}

  template <class F>
  V get(const CacheKey& key, F&& compute) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = map_.find(key); it != map_.end()) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return it->second;
      }
    }
    misses_.fetch_add(1, std::memory_order_relaxed);
    V value = compute();
    std::unique_lock lock(mutex_);
    if (map_.size() >= limit_) map_.clear();
    map_.emplace(key, value);
    return value;
  }

  void clear() {
    std::unique_lock lock(mutex_);
    map_.clear();
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return map_.size();
  }

  std::uint64_t hits() const noexcept { return hits_.load(); }
  std::uint64_t misses() const noexcept { return misses_.load(); }

 private:
  std::size_t limit_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<CacheKey, V, CacheKeyHash> map_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0};
};

class SegmentLikelihood {
 public:
  /// `Y` is T x p, rows are time points. Segments are half-open row ranges.
  SegmentLikelihood(Eigen::MatrixXd Y, GWishartParams prior, int n_mc, std::uint64_t seed,
                    std::size_t cache_limit = 1u << 18)
      : Y_(std::move(Y)),
        prior_(std::move(prior)),
        n_mc_(n_mc),
        seed_(seed),
        marginals_(cache_limit),
        decompositions_(cache_limit / 4 + 1),
        constants_(cache_limit),
        surrogates_(cache_limit),
        approx_(cache_limit) {
    prior_.validate();
    if (prior_.dim() != Y_.cols()) throw ConfigError("prior dimension does not match the data");
    if (Y_.cols() > kMaxNodes) throw ConfigError("at most 64 variables are supported");
    if (n_mc_ < 1) throw ConfigError("n_mc must be positive");
    const auto T = Y_.rows(), p = Y_.cols();
    prefix_.assign(static_cast<std::size_t>(T + 1), Eigen::MatrixXd::Zero(p, p));
    for (Eigen::Index t = 0; t < T; ++t)
      prefix_[t + 1] = prefix_[t] + Y_.row(t).transpose() * Y_.row(t);
  }

  int T() const noexcept { return static_cast<int>(Y_.rows()); }
  int p() const noexcept { return static_cast<int>(Y_.cols()); }
  int n_mc() const noexcept { return n_mc_; }
  const Eigen::MatrixXd& data() const noexcept { return Y_; }
  const GWishartParams& prior() const noexcept { return prior_; }

  SegmentStatistics statistics(int first, int last) const {
    check_range(first, last);
    return {last - first, prefix_[last] - prefix_[first]};
  }

  /// Cached log P(Y[first:last) | g).
  double log_marginal(const Graph& g, int first, int last) {
    check_range(first, last);
    if (g.size() != p()) throw std::invalid_argument("graph size does not match the data");
    CacheKey key{first, last, graph_words(g)};
    return marginals_.get(key, [&] {
      const auto dec = decomposition(g, key.words);
      const int n = last - first;
      return -0.5 * n * p() * kLogTwoPi + log_constant(g, dec, first, last) - log_constant(g, dec, -1, -1);
    });
  }

  /// Cheap stand-in for log_marginal. Non-complete posterior constants use a
  /// Laplace approximation (sharp at segment-sized shapes); prior constants,
  /// where Laplace is poor, use a short Monte Carlo run.
  double surrogate_log_marginal(const Graph& g, int first, int last) {
    check_range(first, last);
    if (g.size() != p()) throw std::invalid_argument("graph size does not match the data");
    CacheKey key{first, last, graph_words(g)};
    return surrogates_.get(key, [&] {
      const auto dec = decomposition(g, key.words);
      const int n = last - first;
      double post = 0.0;
      for (std::size_t m = 0; m < dec.components.size(); ++m)
        post += dec.complete_flags[m] ? component_constant(g, dec.components[m], true, first, last)
                                      : approx_constant(g, dec.components[m], first, last);
      for (NodeSet sep : dec.separators)
        if (sep != 0) post -= component_constant(g, sep, true, first, last);
      double prior = 0.0;
      for (std::size_t m = 0; m < dec.components.size(); ++m)
        prior += dec.complete_flags[m] ? component_constant(g, dec.components[m], true, -1, -1)
                                       : approx_constant(g, dec.components[m], -1, -1);
      for (NodeSet sep : dec.separators)
        if (sep != 0) prior -= component_constant(g, sep, true, -1, -1);
      return -0.5 * n * p() * kLogTwoPi + post - prior;
    });
  }

  /// Cached log I_g(d, D).
  double log_prior_constant(const Graph& g) {
    const auto words = graph_words(g);
    return log_constant(g, decomposition(g, words), -1, -1);
  }

  /// Cached log I_g(d + n, D + H) for the segment.
  double log_posterior_constant(const Graph& g, int first, int last) {
    check_range(first, last);
    const auto words = graph_words(g);
    return log_constant(g, decomposition(g, words), first, last);
  }

  CacheCounters counters() const {
    return {marginals_.hits(), marginals_.misses(), mc_calls_.load()};
  }

  void clear_caches() {
    marginals_.clear();
    decompositions_.clear();
    constants_.clear();
    surrogates_.clear();
    approx_.clear();
  }

 private:
  void check_range(int first, int last) const {
    if (first < 0 || last > T() || last <= first) throw std::out_of_range("invalid segment bounds");
  }

  std::vector<std::uint64_t> graph_words(const Graph& g) const {
    const auto rows = g.rows();
    return {rows.begin(), rows.begin() + g.size()};
  }

  PrimeDecomposition decomposition(const Graph& g, const std::vector<std::uint64_t>& words) {
    return decompositions_.get(CacheKey{-1, -1, words}, [&] { return prime_decomposition(g); });
  }

  double log_constant(const Graph& g, const PrimeDecomposition& dec, int first, int last) {
    double out = 0.0;
    for (std::size_t m = 0; m < dec.components.size(); ++m)
      out += component_constant(g, dec.components[m], dec.complete_flags[m], first, last);
    for (NodeSet sep : dec.separators)
      if (sep != 0) out -= component_constant(g, sep, true, first, last);
    return out;
  }

  double component_constant(const Graph& g, NodeSet nodes, bool complete, int first, int last) {
    CacheKey key{first, last, {nodes}};
    if (!complete)
      for_each_node(nodes, [&](int v) { key.words.push_back(g.neighbours(v) & nodes); });
    return constants_.get(key, [&] {
      double d = prior_.d;
      Eigen::MatrixXd D = submatrix(prior_.D, nodes);
      if (first >= 0) {
        d += last - first;
        D += submatrix(prefix_[last] - prefix_[first], nodes);
      }
      if (complete) return log_norm_const_complete(d, D);
      mc_calls_.fetch_add(1, std::memory_order_relaxed);
      RandomStream rng(seed_, stream_id({tag(StreamTag::kNormConst), key.digest()}));
      return log_norm_const_mc(g.induced(nodes), d, D, n_mc_, rng).value;
    });
  }

  double approx_constant(const Graph& g, NodeSet nodes, int first, int last) {
    CacheKey key{first, last, {nodes}};
    for_each_node(nodes, [&](int v) { key.words.push_back(g.neighbours(v) & nodes); });
    return approx_.get(key, [&] {
      const Graph sub = g.induced(nodes);
      if (first < 0) {
        RandomStream rng(seed_, stream_id({tag(StreamTag::kNormConst), key.digest(), 1}));
        return log_norm_const_mc(sub, prior_.d, submatrix(prior_.D, nodes), kSurrogateDraws, rng).value;
      }
      const double b = prior_.d + (last - first);
      const Eigen::MatrixXd D = submatrix(prior_.D + prefix_[last] - prefix_[first], nodes);
      try {
        return log_norm_const_laplace_whole(sub, b, D);
      } catch (const NumericalError&) {
        return component_constant(g, nodes, false, first, last);
      }
    });
  }

  static constexpr int kSurrogateDraws = 16;

  Eigen::MatrixXd Y_;
  GWishartParams prior_;
  int n_mc_;
  std::uint64_t seed_;
  std::vector<Eigen::MatrixXd> prefix_;
  ConcurrentMemo<double> marginals_;
  ConcurrentMemo<PrimeDecomposition> decompositions_;
  ConcurrentMemo<double> constants_;
  ConcurrentMemo<double> surrogates_;
  ConcurrentMemo<double> approx_;
  std::atomic<std::uint64_t> mc_calls_{0};
};

}  // namespace dggm
