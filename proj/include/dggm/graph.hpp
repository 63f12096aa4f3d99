#pragma once

// Undirected simple graphs on at most 64 labelled nodes, their clique-minimal
// separator decomposition, and descriptive statistics.
//
// Nodes are 0-based in the API; the text format is 1-based.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dggm/error.hpp"

namespace dggm {

inline constexpr int kMaxNodes = 64;

/// Bitmask of nodes; bit v set means node v is a member.
using NodeSet = std::uint64_t;

inline constexpr NodeSet node_bit(int v) noexcept { return NodeSet{1} << v; }

inline constexpr NodeSet all_nodes(int p) noexcept {
  return p >= 64 ? ~NodeSet{0} : (NodeSet{1} << p) - 1;
}

inline int node_count(NodeSet s) noexcept { return std::popcount(s); }

template <typename Fn>
inline void for_each_node(NodeSet s, Fn&& fn) {
  while (s != 0) {
    const int v = std::countr_zero(s);
    s &= s - 1;
    fn(v);
  }
}

inline std::vector<int> node_list(NodeSet s) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(node_count(s)));
  for_each_node(s, [&](int v) { out.push_back(v); });
  return out;
}

class Graph {
 public:
  Graph() = default;

  explicit Graph(int p) : p_(p) {
    if (p < 1 || p > kMaxNodes)
      throw std::out_of_range("graph size must be in [1, " + std::to_string(kMaxNodes) + "]");
  }

  static Graph complete(int p) {
    Graph g(p);
    for (int v = 0; v < p; ++v) g.rows_[v] = all_nodes(p) & ~node_bit(v);
    return g;
  }

  static Graph from_edges(int p, std::span<const std::pair<int, int>> edges) {
    Graph g(p);
    for (auto [h, k] : edges) g.add_edge(h, k);
    return g;
  }

  int size() const noexcept { return p_; }

  /// Number of unordered node pairs, p(p-1)/2.
  int pair_count() const noexcept { return p_ * (p_ - 1) / 2; }

  bool has_edge(int h, int k) const {
    check_pair(h, k);
    return (rows_[h] >> k) & 1U;
  }

  void add_edge(int h, int k) { set_edge(h, k, true); }
  void remove_edge(int h, int k) { set_edge(h, k, false); }

  void set_edge(int h, int k, bool present) {
    check_pair(h, k);
    if (present) {
      rows_[h] |= node_bit(k);
      rows_[k] |= node_bit(h);
    } else {
      rows_[h] &= ~node_bit(k);
      rows_[k] &= ~node_bit(h);
    }
  }

  void toggle_edge(int h, int k) {
    check_pair(h, k);
    rows_[h] ^= node_bit(k);
    rows_[k] ^= node_bit(h);
  }

  NodeSet neighbours(int v) const noexcept { return rows_[v]; }
  int degree(int v) const noexcept { return node_count(rows_[v]); }

  int edge_count() const noexcept {
    int twice = 0;
    for (int v = 0; v < p_; ++v) twice += node_count(rows_[v]);
    return twice / 2;
  }

  /// Edges as (h,k) pairs with h < k, in lexicographic order.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int h = 0; h < p_; ++h)
      for_each_node(rows_[h] & ~all_nodes(h + 1), [&](int k) { out.emplace_back(h, k); });
    return out;
  }

  bool is_clique(NodeSet nodes) const noexcept {
    bool ok = true;
    for_each_node(nodes, [&](int v) {
      if ((nodes & ~node_bit(v) & ~rows_[v]) != 0) ok = false;
    });
    return ok;
  }

  bool is_complete() const noexcept { return is_clique(all_nodes(p_)); }

  /// Subgraph induced on `nodes`, relabelled 0..m-1 in increasing node order.
  Graph induced(NodeSet nodes) const {
    const auto list = node_list(nodes);
    Graph g(static_cast<int>(list.size()));
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b)
        if ((rows_[list[a]] >> list[b]) & 1U) g.add_edge(static_cast<int>(a), static_cast<int>(b));
    return g;
  }

  std::span<const std::uint64_t> rows() const noexcept {
    return {rows_.data(), static_cast<std::size_t>(p_)};
  }

  std::size_t hash() const noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ static_cast<std::uint64_t>(p_);
    for (int v = 0; v < p_; ++v) {
      h ^= rows_[v] + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
      h *= 0x100000001B3ULL;
    }
    return static_cast<std::size_t>(h);
  }

  friend bool operator==(const Graph& a, const Graph& b) noexcept {
    if (a.p_ != b.p_) return false;
    for (int v = 0; v < a.p_; ++v)
      if (a.rows_[v] != b.rows_[v]) return false;
    return true;
  }

 private:
  void check_pair(int h, int k) const {
    if (h < 0 || k < 0 || h >= p_ || k >= p_)
      throw std::out_of_range("node index out of range");
    if (h == k) throw std::invalid_argument("self-loops are not allowed");
  }

  int p_ = 0;
  std::array<std::uint64_t, kMaxNodes> rows_{};
};

struct GraphHash {
  std::size_t operator()(const Graph& g) const noexcept { return g.hash(); }
};

/// Copy of `g` with edge (h,k) toggled.
inline Graph flip_edge(const Graph& g, int h, int k) {
  Graph out = g;
  out.toggle_edge(h, k);
  return out;
}

/// Connected components as node sets, ordered by smallest member.
inline std::vector<NodeSet> connected_components(const Graph& g, NodeSet within) {
  std::vector<NodeSet> comps;
  NodeSet left = within;
  while (left != 0) {
    NodeSet comp = node_bit(std::countr_zero(left));
    NodeSet frontier = comp;
    while (frontier != 0) {
      NodeSet next = 0;
      for_each_node(frontier, [&](int v) { next |= g.neighbours(v); });
      next &= within & ~comp;
      comp |= next;
      frontier = next;
    }
    comps.push_back(comp);
    left &= ~comp;
  }
  return comps;
}

inline std::vector<NodeSet> connected_components(const Graph& g) {
  return connected_components(g, all_nodes(g.size()));
}

/// Chordality via maximum cardinality search: the reverse visit order must be
/// a perfect elimination ordering.
inline bool is_decomposable(const Graph& g) {
  const int p = g.size();
  std::array<int, kMaxNodes> label{};
  NodeSet visited = 0;
  for (int step = 0; step < p; ++step) {
    int best = -1;
    for (int v = 0; v < p; ++v)
      if (!((visited >> v) & 1U) && (best < 0 || label[v] > label[best])) best = v;
    const NodeSet earlier = g.neighbours(best) & visited;
    if (!g.is_clique(earlier)) return false;
    visited |= node_bit(best);
    for_each_node(g.neighbours(best) & ~visited, [&](int u) { ++label[u]; });
  }
  return true;
}

/// Prime components P_1..P_r in perfect-sequence order together with the
/// separators L_m = P_m ∩ (P_1 ∪ ... ∪ P_{m-1}) for m >= 2. Separators between
/// connected components are empty.
struct PrimeDecomposition {
  std::vector<NodeSet> components;
  /// separators[m-1] belongs to components[m]; size() == components.size() - 1.
  std::vector<NodeSet> separators;
  std::vector<bool> complete_flags;
};

namespace detail {

// Atoms of one connected node set via MCS-M minimal triangulation followed by
// the clique-minimal-separator sweep (Berry, Pogorelcnik & Simonet 2010).
// Returned in peel order: each atom meets the later ones in its separator.
inline std::vector<std::pair<NodeSet, NodeSet>> atoms_of_connected(const Graph& g, NodeSet comp) {
  const int n = node_count(comp);
  std::array<int, kMaxNodes> label{};
  std::array<NodeSet, kMaxNodes> madj{};
  std::vector<int> order;  // visit order: order[0] gets the highest number
  order.reserve(static_cast<std::size_t>(n));
  NodeSet generators = 0;
  NodeSet unnumbered = comp;
  int prev_label = -1;

  for (int step = 0; step < n; ++step) {
    int v = -1;
    for_each_node(unnumbered, [&](int u) {
      if (v < 0 || label[u] > label[v]) v = u;
    });
    if (label[v] <= prev_label) generators |= node_bit(v);
    prev_label = label[v];
    unnumbered &= ~node_bit(v);
    order.push_back(v);

    // Bottleneck search: u is reached when some path from v through
    // unnumbered vertices has every internal label below label[u].
    std::array<int, kMaxNodes> cost;
    cost.fill(std::numeric_limits<int>::max());
    NodeSet settled = 0;
    for_each_node(g.neighbours(v) & unnumbered, [&](int u) { cost[u] = -1; });
    for (;;) {
      int x = -1;
      for_each_node(unnumbered & ~settled, [&](int u) {
        if (cost[u] != std::numeric_limits<int>::max() && (x < 0 || cost[u] < cost[x])) x = u;
      });
      if (x < 0) break;
      settled |= node_bit(x);
      const int through = std::max(cost[x], label[x]);
      for_each_node(g.neighbours(x) & unnumbered & ~settled, [&](int y) {
        if (through < cost[y]) cost[y] = through;
      });
    }
    NodeSet reached = 0;
    for_each_node(unnumbered, [&](int u) {
      if (cost[u] < label[u]) reached |= node_bit(u);
    });
    for_each_node(reached, [&](int u) {
      ++label[u];
      madj[u] |= node_bit(v);
    });
  }

  std::vector<std::pair<NodeSet, NodeSet>> atoms;
  NodeSet remaining = comp;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int x = *it;
    if (!((generators >> x) & 1U) || !((remaining >> x) & 1U)) continue;
    const NodeSet sep = madj[x];
    if (sep == 0 || (sep & ~remaining) != 0 || !g.is_clique(sep)) continue;
    NodeSet piece = 0;
    for (NodeSet c : connected_components(g, remaining & ~sep))
      if ((c >> x) & 1U) piece = c;
    if ((piece | sep) == remaining) continue;
    atoms.emplace_back(piece | sep, sep);
    remaining &= ~piece;
  }
  atoms.emplace_back(remaining, NodeSet{0});
  return atoms;
}

}  // namespace detail

inline PrimeDecomposition prime_decomposition(const Graph& g) {
  PrimeDecomposition out;
  bool first_block = true;
  for (NodeSet comp : connected_components(g)) {
    auto atoms = detail::atoms_of_connected(g, comp);
    // Reverse peel order is a perfect sequence; the first atom of each
    // connected block joins the sequence through an empty separator.
    for (std::size_t i = atoms.size(); i-- > 0;) {
      const bool block_start = (i + 1 == atoms.size());
      if (!first_block || !block_start)
        out.separators.push_back(block_start ? NodeSet{0} : atoms[i].second);
      out.components.push_back(atoms[i].first);
      out.complete_flags.push_back(g.is_clique(atoms[i].first));
    }
    first_block = false;
  }
  return out;
}

struct GraphMetrics {
  std::vector<int> degree;
  std::vector<double> betweenness;
  std::vector<double> local_clustering;
  double global_clustering = 0.0;
};

/// Degree, betweenness over unordered pairs (Brandes), local clustering (0 for
/// degree < 2) and global clustering as the mean local coefficient.
inline GraphMetrics graph_metrics(const Graph& g) {
  const int p = g.size();
  GraphMetrics m;
  m.degree.resize(p);
  m.betweenness.assign(p, 0.0);
  m.local_clustering.assign(p, 0.0);

  for (int v = 0; v < p; ++v) {
    m.degree[v] = g.degree(v);
    const int k = m.degree[v];
    if (k >= 2) {
      int links = 0;
      for_each_node(g.neighbours(v), [&](int a) { links += node_count(g.neighbours(a) & g.neighbours(v)); });
      m.local_clustering[v] = static_cast<double>(links) / static_cast<double>(k * (k - 1));
    }
  }
  double sum = 0.0;
  for (double c : m.local_clustering) sum += c;
  m.global_clustering = sum / p;

  std::vector<int> stack, dist(p);
  std::vector<double> sigma(p), delta(p);
  std::vector<std::vector<int>> preds(p);
  for (int s = 0; s < p; ++s) {
    stack.clear();
    for (int v = 0; v < p; ++v) preds[v].clear();
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    dist[s] = 0;
    sigma[s] = 1.0;
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      stack.push_back(v);
      for_each_node(g.neighbours(v), [&](int w) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      });
    }
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      const int w = *it;
      for (int v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) m.betweenness[w] += delta[w];
    }
  }
  for (double& b : m.betweenness) b /= 2.0;
  return m;
}

/// Reads the edge-list format: first line `p`, then one 1-based `h k` per line.
inline Graph read_edge_list(std::istream& in) {
  std::string line;
  int p = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!(ls >> p) || p < 1 || p > kMaxNodes)
      throw DataError("edge list line " + std::to_string(line_no) + ": invalid node count");
    break;
  }
  if (p == 0) throw DataError("edge list: missing node count");
  Graph g(p);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int h = 0, k = 0;
    if (!(ls >> h >> k) || h < 1 || k < 1 || h > p || k > p || h == k)
      throw DataError("edge list line " + std::to_string(line_no) + ": invalid edge");
    g.add_edge(h - 1, k - 1);
  }
  return g;
}

inline void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.size() << '\n';
  for (auto [h, k] : g.edges()) out << (h + 1) << ' ' << (k + 1) << '\n';
}

}  // namespace dggm
