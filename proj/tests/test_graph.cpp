#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "dggm/graph.hpp"
#include "dggm/random.hpp"

using namespace dggm;

namespace {

Graph graph_from(int p, std::initializer_list<std::pair<int, int>> one_based) {
  Graph g(p);
  for (auto [h, k] : one_based) g.add_edge(h - 1, k - 1);
  return g;
}

NodeSet set_of(std::initializer_list<int> one_based) {
  NodeSet s = 0;
  for (int v : one_based) s |= node_bit(v - 1);
  return s;
}

Graph random_graph(int p, double density, RandomStream& rng) {
  Graph g(p);
  for (int h = 0; h < p; ++h)
    for (int k = h + 1; k < p; ++k)
      if (rng.bernoulli(density)) g.add_edge(h, k);
  return g;
}

// A graph is chordal iff no induced subgraph on >= 4 nodes is a chordless cycle.
bool brute_force_chordal(const Graph& g) {
  const int p = g.size();
  for (NodeSet s = 1; s < (NodeSet{1} << p); ++s) {
    if (node_count(s) < 4) continue;
    bool all_degree_two = true;
    for_each_node(s, [&](int v) {
      if (node_count(g.neighbours(v) & s) != 2) all_degree_two = false;
    });
    if (all_degree_two && connected_components(g, s).size() == 1) return false;
  }
  return true;
}

// True when some proper clique subset of `nodes` disconnects the induced graph.
bool has_clique_separator(const Graph& g, NodeSet nodes) {
  if (connected_components(g, nodes).size() > 1) return true;
  const auto list = node_list(nodes);
  const std::size_t m = list.size();
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << m); ++mask) {
    NodeSet s = 0;
    for (std::size_t i = 0; i < m; ++i)
      if ((mask >> i) & 1U) s |= node_bit(list[i]);
    if (!g.is_clique(s)) continue;
    if (connected_components(g, nodes & ~s).size() > 1) return true;
  }
  return false;
}

}  // namespace

TEST(Graph, FlipEdgeExamples) {
  Graph empty(3);
  Graph one = flip_edge(empty, 0, 1);
  EXPECT_EQ(one.edges(), (std::vector<std::pair<int, int>>{{0, 1}}));

  Graph k3 = Graph::complete(3);
  Graph path = flip_edge(k3, 1, 2);
  EXPECT_EQ(path.edges(), (std::vector<std::pair<int, int>>{{0, 1}, {0, 2}}));
}

TEST(Graph, FlipIsAnInvolution) {
  auto rng = make_stream(7, {1});
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + static_cast<int>(rng.index(10));
    Graph g = random_graph(p, 0.4, rng);
    const int h = static_cast<int>(rng.index(p));
    int k = static_cast<int>(rng.index(p - 1));
    if (k >= h) ++k;
    EXPECT_EQ(flip_edge(flip_edge(g, h, k), h, k), g);
    EXPECT_NE(flip_edge(g, h, k), g);
  }
}

TEST(Graph, RejectsBadIndices) {
  Graph g(3);
  EXPECT_THROW(flip_edge(g, 0, 3), std::out_of_range);
  EXPECT_THROW(flip_edge(g, -1, 1), std::out_of_range);
  EXPECT_THROW(flip_edge(g, 1, 1), std::invalid_argument);
  EXPECT_THROW(Graph(0), std::out_of_range);
  EXPECT_THROW(Graph(65), std::out_of_range);
}

TEST(Graph, AdjacencyInvariants) {
  auto rng = make_stream(3, {2});
  Graph g = random_graph(12, 0.5, rng);
  int twice = 0;
  for (int v = 0; v < g.size(); ++v) {
    EXPECT_EQ(g.neighbours(v) & node_bit(v), 0U);
    for (int u = 0; u < g.size(); ++u)
      if (u != v) EXPECT_EQ(g.has_edge(u, v), g.has_edge(v, u));
    twice += g.degree(v);
  }
  EXPECT_EQ(twice, 2 * g.edge_count());
  EXPECT_LE(g.edge_count(), g.pair_count());
}

TEST(Decomposable, Examples) {
  EXPECT_FALSE(is_decomposable(graph_from(4, {{1, 2}, {2, 3}, {3, 4}, {1, 4}})));
  EXPECT_TRUE(is_decomposable(graph_from(5, {{1, 2}, {2, 3}, {3, 4}, {4, 5}})));
  for (int p = 1; p <= 9; ++p) EXPECT_TRUE(is_decomposable(Graph::complete(p)));
}

TEST(Decomposable, AgreesWithBruteForceForAllSmallGraphs) {
  for (int p = 1; p <= 6; ++p) {
    Graph base(p);
    const auto pairs = Graph::complete(p).edges();
    const std::uint64_t total = std::uint64_t{1} << pairs.size();
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      Graph g(p);
      for (std::size_t e = 0; e < pairs.size(); ++e)
        if ((mask >> e) & 1U) g.add_edge(pairs[e].first, pairs[e].second);
      ASSERT_EQ(is_decomposable(g), brute_force_chordal(g)) << "p=" << p << " mask=" << mask;
    }
  }
}

TEST(PrimeDecomposition, PathOfThree) {
  auto d = prime_decomposition(graph_from(3, {{1, 2}, {2, 3}}));
  ASSERT_EQ(d.components.size(), 2U);
  ASSERT_EQ(d.separators.size(), 1U);
  std::set<NodeSet> comps(d.components.begin(), d.components.end());
  EXPECT_EQ(comps, (std::set<NodeSet>{set_of({1, 2}), set_of({2, 3})}));
  EXPECT_EQ(d.separators[0], set_of({2}));
  EXPECT_TRUE(d.complete_flags[0] && d.complete_flags[1]);
}

TEST(PrimeDecomposition, FourCycleIsPrime) {
  auto d = prime_decomposition(graph_from(4, {{1, 2}, {2, 3}, {3, 4}, {1, 4}}));
  ASSERT_EQ(d.components.size(), 1U);
  EXPECT_EQ(d.components[0], set_of({1, 2, 3, 4}));
  EXPECT_TRUE(d.separators.empty());
  EXPECT_FALSE(d.complete_flags[0]);
}

TEST(PrimeDecomposition, FourCycleWithPendant) {
  auto d = prime_decomposition(graph_from(5, {{1, 2}, {2, 3}, {3, 4}, {1, 4}, {1, 5}}));
  ASSERT_EQ(d.components.size(), 2U);
  std::set<NodeSet> comps(d.components.begin(), d.components.end());
  EXPECT_EQ(comps, (std::set<NodeSet>{set_of({1, 2, 3, 4}), set_of({1, 5})}));
  EXPECT_EQ(d.separators, (std::vector<NodeSet>{set_of({1})}));
}

TEST(PrimeDecomposition, DisconnectedGraphUsesEmptySeparators) {
  auto d = prime_decomposition(graph_from(5, {{1, 2}, {4, 5}}));
  ASSERT_EQ(d.components.size(), 3U);
  EXPECT_EQ(d.separators, (std::vector<NodeSet>{0, 0}));
  auto empty = prime_decomposition(Graph(3));
  EXPECT_EQ(empty.components.size(), 3U);
}

// Reconstruction, perfect-sequence, primality and maximality on random graphs.
TEST(PrimeDecomposition, PropertiesOnRandomGraphs) {
  auto rng = make_stream(11, {3});
  for (int trial = 0; trial < 1000; ++trial) {
    const int p = 1 + static_cast<int>(rng.index(8));
    const double density = 0.15 + 0.7 * rng.uniform();
    Graph g = random_graph(p, density, rng);
    auto d = prime_decomposition(g);
    ASSERT_EQ(d.separators.size() + 1, d.components.size());

    NodeSet seen = 0;
    Graph rebuilt(p);
    for (std::size_t m = 0; m < d.components.size(); ++m) {
      const NodeSet comp = d.components[m];
      if (m > 0) {
        EXPECT_EQ(d.separators[m - 1], comp & seen) << "running intersection, trial " << trial;
        EXPECT_TRUE(g.is_clique(d.separators[m - 1]));
      }
      seen |= comp;
      EXPECT_EQ(d.complete_flags[m], g.is_clique(comp));
      EXPECT_FALSE(has_clique_separator(g, comp)) << "component not prime, trial " << trial;
      for (auto [h, k] : g.induced(comp).edges()) {
        const auto list = node_list(comp);
        rebuilt.add_edge(list[h], list[k]);
      }
      for (std::size_t o = 0; o < d.components.size(); ++o)
        if (o != m) EXPECT_NE(comp & d.components[o], comp) << "component not maximal";
    }
    EXPECT_EQ(seen, all_nodes(p));
    EXPECT_EQ(rebuilt, g) << "reconstruction failed, trial " << trial;
    if (is_decomposable(g))
      for (bool c : d.complete_flags) EXPECT_TRUE(c);
  }
}

TEST(GraphMetrics, Examples) {
  auto path = graph_metrics(graph_from(3, {{1, 2}, {2, 3}}));
  EXPECT_EQ(path.degree, (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(path.betweenness, (std::vector<double>{0, 1, 0}));

  auto tri = graph_metrics(Graph::complete(3));
  EXPECT_EQ(tri.local_clustering, (std::vector<double>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(tri.global_clustering, 1.0);

  auto star = graph_metrics(graph_from(4, {{1, 2}, {1, 3}, {1, 4}}));
  EXPECT_EQ(star.degree, (std::vector<int>{3, 1, 1, 1}));
  EXPECT_EQ(star.betweenness, (std::vector<double>{3, 0, 0, 0}));
  EXPECT_EQ(star.local_clustering, (std::vector<double>{0, 0, 0, 0}));
}

namespace {

// Enumerates every simple path between h and k and keeps the shortest ones.
void all_paths(const Graph& g, int at, int target, NodeSet used, std::vector<int>& path,
               std::vector<std::vector<int>>& out) {
  if (at == target) {
    out.push_back(path);
    return;
  }
  for_each_node(g.neighbours(at) & ~used, [&](int w) {
    path.push_back(w);
    all_paths(g, w, target, used | node_bit(w), path, out);
    path.pop_back();
  });
}

}  // namespace

TEST(GraphMetrics, AgreesWithExhaustivePathEnumeration) {
  auto rng = make_stream(5, {4});
  for (int trial = 0; trial < 150; ++trial) {
    const int p = 2 + static_cast<int>(rng.index(6));
    Graph g = random_graph(p, 0.2 + 0.6 * rng.uniform(), rng);
    std::vector<double> between(p, 0.0);
    for (int h = 0; h < p; ++h)
      for (int k = h + 1; k < p; ++k) {
        std::vector<std::vector<int>> paths;
        std::vector<int> path{h};
        all_paths(g, h, k, node_bit(h), path, paths);
        if (paths.empty()) continue;
        std::size_t shortest = paths.front().size();
        for (auto& q : paths) shortest = std::min(shortest, q.size());
        double total = 0;
        std::vector<double> through(p, 0.0);
        for (auto& q : paths) {
          if (q.size() != shortest) continue;
          total += 1;
          for (std::size_t i = 1; i + 1 < q.size(); ++i) through[q[i]] += 1;
        }
        for (int v = 0; v < p; ++v) between[v] += through[v] / total;
      }
    auto m = graph_metrics(g);
    for (int v = 0; v < p; ++v) {
      EXPECT_NEAR(m.betweenness[v], between[v], 1e-12);
      const int deg = g.degree(v);
      double expect = 0;
      if (deg >= 2) {
        int tri = 0;
        const auto nb = node_list(g.neighbours(v));
        for (std::size_t a = 0; a < nb.size(); ++a)
          for (std::size_t b = a + 1; b < nb.size(); ++b) tri += g.has_edge(nb[a], nb[b]);
        expect = 2.0 * tri / (deg * (deg - 1));
      }
      EXPECT_NEAR(m.local_clustering[v], expect, 1e-12);
      EXPECT_GE(m.local_clustering[v], 0.0);
      EXPECT_LE(m.local_clustering[v], 1.0);
    }
  }
}

TEST(EdgeList, RoundTripAndErrors) {
  Graph g = graph_from(5, {{1, 2}, {2, 5}, {3, 4}});
  std::stringstream ss;
  write_edge_list(ss, g);
  EXPECT_EQ(ss.str(), "5\n1 2\n2 5\n3 4\n");
  EXPECT_EQ(read_edge_list(ss), g);

  std::stringstream bad("3\n1 4\n");
  EXPECT_THROW(read_edge_list(bad), DataError);
  std::stringstream loop("3\n2 2\n");
  EXPECT_THROW(read_edge_list(loop), DataError);
}
