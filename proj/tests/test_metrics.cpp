#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "swbnet/metrics.hpp"

using namespace swbnet;

namespace {

Network from_adjacency(const oracle::Adjacency& a) {
  Network g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a[i][j]) g.add_edge(i, j);
  return g;
}

Network complete(std::size_t n) {
  Network g(n);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) g.add_edge(u, v);
  return g;
}

Network path3() {
  Network g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  return g;
}

Network star3() {
  Network g(4);
  for (NodeId v = 1; v < 4; ++v) g.add_edge(0, v);
  return g;
}

Network two_triangles() {
  Network g(6);
  for (NodeId base : {0u, 3u}) {
    g.add_edge(base, base + 1);
    g.add_edge(base + 1, base + 2);
    g.add_edge(base, base + 2);
  }
  return g;
}

double gini_of(const std::vector<double>& x) { return gini(std::span<const double>(x)); }

}  // namespace

TEST(Transitivity, Examples) {
  EXPECT_DOUBLE_EQ(transitivity(complete(3)), 1.0);
  EXPECT_DOUBLE_EQ(transitivity(path3()), 0.0);
  auto k4 = complete(4);
  k4.remove_edge(2, 3);
  // Two triangles over 3 + 3 + 1 + 1 = 8 connected triples.
  const oracle::Adjacency a{{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 0}, {1, 1, 0, 0}};
  EXPECT_DOUBLE_EQ(oracle::transitivity(a), 0.75);
  EXPECT_DOUBLE_EQ(transitivity(k4), 0.75);
  EXPECT_EQ(transitivity(Network(5)), 0.0);
}

TEST(Modularity, Examples) {
  const auto g = two_triangles();
  const std::vector<std::size_t> truth{0, 0, 0, 1, 1, 1};
  EXPECT_NEAR(modularity(g, make_partition(truth)), 0.5, 1e-15);
  EXPECT_NEAR(modularity(g, make_partition(std::vector<std::size_t>(6, 7))), 0.0, 1e-15);
  // Singleton partition: -sum (deg/2m)^2 = -6 * (2/12)^2.
  EXPECT_NEAR(modularity(g, singleton_partition(6)), -6.0 / 36.0, 1e-15);
  EXPECT_THROW(modularity(Network(3), singleton_partition(3)), UndefinedInput);
}

TEST(Louvain, TwoTrianglesSplit) {
  Rng rng(3);
  const auto p = louvain(two_triangles(), rng);
  EXPECT_EQ(p.count, 2u);
  EXPECT_EQ(p.community, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  const oracle::Adjacency a{{0, 1, 1, 0, 0, 0}, {1, 0, 1, 0, 0, 0}, {1, 1, 0, 0, 0, 0},
                            {0, 0, 0, 0, 1, 1}, {0, 0, 0, 1, 0, 1}, {0, 0, 0, 1, 1, 0}};
  EXPECT_NEAR(oracle::best_modularity(a), 0.5, 1e-12);
}

TEST(Louvain, CompleteGraphIsOneCommunity) {
  Rng rng(4);
  EXPECT_EQ(louvain(complete(5), rng).count, 1u);
}

TEST(Louvain, EmptyGraphIsSingletons) {
  Rng rng(5);
  const auto p = louvain(Network(4), rng);
  EXPECT_EQ(p.count, 4u);
  EXPECT_EQ(p, singleton_partition(4));
}

TEST(Louvain, RecoversShuffledDisjointCliques) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(3);
    std::vector<std::size_t> label;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t size = 3 + rng.index(4);
      label.insert(label.end(), size, c);
    }
    rng.shuffle(label.begin(), label.end());
    Network g(label.size());
    for (NodeId u = 0; u < g.size(); ++u)
      for (NodeId v = u + 1; v < g.size(); ++v)
        if (label[u] == label[v]) g.add_edge(u, v);
    const auto p = louvain(g, rng);
    ASSERT_EQ(p, make_partition(label)) << "trial " << trial;
    ASSERT_GE(modularity(g, p), modularity(g, singleton_partition(g.size())));
  }
}

TEST(Louvain, NeverWorseThanSingletonsAndNearOptimum) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    const auto a = oracle::random_adjacency(n, 0.2 + 0.6 * rng.uniform(), rng);
    const auto g = from_adjacency(a);
    if (g.edge_count() == 0) continue;
    const auto p = louvain(g, rng);
    const double q = modularity(g, p);
    ASSERT_GE(q, modularity(g, singleton_partition(n)) - 1e-12);
    ASSERT_NEAR(q, oracle::modularity(a, p.community), 1e-12);
    ASSERT_LE(q, oracle::best_modularity(a) + 1e-12);
  }
}

TEST(Louvain, SameSeedSamePartition) {
  Rng g_rng(8);
  const auto g = random_network(13, 0.3, g_rng);
  Rng a(99), b(99);
  EXPECT_EQ(louvain(g, a), louvain(g, b));
}

TEST(EigenvectorCentrality, Examples) {
  for (double x : eigenvector_centrality(complete(4))) EXPECT_NEAR(x, 1.0, 1e-12);

  const auto star = eigenvector_centrality(star3());
  EXPECT_NEAR(star[0], 1.0, 1e-9);
  for (int leaf = 1; leaf < 4; ++leaf) EXPECT_NEAR(star[leaf], 1.0 / std::sqrt(3.0), 1e-9);

  const auto path = eigenvector_centrality(path3());
  EXPECT_NEAR(path[0], 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(path[1], 1.0, 1e-9);
  EXPECT_NEAR(path[2], 1.0 / std::sqrt(2.0), 1e-9);

  for (double x : eigenvector_centrality(Network(4))) EXPECT_EQ(x, 0.0);
}

TEST(EigenvectorCentrality, IsolatedNodesScoreZeroAndMaxIsOne) {
  auto g = star3();
  Network h(6);
  for (const auto& e : g.edges()) h.add_edge(e.u, e.v);
  const auto c = eigenvector_centrality(h);
  EXPECT_EQ(c[4], 0.0);
  EXPECT_EQ(c[5], 0.0);
  EXPECT_DOUBLE_EQ(*std::max_element(c.begin(), c.end()), 1.0);
}

TEST(EigenvectorCentrality, PermutationEquivariant) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.index(10);
    const auto g = random_network(n, 0.4, rng);
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    rng.shuffle(perm.begin(), perm.end());
    Network h(n);
    for (const auto& e : g.edges()) h.add_edge(perm[e.u], perm[e.v]);
    const auto cg = eigenvector_centrality(g);
    const auto ch = eigenvector_centrality(h);
    for (NodeId u = 0; u < n; ++u) ASSERT_NEAR(cg[u], ch[perm[u]], 1e-9);
  }
}

TEST(Gini, Examples) {
  EXPECT_EQ(gini_of({5, 5, 5, 5}), 0.0);
  std::vector<double> w(10, 200.0);
  std::fill(w.begin(), w.begin() + 3, 1150.0);
  EXPECT_NEAR(gini_of(w), 0.411340206185567, 1e-12);
  for (std::size_t n : {10u, 100u, 1000u}) {
    std::vector<double> x(n, 0.0);
    x.back() = 1.0;
    EXPECT_NEAR(gini_of(x), static_cast<double>(n - 1) / static_cast<double>(n), 1e-12);
  }
}

TEST(Gini, Errors) {
  EXPECT_THROW(gini_of({}), UndefinedInput);
  EXPECT_THROW(gini_of({0, 0, 0}), UndefinedInput);
  EXPECT_THROW(gini_of({1, -1}), InvalidArgument);
}

TEST(CooperatorTriangles, Examples) {
  using enum Action;
  EXPECT_DOUBLE_EQ(cooperator_triangle_fraction(complete(4), std::vector<Action>(4, Cooperate)), 1.0);
  EXPECT_DOUBLE_EQ(cooperator_triangle_fraction(complete(6), std::vector<Action>(6, Defect)), 0.0);
  Network g(4);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(0, 2);
  EXPECT_DOUBLE_EQ(cooperator_triangle_fraction(g, std::vector<Action>{Cooperate, Cooperate, Cooperate, Defect}), 0.25);
  EXPECT_THROW(cooperator_triangle_fraction(Network(2), std::vector<Action>(2, Cooperate)), UndefinedInput);
}

TEST(CentralityByAction, Examples) {
  using enum Action;
  const std::vector<double> flat(5, 0.3);
  auto r = mean_centrality_by_action(flat, std::vector<Action>{Cooperate, Defect, Cooperate, Defect, Defect});
  EXPECT_DOUBLE_EQ(*r.cooperators, *r.defectors);

  const auto c = eigenvector_centrality(star3());
  r = mean_centrality_by_action(c, std::vector<Action>{Cooperate, Defect, Defect, Defect});
  EXPECT_NEAR(*r.cooperators, 1.0, 1e-9);
  EXPECT_NEAR(*r.defectors, 0.5774, 1e-4);

  r = mean_centrality_by_action(c, std::vector<Action>(4, Defect));
  EXPECT_FALSE(r.cooperators.has_value());
  EXPECT_NEAR(*r.defectors, std::accumulate(c.begin(), c.end(), 0.0) / 4, 1e-15);
}

TEST(OracleEquivalence, RandomSmallGraphs) {
  Rng rng(2718);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.index(6);
    const auto a = oracle::random_adjacency(n, rng.uniform(), rng);
    const auto g = from_adjacency(a);
    ASSERT_NEAR(transitivity(g), oracle::transitivity(a), 1e-9);

    std::vector<double> w(n);
    for (auto& x : w) x = std::floor(rng.uniform() * 2000);
    w[0] += 1;
    ASSERT_NEAR(gini_of(w), oracle::gini(w), 1e-9);

    std::vector<Action> act(n);
    std::vector<int> coop(n);
    for (std::size_t i = 0; i < n; ++i) {
      coop[i] = rng.bernoulli(0.6);
      act[i] = coop[i] ? Action::Cooperate : Action::Defect;
    }
    ASSERT_NEAR(cooperator_triangle_fraction(g, act), oracle::cooperator_triangles(a, coop), 1e-9);

    const auto c = eigenvector_centrality(g);
    const auto o = oracle::eigenvector_centrality(a);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(c[i], o[i], 1e-9) << "trial " << trial << " node " << i;
  }
}
