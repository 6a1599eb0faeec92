#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "swbnet/error.hpp"
#include "swbnet/game.hpp"
#include "swbnet/graph.hpp"
#include "swbnet/random.hpp"

namespace swbnet {

struct Partition {
  std::vector<std::size_t> community;  // dense ids 0..count-1
  std::size_t count = 0;

  friend bool operator==(const Partition&, const Partition&) = default;
};

// Relabels arbitrary ids densely in order of first appearance.
inline Partition make_partition(std::span<const std::size_t> labels) {
  Partition p;
  p.community.resize(labels.size());
  std::unordered_map<std::size_t, std::size_t> dense;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = dense.try_emplace(labels[i], dense.size());
    p.community[i] = it->second;
  }
  p.count = dense.size();
  return p;
}

inline Partition singleton_partition(std::size_t n) {
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  return make_partition(labels);
}

// Global clustering coefficient: 3 * triangles / connected triples.
// Zero when the graph has no connected triple.
inline double transitivity(const Network& g) {
  std::uint64_t closed = 0;  // each triangle counted once per center (3x)
  std::uint64_t triples = 0;
  for (NodeId c = 0; c < g.size(); ++c) {
    const auto nb = g.neighbors(c);
    const std::uint64_t d = nb.size();
    triples += d * (d - (d > 0 ? 1 : 0)) / 2;
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j)
        if (g.has_edge(nb[i], nb[j])) ++closed;
  }
  return triples == 0 ? 0.0 : static_cast<double>(closed) / static_cast<double>(triples);
}

// Newman modularity at resolution 1.
inline double modularity(const Network& g, const Partition& p) {
  const std::size_t m = g.edge_count();
  if (m == 0) throw UndefinedInput("modularity is undefined for a graph without edges");
  if (p.community.size() != g.size()) throw InvalidArgument("partition size does not match the network");
  std::vector<double> internal(p.count, 0.0), total_degree(p.count, 0.0);
  for (const auto& e : g.edges())
    if (p.community[e.u] == p.community[e.v]) internal[p.community[e.u]] += 1.0;
  for (NodeId u = 0; u < g.size(); ++u) total_degree[p.community[u]] += static_cast<double>(g.degree(u));
  const double md = static_cast<double>(m);
  double q = 0.0;
  for (std::size_t c = 0; c < p.count; ++c) {
    const double share = total_degree[c] / (2.0 * md);
    q += internal[c] / md - share * share;
  }
  return q;
}

namespace detail {

// Weighted graph used for the Louvain levels. `loop[i]` is the total weight
// of edges folded into node i; it contributes 2*loop[i] to i's degree.
struct LouvainGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> loop;

  std::size_t size() const { return adj.size(); }

  double degree(std::size_t i) const {
    double d = 2.0 * loop[i];
    for (const auto& [j, w] : adj[i]) d += w;
    return d;
  }
};

// One level of local moves. Returns the community of each node (not dense).
inline std::vector<std::size_t> louvain_local_moves(const LouvainGraph& g, double two_m, Rng& rng, bool& moved_any) {
  const std::size_t n = g.size();
  std::vector<std::size_t> comm(n);
  std::iota(comm.begin(), comm.end(), std::size_t{0});
  std::vector<double> k(n), tot(n);
  for (std::size_t i = 0; i < n; ++i) tot[i] = k[i] = g.degree(i);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  moved_any = false;

  bool improved = true;
  while (improved) {
    improved = false;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
      const std::size_t own = comm[i];
      touched.clear();
      for (const auto& [j, w] : g.adj[i]) {
        if (link[comm[j]] == 0.0) touched.push_back(comm[j]);
        link[comm[j]] += w;
      }
      tot[own] -= k[i];
      // Gain of inserting i into c, up to a positive factor.
      auto gain = [&](std::size_t c) { return link[c] - tot[c] * k[i] / two_m; };
      std::size_t best = own;
      double best_gain = gain(own);
      for (std::size_t c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + 1e-12) {
          best_gain = gc;
          best = c;
        }
      }
      tot[best] += k[i];
      comm[i] = best;
      if (best != own) improved = moved_any = true;
      for (std::size_t c : touched) link[c] = 0.0;
    }
  }
  return comm;
}

}  // namespace detail

// Louvain community detection (resolution 1). Node visit order is a fresh
// seeded shuffle each pass. Edgeless graphs come back as singletons.
inline Partition louvain(const Network& g, Rng& rng) {
  const std::size_t n = g.size();
  if (g.edge_count() == 0) return singleton_partition(n);

  detail::LouvainGraph level;
  level.adj.resize(n);
  level.loop.assign(n, 0.0);
  for (const auto& e : g.edges()) {
    level.adj[e.u].emplace_back(e.v, 1.0);
    level.adj[e.v].emplace_back(e.u, 1.0);
  }
  const double two_m = 2.0 * static_cast<double>(g.edge_count());

  std::vector<std::size_t> membership(n);  // original node -> current level node
  std::iota(membership.begin(), membership.end(), std::size_t{0});

  while (true) {
    bool moved = false;
    const auto comm = detail::louvain_local_moves(level, two_m, rng, moved);
    if (!moved) break;
    const Partition dense = make_partition(comm);
    for (auto& m : membership) m = dense.community[m];

    detail::LouvainGraph next;
    next.adj.resize(dense.count);
    next.loop.assign(dense.count, 0.0);
    std::vector<std::map<std::size_t, double>> weights(dense.count);
    for (std::size_t i = 0; i < level.size(); ++i) {
      const std::size_t ci = dense.community[i];
      next.loop[ci] += level.loop[i];
      for (const auto& [j, w] : level.adj[i]) {
        const std::size_t cj = dense.community[j];
        if (ci == cj) {
          if (i < j) next.loop[ci] += w;
        } else {
          weights[ci][cj] += w;
        }
      }
    }
    for (std::size_t c = 0; c < dense.count; ++c)
      for (const auto& [d, w] : weights[c]) next.adj[c].emplace_back(d, w);
    level = std::move(next);
  }
  return make_partition(membership);
}

// Eigenvector centrality, max-normalized. Power iteration runs on A + I,
// which shares A's eigenvectors but has a unique dominant eigenvalue even on
// bipartite graphs (plain A oscillates on stars and paths). Iteration stops
// once successive iterates differ by < tol in max norm and the geometric
// tail estimate diff * r / (1 - r) is also below tol, or after max_iter.
inline std::vector<double> eigenvector_centrality(const Network& g, double tol = 1e-10, int max_iter = 10000) {
  const std::size_t n = g.size();
  std::vector<double> x(n, 0.0);
  if (g.edge_count() == 0) return x;

  std::fill(x.begin(), x.end(), 1.0);
  std::vector<double> y(n);
  double prev_diff = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    double mx = 0.0;
    for (NodeId u = 0; u < n; ++u) {
      double s = x[u];
      for (NodeId v : g.neighbors(u)) s += x[v];
      y[u] = s;
      mx = std::max(mx, s);
    }
    double diff = 0.0;
    for (NodeId u = 0; u < n; ++u) {
      y[u] /= mx;
      diff = std::max(diff, std::abs(y[u] - x[u]));
    }
    x.swap(y);
    if (diff < tol) {
      const double r = prev_diff > 0.0 ? diff / prev_diff : 0.0;
      if (r < 1.0 && diff * r / (1.0 - r) < tol) break;
    }
    prev_diff = diff;
  }
  for (NodeId u = 0; u < n; ++u)
    if (g.degree(u) == 0) x[u] = 0.0;
  return x;
}

// G = sum_i sum_j |x_i - x_j| / (2 n^2 mu), via the sorted-rank identity.
inline double gini(std::span<const double> values) {
  if (values.empty()) throw UndefinedInput("gini of an empty sample");
  std::vector<double> x(values.begin(), values.end());
  for (double v : x)
    if (v < 0.0 || !std::isfinite(v)) throw InvalidArgument("gini requires finite non-negative values");
  std::sort(x.begin(), x.end());
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  if (total == 0.0) throw UndefinedInput("gini of an all-zero sample");
  const double n = static_cast<double>(x.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
  return weighted / (n * total);
}

inline double gini(std::span<const Points> values) {
  std::vector<double> x(values.size());
  std::transform(values.begin(), values.end(), x.begin(), [](Points p) { return static_cast<double>(p); });
  return gini(std::span<const double>(x));
}

// Closed all-cooperator triangles over all C(n,3) triads.
inline double cooperator_triangle_fraction(const Network& g, std::span<const Action> actions) {
  const std::size_t n = g.size();
  if (n < 3) throw UndefinedInput("cooperator triangle fraction needs at least 3 nodes");
  if (actions.size() != n) throw InvalidArgument("actions length does not match the network");
  std::uint64_t count = 0;
  for (NodeId a = 0; a < n; ++a) {
    if (actions[a] != Action::Cooperate) continue;
    for (NodeId b : g.neighbors(a)) {
      if (b <= a || actions[b] != Action::Cooperate) continue;
      for (NodeId c : g.neighbors(b))
        if (c > b && actions[c] == Action::Cooperate && g.has_edge(a, c)) ++count;
    }
  }
  const double triads = static_cast<double>(n) * static_cast<double>(n - 1) * static_cast<double>(n - 2) / 6.0;
  return static_cast<double>(count) / triads;
}

struct CentralityByAction {
  std::optional<double> cooperators;
  std::optional<double> defectors;
};

inline CentralityByAction mean_centrality_by_action(std::span<const double> centrality, std::span<const Action> actions) {
  if (centrality.size() != actions.size()) throw InvalidArgument("centrality and actions lengths differ");
  double sum[2] = {0.0, 0.0};
  std::size_t cnt[2] = {0, 0};
  for (std::size_t i = 0; i < actions.size(); ++i) {
    sum[static_cast<int>(actions[i])] += centrality[i];
    ++cnt[static_cast<int>(actions[i])];
  }
  CentralityByAction out;
  if (cnt[0]) out.cooperators = sum[0] / static_cast<double>(cnt[0]);
  if (cnt[1]) out.defectors = sum[1] / static_cast<double>(cnt[1]);
  return out;
}

}  // namespace swbnet
