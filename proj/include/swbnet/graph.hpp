#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swbnet/error.hpp"
#include "swbnet/random.hpp"

namespace swbnet {

using NodeId = std::size_t;

// Unordered pair stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(std::min(a, b)), v(std::max(a, b)) {}

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Undirected simple graph over dense participant indices 0..n-1.
//
// A byte adjacency matrix answers edge queries in O(1); sorted neighbor
// lists make neighbors(u) O(degree). n stays small (a networked group), so
// the n^2 matrix is cheap.
class Network {
 public:
  Network() = default;

  explicit Network(std::size_t n) : n_(n), adjacency_(n * n, 0), neighbors_(n) {}

  std::size_t size() const { return n_; }
  std::size_t edge_count() const { return edge_count_; }

  bool has_edge(NodeId u, NodeId v) const {
    check_pair(u, v);
    return adjacency_[u * n_ + v] != 0;
  }

  // Idempotent: re-adding an existing edge is a no-op.
  void add_edge(NodeId u, NodeId v) {
    check_pair(u, v);
    if (adjacency_[u * n_ + v]) return;
    adjacency_[u * n_ + v] = adjacency_[v * n_ + u] = 1;
    insert_sorted(neighbors_[u], v);
    insert_sorted(neighbors_[v], u);
    ++edge_count_;
  }

  // Idempotent: removing a missing edge is a no-op.
  void remove_edge(NodeId u, NodeId v) {
    check_pair(u, v);
    if (!adjacency_[u * n_ + v]) return;
    adjacency_[u * n_ + v] = adjacency_[v * n_ + u] = 0;
    erase_sorted(neighbors_[u], v);
    erase_sorted(neighbors_[v], u);
    --edge_count_;
  }

  std::span<const NodeId> neighbors(NodeId u) const {
    check_node(u);
    return neighbors_[u];
  }

  std::size_t degree(NodeId u) const {
    check_node(u);
    return neighbors_[u].size();
  }

  // All edges in lexicographic (u, v) order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (NodeId u = 0; u < n_; ++u)
      for (NodeId v : neighbors_[u])
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  static Network from_edges(std::size_t n, std::span<const Edge> edges) {
    Network g(n);
    for (const auto& e : edges) g.add_edge(e.u, e.v);
    return g;
  }

  friend bool operator==(const Network& a, const Network& b) {
    return a.n_ == b.n_ && a.adjacency_ == b.adjacency_;
  }

 private:
  void check_node(NodeId u) const {
    if (u >= n_)
      throw InvalidArgument("node index " + std::to_string(u) + " out of range for network of size " +
                            std::to_string(n_));
  }

  void check_pair(NodeId u, NodeId v) const {
    check_node(u);
    check_node(v);
    if (u == v) throw InvalidArgument("self-loop on node " + std::to_string(u) + " is not allowed");
  }

  static void insert_sorted(std::vector<NodeId>& list, NodeId x) {
    list.insert(std::lower_bound(list.begin(), list.end(), x), x);
  }

  static void erase_sorted(std::vector<NodeId>& list, NodeId x) {
    auto it = std::lower_bound(list.begin(), list.end(), x);
    if (it != list.end() && *it == x) list.erase(it);
  }

  std::size_t n_ = 0;
  std::size_t edge_count_ = 0;
  std::vector<std::uint8_t> adjacency_;
  std::vector<std::vector<NodeId>> neighbors_;
};

// Immutable copy of a round's edge set. Copies share the underlying storage.
class EdgeSnapshot {
 public:
  EdgeSnapshot() : edges_(std::make_shared<const std::vector<Edge>>()) {}

  EdgeSnapshot(int round, std::vector<Edge> edges)
      : round_(round), edges_(std::make_shared<const std::vector<Edge>>(std::move(edges))) {}

  EdgeSnapshot(int round, const Network& g) : EdgeSnapshot(round, g.edges()) {}

  int round() const { return round_; }
  std::span<const Edge> edges() const { return *edges_; }

  Network to_network(std::size_t n) const { return Network::from_edges(n, edges()); }

  friend bool operator==(const EdgeSnapshot& a, const EdgeSnapshot& b) {
    return a.round_ == b.round_ && *a.edges_ == *b.edges_;
  }

 private:
  int round_ = 0;
  std::shared_ptr<const std::vector<Edge>> edges_;
};

// Erdos-Renyi G(n, p): every unordered pair is an edge independently with
// probability `density`. Pairs are visited in lexicographic order so a seed
// fixes the edge set.
inline Network random_network(std::size_t n, double density, Rng& rng) {
  if (n < 2) throw InvalidConfig("random_network: n must be at least 2, got " + std::to_string(n));
  if (!(density >= 0.0 && density <= 1.0))
    throw InvalidConfig("random_network: density must lie in [0, 1], got " + std::to_string(density));
  Network g(n);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.bernoulli(density)) g.add_edge(u, v);
  return g;
}

}  // namespace swbnet
