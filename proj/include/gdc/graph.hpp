#pragma once

// Networked observational data: graph, dataset, ground truth, splits and
// treatment-restricted neighborhoods.

#include "gdc/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gdc {

using Edge = std::pair<int, int>;

// Undirected simple graph on nodes 0..N-1. Edges are stored once as (lo, hi)
// in sorted order; self-edges are rejected and duplicates merged.
class Graph {
 public:
  Graph() = default;

  Graph(int num_nodes, const std::vector<Edge>& edges) : num_nodes_(num_nodes) {
    if (num_nodes <= 0) throw ValidationError("graph needs at least one node");
    edges_.reserve(edges.size());
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
        throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") out of range for " + std::to_string(num_nodes) + " nodes");
      }
      if (a == b) throw ValidationError("self-edge on node " + std::to_string(a));
      edges_.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    neighbors_.assign(static_cast<size_t>(num_nodes), {});
    for (auto [a, b] : edges_) {
      neighbors_[a].push_back(b);
      neighbors_[b].push_back(a);
    }
    for (auto& list : neighbors_) std::sort(list.begin(), list.end());
  }

  int num_nodes() const { return num_nodes_; }
  size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_[static_cast<size_t>(i)]; }
  const std::vector<std::vector<int>>& neighbor_lists() const { return neighbors_; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }

 private:
  int num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

struct ObservationalDataset {
  Graph graph;
  Matrix features;          // N x K
  std::vector<int> treatments;  // values in {0, 1}
  Vector outcomes;          // factual outcomes

  int num_units() const { return graph.num_nodes(); }
  int num_features() const { return static_cast<int>(features.cols()); }

  void validate() const {
    const auto n = static_cast<long>(graph.num_nodes());
    if (features.rows() != n || static_cast<long>(treatments.size()) != n || outcomes.size() != n) {
      throw ValidationError("dimension mismatch: graph has " + std::to_string(n) + " nodes, features " +
                            std::to_string(features.rows()) + " rows, treatments " +
                            std::to_string(treatments.size()) + ", outcomes " +
                            std::to_string(outcomes.size()));
    }
    int treated = 0;
    for (size_t i = 0; i < treatments.size(); ++i) {
      const int t = treatments[i];
      if (t != 0 && t != 1) {
        throw ValidationError("treatment of unit " + std::to_string(i) + " is " + std::to_string(t) +
                              ", expected 0 or 1");
      }
      treated += t;
    }
    if (treated == 0 || treated == n) throw ValidationError("both treatment groups must be non-empty");
    if (!features.allFinite() || !outcomes.allFinite()) throw ValidationError("non-finite feature or outcome value");
  }
};

struct GroundTruth {
  Vector y0;
  Vector y1;
  Vector tau;

  static GroundTruth from_potentials(Vector y0, Vector y1) {
    GroundTruth truth{std::move(y0), std::move(y1), {}};
    truth.tau = truth.y1 - truth.y0;
    return truth;
  }
};

struct SplitIndex {
  Index train;
  Index val;
  Index test;
};

// Deterministic shuffled split; train and val sizes are rounded, test takes the rest.
inline SplitIndex split_units(int n, std::array<double, 3> ratios, std::int64_t seed) {
  if (n < 5) throw ArgumentError("split_units needs n >= 5, got " + std::to_string(n));
  for (double r : ratios) {
    if (!(r > 0.0)) throw ArgumentError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ArgumentError("split ratios must sum to 1");
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = make_rng(seed, 0x5b1u);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform01(rng) * (i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  const int n_train = static_cast<int>(std::lround(n * ratios[0]));
  const int n_val = static_cast<int>(std::lround(n * ratios[1]));
  if (n_train + n_val > n) throw ArgumentError("split ratios leave no room for a test set");

  SplitIndex split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

struct TreatmentSubgraphs {
  std::vector<std::vector<int>> same_neighbors;
  std::vector<std::vector<int>> opp_neighbors;
  std::vector<bool> has_opp;
};

inline TreatmentSubgraphs treatment_subgraphs(const Graph& graph, const std::vector<int>& treatments) {
  const int n = graph.num_nodes();
  if (static_cast<int>(treatments.size()) != n) {
    throw ValidationError("treatments has length " + std::to_string(treatments.size()) + ", graph has " +
                          std::to_string(n) + " nodes");
  }
  for (int t : treatments) {
    if (t != 0 && t != 1) throw ValidationError("treatment values must be 0 or 1");
  }
  TreatmentSubgraphs sub;
  sub.same_neighbors.resize(static_cast<size_t>(n));
  sub.opp_neighbors.resize(static_cast<size_t>(n));
  sub.has_opp.assign(static_cast<size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    for (int j : graph.neighbors(i)) {
      auto& target = treatments[static_cast<size_t>(j)] == treatments[static_cast<size_t>(i)]
                         ? sub.same_neighbors[static_cast<size_t>(i)]
                         : sub.opp_neighbors[static_cast<size_t>(i)];
      target.push_back(j);
    }
    sub.has_opp[static_cast<size_t>(i)] = !sub.opp_neighbors[static_cast<size_t>(i)].empty();
  }
  return sub;
}

}  // namespace gdc
