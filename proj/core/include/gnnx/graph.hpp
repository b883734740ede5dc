#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gnnx/matrix.hpp"

namespace gnnx {

struct Arc {
  int src = 0;
  int dst = 0;
  double weight = 1.0;
};

// Weighted directed graph with per-node features and optional class labels.
// Immutable once built; incoming arcs are indexed per node in arc-ordinal
// order, which fixes every aggregation order downstream.
struct WeightedDigraph {
  int node_count = 0;
  std::vector<Arc> arcs;
  DenseMatrix features;  // node_count x d
  std::optional<std::vector<int>> labels;
  int class_count = 0;
  std::vector<std::vector<int>> in_arcs;  // per node, ascending arc ordinals

  int arc_count() const { return static_cast<int>(arcs.size()); }
  int feature_dim() const { return static_cast<int>(features.cols); }
};

WeightedDigraph build_graph(int node_count, std::vector<Arc> arcs, DenseMatrix features,
                            std::optional<std::vector<int>> labels = std::nullopt,
                            int class_count = 0);

// Per-arc in-degree normalized weights: each node's incoming weights sum to 1.
std::vector<double> in_degree_normalize(const WeightedDigraph& graph);

// The L-hop in-neighborhood of `center`: exactly the nodes with a directed
// path to the center of length <= hops, and the arcs lying on such paths.
// A forward pass restricted to it reproduces the full-graph prediction at
// the center exactly.
struct ComputationalGraph {
  WeightedDigraph local;                        // compact node ids
  int center = 0;                               // local id of the explained node
  std::vector<int> to_parent;                   // local node id -> parent node id
  std::vector<int> arc_to_parent;               // local arc ordinal -> parent arc ordinal

  int arc_count() const { return local.arc_count(); }
};

ComputationalGraph computational_graph(const WeightedDigraph& graph, int center, int hops);

struct Selection {
  enum class Kind { TopK, Threshold };
  Kind kind = Kind::TopK;
  int k = 6;
  double tau = 0.5;

  static Selection top_k(int k) { return {Kind::TopK, k, 0.0}; }
  static Selection threshold(double tau) { return {Kind::Threshold, 0, tau}; }
};

// Explanation subgraph: the retained arcs (in parent ids, with original
// weights and their scores) plus every node still incident to one; the
// center is kept even when isolated.
struct ExplanationSubgraph {
  int center = 0;                          // parent node id
  std::vector<int> nodes;                  // parent node ids, ascending
  std::vector<Arc> arcs;                   // parent ids, original weights
  std::vector<double> scores;              // aligned with arcs
  std::vector<int> comp_arc_ordinals;      // positions in the computational graph
  bool top_k_clamped = false;
};

ExplanationSubgraph extract_subgraph(const ComputationalGraph& cg,
                                     std::span<const double> scores, const Selection& sel);

// Compact graph over the subgraph's nodes, with features (and labels) taken
// from the parent graph. Used to run the model on an explanation subgraph.
struct LocalGraph {
  WeightedDigraph graph;
  int center = 0;                // local id
  std::vector<int> to_parent;    // local node id -> parent node id
};

LocalGraph materialize_subgraph(const ExplanationSubgraph& sub, const WeightedDigraph& parent);

}  // namespace gnnx
