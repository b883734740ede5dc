#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gnnx/graph.hpp"

namespace gnnx {

// Compact unlabeled digraph for edit-distance work. Weights and scores are
// optional side-cars aligned with the arcs.
struct SmallGraph {
  int n = 0;
  int center = -1;
  std::vector<std::pair<int, int>> arcs;
  std::vector<double> weights;
  std::vector<double> scores;
};

SmallGraph to_small_graph(const ExplanationSubgraph& sub);

enum class GedMode { ExactSmall, Approximate };

// Minimum-cost edit path under unit node/arc insert/delete costs and free
// substitution. ExactSmall (graphs up to 10 nodes) searches node mappings
// with branch-and-bound; Approximate is a greedy assignment upper bound and
// falls back to the exact search when both graphs have at most 6 nodes.
double ged(const SmallGraph& g1, const SmallGraph& g2, GedMode mode);

// Jensen-Shannon divergence (base-2 logs, in [0,1]) between the two weight
// vectors, normalized to sum 1 and aligned by `alignment` (w1[i] pairs with
// w2[alignment[i]]).
double jsd_aligned(std::span<const double> w1, std::span<const double> w2,
                   std::span<const int> alignment);

// GED when positive; for structurally identical graphs, the minimum JSD of
// the arc-weight distributions over all isomorphisms.
double graph_distance(const SmallGraph& g1, const SmallGraph& g2);

// Mean of the importance scores over the computational graph's arcs.
double sparsity(std::span<const double> scores);

// Rank-statistic ROC AUC; tied scores contribute 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Mean squared difference between softmax(importance) and the one-hot target.
double importance_mse(std::span<const double> importance, int target_index);

struct ClassPairMap {
  enum class Kind { GedDistance, PearsonSimilarity };
  Kind kind = Kind::GedDistance;
  int class_count = 0;
  std::vector<double> cells;   // row-major C x C, symmetric
  std::vector<int> counts;     // pairs averaged per cell

  double at(int c, int j) const { return cells[static_cast<std::size_t>(c * class_count + j)]; }
  double diagonal_mean() const;
  double off_diagonal_mean() const;
};

ClassPairMap distance_map(const std::vector<std::vector<SmallGraph>>& by_class);
ClassPairMap similarity_map(const std::vector<std::vector<std::vector<double>>>& by_class);

struct MetricsReport {
  double consistency = 0.0;    // mean within-class pairwise distance
  double contrastivity = 0.0;  // mean cross-class pairwise distance
  double sparsity = 0.0;       // filled by the caller from the mask vectors
  std::vector<double> per_class_consistency;
  std::vector<int> skipped_singleton_classes;
};

// Pairwise subgraph distances within and across classes. Each subgraph is
// truncated to its `top_arcs` best-scoring arcs first and each class list is
// capped at `sample_cap` entries.
MetricsReport class_ged_stats(const std::vector<std::vector<SmallGraph>>& by_class,
                              int top_arcs = 4, int sample_cap = 50);

// Pearson correlation over coordinates; zero variance on either side yields 0.
double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr);

}  // namespace gnnx
