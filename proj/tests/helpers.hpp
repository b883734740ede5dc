#pragma once

#include <set>
#include <vector>

#include "gnnx/graph.hpp"
#include "gnnx/model.hpp"
#include "gnnx/rng.hpp"

namespace gnnx::testing {

// random weighted digraph with d-dimensional uniform features
inline WeightedDigraph random_graph(Rng& rng, int nodes, double arc_prob, int feature_dim,
                                    int class_count = 2, bool with_labels = true) {
  std::vector<Arc> arcs;
  for (int a = 0; a < nodes; ++a) {
    for (int b = 0; b < nodes; ++b) {
      if (a == b) continue;
      if (rng.uniform() < arc_prob) arcs.push_back({a, b, rng.uniform(0.1, 2.0)});
    }
  }
  DenseMatrix features(static_cast<std::size_t>(nodes), static_cast<std::size_t>(feature_dim));
  for (double& v : features.data) v = rng.uniform(-1.0, 1.0);
  std::optional<std::vector<int>> labels;
  if (with_labels) {
    labels.emplace();
    for (int u = 0; u < nodes; ++u) {
      labels->push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(class_count))));
    }
  }
  return build_graph(nodes, std::move(arcs), std::move(features), std::move(labels), class_count);
}

inline GnnModel random_model(int input_dim, int hidden, int layers, int classes,
                             GateKind gate = GateKind::Sum, GnnMode mode = GnnMode::TypeI,
                             std::uint64_t seed = 11) {
  GnnConfig config;
  config.mode = mode;
  config.gate = gate;
  config.layer_dims.push_back(input_dim);
  for (int l = 0; l < layers; ++l) config.layer_dims.push_back(hidden);
  config.class_count = classes;
  config.seed = seed;
  return init_model(config);
}

}  // namespace gnnx::testing
