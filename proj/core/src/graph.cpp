#include "gnnx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "gnnx/error.hpp"

namespace gnnx {

WeightedDigraph build_graph(int node_count, std::vector<Arc> arcs, DenseMatrix features,
                            std::optional<std::vector<int>> labels, int class_count) {
  if (node_count < 0) throw Error("build_graph: negative node count");
  if (static_cast<int>(features.rows) != node_count) {
    throw Error("build_graph: feature rows (" + std::to_string(features.rows) +
                ") do not match node count (" + std::to_string(node_count) + ")");
  }
  if (labels && static_cast<int>(labels->size()) != node_count) {
    throw Error("build_graph: label count does not match node count");
  }
  if (labels) {
    for (int y : *labels) {
      if (y < 0 || y >= class_count) {
        throw Error("build_graph: label " + std::to_string(y) + " outside class range");
      }
    }
  }

  std::set<std::pair<int, int>> seen;
  for (const Arc& a : arcs) {
    if (a.src < 0 || a.src >= node_count || a.dst < 0 || a.dst >= node_count) {
      throw Error("build_graph: arc (" + std::to_string(a.src) + "," + std::to_string(a.dst) +
                  ") references a node outside [0," + std::to_string(node_count) + ")");
    }
    if (!(a.weight > 0.0) || !std::isfinite(a.weight)) {
      throw Error("build_graph: nonpositive weight " + format_double(a.weight) + " on arc (" +
                  std::to_string(a.src) + "," + std::to_string(a.dst) + ")");
    }
    if (!seen.insert({a.src, a.dst}).second) {
      throw Error("build_graph: duplicate arc (" + std::to_string(a.src) + "," +
                  std::to_string(a.dst) + ")");
    }
  }

  WeightedDigraph g;
  g.node_count = node_count;
  g.arcs = std::move(arcs);
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.class_count = class_count;
  g.in_arcs.assign(static_cast<std::size_t>(node_count), {});
  for (int i = 0; i < g.arc_count(); ++i) {
    g.in_arcs[static_cast<std::size_t>(g.arcs[static_cast<std::size_t>(i)].dst)].push_back(i);
  }
  return g;
}

std::vector<double> in_degree_normalize(const WeightedDigraph& graph) {
  std::vector<double> normalized(graph.arcs.size(), 0.0);
  for (int u = 0; u < graph.node_count; ++u) {
    const auto& incoming = graph.in_arcs[static_cast<std::size_t>(u)];
    if (incoming.empty()) continue;
    double total = 0.0;
    for (int a : incoming) total += graph.arcs[static_cast<std::size_t>(a)].weight;
    for (int a : incoming) {
      normalized[static_cast<std::size_t>(a)] = graph.arcs[static_cast<std::size_t>(a)].weight / total;
    }
  }
  return normalized;
}

ComputationalGraph computational_graph(const WeightedDigraph& graph, int center, int hops) {
  if (center < 0 || center >= graph.node_count) {
    throw Error("computational_graph: invalid node id " + std::to_string(center));
  }
  if (hops < 1) throw Error("computational_graph: hops must be >= 1");

  // distance from each node to the center along arc direction
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(graph.node_count), kUnreached);
  dist[static_cast<std::size_t>(center)] = 0;
  std::vector<std::vector<int>> out_arcs(static_cast<std::size_t>(graph.node_count));
  for (int i = 0; i < graph.arc_count(); ++i) {
    out_arcs[static_cast<std::size_t>(graph.arcs[static_cast<std::size_t>(i)].src)].push_back(i);
  }
  std::vector<int> frontier{center};
  for (int d = 1; d <= hops && !frontier.empty(); ++d) {
    std::vector<int> next;
    for (int u : frontier) {
      for (int a : graph.in_arcs[static_cast<std::size_t>(u)]) {
        const int v = graph.arcs[static_cast<std::size_t>(a)].src;
        if (dist[static_cast<std::size_t>(v)] == kUnreached) {
          dist[static_cast<std::size_t>(v)] = d;
          next.push_back(v);
        }
      }
    }
    frontier = std::move(next);
  }

  ComputationalGraph cg;
  std::vector<int> to_local(static_cast<std::size_t>(graph.node_count), -1);
  for (int v = 0; v < graph.node_count; ++v) {
    if (dist[static_cast<std::size_t>(v)] <= hops) {
      to_local[static_cast<std::size_t>(v)] = static_cast<int>(cg.to_parent.size());
      cg.to_parent.push_back(v);
    }
  }
  cg.center = to_local[static_cast<std::size_t>(center)];

  // an arc (v,w) lies on a path of length <= hops to the center
  // iff dist(w) <= hops - 1
  std::vector<Arc> arcs;
  for (int i = 0; i < graph.arc_count(); ++i) {
    const Arc& a = graph.arcs[static_cast<std::size_t>(i)];
    if (dist[static_cast<std::size_t>(a.dst)] <= hops - 1) {
      arcs.push_back({to_local[static_cast<std::size_t>(a.src)],
                      to_local[static_cast<std::size_t>(a.dst)], a.weight});
      cg.arc_to_parent.push_back(i);
    }
  }

  const int local_count = static_cast<int>(cg.to_parent.size());
  DenseMatrix features(static_cast<std::size_t>(local_count), graph.features.cols);
  for (int v = 0; v < local_count; ++v) {
    for (std::size_t c = 0; c < graph.features.cols; ++c) {
      features.at(static_cast<std::size_t>(v), c) =
          graph.features.at(static_cast<std::size_t>(cg.to_parent[static_cast<std::size_t>(v)]), c);
    }
  }
  std::optional<std::vector<int>> labels;
  if (graph.labels) {
    labels.emplace();
    for (int v : cg.to_parent) labels->push_back((*graph.labels)[static_cast<std::size_t>(v)]);
  }
  cg.local = build_graph(local_count, std::move(arcs), std::move(features), std::move(labels),
                         graph.class_count);
  return cg;
}

ExplanationSubgraph extract_subgraph(const ComputationalGraph& cg, std::span<const double> scores,
                                     const Selection& sel) {
  const int q = cg.arc_count();
  if (static_cast<int>(scores.size()) != q) {
    throw Error("extract_subgraph: " + std::to_string(scores.size()) + " scores for " +
                std::to_string(q) + " arcs");
  }

  ExplanationSubgraph out;
  out.center = cg.to_parent[static_cast<std::size_t>(cg.center)];

  std::vector<int> selected;
  if (sel.kind == Selection::Kind::TopK) {
    if (sel.k < 1) throw Error("extract_subgraph: top-k requires k >= 1");
    int k = sel.k;
    if (k > q) {
      k = q;
      out.top_k_clamped = true;
    }
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    // ties broken by smaller arc ordinal
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    selected.assign(order.begin(), order.begin() + k);
    std::sort(selected.begin(), selected.end());
  } else {
    if (!(sel.tau > 0.0 && sel.tau < 1.0)) {
      throw Error("extract_subgraph: threshold must lie in (0,1)");
    }
    for (int i = 0; i < q; ++i) {
      if (scores[static_cast<std::size_t>(i)] >= sel.tau) selected.push_back(i);
    }
  }

  std::set<int> nodes{out.center};
  for (int i : selected) {
    const Arc& a = cg.local.arcs[static_cast<std::size_t>(i)];
    const int src = cg.to_parent[static_cast<std::size_t>(a.src)];
    const int dst = cg.to_parent[static_cast<std::size_t>(a.dst)];
    out.arcs.push_back({src, dst, a.weight});
    out.scores.push_back(scores[static_cast<std::size_t>(i)]);
    out.comp_arc_ordinals.push_back(i);
    nodes.insert(src);
    nodes.insert(dst);
  }
  out.nodes.assign(nodes.begin(), nodes.end());
  return out;
}

LocalGraph materialize_subgraph(const ExplanationSubgraph& sub, const WeightedDigraph& parent) {
  LocalGraph out;
  out.to_parent = sub.nodes;
  std::vector<int> to_local(static_cast<std::size_t>(parent.node_count), -1);
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
    to_local[static_cast<std::size_t>(sub.nodes[i])] = static_cast<int>(i);
  }
  out.center = to_local[static_cast<std::size_t>(sub.center)];

  std::vector<Arc> arcs;
  for (const Arc& a : sub.arcs) {
    arcs.push_back({to_local[static_cast<std::size_t>(a.src)],
                    to_local[static_cast<std::size_t>(a.dst)], a.weight});
  }
  DenseMatrix features(sub.nodes.size(), parent.features.cols);
  for (std::size_t v = 0; v < sub.nodes.size(); ++v) {
    for (std::size_t c = 0; c < parent.features.cols; ++c) {
      features.at(v, c) = parent.features.at(static_cast<std::size_t>(sub.nodes[v]), c);
    }
  }
  std::optional<std::vector<int>> labels;
  if (parent.labels) {
    labels.emplace();
    for (int v : sub.nodes) labels->push_back((*parent.labels)[static_cast<std::size_t>(v)]);
  }
  out.graph = build_graph(static_cast<int>(sub.nodes.size()), std::move(arcs), std::move(features),
                          std::move(labels), parent.class_count);
  return out;
}

}  // namespace gnnx
