#include "gnnx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "gnnx/error.hpp"

namespace gnnx {

SmallGraph to_small_graph(const ExplanationSubgraph& sub) {
  SmallGraph g;
  g.n = static_cast<int>(sub.nodes.size());
  std::map<int, int> to_local;
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
    to_local[sub.nodes[i]] = static_cast<int>(i);
  }
  g.center = to_local.at(sub.center);
  for (const Arc& a : sub.arcs) {
    g.arcs.emplace_back(to_local.at(a.src), to_local.at(a.dst));
    g.weights.push_back(a.weight);
  }
  g.scores = sub.scores;
  return g;
}

namespace {

struct ArcSet {
  std::set<std::pair<int, int>> set;
  explicit ArcSet(const SmallGraph& g) : set(g.arcs.begin(), g.arcs.end()) {}
  bool has(int a, int b) const { return set.count({a, b}) > 0; }
};

// exhaustive assignment of g1's nodes to g2's nodes or deletion, with
// branch-and-bound on a partial-cost lower bound
class ExactGed {
public:
  ExactGed(const SmallGraph& g1, const SmallGraph& g2)
      : g1_(g1), g2_(g2), e2_(g2), assign_(static_cast<std::size_t>(g1.n), -2),
        used_(static_cast<std::size_t>(g2.n), 0) {}

  double solve() {
    best_ = static_cast<double>(g1_.n + g2_.n + static_cast<int>(g1_.arcs.size()) +
                                static_cast<int>(g2_.arcs.size()));
    dfs(0, 0, 0.0, 0);
    return best_;
  }

private:
  // node i of g1 is next; `partial` holds node deletions plus decided-arc
  // deletions so far
  void dfs(int i, int matched_nodes, double partial, int matched_arcs) {
    const int remaining = g1_.n - i;
    const double lb_node_ins = std::max(0, g2_.n - matched_nodes - remaining);
    // g1 arcs with both endpoints placed are decided; the undecided ones are
    // the only hope for covering more g2 arcs
    const double lb_arc_ins = std::max(
        0.0, static_cast<double>(g2_.arcs.size()) - static_cast<double>(matched_arcs) -
                 static_cast<double>(undecided_arcs_upper(i)));
    if (partial + lb_node_ins + lb_arc_ins >= best_) return;
    if (i == g1_.n) {
      const double total = partial + (g2_.n - matched_nodes) +
                           (static_cast<double>(g2_.arcs.size()) - matched_arcs);
      best_ = std::min(best_, total);
      return;
    }

    for (int t = 0; t < g2_.n; ++t) {
      if (used_[static_cast<std::size_t>(t)]) continue;
      assign_[static_cast<std::size_t>(i)] = t;
      used_[static_cast<std::size_t>(t)] = 1;
      double delta = 0.0;
      int new_matches = 0;
      decide_arcs(i, &delta, &new_matches);
      dfs(i + 1, matched_nodes + 1, partial + delta, matched_arcs + new_matches);
      used_[static_cast<std::size_t>(t)] = 0;
    }
    assign_[static_cast<std::size_t>(i)] = -1;  // delete node i
    double delta = 1.0;
    int new_matches = 0;
    decide_arcs(i, &delta, &new_matches);
    dfs(i + 1, matched_nodes, partial + delta, matched_arcs + new_matches);
    assign_[static_cast<std::size_t>(i)] = -2;
  }

  // arcs of g1 whose later endpoint is i: matched if both ends map to nodes
  // and the image arc exists, otherwise one deletion each
  void decide_arcs(int i, double* delta, int* matches) {
    for (std::size_t k = 0; k < g1_.arcs.size(); ++k) {
      const auto [a, b] = g1_.arcs[k];
      if (std::max(a, b) != i) continue;
      const int fa = assign_[static_cast<std::size_t>(a)];
      const int fb = assign_[static_cast<std::size_t>(b)];
      if (fa == -2 || fb == -2) continue;  // endpoint not yet placed (only when a==b impossible)
      if (fa >= 0 && fb >= 0 && e2_.has(fa, fb)) {
        ++*matches;
      } else {
        *delta += 1.0;
      }
    }
  }

  // count of g1 arcs not yet decided after placing nodes [0, i)
  int undecided_arcs_upper(int i) const {
    int count = 0;
    for (const auto& [a, b] : g1_.arcs) {
      if (std::max(a, b) >= i) ++count;
    }
    return count;
  }

  const SmallGraph& g1_;
  const SmallGraph& g2_;
  ArcSet e2_;
  std::vector<int> assign_;
  std::vector<char> used_;
  double best_ = 0.0;
};

double mapping_cost(const SmallGraph& g1, const SmallGraph& g2, const std::vector<int>& assign) {
  ArcSet e2(g2);
  int matched_nodes = 0;
  int node_del = 0;
  int matched_arcs = 0;
  int arc_del = 0;
  for (int v : assign) {
    if (v >= 0) {
      ++matched_nodes;
    } else {
      ++node_del;
    }
  }
  for (const auto& [a, b] : g1.arcs) {
    const int fa = assign[static_cast<std::size_t>(a)];
    const int fb = assign[static_cast<std::size_t>(b)];
    if (fa >= 0 && fb >= 0 && e2.has(fa, fb)) {
      ++matched_arcs;
    } else {
      ++arc_del;
    }
  }
  return node_del + (g2.n - matched_nodes) + arc_del +
         (static_cast<double>(g2.arcs.size()) - matched_arcs);
}

double greedy_ged(const SmallGraph& g1, const SmallGraph& g2) {
  // degree-descending assignment, each node to the locally cheapest target
  std::vector<int> degree(static_cast<std::size_t>(g1.n), 0);
  for (const auto& [a, b] : g1.arcs) {
    ++degree[static_cast<std::size_t>(a)];
    ++degree[static_cast<std::size_t>(b)];
  }
  std::vector<int> order(static_cast<std::size_t>(g1.n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return degree[static_cast<std::size_t>(a)] > degree[static_cast<std::size_t>(b)];
  });

  ArcSet e2(g2);
  std::vector<int> assign(static_cast<std::size_t>(g1.n), -1);
  std::vector<char> used(static_cast<std::size_t>(g2.n), 0);
  for (int v : order) {
    int best_t = -1;
    double best_cost = 0.0;
    for (int t = 0; t < g2.n; ++t) {
      if (used[static_cast<std::size_t>(t)]) continue;
      double cost = 0.0;
      for (const auto& [a, b] : g1.arcs) {
        const int other = a == v ? b : (b == v ? a : -1);
        if (other < 0 || assign[static_cast<std::size_t>(other)] < 0) continue;
        const int fo = assign[static_cast<std::size_t>(other)];
        const bool image = a == v ? e2.has(t, fo) : e2.has(fo, t);
        if (!image) cost += 1.0;
      }
      if (best_t == -1 || cost < best_cost) {
        best_t = t;
        best_cost = cost;
      }
    }
    if (best_t >= 0) {
      assign[static_cast<std::size_t>(v)] = best_t;
      used[static_cast<std::size_t>(best_t)] = 1;
    }
  }
  return mapping_cost(g1, g2, assign);
}

void validate_small(const SmallGraph& g, const char* who) {
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : g.arcs) {
    if (a < 0 || a >= g.n || b < 0 || b >= g.n) {
      throw Error(std::string(who) + ": arc endpoint outside node range");
    }
    if (!seen.insert({a, b}).second) throw Error(std::string(who) + ": duplicate arc");
  }
}

}  // namespace

double ged(const SmallGraph& g1, const SmallGraph& g2, GedMode mode) {
  validate_small(g1, "ged");
  validate_small(g2, "ged");
  const int max_n = std::max(g1.n, g2.n);
  if (mode == GedMode::ExactSmall) {
    if (max_n > 10) {
      throw Error("ged: ExactSmall supports at most 10 nodes, got " + std::to_string(max_n));
    }
    // map the smaller node set onto the larger; the measure is symmetric
    return g1.n <= g2.n ? ExactGed(g1, g2).solve() : ExactGed(g2, g1).solve();
  }
  if (max_n <= 6) return ged(g1, g2, GedMode::ExactSmall);
  return g1.n <= g2.n ? greedy_ged(g1, g2) : greedy_ged(g2, g1);
}

double jsd_aligned(std::span<const double> w1, std::span<const double> w2,
                   std::span<const int> alignment) {
  if (w1.size() != w2.size() || w1.size() != alignment.size()) {
    throw Error("jsd: non-isomorphic input (vector sizes differ)");
  }
  std::vector<char> hit(w2.size(), 0);
  for (int i : alignment) {
    if (i < 0 || static_cast<std::size_t>(i) >= w2.size() || hit[static_cast<std::size_t>(i)]) {
      throw Error("jsd: alignment is not a bijection");
    }
    hit[static_cast<std::size_t>(i)] = 1;
  }
  if (w1.empty()) return 0.0;

  double s1 = 0.0, s2 = 0.0;
  for (double v : w1) s1 += v;
  for (double v : w2) s2 += v;
  if (s1 <= 0.0 || s2 <= 0.0) throw Error("jsd: weights must have positive sum");

  double out = 0.0;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const double p = w1[i] / s1;
    const double q = w2[static_cast<std::size_t>(alignment[i])] / s2;
    const double m = 0.5 * (p + q);
    if (p > 0.0) out += 0.5 * p * std::log2(p / m);
    if (q > 0.0) out += 0.5 * q * std::log2(q / m);
  }
  return std::clamp(out, 0.0, 1.0);
}

namespace {

// all arc-index alignments realized by zero-cost node bijections
void isomorphism_alignments(const SmallGraph& g1, const SmallGraph& g2,
                            std::vector<std::vector<int>>* out) {
  ArcSet e2(g2);
  std::map<std::pair<int, int>, int> arc2_index;
  for (std::size_t k = 0; k < g2.arcs.size(); ++k) arc2_index[g2.arcs[k]] = static_cast<int>(k);

  std::vector<int> assign(static_cast<std::size_t>(g1.n), -1);
  std::vector<char> used(static_cast<std::size_t>(g2.n), 0);
  constexpr std::size_t kMaxAlignments = 4096;

  auto consistent = [&](int v, int t) {
    for (const auto& [a, b] : g1.arcs) {
      const int oa = a == v ? t : assign[static_cast<std::size_t>(a)];
      const int ob = b == v ? t : assign[static_cast<std::size_t>(b)];
      if ((a == v || assign[static_cast<std::size_t>(a)] >= 0) &&
          (b == v || assign[static_cast<std::size_t>(b)] >= 0) && !e2.has(oa, ob)) {
        return false;
      }
    }
    return true;
  };

  std::function<void(int)> dfs = [&](int v) {
    if (out->size() >= kMaxAlignments) return;
    if (v == g1.n) {
      std::vector<int> align(g1.arcs.size());
      for (std::size_t k = 0; k < g1.arcs.size(); ++k) {
        const auto [a, b] = g1.arcs[k];
        auto it = arc2_index.find({assign[static_cast<std::size_t>(a)],
                                   assign[static_cast<std::size_t>(b)]});
        if (it == arc2_index.end()) return;  // not an isomorphism after all
        align[k] = it->second;
      }
      out->push_back(std::move(align));
      return;
    }
    for (int t = 0; t < g2.n; ++t) {
      if (used[static_cast<std::size_t>(t)]) continue;
      if (!consistent(v, t)) continue;
      assign[static_cast<std::size_t>(v)] = t;
      used[static_cast<std::size_t>(t)] = 1;
      dfs(v + 1);
      used[static_cast<std::size_t>(t)] = 0;
      assign[static_cast<std::size_t>(v)] = -1;
    }
  };
  dfs(0);
}

}  // namespace

double graph_distance(const SmallGraph& g1, const SmallGraph& g2) {
  const GedMode mode = std::max(g1.n, g2.n) <= 10 ? GedMode::ExactSmall : GedMode::Approximate;
  const double d = ged(g1, g2, mode);
  if (d > 0.0) return d;
  if (g1.arcs.empty()) return 0.0;

  std::vector<std::vector<int>> alignments;
  isomorphism_alignments(g1, g2, &alignments);
  if (alignments.empty()) return 0.0;

  std::vector<double> w1 = g1.weights.empty() ? std::vector<double>(g1.arcs.size(), 1.0) : g1.weights;
  std::vector<double> w2 = g2.weights.empty() ? std::vector<double>(g2.arcs.size(), 1.0) : g2.weights;
  double best = 1.0;
  for (const auto& align : alignments) {
    best = std::min(best, jsd_aligned(w1, w2, align));
  }
  return best;
}

double sparsity(std::span<const double> scores) {
  if (scores.empty()) throw Error("sparsity: empty score vector");
  double total = 0.0;
  for (double v : scores) {
    if (v < -1e-9 || v > 1.0 + 1e-9) throw Error("sparsity: scores must lie in [0,1]");
    total += v;
  }
  return total / static_cast<double>(scores.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("roc_auc: size mismatch");
  std::size_t pos = 0, neg = 0;
  for (int y : labels) (y ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw Error("roc_auc: needs at least one positive and one negative");

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });

  // midranks for tied scores
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[static_cast<std::size_t>(order[j + 1])] ==
               scores[static_cast<std::size_t>(order[i])]) {
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[static_cast<std::size_t>(order[k])]) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double n = static_cast<double>(neg);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double importance_mse(std::span<const double> importance, int target_index) {
  if (importance.size() < 2) throw Error("importance_mse: needs at least 2 features");
  if (target_index < 0 || static_cast<std::size_t>(target_index) >= importance.size()) {
    throw Error("importance_mse: target index out of range");
  }
  double mx = importance[0];
  for (double v : importance) mx = std::max(mx, v);
  double denom = 0.0;
  std::vector<double> p(importance.size());
  for (std::size_t i = 0; i < importance.size(); ++i) {
    p[i] = std::exp(importance[i] - mx);
    denom += p[i];
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < importance.size(); ++i) {
    const double target = i == static_cast<std::size_t>(target_index) ? 1.0 : 0.0;
    const double diff = p[i] / denom - target;
    mse += diff * diff;
  }
  return mse / static_cast<double>(importance.size());
}

double ClassPairMap::diagonal_mean() const {
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < class_count; ++c) {
    if (counts[static_cast<std::size_t>(c * class_count + c)] > 0) {
      total += at(c, c);
      ++used;
    }
  }
  return used ? total / used : 0.0;
}

double ClassPairMap::off_diagonal_mean() const {
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < class_count; ++c) {
    for (int j = 0; j < class_count; ++j) {
      if (c != j && counts[static_cast<std::size_t>(c * class_count + j)] > 0) {
        total += at(c, j);
        ++used;
      }
    }
  }
  return used ? total / used : 0.0;
}

namespace {

ClassPairMap make_map(int class_count, ClassPairMap::Kind kind) {
  ClassPairMap m;
  m.kind = kind;
  m.class_count = class_count;
  m.cells.assign(static_cast<std::size_t>(class_count * class_count), 0.0);
  m.counts.assign(static_cast<std::size_t>(class_count * class_count), 0);
  return m;
}

}  // namespace

ClassPairMap distance_map(const std::vector<std::vector<SmallGraph>>& by_class) {
  const int c = static_cast<int>(by_class.size());
  for (int k = 0; k < c; ++k) {
    if (by_class[static_cast<std::size_t>(k)].empty()) {
      throw Error("distance_map: class " + std::to_string(k) + " is empty");
    }
  }
  ClassPairMap m = make_map(c, ClassPairMap::Kind::GedDistance);
  for (int a = 0; a < c; ++a) {
    for (int b = a; b < c; ++b) {
      const auto& ga = by_class[static_cast<std::size_t>(a)];
      const auto& gb = by_class[static_cast<std::size_t>(b)];
      double total = 0.0;
      int count = 0;
      if (a == b) {
        for (std::size_t i = 0; i < ga.size(); ++i) {
          for (std::size_t j = i + 1; j < ga.size(); ++j) {
            total += graph_distance(ga[i], ga[j]);
            ++count;
          }
        }
      } else {
        for (const SmallGraph& x : ga) {
          for (const SmallGraph& y : gb) {
            total += graph_distance(x, y);
            ++count;
          }
        }
      }
      const double mean = count ? total / count : 0.0;
      m.cells[static_cast<std::size_t>(a * c + b)] = mean;
      m.cells[static_cast<std::size_t>(b * c + a)] = mean;
      m.counts[static_cast<std::size_t>(a * c + b)] = count;
      m.counts[static_cast<std::size_t>(b * c + a)] = count;
    }
  }
  return m;
}

double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  if (a.size() != b.size() || a.size() < 2) throw Error("pearson: vectors must match, length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return cov / std::sqrt(va * vb);
}

ClassPairMap similarity_map(const std::vector<std::vector<std::vector<double>>>& by_class) {
  const int c = static_cast<int>(by_class.size());
  for (int k = 0; k < c; ++k) {
    if (by_class[static_cast<std::size_t>(k)].empty()) {
      throw Error("similarity_map: class " + std::to_string(k) + " is empty");
    }
  }
  ClassPairMap m = make_map(c, ClassPairMap::Kind::PearsonSimilarity);
  for (int a = 0; a < c; ++a) {
    for (int b = a; b < c; ++b) {
      const auto& va = by_class[static_cast<std::size_t>(a)];
      const auto& vb = by_class[static_cast<std::size_t>(b)];
      double total = 0.0;
      int count = 0;
      if (a == b) {
        for (std::size_t i = 0; i < va.size(); ++i) {
          for (std::size_t j = i + 1; j < va.size(); ++j) {
            total += pearson(va[i], va[j]);
            ++count;
          }
        }
      } else {
        for (const auto& x : va) {
          for (const auto& y : vb) {
            total += pearson(x, y);
            ++count;
          }
        }
      }
      const double mean = count ? total / count : 0.0;
      m.cells[static_cast<std::size_t>(a * c + b)] = mean;
      m.cells[static_cast<std::size_t>(b * c + a)] = mean;
      m.counts[static_cast<std::size_t>(a * c + b)] = count;
      m.counts[static_cast<std::size_t>(b * c + a)] = count;
    }
  }
  return m;
}

namespace {

SmallGraph truncate_top_arcs(const SmallGraph& g, int top_arcs) {
  if (top_arcs <= 0 || static_cast<int>(g.arcs.size()) <= top_arcs || g.scores.empty()) return g;
  std::vector<int> order(g.arcs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return g.scores[static_cast<std::size_t>(a)] > g.scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(top_arcs));
  std::sort(order.begin(), order.end());

  std::set<int> kept_nodes;
  if (g.center >= 0) kept_nodes.insert(g.center);
  for (int k : order) {
    kept_nodes.insert(g.arcs[static_cast<std::size_t>(k)].first);
    kept_nodes.insert(g.arcs[static_cast<std::size_t>(k)].second);
  }
  std::map<int, int> to_local;
  for (int v : kept_nodes) to_local.emplace(v, static_cast<int>(to_local.size()));

  SmallGraph out;
  out.n = static_cast<int>(kept_nodes.size());
  out.center = g.center >= 0 ? to_local.at(g.center) : -1;
  for (int k : order) {
    const auto& [a, b] = g.arcs[static_cast<std::size_t>(k)];
    out.arcs.emplace_back(to_local.at(a), to_local.at(b));
    if (!g.weights.empty()) out.weights.push_back(g.weights[static_cast<std::size_t>(k)]);
    out.scores.push_back(g.scores[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace

MetricsReport class_ged_stats(const std::vector<std::vector<SmallGraph>>& by_class, int top_arcs,
                              int sample_cap) {
  MetricsReport report;
  std::vector<std::vector<SmallGraph>> groups;
  for (const auto& cls : by_class) {
    std::vector<SmallGraph> g;
    for (const SmallGraph& s : cls) {
      if (static_cast<int>(g.size()) >= sample_cap) break;
      g.push_back(truncate_top_arcs(s, top_arcs));
    }
    groups.push_back(std::move(g));
  }

  bool any_pair = false;
  double within_total = 0.0;
  int within_count = 0;
  report.per_class_consistency.assign(groups.size(), 0.0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    if (g.size() < 2) {
      report.skipped_singleton_classes.push_back(static_cast<int>(k));
      continue;
    }
    any_pair = true;
    double total = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        total += graph_distance(g[i], g[j]);
        ++count;
      }
    }
    report.per_class_consistency[k] = total / count;
    within_total += total;
    within_count += count;
  }
  if (!any_pair) throw Error("class_ged_stats: need at least one class with two subgraphs");
  report.consistency = within_total / within_count;

  double cross_total = 0.0;
  int cross_count = 0;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      for (const SmallGraph& x : groups[a]) {
        for (const SmallGraph& y : groups[b]) {
          cross_total += graph_distance(x, y);
          ++cross_count;
        }
      }
    }
  }
  report.contrastivity = cross_count ? cross_total / cross_count : 0.0;
  return report;
}

}  // namespace gnnx
