#include "gnnx/explain_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gnnx/error.hpp"
#include "gnnx/rng.hpp"

namespace gnnx {

const char* feature_method_name(FeatureMethod m) {
  switch (m) {
    case FeatureMethod::Mmi: return "mmi";
    case FeatureMethod::Pda: return "pda";
    case FeatureMethod::Ggd: return "ggd";
  }
  return "?";
}

DenseMatrix sample_reparam_z(const DenseMatrix& xs, std::uint64_t seed) {
  if (xs.rows == 0 || xs.cols == 0) throw Error("sample_reparam_z: empty feature matrix");
  Rng rng(seed);
  DenseMatrix z(xs.rows, xs.cols);
  for (std::size_t i = 0; i < xs.cols; ++i) {
    double mean = 0.0;
    for (std::size_t r = 0; r < xs.rows; ++r) mean += xs.at(r, i);
    mean /= static_cast<double>(xs.rows);
    double var = 0.0;
    for (std::size_t r = 0; r < xs.rows; ++r) {
      const double d = xs.at(r, i) - mean;
      var += d * d;
    }
    const double stddev = std::sqrt(var / static_cast<double>(xs.rows));
    for (std::size_t r = 0; r < xs.rows; ++r) {
      z.at(r, i) = stddev == 0.0 ? mean : rng.normal(mean, stddev);
    }
  }
  return z;
}

namespace {

int onehot_col(Tape& tape, int size, int index) {
  DenseMatrix m(static_cast<std::size_t>(size), 1);
  m.data[static_cast<std::size_t>(index)] = 1.0;
  return tape.leaf(std::move(m));
}

int center_ce(Tape& tape, int logits, int label, int class_count) {
  DenseMatrix onehot(1, static_cast<std::size_t>(class_count));
  onehot.data[static_cast<std::size_t>(label)] = 1.0;
  const int logp = tape.log(tape.softmax_rows(logits));
  return tape.scale(tape.sum(tape.mul(logp, tape.leaf(std::move(onehot)))), -1.0);
}

void check_label(const GnnModel& model, int label) {
  if (label < 0 || label >= model.config.class_count) {
    throw Error("explain: label " + std::to_string(label) + " outside class range");
  }
}

double center_true_prob(const GnnModel& model, const LocalGraph& gs, const DenseMatrix& features,
                        int label) {
  const DenseMatrix probs = forward_probs(model, gs.graph, features);
  return probs.at(static_cast<std::size_t>(gs.center), static_cast<std::size_t>(label));
}

}  // namespace

FeatureMaskResult mmi_feature_mask(const GnnModel& model, const LocalGraph& gs, int label,
                                   const FeatureMaskHyper& hyper,
                                   const std::vector<double>* initial_mask) {
  check_label(model, label);
  if (gs.graph.node_count == 0) throw Error("mmi_feature_mask: empty subgraph");
  if (gs.center < 0 || gs.center >= gs.graph.node_count) {
    throw Error("mmi_feature_mask: subgraph does not contain the explained node");
  }
  const std::size_t d = gs.graph.features.cols;

  FeatureMaskResult result;
  result.z = sample_reparam_z(gs.graph.features, derive_seed(hyper.seed, 0));
  if (initial_mask) {
    if (initial_mask->size() != d) throw Error("mmi_feature_mask: initial mask has wrong length");
    result.mask = *initial_mask;
  } else {
    Rng rng(derive_seed(hyper.seed, 1));
    result.mask.resize(d);
    for (double& m : result.mask) m = rng.uniform();
  }
  const double budget = hyper.budget < 0
                            ? std::ceil(static_cast<double>(d) / 2.0)
                            : static_cast<double>(hyper.budget);

  DenseMatrix diff = gs.graph.features;  // X_S - Z
  for (std::size_t i = 0; i < diff.size(); ++i) diff.data[i] -= result.z.data[i];

  const std::vector<double> coefs = in_degree_normalize(gs.graph);
  const int center[] = {gs.center};
  for (int iter = 0; iter < hyper.iterations; ++iter) {
    Tape tape;
    TapedModel tm = bind_model(tape, model);
    const int mask_leaf = tape.leaf(DenseMatrix::row_vector(result.mask));

    ForwardHooks hooks;
    hooks.feature_row = [&](Tape& t, int v) {
      const int zrow = t.leaf(result.z.row(static_cast<std::size_t>(v)));
      const int drow = t.leaf(diff.row(static_cast<std::size_t>(v)));
      return t.add(zrow, t.mul(drow, mask_leaf));
    };
    hooks.coef_row = [&](Tape& t, int, const std::vector<int>& in_arcs) {
      DenseMatrix row(1, in_arcs.size());
      for (std::size_t i = 0; i < in_arcs.size(); ++i) {
        row.data[i] = coefs[static_cast<std::size_t>(in_arcs[i])];
      }
      return t.leaf(std::move(row));
    };

    const auto logits = taped_logits(tape, tm, gs.graph, hooks, center);
    int loss = center_ce(tape, logits[static_cast<std::size_t>(gs.center)], label,
                         model.config.class_count);
    if (hyper.lambda_budget != 0.0) {
      const int over = tape.relu(tape.add(tape.sum(mask_leaf), tape.constant(-budget)));
      loss = tape.add(loss, tape.scale(over, hyper.lambda_budget));
    }
    result.loss_history.push_back(tape.value(loss).data[0]);

    auto grads = tape.backward(loss);
    const DenseMatrix& dm = grads.at(mask_leaf);
    for (std::size_t i = 0; i < d; ++i) {
      result.mask[i] = std::clamp(result.mask[i] - hyper.lr * dm.data[i], 0.0, 1.0);
    }
  }
  return result;
}

PdaResult pda(const GnnModel& model, const LocalGraph& gs, int label, const TrainingPool& pool,
              int samples, std::uint64_t seed) {
  check_label(model, label);
  if (samples < 1) throw Error("pda: sample count must be >= 1");
  if (!pool.features) throw Error("pda: training pool has no features");
  if (gs.center < 0 || gs.center >= gs.graph.node_count) {
    throw Error("pda: subgraph does not contain the explained node");
  }

  PdaResult result;
  result.importance.method = FeatureMethod::Pda;

  std::vector<int> classes;
  std::vector<double> class_weight;
  for (std::size_t k = 0; k < pool.ids_by_class.size(); ++k) {
    if (pool.ids_by_class[k].empty()) {
      result.excluded_classes.push_back(static_cast<int>(k));
    } else {
      classes.push_back(static_cast<int>(k));
      class_weight.push_back(1.0 / static_cast<double>(pool.ids_by_class[k].size()));
    }
  }
  if (classes.empty()) throw Error("pda: training pool is empty");
  const double weight_total = std::accumulate(class_weight.begin(), class_weight.end(), 0.0);

  const std::size_t d = gs.graph.features.cols;
  const double original = center_true_prob(model, gs, gs.graph.features, label);

  Rng rng(seed);
  result.importance.values.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    // mean of per-sample drops; exactly zero when replacements change nothing
    double drop_total = 0.0;
    for (int s = 0; s < samples; ++s) {
      // class drawn with probability proportional to 1/N_k
      double r = rng.uniform() * weight_total;
      std::size_t pick = 0;
      for (; pick + 1 < classes.size(); ++pick) {
        if (r < class_weight[pick]) break;
        r -= class_weight[pick];
      }
      const auto& ids = pool.ids_by_class[static_cast<std::size_t>(classes[pick])];
      const int node = ids[static_cast<std::size_t>(rng.below(ids.size()))];
      const double value = pool.features->at(static_cast<std::size_t>(node), i);

      DenseMatrix replaced = gs.graph.features;
      replaced.at(static_cast<std::size_t>(gs.center), i) = value;
      drop_total += original - center_true_prob(model, gs, replaced, label);
    }
    result.importance.values[i] = std::max(0.0, drop_total / static_cast<double>(samples));
  }
  result.importance.all_zero =
      std::all_of(result.importance.values.begin(), result.importance.values.end(),
                  [](double v) { return v == 0.0; });
  return result;
}

FeatureImportance ggd_feature_salience(const GnnModel& model, const ComputationalGraph& cg,
                                       int label) {
  check_label(model, label);
  const WeightedDigraph& g = cg.local;
  const std::size_t d = g.features.cols;

  Tape tape;
  TapedModel tm = bind_model(tape, model);

  std::vector<int> feature_leaves(static_cast<std::size_t>(g.node_count));
  ForwardHooks hooks = plain_hooks(g, g.features);
  hooks.feature_row = [&](Tape& t, int v) {
    const int leaf = t.leaf(g.features.row(static_cast<std::size_t>(v)));
    feature_leaves[static_cast<std::size_t>(v)] = leaf;
    return leaf;
  };

  const int center[] = {cg.center};
  const auto logits = taped_logits(tape, tm, g, hooks, center);
  const int target = tape.matmul(logits[static_cast<std::size_t>(cg.center)],
                                 onehot_col(tape, model.config.class_count, label));
  auto grads = tape.backward(target);

  FeatureImportance out;
  out.method = FeatureMethod::Ggd;
  out.values.assign(d, 0.0);
  for (int v = 0; v < g.node_count; ++v) {
    auto it = grads.find(feature_leaves[static_cast<std::size_t>(v)]);
    if (it == grads.end()) continue;
    for (std::size_t i = 0; i < d; ++i) {
      out.values[i] += std::max(0.0, it->second.data[i]);
    }
  }
  const double mx = *std::max_element(out.values.begin(), out.values.end());
  if (mx == 0.0) {
    out.all_zero = true;
  } else {
    for (double& v : out.values) v /= mx;
  }
  return out;
}

namespace {

// descending ranks with ties averaged; rank 1 = most important
std::vector<double> ranks_desc(const std::vector<double>& values) {
  const std::size_t d = values.size();
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  std::vector<double> ranks(d, 0.0);
  std::size_t i = 0;
  while (i < d) {
    std::size_t j = i;
    while (j + 1 < d && values[static_cast<std::size_t>(order[j + 1])] ==
                            values[static_cast<std::size_t>(order[i])]) {
      ++j;
    }
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[static_cast<std::size_t>(order[k])] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RankAggregate rank_aggregate(const std::vector<FeatureImportance>& methods) {
  if (methods.empty()) throw Error("rank_aggregate: no methods given");
  const std::size_t d = methods.front().values.size();
  for (const FeatureImportance& m : methods) {
    if (m.values.size() != d) throw Error("rank_aggregate: importance vectors differ in length");
  }

  RankAggregate out;
  out.rank_sum.assign(d, 0.0);
  for (const FeatureImportance& m : methods) {
    auto ranks = ranks_desc(m.values);
    for (std::size_t i = 0; i < d; ++i) out.rank_sum[i] += ranks[i];
    out.method_ranks.push_back(std::move(ranks));
  }
  out.order.resize(d);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
    return out.rank_sum[static_cast<std::size_t>(a)] < out.rank_sum[static_cast<std::size_t>(b)];
  });
  return out;
}

}  // namespace gnnx
