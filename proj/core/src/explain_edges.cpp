#include "gnnx/explain_edges.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gnnx/error.hpp"
#include "gnnx/rng.hpp"

namespace gnnx {

const char* edge_method_name(EdgeMethod m) {
  switch (m) {
    case EdgeMethod::Mmi: return "mmi";
    case EdgeMethod::Ggd: return "ggd";
    case EdgeMethod::BaselineSigmoid: return "baseline";
  }
  return "?";
}

std::vector<double> renormalize_mask(const std::vector<double>& mask,
                                     const ComputationalGraph& cg) {
  const WeightedDigraph& g = cg.local;
  if (mask.size() != g.arcs.size()) {
    throw Error("renormalize_mask: mask size does not match arc count");
  }
  std::vector<double> omega(mask.size(), 0.0);
  for (int u = 0; u < g.node_count; ++u) {
    const auto& incoming = g.in_arcs[static_cast<std::size_t>(u)];
    if (incoming.empty()) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (int a : incoming) {
      mx = std::max(mx, mask[static_cast<std::size_t>(a)] * g.arcs[static_cast<std::size_t>(a)].weight);
    }
    double denom = 0.0;
    for (int a : incoming) {
      const double e = std::exp(mask[static_cast<std::size_t>(a)] * g.arcs[static_cast<std::size_t>(a)].weight - mx);
      omega[static_cast<std::size_t>(a)] = e;
      denom += e;
    }
    for (int a : incoming) omega[static_cast<std::size_t>(a)] /= denom;
  }
  return omega;
}

double mask_loss(const DenseMatrix& center_probs, int label, const std::vector<double>& mask,
                 const ComputationalGraph& cg, double lambda_entropy, double lambda_size) {
  if (center_probs.rows != 1) throw Error("mask_loss: prediction must be a probability row");
  if (label < 0 || static_cast<std::size_t>(label) >= center_probs.cols) {
    throw Error("mask_loss: label outside prediction range");
  }
  const double p = std::max(center_probs.data[static_cast<std::size_t>(label)], kLogFloor);
  double loss = -std::log(p);

  if (lambda_entropy != 0.0) {
    const auto omega = renormalize_mask(mask, cg);
    double h = 0.0;
    for (int a : cg.local.in_arcs[static_cast<std::size_t>(cg.center)]) {
      const double w = omega[static_cast<std::size_t>(a)];
      if (w > 0.0) h -= w * std::log(std::max(w, kLogFloor));
    }
    loss += lambda_entropy * h;
  }
  if (lambda_size != 0.0) {
    double total = 0.0;
    for (double m : mask) total += m;
    loss += lambda_size * total / static_cast<double>(mask.size());
  }
  return loss;
}

namespace {

int onehot_col(Tape& tape, int size, int index) {
  DenseMatrix m(static_cast<std::size_t>(size), 1);
  m.data[static_cast<std::size_t>(index)] = 1.0;
  return tape.leaf(std::move(m));
}

// cross-entropy of the center's prediction from its logits node
int center_ce(Tape& tape, int logits, int label, int class_count) {
  DenseMatrix onehot(1, static_cast<std::size_t>(class_count));
  onehot.data[static_cast<std::size_t>(label)] = 1.0;
  const int logp = tape.log(tape.softmax_rows(logits));
  return tape.scale(tape.sum(tape.mul(logp, tape.leaf(std::move(onehot)))), -1.0);
}

void require_type1(const GnnModel& model, const char* who) {
  if (model.config.mode != GnnMode::TypeI) {
    throw Error(std::string(who) + ": requires a Type I model (edge weights filter messages)");
  }
}

void check_label(const GnnModel& model, int label) {
  if (label < 0 || label >= model.config.class_count) {
    throw Error("explain: label " + std::to_string(label) + " outside class range");
  }
}

}  // namespace

EdgeMaskResult mmi_edge_mask(const GnnModel& model, const ComputationalGraph& cg, int label,
                             const EdgeMaskHyper& hyper,
                             const std::vector<double>* initial_mask) {
  require_type1(model, "mmi_edge_mask");
  check_label(model, label);
  const int q = cg.arc_count();
  if (q == 0) throw Error("mmi_edge_mask: nothing to mask (computational graph has no arcs)");
  if (hyper.iterations < 0) throw Error("mmi_edge_mask: iterations must be >= 0");

  EdgeMaskResult result;
  if (initial_mask) {
    if (static_cast<int>(initial_mask->size()) != q) {
      throw Error("mmi_edge_mask: initial mask size does not match arc count");
    }
    result.mask = *initial_mask;
  } else {
    Rng rng(hyper.seed);
    result.mask.resize(static_cast<std::size_t>(q));
    for (double& m : result.mask) m = rng.uniform();
  }

  const WeightedDigraph& g = cg.local;
  const int center[] = {cg.center};
  for (int iter = 0; iter < hyper.iterations; ++iter) {
    Tape tape;
    TapedModel tm = bind_model(tape, model);
    const int mask_leaf = tape.leaf(DenseMatrix::row_vector(result.mask));

    // one renormalized coefficient row per node, shared across layers
    std::map<int, int> coef_cache;
    ForwardHooks hooks;
    hooks.feature_row = [&g](Tape& t, int v) {
      return t.leaf(g.features.row(static_cast<std::size_t>(v)));
    };
    hooks.coef_row = [&](Tape& t, int u, const std::vector<int>& in_arcs) {
      auto it = coef_cache.find(u);
      if (it != coef_cache.end()) return it->second;
      std::vector<int> scaled;
      scaled.reserve(in_arcs.size());
      for (int a : in_arcs) {
        const int mi = t.matmul(mask_leaf, onehot_col(t, q, a));
        scaled.push_back(t.scale(mi, g.arcs[static_cast<std::size_t>(a)].weight));
      }
      const int row = t.softmax_rows(t.concat(std::move(scaled), 1));
      coef_cache.emplace(u, row);
      return row;
    };

    const auto logits = taped_logits(tape, tm, g, hooks, center);
    int loss = center_ce(tape, logits[static_cast<std::size_t>(cg.center)], label,
                         model.config.class_count);
    if (hyper.lambda_entropy != 0.0) {
      const int row = hooks.coef_row(tape, cg.center, g.in_arcs[static_cast<std::size_t>(cg.center)]);
      const int entropy = tape.scale(tape.sum(tape.mul(row, tape.log(row))), -1.0);
      loss = tape.add(loss, tape.scale(entropy, hyper.lambda_entropy));
    }
    if (hyper.lambda_size != 0.0) {
      loss = tape.add(loss, tape.scale(tape.sum(mask_leaf),
                                       hyper.lambda_size / static_cast<double>(q)));
    }
    result.loss_history.push_back(tape.value(loss).data[0]);

    auto grads = tape.backward(loss);
    const DenseMatrix& dm = grads.at(mask_leaf);
    for (int i = 0; i < q; ++i) {
      double m = result.mask[static_cast<std::size_t>(i)] - hyper.lr * dm.data[static_cast<std::size_t>(i)];
      result.mask[static_cast<std::size_t>(i)] = std::clamp(m, 0.0, 1.0);
    }
  }
  return result;
}

std::vector<double> mmi_edge_scores(const std::vector<double>& mask,
                                    const ComputationalGraph& cg) {
  if (mask.size() != cg.local.arcs.size()) {
    throw Error("mmi_edge_scores: mask size does not match arc count");
  }
  std::vector<double> scores(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) scores[i] = mask[i] * cg.local.arcs[i].weight;
  return scores;
}

EdgeSalience ggd_edge_salience(const GnnModel& model, const ComputationalGraph& cg, int label) {
  check_label(model, label);
  const int q = cg.arc_count();
  EdgeSalience out;
  out.method = EdgeMethod::Ggd;
  out.values.assign(static_cast<std::size_t>(q), 0.0);
  if (q == 0) {
    out.all_zero = true;
    return out;
  }

  const WeightedDigraph& g = cg.local;
  Tape tape;
  TapedModel tm = bind_model(tape, model);

  std::vector<int> weight_leaves(static_cast<std::size_t>(q));
  for (int a = 0; a < q; ++a) {
    weight_leaves[static_cast<std::size_t>(a)] =
        tape.leaf(DenseMatrix::scalar(g.arcs[static_cast<std::size_t>(a)].weight));
  }

  std::map<int, int> coef_cache;
  ForwardHooks hooks;
  hooks.feature_row = [&g](Tape& t, int v) {
    return t.leaf(g.features.row(static_cast<std::size_t>(v)));
  };
  // in-degree normalization as softmax over log-weights keeps the whole
  // path differentiable w.r.t. the raw weights
  hooks.coef_row = [&](Tape& t, int u, const std::vector<int>& in_arcs) {
    auto it = coef_cache.find(u);
    if (it != coef_cache.end()) return it->second;
    std::vector<int> logs;
    logs.reserve(in_arcs.size());
    for (int a : in_arcs) logs.push_back(t.log(weight_leaves[static_cast<std::size_t>(a)]));
    const int row = t.softmax_rows(t.concat(std::move(logs), 1));
    coef_cache.emplace(u, row);
    return row;
  };
  hooks.arc_weight = [&](Tape&, int a) { return weight_leaves[static_cast<std::size_t>(a)]; };

  const int center[] = {cg.center};
  const auto logits = taped_logits(tape, tm, g, hooks, center);
  const int target = tape.matmul(logits[static_cast<std::size_t>(cg.center)],
                                 onehot_col(tape, model.config.class_count, label));
  auto grads = tape.backward(target);

  double mx = 0.0;
  for (int a = 0; a < q; ++a) {
    auto it = grads.find(weight_leaves[static_cast<std::size_t>(a)]);
    const double v = it == grads.end() ? 0.0 : std::max(0.0, it->second.data[0]);
    out.values[static_cast<std::size_t>(a)] = v;
    mx = std::max(mx, v);
  }
  if (mx == 0.0) {
    out.all_zero = true;
    return out;
  }
  for (double& v : out.values) v /= mx;
  return out;
}

EdgeSalience baseline_sigmoid_mask(const GnnModel& model, const ComputationalGraph& cg, int label,
                                   const EdgeMaskHyper& hyper) {
  require_type1(model, "baseline_sigmoid_mask");
  check_label(model, label);
  const int q = cg.arc_count();
  if (q == 0) throw Error("baseline_sigmoid_mask: nothing to mask (computational graph has no arcs)");

  Rng rng(hyper.seed);
  std::vector<double> mask(static_cast<std::size_t>(q));
  for (double& m : mask) m = rng.uniform();

  const WeightedDigraph& g = cg.local;
  const int center[] = {cg.center};
  for (int iter = 0; iter < hyper.iterations; ++iter) {
    Tape tape;
    TapedModel tm = bind_model(tape, model);
    const int mask_leaf = tape.leaf(DenseMatrix::row_vector(mask));
    const int sig = tape.sigmoid(mask_leaf);

    std::map<int, int> coef_cache;
    ForwardHooks hooks;
    hooks.feature_row = [&g](Tape& t, int v) {
      return t.leaf(g.features.row(static_cast<std::size_t>(v)));
    };
    // sigmoid-bounded mask entries become the aggregation coefficients as-is
    hooks.coef_row = [&](Tape& t, int u, const std::vector<int>& in_arcs) {
      auto it = coef_cache.find(u);
      if (it != coef_cache.end()) return it->second;
      std::vector<int> entries;
      entries.reserve(in_arcs.size());
      for (int a : in_arcs) entries.push_back(t.matmul(sig, onehot_col(t, q, a)));
      const int row = t.concat(std::move(entries), 1);
      coef_cache.emplace(u, row);
      return row;
    };

    const auto logits = taped_logits(tape, tm, g, hooks, center);
    const int loss = center_ce(tape, logits[static_cast<std::size_t>(cg.center)], label,
                               model.config.class_count);
    auto grads = tape.backward(loss);
    const DenseMatrix& dm = grads.at(mask_leaf);
    for (int i = 0; i < q; ++i) mask[static_cast<std::size_t>(i)] -= hyper.lr * dm.data[static_cast<std::size_t>(i)];
  }

  EdgeSalience out;
  out.method = EdgeMethod::BaselineSigmoid;
  out.values.resize(static_cast<std::size_t>(q));
  double mx = 0.0;
  for (int i = 0; i < q; ++i) {
    out.values[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-mask[static_cast<std::size_t>(i)]));
    mx = std::max(mx, out.values[static_cast<std::size_t>(i)]);
  }
  if (mx == 0.0) {
    out.all_zero = true;
  } else {
    for (double& v : out.values) v /= mx;
  }
  return out;
}

}  // namespace gnnx
