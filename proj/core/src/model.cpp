#include "gnnx/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gnnx/error.hpp"
#include "gnnx/rng.hpp"

namespace gnnx {

using nlohmann::json;

void GnnConfig::validate() const {
  if (layer_dims.size() < 2) throw Error("config: layer_dims needs input and at least one layer");
  for (int d : layer_dims) {
    if (d < 1) throw Error("config: layer dimensions must be >= 1");
  }
  if (class_count < 1) throw Error("config: class_count must be >= 1");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (!(lr_initial > 0.0)) throw Error("config: learning rate must be positive");
  if (lr_halving_period < 1) throw Error("config: lr halving period must be >= 1");
}

namespace {

DenseMatrix glorot(Rng& rng, std::size_t rows, std::size_t cols, double fan_in, double fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  DenseMatrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-a, a);
  return m;
}

}  // namespace

GnnModel init_model(const GnnConfig& config) {
  config.validate();
  Rng rng(config.seed);
  GnnModel model;
  model.config = config;
  const int layers = config.num_layers();
  for (int l = 1; l <= layers; ++l) {
    const auto din = static_cast<std::size_t>(config.layer_dims[static_cast<std::size_t>(l - 1)]);
    const auto dout = static_cast<std::size_t>(config.layer_dims[static_cast<std::size_t>(l)]);
    LayerParams p;
    p.w_self = glorot(rng, din, dout, static_cast<double>(din), static_cast<double>(dout));
    p.w_msg = glorot(rng, din, dout, static_cast<double>(din), static_cast<double>(dout));
    if (config.gate == GateKind::Gru) {
      GruParams g;
      const double fan = static_cast<double>(dout);
      g.wr = glorot(rng, dout, dout, fan, fan);
      g.ur = glorot(rng, dout, dout, fan, fan);
      g.br = DenseMatrix(1, dout);
      g.wz = glorot(rng, dout, dout, fan, fan);
      g.uz = glorot(rng, dout, dout, fan, fan);
      g.bz = DenseMatrix(1, dout);
      g.wn = glorot(rng, dout, dout, fan, fan);
      g.un = glorot(rng, dout, dout, fan, fan);
      g.bn = DenseMatrix(1, dout);
      if (din != dout) {
        g.proj = glorot(rng, din, dout, static_cast<double>(din), static_cast<double>(dout));
      }
      p.gru = std::move(g);
    }
    if (config.mode == GnnMode::TypeII) {
      p.embed_a = glorot(rng, din, dout, 1.0, static_cast<double>(din * dout));
      p.embed_b = glorot(rng, din, dout, static_cast<double>(din), static_cast<double>(dout));
    }
    model.layers.push_back(std::move(p));
  }
  const auto dl = static_cast<std::size_t>(config.layer_dims.back());
  const auto c = static_cast<std::size_t>(config.class_count);
  model.head_w = glorot(rng, dl, c, static_cast<double>(dl), static_cast<double>(c));
  model.head_b = DenseMatrix(1, c);
  return model;
}

std::vector<DenseMatrix*> model_parameters(GnnModel& model) {
  std::vector<DenseMatrix*> out;
  for (LayerParams& p : model.layers) {
    out.push_back(&p.w_self);
    out.push_back(&p.w_msg);
    if (p.gru) {
      GruParams& g = *p.gru;
      for (DenseMatrix* m : {&g.wr, &g.ur, &g.br, &g.wz, &g.uz, &g.bz, &g.wn, &g.un, &g.bn}) {
        out.push_back(m);
      }
      if (g.proj) out.push_back(&*g.proj);
    }
    if (p.embed_a) out.push_back(&*p.embed_a);
    if (p.embed_b) out.push_back(&*p.embed_b);
  }
  out.push_back(&model.head_w);
  out.push_back(&model.head_b);
  return out;
}

TapedModel bind_model(Tape& tape, const GnnModel& model) {
  TapedModel tm;
  tm.model = &model;
  for (const LayerParams& p : model.layers) {
    TapedModel::Layer layer;
    layer.w_self = tape.leaf(p.w_self);
    tm.param_ids.push_back(layer.w_self);
    layer.w_msg = tape.leaf(p.w_msg);
    tm.param_ids.push_back(layer.w_msg);
    if (p.gru) {
      const GruParams& g = *p.gru;
      layer.wr = tape.leaf(g.wr);
      layer.ur = tape.leaf(g.ur);
      layer.br = tape.leaf(g.br);
      layer.wz = tape.leaf(g.wz);
      layer.uz = tape.leaf(g.uz);
      layer.bz = tape.leaf(g.bz);
      layer.wn = tape.leaf(g.wn);
      layer.un = tape.leaf(g.un);
      layer.bn = tape.leaf(g.bn);
      for (int id : {layer.wr, layer.ur, layer.br, layer.wz, layer.uz, layer.bz, layer.wn,
                     layer.un, layer.bn}) {
        tm.param_ids.push_back(id);
      }
      if (g.proj) {
        layer.proj = tape.leaf(*g.proj);
        tm.param_ids.push_back(layer.proj);
      }
    }
    if (p.embed_a) {
      layer.embed_a = tape.leaf(*p.embed_a);
      tm.param_ids.push_back(layer.embed_a);
    }
    if (p.embed_b) {
      layer.embed_b = tape.leaf(*p.embed_b);
      tm.param_ids.push_back(layer.embed_b);
    }
    tm.layers.push_back(layer);
  }
  tm.head_w = tape.leaf(model.head_w);
  tm.param_ids.push_back(tm.head_w);
  tm.head_b = tape.leaf(model.head_b);
  tm.param_ids.push_back(tm.head_b);
  return tm;
}

namespace {

int onehot_col(Tape& tape, int size, int index) {
  DenseMatrix m(static_cast<std::size_t>(size), 1);
  m.data[static_cast<std::size_t>(index)] = 1.0;
  return tape.leaf(std::move(m));
}

// GRU cell: r,z gates then candidate, h' = z*h + (1-z)*n
int gru_cell(Tape& tape, const TapedModel::Layer& lp, int x, int h, int ones_row) {
  const int r = tape.sigmoid(tape.add({tape.matmul(x, lp.wr), tape.matmul(h, lp.ur), lp.br}));
  const int z = tape.sigmoid(tape.add({tape.matmul(x, lp.wz), tape.matmul(h, lp.uz), lp.bz}));
  const int n = tape.tanh(
      tape.add({tape.matmul(x, lp.wn), tape.mul(r, tape.matmul(h, lp.un)), lp.bn}));
  const int one_minus_z = tape.add(ones_row, tape.scale(z, -1.0));
  return tape.add(tape.mul(z, h), tape.mul(one_minus_z, n));
}

}  // namespace

std::vector<int> taped_logits(Tape& tape, const TapedModel& tm, const WeightedDigraph& graph,
                              const ForwardHooks& hooks, std::span<const int> only_nodes) {
  const GnnConfig& config = tm.model->config;
  const int n = graph.node_count;
  if (static_cast<int>(graph.features.rows) != n) {
    throw Error("forward: feature rows do not match node count");
  }

  std::vector<int> h(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) h[static_cast<std::size_t>(v)] = hooks.feature_row(tape, v);

  const int layers = config.num_layers();
  for (int l = 0; l < layers; ++l) {
    const TapedModel::Layer& lp = tm.layers[static_cast<std::size_t>(l)];
    const auto dout = static_cast<std::size_t>(config.layer_dims[static_cast<std::size_t>(l + 1)]);
    int ones_row = -1;
    if (config.gate == GateKind::Gru) ones_row = tape.leaf(DenseMatrix(1, dout, 1.0));

    // Type I messages depend only on the source node
    std::vector<int> msgs;
    if (config.mode == GnnMode::TypeI) {
      msgs.resize(static_cast<std::size_t>(n), -1);
      for (int v = 0; v < n; ++v) {
        msgs[static_cast<std::size_t>(v)] = tape.matmul(h[static_cast<std::size_t>(v)], lp.w_msg);
      }
    }

    std::vector<int> next(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
      const auto& incoming = graph.in_arcs[static_cast<std::size_t>(u)];
      int agg = -1;
      if (!incoming.empty()) {
        if (config.mode == GnnMode::TypeI) {
          const int coef = hooks.coef_row(tape, u, incoming);
          if (config.gate == GateKind::Sum) {
            std::vector<int> rows;
            rows.reserve(incoming.size());
            for (int a : incoming) {
              rows.push_back(msgs[static_cast<std::size_t>(graph.arcs[static_cast<std::size_t>(a)].src)]);
            }
            agg = tape.matmul(coef, tape.concat(std::move(rows), 0));
          } else {
            const int hp = lp.proj >= 0 ? tape.matmul(h[static_cast<std::size_t>(u)], lp.proj)
                                        : h[static_cast<std::size_t>(u)];
            std::vector<int> outs;
            outs.reserve(incoming.size());
            for (std::size_t i = 0; i < incoming.size(); ++i) {
              const int wi =
                  tape.matmul(coef, onehot_col(tape, static_cast<int>(incoming.size()),
                                               static_cast<int>(i)));
              const int src = graph.arcs[static_cast<std::size_t>(incoming[i])].src;
              const int x = tape.matmul(wi, msgs[static_cast<std::size_t>(src)]);
              outs.push_back(gru_cell(tape, lp, x, hp, ones_row));
            }
            agg = tape.add(std::move(outs));
          }
        } else {  // Type II: per-arc transform of the source embedding
          const int hp = config.gate == GateKind::Gru
                             ? (lp.proj >= 0 ? tape.matmul(h[static_cast<std::size_t>(u)], lp.proj)
                                             : h[static_cast<std::size_t>(u)])
                             : -1;
          std::vector<int> outs;
          outs.reserve(incoming.size());
          for (int a : incoming) {
            const Arc& arc = graph.arcs[static_cast<std::size_t>(a)];
            int ft;
            const int weight_node = hooks.arc_weight ? hooks.arc_weight(tape, a) : -1;
            if (weight_node < 0) {
              ft = tape.add(tape.scale(lp.embed_a, arc.weight), lp.embed_b);
            } else {
              const auto din = tape.value(lp.embed_a).rows;
              const int col = tape.matmul(tape.leaf(DenseMatrix(din, 1, 1.0)), weight_node);
              const int mat = tape.matmul(col, tape.leaf(DenseMatrix(1, dout, 1.0)));
              ft = tape.add(tape.mul(mat, lp.embed_a), lp.embed_b);
            }
            const int m = tape.matmul(h[static_cast<std::size_t>(arc.src)], ft);
            outs.push_back(config.gate == GateKind::Gru ? gru_cell(tape, lp, m, hp, ones_row)
                                                        : m);
          }
          agg = tape.add(std::move(outs));
        }
      }
      const int self = tape.matmul(h[static_cast<std::size_t>(u)], lp.w_self);
      next[static_cast<std::size_t>(u)] = tape.relu(agg >= 0 ? tape.add(self, agg) : self);
    }
    h = std::move(next);
  }

  std::vector<char> wanted(static_cast<std::size_t>(n), only_nodes.empty() ? 1 : 0);
  for (int u : only_nodes) wanted[static_cast<std::size_t>(u)] = 1;
  std::vector<int> logits(static_cast<std::size_t>(n), -1);
  for (int u = 0; u < n; ++u) {
    if (wanted[static_cast<std::size_t>(u)]) {
      logits[static_cast<std::size_t>(u)] =
          tape.add(tape.matmul(h[static_cast<std::size_t>(u)], tm.head_w), tm.head_b);
    }
  }
  return logits;
}

ForwardHooks plain_hooks(const WeightedDigraph& graph, const DenseMatrix& features,
                         const std::vector<double>* arc_weight_override) {
  std::vector<double> coefs =
      arc_weight_override ? *arc_weight_override : in_degree_normalize(graph);
  ForwardHooks hooks;
  hooks.feature_row = [&features](Tape& tape, int v) {
    return tape.leaf(features.row(static_cast<std::size_t>(v)));
  };
  hooks.coef_row = [coefs = std::move(coefs)](Tape& tape, int, const std::vector<int>& in_arcs) {
    DenseMatrix row(1, in_arcs.size());
    for (std::size_t i = 0; i < in_arcs.size(); ++i) {
      row.data[i] = coefs[static_cast<std::size_t>(in_arcs[i])];
    }
    return tape.leaf(std::move(row));
  };
  return hooks;
}

namespace {

DenseMatrix probs_from_logits(Tape& tape, const std::vector<int>& logits, int class_count) {
  DenseMatrix out(logits.size(), static_cast<std::size_t>(class_count));
  for (std::size_t u = 0; u < logits.size(); ++u) {
    const int p = tape.softmax_rows(logits[u]);
    const DenseMatrix& row = tape.value(p);
    for (std::size_t c = 0; c < row.cols; ++c) out.at(u, c) = row.data[c];
  }
  return out;
}

void validate_override(const WeightedDigraph& graph, const std::vector<double>& override_weights) {
  if (override_weights.size() != graph.arcs.size()) {
    throw Error("forward: override has " + std::to_string(override_weights.size()) +
                " entries for " + std::to_string(graph.arcs.size()) + " arcs");
  }
  for (double w : override_weights) {
    if (w < 0.0 || !std::isfinite(w)) throw Error("forward: override entries must be >= 0");
  }
  for (int u = 0; u < graph.node_count; ++u) {
    const auto& incoming = graph.in_arcs[static_cast<std::size_t>(u)];
    if (incoming.empty()) continue;
    double s = 0.0;
    for (int a : incoming) s += override_weights[static_cast<std::size_t>(a)];
    if (std::abs(s - 1.0) > 1e-9) {
      throw Error("forward: override weights at node " + std::to_string(u) + " sum to " +
                  format_double(s) + ", expected 1");
    }
  }
}

}  // namespace

DenseMatrix forward_type1(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features,
                          const std::vector<double>* arc_weight_override) {
  if (model.config.mode != GnnMode::TypeI) throw Error("forward_type1: model is not Type I");
  if (arc_weight_override) validate_override(graph, *arc_weight_override);
  Tape tape;
  TapedModel tm = bind_model(tape, model);
  const auto logits = taped_logits(tape, tm, graph, plain_hooks(graph, features, arc_weight_override));
  return probs_from_logits(tape, logits, model.config.class_count);
}

DenseMatrix forward_type2(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features) {
  if (model.config.mode != GnnMode::TypeII) throw Error("forward_type2: model is not Type II");
  Tape tape;
  TapedModel tm = bind_model(tape, model);
  const auto logits = taped_logits(tape, tm, graph, plain_hooks(graph, features));
  return probs_from_logits(tape, logits, model.config.class_count);
}

DenseMatrix forward_probs(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features,
                          const std::vector<double>* arc_weight_override) {
  return model.config.mode == GnnMode::TypeI
             ? forward_type1(model, graph, features, arc_weight_override)
             : forward_type2(model, graph, features);
}

double accuracy(const DenseMatrix& probs, const std::vector<int>& labels,
                std::span<const int> ids) {
  if (ids.empty()) return 0.0;
  int correct = 0;
  for (int u : ids) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c) {
      if (probs.at(static_cast<std::size_t>(u), c) > probs.at(static_cast<std::size_t>(u), best)) {
        best = c;
      }
    }
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(u)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

TrainResult train(const GnnConfig& config, const WeightedDigraph& graph,
                  std::span<const int> train_ids, std::span<const int> test_ids) {
  config.validate();
  if (!graph.labels) throw Error("train: graph has no labels");
  if (train_ids.empty() || test_ids.empty()) throw Error("train: empty split");
  std::vector<char> in_train(static_cast<std::size_t>(graph.node_count), 0);
  for (int u : train_ids) in_train[static_cast<std::size_t>(u)] = 1;
  for (int u : test_ids) {
    if (in_train[static_cast<std::size_t>(u)]) {
      throw Error("train: node " + std::to_string(u) + " appears in both splits");
    }
  }
  if (static_cast<int>(graph.features.cols) != config.layer_dims.front()) {
    throw Error("train: feature dimension does not match layer_dims[0]");
  }

  TrainResult result;
  result.model = init_model(config);
  const std::vector<int>& labels = *graph.labels;

  auto epoch_pass = [&](bool update, int epoch) {
    Tape tape;
    TapedModel tm = bind_model(tape, result.model);
    const auto logits = taped_logits(tape, tm, graph, plain_hooks(graph, graph.features));
    const DenseMatrix probs = probs_from_logits(tape, logits, config.class_count);

    if (update) {
      std::vector<int> ces;
      ces.reserve(train_ids.size());
      for (int u : train_ids) {
        DenseMatrix onehot(1, static_cast<std::size_t>(config.class_count));
        onehot.data[static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])] = 1.0;
        const int logp = tape.log(tape.softmax_rows(logits[static_cast<std::size_t>(u)]));
        ces.push_back(tape.sum(tape.mul(logp, tape.leaf(std::move(onehot)))));
      }
      const int loss =
          tape.scale(tape.add(std::move(ces)), -1.0 / static_cast<double>(train_ids.size()));
      const double loss_value = tape.value(loss).data[0];
      if (!std::isfinite(loss_value)) {
        throw Error("train: loss diverged at epoch " + std::to_string(epoch));
      }
      result.loss_history.push_back(loss_value);
      result.train_acc_history.push_back(accuracy(probs, labels, train_ids));
      result.test_acc_history.push_back(accuracy(probs, labels, test_ids));

      auto grads = tape.backward(loss);
      const double lr = config.lr_initial * std::pow(0.5, epoch / config.lr_halving_period);
      auto params = model_parameters(result.model);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto it = grads.find(tm.param_ids[i]);
        if (it == grads.end()) continue;
        DenseMatrix& p = *params[i];
        for (std::size_t j = 0; j < p.size(); ++j) p.data[j] -= lr * it->second.data[j];
      }
    } else {
      result.final_train_acc = accuracy(probs, labels, train_ids);
      result.final_test_acc = accuracy(probs, labels, test_ids);
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      epoch_pass(true, epoch);
    } catch (const Error& e) {
      const std::string what = e.what();
      if (what.find("non-finite") != std::string::npos) {
        throw Error("train: loss diverged at epoch " + std::to_string(epoch) + " (" + what + ")");
      }
      throw;
    }
  }
  epoch_pass(false, config.epochs);
  return result;
}

// --- checkpoint ---

namespace {

constexpr int kCheckpointVersion = 1;

json matrix_to_json(const DenseMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

DenseMatrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error("checkpoint: matrix '" + name + "' malformed");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  DenseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw Error("checkpoint: matrix '" + name + "' has ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw Error("checkpoint: matrix '" + name + "' has non-numeric entry");
      m.at(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols,
                   const std::string& name) {
  if (m.rows != rows || m.cols != cols) {
    throw Error("checkpoint: '" + name + "' has shape " + m.shape_str() + ", expected " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

void save_checkpoint(const GnnModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = kCheckpointVersion;
  json cfg;
  cfg["mode"] = model.config.mode == GnnMode::TypeI ? "type1" : "type2";
  cfg["gate"] = model.config.gate == GateKind::Sum ? "sum" : "gru";
  cfg["layer_dims"] = model.config.layer_dims;
  cfg["class_count"] = model.config.class_count;
  cfg["epochs"] = model.config.epochs;
  cfg["lr_initial"] = model.config.lr_initial;
  cfg["lr_halving_period"] = model.config.lr_halving_period;
  cfg["seed"] = model.config.seed;
  doc["config"] = std::move(cfg);

  json layers = json::array();
  for (const LayerParams& p : model.layers) {
    json layer;
    layer["w_self"] = matrix_to_json(p.w_self);
    layer["w_msg"] = matrix_to_json(p.w_msg);
    if (p.gru) {
      const GruParams& g = *p.gru;
      json gj;
      gj["wr"] = matrix_to_json(g.wr);
      gj["ur"] = matrix_to_json(g.ur);
      gj["br"] = matrix_to_json(g.br);
      gj["wz"] = matrix_to_json(g.wz);
      gj["uz"] = matrix_to_json(g.uz);
      gj["bz"] = matrix_to_json(g.bz);
      gj["wn"] = matrix_to_json(g.wn);
      gj["un"] = matrix_to_json(g.un);
      gj["bn"] = matrix_to_json(g.bn);
      if (g.proj) gj["proj"] = matrix_to_json(*g.proj);
      layer["gru"] = std::move(gj);
    }
    if (p.embed_a) layer["embed_a"] = matrix_to_json(*p.embed_a);
    if (p.embed_b) layer["embed_b"] = matrix_to_json(*p.embed_b);
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  doc["head_w"] = matrix_to_json(model.head_w);
  doc["head_b"] = matrix_to_json(model.head_b);

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

GnnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("checkpoint " + path.string() + " malformed: " + e.what());
  }
  try {
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != kCheckpointVersion) {
      throw Error("checkpoint " + path.string() + ": version mismatch (expected " +
                  std::to_string(kCheckpointVersion) + ")");
    }
    const json& cfg = doc.at("config");
    GnnModel model;
    const std::string mode = cfg.at("mode").get<std::string>();
    if (mode == "type1") {
      model.config.mode = GnnMode::TypeI;
    } else if (mode == "type2") {
      model.config.mode = GnnMode::TypeII;
    } else {
      throw Error("checkpoint: unknown mode '" + mode + "'");
    }
    const std::string gate = cfg.at("gate").get<std::string>();
    if (gate == "sum") {
      model.config.gate = GateKind::Sum;
    } else if (gate == "gru") {
      model.config.gate = GateKind::Gru;
    } else {
      throw Error("checkpoint: unknown gate '" + gate + "'");
    }
    model.config.layer_dims = cfg.at("layer_dims").get<std::vector<int>>();
    model.config.class_count = cfg.at("class_count").get<int>();
    model.config.epochs = cfg.at("epochs").get<int>();
    model.config.lr_initial = cfg.at("lr_initial").get<double>();
    model.config.lr_halving_period = cfg.at("lr_halving_period").get<int>();
    model.config.seed = cfg.at("seed").get<std::uint64_t>();
    model.config.validate();

    const json& layers = doc.at("layers");
    if (!layers.is_array() || static_cast<int>(layers.size()) != model.config.num_layers()) {
      throw Error("checkpoint: layer count does not match layer_dims");
    }
    for (int l = 0; l < model.config.num_layers(); ++l) {
      const json& lj = layers[static_cast<std::size_t>(l)];
      const auto din = static_cast<std::size_t>(model.config.layer_dims[static_cast<std::size_t>(l)]);
      const auto dout = static_cast<std::size_t>(model.config.layer_dims[static_cast<std::size_t>(l + 1)]);
      LayerParams p;
      p.w_self = matrix_from_json(lj.at("w_self"), "w_self");
      require_shape(p.w_self, din, dout, "w_self");
      p.w_msg = matrix_from_json(lj.at("w_msg"), "w_msg");
      require_shape(p.w_msg, din, dout, "w_msg");
      if (model.config.gate == GateKind::Gru) {
        const json& gj = lj.at("gru");
        GruParams g;
        g.wr = matrix_from_json(gj.at("wr"), "gru.wr");
        g.ur = matrix_from_json(gj.at("ur"), "gru.ur");
        g.br = matrix_from_json(gj.at("br"), "gru.br");
        g.wz = matrix_from_json(gj.at("wz"), "gru.wz");
        g.uz = matrix_from_json(gj.at("uz"), "gru.uz");
        g.bz = matrix_from_json(gj.at("bz"), "gru.bz");
        g.wn = matrix_from_json(gj.at("wn"), "gru.wn");
        g.un = matrix_from_json(gj.at("un"), "gru.un");
        g.bn = matrix_from_json(gj.at("bn"), "gru.bn");
        for (const DenseMatrix* m : {&g.wr, &g.ur, &g.wz, &g.uz, &g.wn, &g.un}) {
          require_shape(*m, dout, dout, "gru weight");
        }
        for (const DenseMatrix* m : {&g.br, &g.bz, &g.bn}) require_shape(*m, 1, dout, "gru bias");
        if (din != dout) {
          g.proj = matrix_from_json(gj.at("proj"), "gru.proj");
          require_shape(*g.proj, din, dout, "gru.proj");
        }
        p.gru = std::move(g);
      }
      if (model.config.mode == GnnMode::TypeII) {
        p.embed_a = matrix_from_json(lj.at("embed_a"), "embed_a");
        require_shape(*p.embed_a, din, dout, "embed_a");
        p.embed_b = matrix_from_json(lj.at("embed_b"), "embed_b");
        require_shape(*p.embed_b, din, dout, "embed_b");
      }
      model.layers.push_back(std::move(p));
    }
    model.head_w = matrix_from_json(doc.at("head_w"), "head_w");
    require_shape(model.head_w, static_cast<std::size_t>(model.config.layer_dims.back()),
                  static_cast<std::size_t>(model.config.class_count), "head_w");
    model.head_b = matrix_from_json(doc.at("head_b"), "head_b");
    require_shape(model.head_b, 1, static_cast<std::size_t>(model.config.class_count), "head_b");
    return model;
  } catch (const json::exception& e) {
    throw Error("checkpoint " + path.string() + " malformed: " + e.what());
  }
}

}  // namespace gnnx
