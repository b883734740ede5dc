#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gnnx/graph.hpp"
#include "gnnx/matrix.hpp"
#include "gnnx/tape.hpp"

namespace gnnx {

enum class GnnMode { TypeI, TypeII };
enum class GateKind { Sum, Gru };

struct GnnConfig {
  GnnMode mode = GnnMode::TypeI;
  GateKind gate = GateKind::Sum;
  std::vector<int> layer_dims;  // [input dim, hidden..., output dim], length L+1
  int class_count = 0;
  int epochs = 300;
  double lr_initial = 0.1;
  int lr_halving_period = 100;
  std::uint64_t seed = 1;

  int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
  void validate() const;
};

// Gated aggregation parameters. The hidden state is the destination node's
// previous-layer embedding projected to the layer width (identity when the
// widths already match).
struct GruParams {
  DenseMatrix wr, ur, br;
  DenseMatrix wz, uz, bz;
  DenseMatrix wn, un, bn;
  std::optional<DenseMatrix> proj;
};

struct LayerParams {
  DenseMatrix w_self;  // d(l-1) x d(l)
  DenseMatrix w_msg;   // d(l-1) x d(l)
  std::optional<GruParams> gru;
  // Type II: per-arc transform f(e) = embed_a * e + embed_b, both d(l-1) x d(l)
  std::optional<DenseMatrix> embed_a;
  std::optional<DenseMatrix> embed_b;
};

struct GnnModel {
  GnnConfig config;
  std::vector<LayerParams> layers;
  DenseMatrix head_w;  // d(L) x C
  DenseMatrix head_b;  // 1 x C
};

GnnModel init_model(const GnnConfig& config);

// Mutable views of every parameter matrix in a fixed traversal order.
std::vector<DenseMatrix*> model_parameters(GnnModel& model);

// --- tape-side forward machinery (shared by training and the explainers) ---

struct TapedModel {
  std::vector<int> param_ids;  // leaf ids, aligned with model_parameters order
  struct Layer {
    int w_self = -1, w_msg = -1;
    int wr = -1, ur = -1, br = -1, wz = -1, uz = -1, bz = -1, wn = -1, un = -1, bn = -1;
    int proj = -1;
    int embed_a = -1, embed_b = -1;
  };
  std::vector<Layer> layers;
  int head_w = -1, head_b = -1;
  const GnnModel* model = nullptr;
};

TapedModel bind_model(Tape& tape, const GnnModel& model);

struct ForwardHooks {
  // 1 x d0 feature row for local node v
  std::function<int(Tape&, int v)> feature_row;
  // Type I: 1 x indeg(u) row of aggregation coefficients for node u
  std::function<int(Tape&, int u, const std::vector<int>& in_arcs)> coef_row;
  // Type II: 1x1 node carrying the raw weight of arc `a`, or -1 to use the
  // stored weight as a constant
  std::function<int(Tape&, int a)> arc_weight;
};

// Runs the full propagation on `graph` and returns per-node 1xC logit node
// ids. When `only_nodes` is nonempty the classifier head is evaluated just
// for those nodes (-1 elsewhere).
std::vector<int> taped_logits(Tape& tape, const TapedModel& tm, const WeightedDigraph& graph,
                              const ForwardHooks& hooks, std::span<const int> only_nodes = {});

// Constant aggregation coefficients from in-degree normalized weights (or a
// caller-supplied normalized override).
ForwardHooks plain_hooks(const WeightedDigraph& graph, const DenseMatrix& features,
                         const std::vector<double>* arc_weight_override = nullptr);

// --- user-facing forwards ---

// Per-node class probabilities (N x C). The override, when given, replaces
// the in-degree normalized weights; entries must be nonnegative and sum to 1
// over each node's incoming arcs.
DenseMatrix forward_type1(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features,
                          const std::vector<double>* arc_weight_override = nullptr);

DenseMatrix forward_type2(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features);

DenseMatrix forward_probs(const GnnModel& model, const WeightedDigraph& graph,
                          const DenseMatrix& features,
                          const std::vector<double>* arc_weight_override = nullptr);

// --- training ---

struct TrainResult {
  GnnModel model;
  std::vector<double> loss_history;       // per epoch
  std::vector<double> train_acc_history;  // per epoch, pre-update
  std::vector<double> test_acc_history;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
};

// Full-batch gradient descent on the mean training cross-entropy, with the
// step size halved every `lr_halving_period` epochs. Deterministic given the
// config seed.
TrainResult train(const GnnConfig& config, const WeightedDigraph& graph,
                  std::span<const int> train_ids, std::span<const int> test_ids);

double accuracy(const DenseMatrix& probs, const std::vector<int>& labels,
                std::span<const int> ids);

// --- checkpointing (versioned JSON, bit-exact round trip) ---

void save_checkpoint(const GnnModel& model, const std::filesystem::path& path);
GnnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gnnx
