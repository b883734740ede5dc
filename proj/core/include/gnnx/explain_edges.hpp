#pragma once

#include <cstdint>
#include <vector>

#include "gnnx/graph.hpp"
#include "gnnx/model.hpp"

namespace gnnx {

enum class EdgeMethod { Mmi, Ggd, BaselineSigmoid };

const char* edge_method_name(EdgeMethod m);

struct EdgeMaskHyper {
  int iterations = 300;
  double lr = 0.1;
  double lambda_entropy = 0.1;
  double lambda_size = 0.005;
  std::uint64_t seed = 1;
};

struct EdgeMaskResult {
  std::vector<double> mask;          // in [0,1], aligned with comp-graph arcs
  std::vector<double> loss_history;  // one entry per iteration
};

// Max-normalized per-arc salience; all_zero marks a degenerate gradient.
struct EdgeSalience {
  std::vector<double> values;
  EdgeMethod method = EdgeMethod::Ggd;
  bool all_zero = false;
};

// Softmax of mask*weight over each node's incoming arcs; usable directly as
// an arc-weight override in forward_type1.
std::vector<double> renormalize_mask(const std::vector<double>& mask,
                                     const ComputationalGraph& cg);

// Cross-entropy of the masked center prediction plus the entropy of the
// renormalized incoming weights at the center and a mean-mask size penalty.
double mask_loss(const DenseMatrix& center_probs, int label, const std::vector<double>& mask,
                 const ComputationalGraph& cg, double lambda_entropy, double lambda_size);

// Projected gradient descent on an edge mask against the frozen model
// (the model itself is never touched).
EdgeMaskResult mmi_edge_mask(const GnnModel& model, const ComputationalGraph& cg, int label,
                             const EdgeMaskHyper& hyper,
                             const std::vector<double>* initial_mask = nullptr);

// Final per-arc importance used for selection: mask value times edge weight.
std::vector<double> mmi_edge_scores(const std::vector<double>& mask,
                                    const ComputationalGraph& cg);

// ReLU of the true-class logit gradient w.r.t. each raw edge weight,
// max-normalized.
EdgeSalience ggd_edge_salience(const GnnModel& model, const ComputationalGraph& cg, int label);

// Unconstrained mask squashed through a sigmoid and used directly as the
// aggregation coefficients (no renormalization, no weight product); plain
// cross-entropy objective with the same iteration count and step size.
EdgeSalience baseline_sigmoid_mask(const GnnModel& model, const ComputationalGraph& cg, int label,
                                   const EdgeMaskHyper& hyper);

}  // namespace gnnx
