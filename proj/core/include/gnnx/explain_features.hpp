#pragma once

#include <cstdint>
#include <vector>

#include "gnnx/graph.hpp"
#include "gnnx/model.hpp"

namespace gnnx {

enum class FeatureMethod { Mmi, Pda, Ggd };

const char* feature_method_name(FeatureMethod m);

struct FeatureImportance {
  std::vector<double> values;  // length d, nonnegative
  FeatureMethod method = FeatureMethod::Ggd;
  bool all_zero = false;
};

struct FeatureMaskHyper {
  int iterations = 300;
  double lr = 0.1;
  int budget = -1;              // < 0 means ceil(d/2)
  double lambda_budget = 0.1;
  std::uint64_t seed = 1;
};

struct FeatureMaskResult {
  std::vector<double> mask;      // length d, in [0,1]
  std::vector<double> loss_history;
  DenseMatrix z;                 // the reparametrization sample, drawn once
};

// Per-feature Gaussian resample of the subgraph features: column i is drawn
// from Normal(mean_i, std_i) computed over the subgraph's nodes.
DenseMatrix sample_reparam_z(const DenseMatrix& xs, std::uint64_t seed);

// Projected gradient descent on a per-feature mask broadcast over the
// subgraph's nodes, with features reparametrized as Z + (X - Z) * mask and a
// soft budget on the mask total.
FeatureMaskResult mmi_feature_mask(const GnnModel& model, const LocalGraph& gs, int label,
                                   const FeatureMaskHyper& hyper,
                                   const std::vector<double>* initial_mask = nullptr);

// Training feature rows grouped by class; PDA marginalizes single features
// of the explained node by resampling from this pool with class weights
// inversely proportional to class size.
struct TrainingPool {
  const DenseMatrix* features = nullptr;       // parent feature matrix
  std::vector<std::vector<int>> ids_by_class;  // training node ids per class
};

struct PdaResult {
  FeatureImportance importance;
  std::vector<int> excluded_classes;  // empty training classes, skipped
};

PdaResult pda(const GnnModel& model, const LocalGraph& gs, int label, const TrainingPool& pool,
              int samples, std::uint64_t seed);

// ReLU of the true-class logit gradient w.r.t. every node feature in the
// computational graph, summed over nodes and max-normalized.
FeatureImportance ggd_feature_salience(const GnnModel& model, const ComputationalGraph& cg,
                                       int label);

// Features ordered by summed per-method rank (rank 1 = most important,
// ties averaged), ascending; ties in the sum broken by feature index.
struct RankAggregate {
  std::vector<int> order;                       // feature indices, best first
  std::vector<double> rank_sum;                 // indexed by feature
  std::vector<std::vector<double>> method_ranks;  // [method][feature]
};

RankAggregate rank_aggregate(const std::vector<FeatureImportance>& methods);

}  // namespace gnnx
