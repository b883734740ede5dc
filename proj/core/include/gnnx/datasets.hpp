#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gnnx/graph.hpp"

namespace gnnx {

// --- SynComp: BA skeleton with house motifs, labels from topology ---

struct SynCompParams {
  int ba_nodes = 15;
  int ba_m = 1;
  int motif_count = 10;
  double attach_weight = 0.1;   // shoulder-to-skeleton connection
  double house_weight = 1.0;
  double ba_weight = 1.0;
  double noise_weight = 0.1;
  double noise_fraction = 0.1;  // noise edges = floor(fraction * node count)
  std::uint64_t seed = 1;
};

struct SynCompData {
  WeightedDigraph graph;
  std::vector<int> node_motif;                            // -1 for skeleton nodes
  std::vector<std::vector<std::pair<int, int>>> motif_arcs;  // 12 directed arcs per motif
};

SynCompData gen_syncomp(const SynCompParams& params);

// --- SynNode: sparse BA skeleton, labels carried by one feature ---

struct SynNodeParams {
  int nodes = 60;
  int ba_m = 2;
  int class_count = 4;
  double noise_std = 0.1;
  double label_step = 0.2;  // second feature is s_u + (label+1)*step
  std::uint64_t seed = 1;
};

WeightedDigraph gen_synnode(const SynNodeParams& params);

// --- Bitcoin OTC trust ratings ---

struct RatingRecord {
  int rater = 0;
  int ratee = 0;
  double score = 0.0;  // in [-10,10], never 0
  long long time = 0;
};

// e/20 + 1/2, mapping [-10,10] onto [0,1]
double renormalize_rating(double score);

enum class BitcoinClass { Risky = 0, Trustworthy = 1, Neutral = 2, Unknown = 3 };

// Received-ratings rules, applied in precedence order: any negative ->
// risky; more than half greater than one -> trustworthy; none received ->
// unknown; otherwise neutral.
std::vector<int> bitcoin_labels(int node_count, const std::vector<RatingRecord>& records);

struct BitcoinData {
  WeightedDigraph graph;
  std::vector<double> raw_scores;     // original ratings, aligned with arcs
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::vector<long long> original_ids;  // node id -> id in the source file
};

// CSV columns rater,ratee,score,time (header optional). Records after the
// cutoff are dropped, repeated pairs keep the latest record, weights are the
// renormalized scores (clamped to a tiny positive floor), node features are
// the constant (1,1). The split keeps 90% of unknown/neutral/trustworthy and
// 20% of risky nodes for training.
BitcoinData load_bitcoin(const std::filesystem::path& path,
                         std::optional<long long> time_cutoff, std::uint64_t seed);

// Undirected links weighted by the positive Pearson correlation of endpoint
// features; anticorrelated or degenerate links are dropped. Emits both arc
// directions.
std::vector<Arc> pearson_edge_weights(const DenseMatrix& features,
                                      const std::vector<std::pair<int, int>>& links,
                                      int* dropped_links = nullptr);

// GraphViz rendering of an explanation subgraph; arc labels show the
// original (pre-normalization) weights when a score map is supplied.
std::string export_dot(const ExplanationSubgraph& sub,
                       const std::map<std::pair<int, int>, double>* original_weights = nullptr);

// --- dataset bundle: graph.csv + features.csv + labels.csv + meta.json ---

struct DatasetBundle {
  WeightedDigraph graph;
  std::string kind;  // "syncomp" | "synnode" | "bitcoin" | "generic"
  std::uint64_t seed = 0;
  std::vector<int> node_motif;
  std::vector<std::vector<std::pair<int, int>>> motif_arcs;
  std::vector<double> raw_scores;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::string params_json;  // generator parameters, for provenance
};

void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace gnnx
