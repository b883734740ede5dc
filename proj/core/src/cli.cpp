#include "gnnx/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gnnx/datasets.hpp"
#include "gnnx/error.hpp"
#include "gnnx/explain_edges.hpp"
#include "gnnx/explain_features.hpp"
#include "gnnx/metrics.hpp"
#include "gnnx/model.hpp"
#include "gnnx/rng.hpp"

namespace gnnx::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path default_out_root() {
  if (const char* env = std::getenv("GNNX_OUT_ROOT")) return fs::path(env);
  return fs::path("runs");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

struct SplitFiles {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

SplitFiles read_split(const fs::path& model_path) {
  const fs::path split_path = model_path.parent_path() / "split.json";
  std::ifstream in(split_path);
  if (!in) {
    throw Error("cannot open " + split_path.string() +
                " (expected next to the checkpoint; produced by `train`)");
  }
  json doc;
  try {
    in >> doc;
    SplitFiles split;
    split.train_ids = doc.at("train_ids").get<std::vector<int>>();
    split.test_ids = doc.at("test_ids").get<std::vector<int>>();
    return split;
  } catch (const json::exception& e) {
    throw Error(split_path.string() + " malformed: " + e.what());
  }
}

json subgraph_to_json(const ExplanationSubgraph& sub) {
  json arcs = json::array();
  for (std::size_t i = 0; i < sub.arcs.size(); ++i) {
    arcs.push_back({{"src", sub.arcs[i].src},
                    {"dst", sub.arcs[i].dst},
                    {"weight", sub.arcs[i].weight},
                    {"score", sub.scores[i]}});
  }
  return arcs;
}

// per-method edge explanation on one node's computational graph
struct EdgeExplanation {
  ComputationalGraph cg;
  std::vector<double> raw;     // mask or salience, aligned with cg arcs
  std::vector<double> scores;  // selection scores
  ExplanationSubgraph sub;
  std::vector<double> loss_history;
};

EdgeExplanation explain_edges(const GnnModel& model, const WeightedDigraph& graph, int node,
                              EdgeMethod method, const EdgeMaskHyper& hyper, const Selection& sel,
                              int hops) {
  EdgeExplanation out;
  out.cg = computational_graph(graph, node, hops);
  switch (method) {
    case EdgeMethod::Mmi: {
      auto result = mmi_edge_mask(model, out.cg, (*graph.labels)[static_cast<std::size_t>(node)],
                                  hyper);
      out.raw = result.mask;
      out.scores = mmi_edge_scores(result.mask, out.cg);
      out.loss_history = std::move(result.loss_history);
      break;
    }
    case EdgeMethod::Ggd: {
      auto salience = ggd_edge_salience(model, out.cg,
                                        (*graph.labels)[static_cast<std::size_t>(node)]);
      out.raw = salience.values;
      out.scores = salience.values;
      break;
    }
    case EdgeMethod::BaselineSigmoid: {
      auto salience = baseline_sigmoid_mask(model, out.cg,
                                            (*graph.labels)[static_cast<std::size_t>(node)], hyper);
      out.raw = salience.values;
      out.scores = salience.values;
      break;
    }
  }
  out.sub = extract_subgraph(out.cg, out.scores, sel);
  return out;
}

EdgeMethod parse_edge_method(const std::string& name) {
  if (name == "mmi") return EdgeMethod::Mmi;
  if (name == "ggd") return EdgeMethod::Ggd;
  if (name == "baseline") return EdgeMethod::BaselineSigmoid;
  throw CLI::ValidationError("--method", "unknown method '" + name + "'");
}

// nodes the model classifies correctly, grouped by class, seed-sampled down
// to `per_class`
std::vector<std::vector<int>> sample_correct_by_class(const WeightedDigraph& graph,
                                                      const DenseMatrix& probs, int per_class,
                                                      std::uint64_t seed) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(graph.class_count));
  for (int u = 0; u < graph.node_count; ++u) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c) {
      if (probs.at(static_cast<std::size_t>(u), c) > probs.at(static_cast<std::size_t>(u), best)) best = c;
    }
    const int label = (*graph.labels)[static_cast<std::size_t>(u)];
    if (static_cast<int>(best) == label) by_class[static_cast<std::size_t>(label)].push_back(u);
  }
  Rng rng(seed);
  for (auto& nodes : by_class) {
    for (std::size_t i = nodes.size(); i > 1; --i) {
      std::swap(nodes[i - 1], nodes[static_cast<std::size_t>(rng.below(i))]);
    }
    if (static_cast<int>(nodes.size()) > per_class) nodes.resize(static_cast<std::size_t>(per_class));
    std::sort(nodes.begin(), nodes.end());
  }
  return by_class;
}

TrainingPool make_pool(const WeightedDigraph& graph, const std::vector<int>& train_ids) {
  TrainingPool pool;
  pool.features = &graph.features;
  pool.ids_by_class.assign(static_cast<std::size_t>(graph.class_count), {});
  for (int u : train_ids) {
    pool.ids_by_class[static_cast<std::size_t>((*graph.labels)[static_cast<std::size_t>(u)])]
        .push_back(u);
  }
  return pool;
}

json map_to_json(const ClassPairMap& m) {
  json rows = json::array();
  for (int c = 0; c < m.class_count; ++c) {
    json row = json::array();
    for (int j = 0; j < m.class_count; ++j) row.push_back(m.at(c, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string map_to_csv(const ClassPairMap& m) {
  std::ostringstream out;
  out << "class";
  for (int j = 0; j < m.class_count; ++j) out << "," << j;
  out << "\n";
  for (int c = 0; c < m.class_count; ++c) {
    out << c;
    for (int j = 0; j < m.class_count; ++j) out << "," << format_double(m.at(c, j));
    out << "\n";
  }
  return out.str();
}

ClassPairMap average_maps(const std::vector<ClassPairMap>& maps) {
  ClassPairMap avg = maps.front();
  for (std::size_t k = 1; k < maps.size(); ++k) {
    for (std::size_t i = 0; i < avg.cells.size(); ++i) {
      avg.cells[i] += maps[k].cells[i];
      avg.counts[i] += maps[k].counts[i];
    }
  }
  for (double& v : avg.cells) v /= static_cast<double>(maps.size());
  return avg;
}

// --- command: gen ---

struct GenOptions {
  std::string dataset;
  std::string out;
  std::string ratings;
  long long cutoff = -1;
  std::uint64_t seed = 1;
  SynCompParams syncomp;
  SynNodeParams synnode;
};

int cmd_gen(const GenOptions& opt) {
  DatasetBundle bundle;
  bundle.kind = opt.dataset;
  bundle.seed = opt.seed;
  if (opt.dataset == "syncomp") {
    SynCompParams params = opt.syncomp;
    params.seed = opt.seed;
    auto data = gen_syncomp(params);
    bundle.graph = std::move(data.graph);
    bundle.node_motif = std::move(data.node_motif);
    bundle.motif_arcs = std::move(data.motif_arcs);
    bundle.params_json = json{{"ba_nodes", params.ba_nodes},
                              {"ba_m", params.ba_m},
                              {"motif_count", params.motif_count},
                              {"attach_weight", params.attach_weight},
                              {"house_weight", params.house_weight},
                              {"ba_weight", params.ba_weight},
                              {"noise_weight", params.noise_weight},
                              {"noise_fraction", params.noise_fraction}}
                             .dump();
  } else if (opt.dataset == "synnode") {
    SynNodeParams params = opt.synnode;
    params.seed = opt.seed;
    bundle.graph = gen_synnode(params);
    bundle.params_json = json{{"nodes", params.nodes},
                              {"ba_m", params.ba_m},
                              {"class_count", params.class_count},
                              {"noise_std", params.noise_std},
                              {"label_step", params.label_step}}
                             .dump();
  } else if (opt.dataset == "bitcoin") {
    if (opt.ratings.empty()) throw Error("gen: --ratings is required for the bitcoin dataset");
    std::optional<long long> cutoff;
    if (opt.cutoff >= 0) cutoff = opt.cutoff;
    auto data = load_bitcoin(opt.ratings, cutoff, opt.seed);
    bundle.graph = std::move(data.graph);
    bundle.raw_scores = std::move(data.raw_scores);
    bundle.train_ids = std::move(data.train_ids);
    bundle.test_ids = std::move(data.test_ids);
    bundle.params_json = json{{"ratings", opt.ratings}, {"cutoff", opt.cutoff}}.dump();
  } else {
    throw Error("gen: unknown dataset '" + opt.dataset + "'");
  }
  save_bundle(opt.out, bundle);
  std::cout << "wrote " << opt.out << " (" << bundle.graph.node_count << " nodes, "
            << bundle.graph.arc_count() << " arcs)\n";
  return 0;
}

// --- command: train ---

struct TrainOptions {
  std::string data;
  std::string out;
  std::string mode = "type1";
  std::string gate = "auto";
  int hidden = 8;
  int layers = 3;
  int epochs = 300;
  double lr = 0.1;
  int lr_halving = 100;
  double train_frac = 0.6;
  std::uint64_t seed = 1;
};

int cmd_train(const TrainOptions& opt) {
  DatasetBundle bundle = load_bundle(opt.data);
  if (!bundle.graph.labels) throw Error("train: dataset has no labels");

  GnnConfig config;
  config.mode = opt.mode == "type2" ? GnnMode::TypeII : GnnMode::TypeI;
  if (opt.mode != "type1" && opt.mode != "type2") throw Error("train: --mode must be type1|type2");
  std::string gate = opt.gate;
  if (gate == "auto") gate = bundle.kind == "bitcoin" ? "gru" : "sum";
  if (gate != "sum" && gate != "gru") throw Error("train: --gate must be sum|gru|auto");
  config.gate = gate == "gru" ? GateKind::Gru : GateKind::Sum;
  config.layer_dims.push_back(bundle.graph.feature_dim());
  for (int l = 0; l < opt.layers; ++l) config.layer_dims.push_back(opt.hidden);
  config.class_count = bundle.graph.class_count;
  config.epochs = opt.epochs;
  config.lr_initial = opt.lr;
  config.lr_halving_period = opt.lr_halving;
  config.seed = opt.seed;

  std::vector<int> train_ids = bundle.train_ids;
  std::vector<int> test_ids = bundle.test_ids;
  if (train_ids.empty()) {
    // uniform seeded split
    std::vector<int> ids(static_cast<std::size_t>(bundle.graph.node_count));
    for (int u = 0; u < bundle.graph.node_count; ++u) ids[static_cast<std::size_t>(u)] = u;
    Rng rng(opt.seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.below(i))]);
    }
    const auto cut = static_cast<std::size_t>(
        std::llround(opt.train_frac * static_cast<double>(ids.size())));
    train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut));
    test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());
  }

  TrainResult result = train(config, bundle.graph, train_ids, test_ids);

  fs::create_directories(opt.out);
  save_checkpoint(result.model, fs::path(opt.out) / "checkpoint.json");
  write_json(fs::path(opt.out) / "split.json",
             json{{"train_ids", train_ids}, {"test_ids", test_ids}});
  {
    std::ostringstream history;
    history << "epoch,loss,train_acc,test_acc\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
      history << e << "," << format_double(result.loss_history[e]) << ","
              << format_double(result.train_acc_history[e]) << ","
              << format_double(result.test_acc_history[e]) << "\n";
    }
    write_text(fs::path(opt.out) / "history.csv", history.str());
  }
  write_json(fs::path(opt.out) / "meta.json",
             json{{"command", "train"},
                  {"data", opt.data},
                  {"mode", opt.mode},
                  {"gate", gate},
                  {"hidden", opt.hidden},
                  {"layers", opt.layers},
                  {"epochs", opt.epochs},
                  {"lr", opt.lr},
                  {"lr_halving", opt.lr_halving},
                  {"train_frac", opt.train_frac},
                  {"seed", opt.seed},
                  {"final_train_acc", result.final_train_acc},
                  {"final_test_acc", result.final_test_acc}});
  std::cout << "train accuracy " << result.final_train_acc << ", test accuracy "
            << result.final_test_acc << "\n";
  return 0;
}

// --- command: explain ---

struct ExplainOptions {
  std::string data;
  std::string model;
  std::string out;
  int node = -1;
  std::string method = "mmi";
  std::string features = "none";
  int topk = 6;
  double threshold = -1.0;
  int hops = -1;
  int iters = 300;
  double mask_lr = 0.1;
  double lambda_entropy = 0.1;
  double lambda_size = 0.005;
  int budget = -1;
  double lambda_budget = 0.1;
  int pda_samples = 50;
  std::uint64_t seed = 1;
};

json feature_importance_json(int node, const FeatureImportance& fi) {
  std::vector<int> ranking(fi.values.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) ranking[i] = static_cast<int>(i);
  std::stable_sort(ranking.begin(), ranking.end(), [&](int a, int b) {
    return fi.values[static_cast<std::size_t>(a)] > fi.values[static_cast<std::size_t>(b)];
  });
  return json{{"node", node},
              {"method", feature_method_name(fi.method)},
              {"scores", fi.values},
              {"ranking", ranking}};
}

int cmd_explain(const ExplainOptions& opt) {
  DatasetBundle bundle = load_bundle(opt.data);
  if (!bundle.graph.labels) throw Error("explain: dataset has no labels");
  GnnModel model = load_checkpoint(opt.model);
  if (opt.node < 0 || opt.node >= bundle.graph.node_count) {
    throw Error("explain: node " + std::to_string(opt.node) + " outside graph");
  }
  const int label = (*bundle.graph.labels)[static_cast<std::size_t>(opt.node)];
  const int hops = opt.hops > 0 ? opt.hops : model.config.num_layers();
  const Selection sel = opt.threshold > 0.0 ? Selection::threshold(opt.threshold)
                                            : Selection::top_k(opt.topk);

  EdgeMaskHyper hyper;
  hyper.iterations = opt.iters;
  hyper.lr = opt.mask_lr;
  hyper.lambda_entropy = opt.lambda_entropy;
  hyper.lambda_size = opt.lambda_size;
  hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(opt.node));

  const EdgeMethod method = parse_edge_method(opt.method);
  EdgeExplanation ex = explain_edges(model, bundle.graph, opt.node, method, hyper, sel, hops);

  fs::create_directories(opt.out);
  const std::string stem = "node" + std::to_string(opt.node) + "-" + opt.method;
  {
    json arcs = json::array();
    for (int i = 0; i < ex.cg.arc_count(); ++i) {
      const Arc& a = ex.cg.local.arcs[static_cast<std::size_t>(i)];
      arcs.push_back({{"src", ex.cg.to_parent[static_cast<std::size_t>(a.src)]},
                      {"dst", ex.cg.to_parent[static_cast<std::size_t>(a.dst)]},
                      {"weight", a.weight},
                      {"score", ex.scores[static_cast<std::size_t>(i)]}});
    }
    json doc{{"node", opt.node},
             {"method", opt.method},
             {"label", label},
             {"arcs", std::move(arcs)},
             {"selected", subgraph_to_json(ex.sub)},
             {"loss_history", ex.loss_history}};
    if (ex.sub.top_k_clamped) doc["topk_clamped"] = true;
    write_json(fs::path(opt.out) / ("explanation-" + stem + ".json"), doc);
  }
  {
    std::map<std::pair<int, int>, double> raw;
    if (!bundle.raw_scores.empty()) {
      for (std::size_t i = 0; i < bundle.graph.arcs.size(); ++i) {
        const Arc& a = bundle.graph.arcs[i];
        raw[{a.src, a.dst}] = bundle.raw_scores[i];
      }
    }
    write_text(fs::path(opt.out) / ("explanation-" + stem + ".dot"),
               export_dot(ex.sub, bundle.raw_scores.empty() ? nullptr : &raw));
  }

  if (opt.features != "none") {
    const LocalGraph gs = materialize_subgraph(ex.sub, bundle.graph);
    std::vector<FeatureImportance> computed;
    auto want = [&](const char* name) { return opt.features == name || opt.features == "all"; };
    if (want("mmi")) {
      FeatureMaskHyper fh;
      fh.iterations = opt.iters;
      fh.lr = opt.mask_lr;
      fh.budget = opt.budget;
      fh.lambda_budget = opt.lambda_budget;
      fh.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(opt.node) * 2 + 1);
      auto mask = mmi_feature_mask(model, gs, label, fh);
      FeatureImportance fi;
      fi.method = FeatureMethod::Mmi;
      fi.values = mask.mask;
      computed.push_back(std::move(fi));
    }
    if (want("pda")) {
      SplitFiles split = read_split(opt.model);
      auto pool = make_pool(bundle.graph, split.train_ids);
      auto result = pda(model, gs, label, pool, opt.pda_samples,
                        derive_seed(opt.seed, static_cast<std::uint64_t>(opt.node) * 2 + 2));
      computed.push_back(std::move(result.importance));
    }
    if (want("ggd")) {
      computed.push_back(ggd_feature_salience(model, ex.cg, label));
    }
    for (const FeatureImportance& fi : computed) {
      write_json(fs::path(opt.out) / ("features-node" + std::to_string(opt.node) + "-" +
                                      feature_method_name(fi.method) + ".json"),
                 feature_importance_json(opt.node, fi));
    }
    if (opt.features == "all" && computed.size() == 3) {
      auto agg = rank_aggregate(computed);
      std::ostringstream csv;
      csv << "feature,rank_mmi,rank_pda,rank_ggd,rank_sum\n";
      for (std::size_t f = 0; f < agg.rank_sum.size(); ++f) {
        csv << f;
        for (const auto& ranks : agg.method_ranks) csv << "," << format_double(ranks[f]);
        csv << "," << format_double(agg.rank_sum[f]) << "\n";
      }
      write_text(fs::path(opt.out) / ("feature_ranks-node" + std::to_string(opt.node) + ".csv"),
                 csv.str());
    }
  }

  write_json(fs::path(opt.out) / ("meta-" + stem + ".json"),
             json{{"command", "explain"},
                  {"data", opt.data},
                  {"model", opt.model},
                  {"node", opt.node},
                  {"method", opt.method},
                  {"features", opt.features},
                  {"topk", opt.topk},
                  {"threshold", opt.threshold},
                  {"hops", hops},
                  {"iters", opt.iters},
                  {"mask_lr", opt.mask_lr},
                  {"lambda_entropy", opt.lambda_entropy},
                  {"lambda_size", opt.lambda_size},
                  {"pda_samples", opt.pda_samples},
                  {"seed", opt.seed}});
  std::cout << "wrote explanation for node " << opt.node << " (" << ex.sub.arcs.size()
            << " arcs selected)\n";
  return 0;
}

// --- command: metrics ---

struct MetricsOptions {
  std::string data;
  std::string model;
  std::string out;
  int topk = 4;
  int per_class = 50;
  int iters = 300;
  std::uint64_t seed = 1;
};

int cmd_metrics(const MetricsOptions& opt) {
  DatasetBundle bundle = load_bundle(opt.data);
  if (!bundle.graph.labels) throw Error("metrics: dataset has no labels");
  GnnModel model = load_checkpoint(opt.model);
  const int hops = model.config.num_layers();
  const DenseMatrix probs = forward_probs(model, bundle.graph, bundle.graph.features);

  json doc{{"kind", bundle.kind}};

  if (bundle.kind == "syncomp") {
    // arc scores against the motif ground truth, all class-1 nodes
    std::map<std::string, double> auc_by_method;
    for (const std::string& name : {"mmi", "ggd", "baseline"}) {
      const EdgeMethod method = parse_edge_method(name);
      double total = 0.0;
      int count = 0;
      for (int u = 0; u < bundle.graph.node_count; ++u) {
        if ((*bundle.graph.labels)[static_cast<std::size_t>(u)] != 1) continue;
        EdgeMaskHyper hyper;
        hyper.iterations = opt.iters;
        hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u));
        EdgeExplanation ex = explain_edges(model, bundle.graph, u, method, hyper,
                                           Selection::top_k(opt.topk), hops);
        const auto& motif = bundle.motif_arcs[static_cast<std::size_t>(
            bundle.node_motif[static_cast<std::size_t>(u)])];
        std::set<std::pair<int, int>> truth(motif.begin(), motif.end());
        std::vector<int> labels01;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < ex.cg.arc_count(); ++i) {
          const Arc& a = ex.cg.local.arcs[static_cast<std::size_t>(i)];
          const bool pos = truth.count({ex.cg.to_parent[static_cast<std::size_t>(a.src)],
                                        ex.cg.to_parent[static_cast<std::size_t>(a.dst)]}) > 0;
          labels01.push_back(pos ? 1 : 0);
          (pos ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        total += roc_auc(ex.scores, labels01);
        ++count;
      }
      auc_by_method[name] = count ? total / count : 0.0;
    }
    doc["auc"] = auc_by_method;
  } else if (bundle.kind == "synnode") {
    // feature ground truth: second feature carries the label
    auto by_class = sample_correct_by_class(bundle.graph, probs, opt.per_class, opt.seed);
    SplitFiles split = read_split(opt.model);
    auto pool = make_pool(bundle.graph, split.train_ids);
    std::map<std::string, double> hit, mse;
    std::map<std::string, int> counts;
    for (const auto& nodes : by_class) {
      for (int u : nodes) {
        const int label = (*bundle.graph.labels)[static_cast<std::size_t>(u)];
        EdgeMaskHyper hyper;
        hyper.iterations = opt.iters;
        hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u));
        EdgeExplanation ex = explain_edges(model, bundle.graph, u, EdgeMethod::Mmi, hyper,
                                           Selection::top_k(opt.topk), hops);
        const LocalGraph gs = materialize_subgraph(ex.sub, bundle.graph);

        std::map<std::string, FeatureImportance> fis;
        FeatureMaskHyper fh;
        fh.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u) * 2 + 1);
        auto mask = mmi_feature_mask(model, gs, label, fh);
        fis["mmi"] = FeatureImportance{mask.mask, FeatureMethod::Mmi, false};
        fis["pda"] = pda(model, gs, label, pool, 50,
                         derive_seed(opt.seed, static_cast<std::uint64_t>(u) * 2 + 2))
                         .importance;
        fis["ggd"] = ggd_feature_salience(model, ex.cg, label);
        for (const auto& [name, fi] : fis) {
          const bool first = std::max_element(fi.values.begin(), fi.values.end()) ==
                             fi.values.begin() + 1;
          hit[name] += first ? 1.0 : 0.0;
          mse[name] += importance_mse(fi.values, 1);
          counts[name] += 1;
        }
      }
    }
    json acc, err;
    for (const auto& [name, value] : hit) acc[name] = value / counts[name];
    for (const auto& [name, value] : mse) err[name] = value / counts[name];
    doc["feature1_first"] = acc;
    doc["softmax_mse"] = err;
  } else {
    // consistency / contrastivity / sparsity over sampled correct nodes
    auto by_class = sample_correct_by_class(bundle.graph, probs, opt.per_class, opt.seed);
    for (const std::string& name : {"mmi", "ggd"}) {
      const EdgeMethod method = parse_edge_method(name);
      std::vector<std::vector<SmallGraph>> groups;
      double sparsity_total = 0.0;
      int sparsity_count = 0;
      for (const auto& nodes : by_class) {
        std::vector<SmallGraph> group;
        for (int u : nodes) {
          EdgeMaskHyper hyper;
          hyper.iterations = opt.iters;
          hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u));
          EdgeExplanation ex = explain_edges(model, bundle.graph, u, method, hyper,
                                             Selection::top_k(opt.topk), hops);
          group.push_back(to_small_graph(ex.sub));
          sparsity_total += sparsity(ex.raw);
          ++sparsity_count;
        }
        if (!group.empty()) groups.push_back(std::move(group));
      }
      MetricsReport report = class_ged_stats(groups, opt.topk, opt.per_class);
      doc[name] = json{{"consistency", report.consistency},
                       {"contrastivity", report.contrastivity},
                       {"sparsity", sparsity_count ? sparsity_total / sparsity_count : 0.0}};
    }
  }

  fs::create_directories(opt.out);
  write_json(fs::path(opt.out) / "metrics.json", doc);
  write_json(fs::path(opt.out) / "meta-metrics.json",
             json{{"command", "metrics"},
                  {"data", opt.data},
                  {"model", opt.model},
                  {"topk", opt.topk},
                  {"per_class", opt.per_class},
                  {"iters", opt.iters},
                  {"seed", opt.seed}});
  std::cout << "wrote " << (fs::path(opt.out) / "metrics.json").string() << "\n";
  return 0;
}

// --- command: disentangle ---

struct DisentangleOptions {
  std::string data;
  std::string model;
  std::string out;
  int per_class = 50;
  int topk = 4;
  int iters = 300;
  std::string edge_methods = "mmi,ggd";
  std::string feature_methods = "mmi,pda,ggd";
  int pda_samples = 50;
  std::uint64_t seed = 1;
};

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_disentangle(const DisentangleOptions& opt) {
  DatasetBundle bundle = load_bundle(opt.data);
  if (!bundle.graph.labels) throw Error("disentangle: dataset has no labels");
  GnnModel model = load_checkpoint(opt.model);
  const int hops = model.config.num_layers();
  const DenseMatrix probs = forward_probs(model, bundle.graph, bundle.graph.features);
  auto by_class = sample_correct_by_class(bundle.graph, probs, opt.per_class, opt.seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw Error("disentangle: no correctly classified node in class " + std::to_string(c));
    }
  }

  // distance maps per edge method, then averaged
  std::vector<ClassPairMap> dmaps;
  json per_method;
  for (const std::string& name : split_list(opt.edge_methods)) {
    const EdgeMethod method = parse_edge_method(name);
    std::vector<std::vector<SmallGraph>> groups;
    for (const auto& nodes : by_class) {
      std::vector<SmallGraph> group;
      for (int u : nodes) {
        EdgeMaskHyper hyper;
        hyper.iterations = opt.iters;
        hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u));
        EdgeExplanation ex = explain_edges(model, bundle.graph, u, method, hyper,
                                           Selection::top_k(opt.topk), hops);
        group.push_back(to_small_graph(ex.sub));
      }
      groups.push_back(std::move(group));
    }
    dmaps.push_back(distance_map(groups));
    per_method["distance"][name] = map_to_json(dmaps.back());
  }

  // similarity maps per feature method
  SplitFiles split;
  const auto feature_methods = split_list(opt.feature_methods);
  if (std::find(feature_methods.begin(), feature_methods.end(), "pda") != feature_methods.end()) {
    split = read_split(opt.model);
  }
  std::vector<ClassPairMap> smaps;
  for (const std::string& name : feature_methods) {
    std::vector<std::vector<std::vector<double>>> groups;
    for (const auto& nodes : by_class) {
      std::vector<std::vector<double>> group;
      for (int u : nodes) {
        const int label = (*bundle.graph.labels)[static_cast<std::size_t>(u)];
        EdgeMaskHyper hyper;
        hyper.iterations = opt.iters;
        hyper.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u));
        EdgeExplanation ex = explain_edges(model, bundle.graph, u, EdgeMethod::Mmi, hyper,
                                           Selection::top_k(opt.topk), hops);
        if (name == "mmi") {
          const LocalGraph gs = materialize_subgraph(ex.sub, bundle.graph);
          FeatureMaskHyper fh;
          fh.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(u) * 2 + 1);
          group.push_back(mmi_feature_mask(model, gs, label, fh).mask);
        } else if (name == "pda") {
          const LocalGraph gs = materialize_subgraph(ex.sub, bundle.graph);
          auto pool = make_pool(bundle.graph, split.train_ids);
          group.push_back(pda(model, gs, label, pool, opt.pda_samples,
                              derive_seed(opt.seed, static_cast<std::uint64_t>(u) * 2 + 2))
                              .importance.values);
        } else if (name == "ggd") {
          group.push_back(ggd_feature_salience(model, ex.cg, label).values);
        } else {
          throw Error("disentangle: unknown feature method '" + name + "'");
        }
      }
      groups.push_back(std::move(group));
    }
    smaps.push_back(similarity_map(groups));
    per_method["similarity"][name] = map_to_json(smaps.back());
  }

  fs::create_directories(opt.out);
  const ClassPairMap dmap = average_maps(dmaps);
  const ClassPairMap smap = average_maps(smaps);
  write_text(fs::path(opt.out) / "distance_map.csv", map_to_csv(dmap));
  write_text(fs::path(opt.out) / "similarity_map.csv", map_to_csv(smap));
  write_json(fs::path(opt.out) / "maps.json",
             json{{"distance_map", map_to_json(dmap)},
                  {"similarity_map", map_to_json(smap)},
                  {"per_method", per_method},
                  {"sampled_nodes", by_class}});
  write_json(fs::path(opt.out) / "meta-disentangle.json",
             json{{"command", "disentangle"},
                  {"data", opt.data},
                  {"model", opt.model},
                  {"per_class", opt.per_class},
                  {"topk", opt.topk},
                  {"iters", opt.iters},
                  {"edge_methods", opt.edge_methods},
                  {"feature_methods", opt.feature_methods},
                  {"pda_samples", opt.pda_samples},
                  {"seed", opt.seed}});
  std::cout << "wrote distance and similarity maps to " << opt.out << "\n";
  return 0;
}

// --- command: export-dot ---

struct ExportDotOptions {
  std::string explanation;
  std::string data;
  std::string out;
};

int cmd_export_dot(const ExportDotOptions& opt) {
  std::ifstream in(opt.explanation);
  if (!in) throw Error("cannot open " + opt.explanation);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(opt.explanation + " malformed: " + e.what());
  }
  ExplanationSubgraph sub;
  try {
    sub.center = doc.at("node").get<int>();
    std::set<int> nodes{sub.center};
    for (const json& arc : doc.at("selected")) {
      Arc a{arc.at("src").get<int>(), arc.at("dst").get<int>(), arc.at("weight").get<double>()};
      sub.arcs.push_back(a);
      sub.scores.push_back(arc.at("score").get<double>());
      nodes.insert(a.src);
      nodes.insert(a.dst);
    }
    sub.nodes.assign(nodes.begin(), nodes.end());
  } catch (const json::exception& e) {
    throw Error(opt.explanation + " malformed: " + e.what());
  }

  std::map<std::pair<int, int>, double> raw;
  if (!opt.data.empty()) {
    DatasetBundle bundle = load_bundle(opt.data);
    for (std::size_t i = 0; i < bundle.graph.arcs.size() && i < bundle.raw_scores.size(); ++i) {
      const Arc& a = bundle.graph.arcs[i];
      raw[{a.src, a.dst}] = bundle.raw_scores[i];
    }
  }
  write_text(opt.out, export_dot(sub, raw.empty() ? nullptr : &raw));
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"weighted-digraph GNN node classification and explanation toolkit", "gnnx"};
  app.require_subcommand(1);

  GenOptions gen_opt;
  CLI::App* gen = app.add_subcommand("gen", "generate or import a dataset bundle");
  gen->add_option("--dataset", gen_opt.dataset, "syncomp|synnode|bitcoin")->required();
  gen->add_option("--seed", gen_opt.seed, "generator seed");
  gen->add_option("--out", gen_opt.out, "output bundle directory");
  gen->add_option("--w", gen_opt.syncomp.attach_weight, "motif attachment weight (syncomp)");
  gen->add_option("--ba-nodes", gen_opt.syncomp.ba_nodes, "skeleton size (syncomp)");
  gen->add_option("--ba-m", gen_opt.syncomp.ba_m, "attachment edges per node (syncomp)");
  gen->add_option("--motifs", gen_opt.syncomp.motif_count, "house motif count (syncomp)");
  gen->add_option("--noise-frac", gen_opt.syncomp.noise_fraction, "noise edge fraction (syncomp)");
  gen->add_option("--noise-w", gen_opt.syncomp.noise_weight, "noise edge weight (syncomp)");
  gen->add_option("--nodes", gen_opt.synnode.nodes, "node count (synnode)");
  gen->add_option("--ratings", gen_opt.ratings, "rating CSV path (bitcoin)");
  gen->add_option("--cutoff", gen_opt.cutoff, "keep records with time <= cutoff (bitcoin)");

  TrainOptions train_opt;
  CLI::App* tr = app.add_subcommand("train", "train the node classifier on a bundle");
  tr->add_option("--data", train_opt.data, "dataset bundle directory")->required();
  tr->add_option("--out", train_opt.out, "run output directory");
  tr->add_option("--mode", train_opt.mode, "type1|type2");
  tr->add_option("--gate", train_opt.gate, "sum|gru|auto");
  tr->add_option("--hidden", train_opt.hidden, "hidden width");
  tr->add_option("--layers", train_opt.layers, "number of layers");
  tr->add_option("--epochs", train_opt.epochs, "training epochs");
  tr->add_option("--lr", train_opt.lr, "initial learning rate");
  tr->add_option("--lr-halving", train_opt.lr_halving, "epochs between halvings");
  tr->add_option("--train-frac", train_opt.train_frac, "training fraction (unless the bundle fixes a split)");
  tr->add_option("--seed", train_opt.seed, "init and split seed");

  ExplainOptions ex_opt;
  CLI::App* ex = app.add_subcommand("explain", "explain one node's classification");
  ex->add_option("--data", ex_opt.data, "dataset bundle directory")->required();
  ex->add_option("--model", ex_opt.model, "checkpoint path")->required();
  ex->add_option("--node", ex_opt.node, "node id")->required();
  ex->add_option("--method", ex_opt.method, "mmi|ggd|baseline");
  ex->add_option("--features", ex_opt.features, "none|mmi|pda|ggd|all");
  ex->add_option("--topk", ex_opt.topk, "arcs to keep");
  ex->add_option("--threshold", ex_opt.threshold, "score threshold instead of top-k");
  ex->add_option("--hops", ex_opt.hops, "computational graph depth (default: model layers)");
  ex->add_option("--iters", ex_opt.iters, "mask optimization iterations");
  ex->add_option("--mask-lr", ex_opt.mask_lr, "mask step size");
  ex->add_option("--lambda-entropy", ex_opt.lambda_entropy, "entropy regularizer weight");
  ex->add_option("--lambda-size", ex_opt.lambda_size, "size regularizer weight");
  ex->add_option("--budget", ex_opt.budget, "feature mask budget (default ceil(d/2))");
  ex->add_option("--lambda-budget", ex_opt.lambda_budget, "feature budget penalty weight");
  ex->add_option("--pda-samples", ex_opt.pda_samples, "PDA resampling count");
  ex->add_option("--seed", ex_opt.seed, "explanation seed");
  ex->add_option("--out", ex_opt.out, "output directory");

  MetricsOptions me_opt;
  CLI::App* me = app.add_subcommand("metrics", "evaluate explanations against ground truth");
  me->add_option("--data", me_opt.data, "dataset bundle directory")->required();
  me->add_option("--model", me_opt.model, "checkpoint path")->required();
  me->add_option("--topk", me_opt.topk, "arcs kept per explanation");
  me->add_option("--per-class", me_opt.per_class, "sampled correct nodes per class");
  me->add_option("--iters", me_opt.iters, "mask optimization iterations");
  me->add_option("--seed", me_opt.seed, "sampling seed");
  me->add_option("--out", me_opt.out, "output directory");

  DisentangleOptions di_opt;
  CLI::App* di = app.add_subcommand("disentangle", "class-pair distance and similarity maps");
  di->add_option("--data", di_opt.data, "dataset bundle directory")->required();
  di->add_option("--model", di_opt.model, "checkpoint path")->required();
  di->add_option("--per-class", di_opt.per_class, "sampled correct nodes per class");
  di->add_option("--topk", di_opt.topk, "arcs kept per explanation");
  di->add_option("--iters", di_opt.iters, "mask optimization iterations");
  di->add_option("--edge-methods", di_opt.edge_methods, "comma list: mmi,ggd");
  di->add_option("--feature-methods", di_opt.feature_methods, "comma list: mmi,pda,ggd");
  di->add_option("--pda-samples", di_opt.pda_samples, "PDA resampling count");
  di->add_option("--seed", di_opt.seed, "sampling seed");
  di->add_option("--out", di_opt.out, "output directory");

  ExportDotOptions dot_opt;
  CLI::App* dot = app.add_subcommand("export-dot", "render a stored explanation as DOT");
  dot->add_option("--explanation", dot_opt.explanation, "explanation JSON path")->required();
  dot->add_option("--data", dot_opt.data, "bundle directory for original edge scores");
  dot->add_option("--out", dot_opt.out, "output DOT path")->required();

  std::vector<const char*> argv;
  argv.push_back("gnnx");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      if (gen_opt.out.empty()) gen_opt.out = (default_out_root() / "gen").string();
      return cmd_gen(gen_opt);
    }
    if (tr->parsed()) {
      if (train_opt.out.empty()) train_opt.out = (default_out_root() / "train").string();
      return cmd_train(train_opt);
    }
    if (ex->parsed()) {
      if (ex_opt.out.empty()) ex_opt.out = (default_out_root() / "explain").string();
      return cmd_explain(ex_opt);
    }
    if (me->parsed()) {
      if (me_opt.out.empty()) me_opt.out = (default_out_root() / "metrics").string();
      return cmd_metrics(me_opt);
    }
    if (di->parsed()) {
      if (di_opt.out.empty()) di_opt.out = (default_out_root() / "disentangle").string();
      return cmd_disentangle(di_opt);
    }
    if (dot->parsed()) return cmd_export_dot(dot_opt);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace gnnx::cli
