#include "gnnx/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gnnx/csv.hpp"
#include "gnnx/error.hpp"
#include "gnnx/rng.hpp"

namespace gnnx {

using nlohmann::json;

namespace {

// Barabasi-Albert preferential attachment: each new node draws m distinct
// targets from a pool where every past endpoint appears once per incident
// edge.
std::vector<std::pair<int, int>> barabasi_albert(int n, int m, Rng& rng) {
  if (m < 1 || n <= m) throw Error("barabasi_albert: need n > m >= 1");
  std::vector<std::pair<int, int>> edges;
  std::vector<int> repeated;
  std::vector<int> targets(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) targets[static_cast<std::size_t>(i)] = i;
  for (int source = m; source < n; ++source) {
    for (int t : targets) {
      edges.emplace_back(source, t);
      repeated.push_back(t);
      repeated.push_back(source);
    }
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < m) {
      picked.insert(repeated[static_cast<std::size_t>(rng.below(repeated.size()))]);
    }
    targets.assign(picked.begin(), picked.end());
  }
  return edges;
}

void add_undirected(std::vector<Arc>& arcs, std::set<std::pair<int, int>>& seen, int a, int b,
                    double w) {
  if (seen.insert({a, b}).second) arcs.push_back({a, b, w});
  if (seen.insert({b, a}).second) arcs.push_back({b, a, w});
}

}  // namespace

SynCompData gen_syncomp(const SynCompParams& params) {
  Rng rng(params.seed);
  const int n = params.ba_nodes + 5 * params.motif_count;

  std::vector<Arc> arcs;
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : barabasi_albert(params.ba_nodes, params.ba_m, rng)) {
    add_undirected(arcs, seen, a, b, params.ba_weight);
  }

  SynCompData data;
  data.node_motif.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);

  // house motif: top, two shoulders, two bottoms; roof, cross, walls, floor
  for (int k = 0; k < params.motif_count; ++k) {
    const int base = params.ba_nodes + 5 * k;
    const int top = base;
    const int s1 = base + 1;
    const int s2 = base + 2;
    const int b1 = base + 3;
    const int b2 = base + 4;
    labels[static_cast<std::size_t>(top)] = 3;
    labels[static_cast<std::size_t>(s1)] = 1;
    labels[static_cast<std::size_t>(s2)] = 1;
    labels[static_cast<std::size_t>(b1)] = 2;
    labels[static_cast<std::size_t>(b2)] = 2;
    for (int v = base; v < base + 5; ++v) data.node_motif[static_cast<std::size_t>(v)] = k;

    const std::pair<int, int> house[] = {{top, s1}, {top, s2}, {s1, s2},
                                         {s1, b1},  {s2, b2},  {b1, b2}};
    std::vector<std::pair<int, int>> motif;
    for (auto [a, b] : house) {
      add_undirected(arcs, seen, a, b, params.house_weight);
      motif.emplace_back(a, b);
      motif.emplace_back(b, a);
    }
    data.motif_arcs.push_back(std::move(motif));

    const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.ba_nodes)));
    add_undirected(arcs, seen, s1, anchor, params.attach_weight);
  }

  const int noise_edges = static_cast<int>(params.noise_fraction * n);
  int added = 0;
  while (added < noise_edges) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (a == b || seen.count({a, b})) continue;
    add_undirected(arcs, seen, a, b, params.noise_weight);
    ++added;
  }

  DenseMatrix features(static_cast<std::size_t>(n), 2, 1.0);
  data.graph = build_graph(n, std::move(arcs), std::move(features), std::move(labels), 4);
  return data;
}

WeightedDigraph gen_synnode(const SynNodeParams& params) {
  Rng rng(params.seed);
  auto edges = barabasi_albert(params.nodes, params.ba_m, rng);

  // drop half the undirected edges to sparsify
  const std::size_t keep = edges.size() - edges.size() / 2;
  for (std::size_t i = edges.size() - 1; i > 0; --i) {
    std::swap(edges[i], edges[static_cast<std::size_t>(rng.below(i + 1))]);
  }
  edges.resize(keep);
  std::sort(edges.begin(), edges.end());

  std::vector<Arc> arcs;
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : edges) add_undirected(arcs, seen, a, b, 1.0);

  std::vector<int> labels(static_cast<std::size_t>(params.nodes));
  for (int& y : labels) {
    y = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.class_count)));
  }
  DenseMatrix features(static_cast<std::size_t>(params.nodes), 2);
  for (int u = 0; u < params.nodes; ++u) {
    const double s = rng.normal(0.0, params.noise_std);
    features.at(static_cast<std::size_t>(u), 0) = s;
    features.at(static_cast<std::size_t>(u), 1) =
        s + (labels[static_cast<std::size_t>(u)] + 1) * params.label_step;
  }
  return build_graph(params.nodes, std::move(arcs), std::move(features), std::move(labels),
                     params.class_count);
}

double renormalize_rating(double score) {
  if (score < -10.0 || score > 10.0) {
    throw Error("renormalize_rating: score " + format_double(score) + " outside [-10,10]");
  }
  return score / 20.0 + 0.5;
}

std::vector<int> bitcoin_labels(int node_count, const std::vector<RatingRecord>& records) {
  std::vector<std::vector<double>> received(static_cast<std::size_t>(node_count));
  for (const RatingRecord& r : records) {
    received[static_cast<std::size_t>(r.ratee)].push_back(r.score);
  }
  std::vector<int> labels(static_cast<std::size_t>(node_count));
  for (int u = 0; u < node_count; ++u) {
    const auto& scores = received[static_cast<std::size_t>(u)];
    const bool any_negative = std::any_of(scores.begin(), scores.end(),
                                          [](double s) { return s < 0.0; });
    if (any_negative) {
      labels[static_cast<std::size_t>(u)] = static_cast<int>(BitcoinClass::Risky);
    } else if (!scores.empty() &&
               2 * std::count_if(scores.begin(), scores.end(),
                                 [](double s) { return s > 1.0; }) >
                   static_cast<long>(scores.size())) {
      labels[static_cast<std::size_t>(u)] = static_cast<int>(BitcoinClass::Trustworthy);
    } else if (scores.empty()) {
      labels[static_cast<std::size_t>(u)] = static_cast<int>(BitcoinClass::Unknown);
    } else {
      labels[static_cast<std::size_t>(u)] = static_cast<int>(BitcoinClass::Neutral);
    }
  }
  return labels;
}

BitcoinData load_bitcoin(const std::filesystem::path& path,
                         std::optional<long long> time_cutoff, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());

  // latest record wins per (rater, ratee)
  std::map<std::pair<long long, long long>, RatingRecord> latest;
  std::map<std::pair<long long, long long>, long long> latest_time;
  std::vector<std::pair<long long, long long>> raw_pairs;
  std::set<long long> user_ids;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    {
      std::string field;
      std::istringstream ls(line);
      while (std::getline(ls, field, ',')) fields.push_back(field);
    }
    if (line_no == 1 && !fields.empty() && fields[0].find_first_not_of("-0123456789 \t") !=
                                               std::string::npos) {
      continue;  // header
    }
    if (fields.size() != 4) {
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": expected rater,ratee,score,time");
    }
    auto parse_ll = [&](const std::string& s) {
      long long v = 0;
      const char* b = s.data();
      const char* e = s.data() + s.size();
      while (b < e && (*b == ' ' || *b == '\t')) ++b;
      auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc()) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed field '" + s + "'");
      }
      return v;
    };
    auto parse_d = [&](const std::string& s) {
      double v = 0;
      const char* b = s.data();
      const char* e = s.data() + s.size();
      while (b < e && (*b == ' ' || *b == '\t')) ++b;
      auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc()) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed field '" + s + "'");
      }
      return v;
    };
    const long long rater = parse_ll(fields[0]);
    const long long ratee = parse_ll(fields[1]);
    const double score = parse_d(fields[2]);
    const long long time = parse_ll(fields[3]);
    if (score < -10.0 || score > 10.0) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": rating outside [-10,10]");
    }
    if (time_cutoff && time > *time_cutoff) continue;
    user_ids.insert(rater);
    user_ids.insert(ratee);
    const auto key = std::make_pair(rater, ratee);
    auto it = latest_time.find(key);
    if (it == latest_time.end()) raw_pairs.push_back(key);
    if (it == latest_time.end() || time >= it->second) {
      latest_time[key] = time;
      latest[key] = RatingRecord{0, 0, score, time};
    }
  }
  if (latest.empty()) throw Error(path.string() + ": no usable rating records");

  BitcoinData data;
  std::map<long long, int> to_compact;
  for (long long id : user_ids) {
    to_compact.emplace(id, static_cast<int>(data.original_ids.size()));
    data.original_ids.push_back(id);
  }
  const int n = static_cast<int>(data.original_ids.size());

  std::vector<RatingRecord> records;
  std::vector<Arc> arcs;
  // renormalized weights; -10 maps to 0, clamped to keep the graph strictly
  // positive-weighted
  constexpr double kWeightFloor = 1e-6;
  for (const auto& key : raw_pairs) {
    const RatingRecord& r = latest.at(key);
    RatingRecord rec;
    rec.rater = to_compact.at(key.first);
    rec.ratee = to_compact.at(key.second);
    rec.score = r.score;
    rec.time = r.time;
    records.push_back(rec);
    arcs.push_back({rec.rater, rec.ratee, std::max(renormalize_rating(rec.score), kWeightFloor)});
    data.raw_scores.push_back(rec.score);
  }

  std::vector<int> labels = bitcoin_labels(n, records);
  DenseMatrix features(static_cast<std::size_t>(n), 2, 1.0);
  data.graph = build_graph(n, std::move(arcs), std::move(features), labels, 4);

  // 90% of unknown/neutral/trustworthy and 20% of risky nodes train
  Rng rng(seed);
  std::vector<int> risky, rest;
  for (int u = 0; u < n; ++u) {
    (labels[static_cast<std::size_t>(u)] == static_cast<int>(BitcoinClass::Risky) ? risky : rest)
        .push_back(u);
  }
  auto shuffle = [&rng](std::vector<int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
    }
  };
  shuffle(risky);
  shuffle(rest);
  const auto risky_train = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(risky.size())));
  const auto rest_train = static_cast<std::size_t>(std::llround(0.9 * static_cast<double>(rest.size())));
  for (std::size_t i = 0; i < risky.size(); ++i) {
    (i < risky_train ? data.train_ids : data.test_ids).push_back(risky[i]);
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    (i < rest_train ? data.train_ids : data.test_ids).push_back(rest[i]);
  }
  std::sort(data.train_ids.begin(), data.train_ids.end());
  std::sort(data.test_ids.begin(), data.test_ids.end());
  return data;
}

std::vector<Arc> pearson_edge_weights(const DenseMatrix& features,
                                      const std::vector<std::pair<int, int>>& links,
                                      int* dropped_links) {
  if (features.cols < 2) throw Error("pearson_edge_weights: features need length >= 2");
  int dropped = 0;
  std::vector<Arc> arcs;
  for (auto [a, b] : links) {
    if (a < 0 || b < 0 || a >= static_cast<int>(features.rows) ||
        b >= static_cast<int>(features.rows)) {
      throw Error("pearson_edge_weights: link endpoint out of range");
    }
    const DenseMatrix ra = features.row(static_cast<std::size_t>(a));
    const DenseMatrix rb = features.row(static_cast<std::size_t>(b));
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.cols; ++i) {
      ma += ra.data[i];
      mb += rb.data[i];
    }
    ma /= static_cast<double>(ra.cols);
    mb /= static_cast<double>(rb.cols);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.cols; ++i) {
      cov += (ra.data[i] - ma) * (rb.data[i] - mb);
      va += (ra.data[i] - ma) * (ra.data[i] - ma);
      vb += (rb.data[i] - mb) * (rb.data[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) {
      ++dropped;
      continue;
    }
    const double r = cov / std::sqrt(va * vb);
    if (r <= 0.0) {
      ++dropped;
      continue;
    }
    arcs.push_back({a, b, r});
    arcs.push_back({b, a, r});
  }
  if (dropped_links) *dropped_links = dropped;
  return arcs;
}

std::string export_dot(const ExplanationSubgraph& sub,
                       const std::map<std::pair<int, int>, double>* original_weights) {
  if (sub.nodes.empty()) throw Error("export_dot: empty subgraph");
  std::ostringstream out;
  out << "digraph explanation {\n";
  for (int v : sub.nodes) {
    out << "  n" << v << " [label=\"" << v << "\"";
    if (v == sub.center) out << " shape=doublecircle";
    out << "];\n";
  }
  for (const Arc& a : sub.arcs) {
    double label = a.weight;
    if (original_weights) {
      auto it = original_weights->find({a.src, a.dst});
      if (it != original_weights->end()) label = it->second;
    }
    out << "  n" << a.src << " -> n" << a.dst << " [label=\"" << format_double(label) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_arcs_csv(dir / "graph.csv", bundle.graph.arcs);
  write_features_csv(dir / "features.csv", bundle.graph.features);
  if (bundle.graph.labels) write_labels_csv(dir / "labels.csv", *bundle.graph.labels);

  json meta;
  meta["kind"] = bundle.kind;
  meta["seed"] = bundle.seed;
  meta["node_count"] = bundle.graph.node_count;
  meta["class_count"] = bundle.graph.class_count;
  if (!bundle.params_json.empty()) meta["params"] = json::parse(bundle.params_json);
  if (!bundle.node_motif.empty()) meta["node_motif"] = bundle.node_motif;
  if (!bundle.motif_arcs.empty()) {
    json motifs = json::array();
    for (const auto& motif : bundle.motif_arcs) {
      json arcs = json::array();
      for (auto [a, b] : motif) arcs.push_back(json::array({a, b}));
      motifs.push_back(std::move(arcs));
    }
    meta["motif_arcs"] = std::move(motifs);
  }
  if (!bundle.raw_scores.empty()) meta["raw_scores"] = bundle.raw_scores;
  if (!bundle.train_ids.empty()) {
    meta["train_ids"] = bundle.train_ids;
    meta["test_ids"] = bundle.test_ids;
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw Error("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << "\n";
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw Error("cannot open " + (dir / "meta.json").string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw Error((dir / "meta.json").string() + " malformed: " + e.what());
  }

  DatasetBundle bundle;
  try {
    bundle.kind = meta.at("kind").get<std::string>();
    bundle.seed = meta.value("seed", 0ull);
    const int node_count = meta.at("node_count").get<int>();
    const int class_count = meta.at("class_count").get<int>();

    auto arcs = read_arcs_csv(dir / "graph.csv");
    DenseMatrix features = read_features_csv(dir / "features.csv");
    std::optional<std::vector<int>> labels;
    if (std::filesystem::exists(dir / "labels.csv")) {
      labels = read_labels_csv(dir / "labels.csv");
    }
    bundle.graph = build_graph(node_count, std::move(arcs), std::move(features),
                               std::move(labels), class_count);

    if (meta.contains("params")) bundle.params_json = meta["params"].dump();
    if (meta.contains("node_motif")) bundle.node_motif = meta["node_motif"].get<std::vector<int>>();
    if (meta.contains("motif_arcs")) {
      for (const json& motif : meta["motif_arcs"]) {
        std::vector<std::pair<int, int>> arcs2;
        for (const json& arc : motif) arcs2.emplace_back(arc[0].get<int>(), arc[1].get<int>());
        bundle.motif_arcs.push_back(std::move(arcs2));
      }
    }
    if (meta.contains("raw_scores")) bundle.raw_scores = meta["raw_scores"].get<std::vector<double>>();
    if (meta.contains("train_ids")) {
      bundle.train_ids = meta["train_ids"].get<std::vector<int>>();
      bundle.test_ids = meta["test_ids"].get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw Error((dir / "meta.json").string() + " malformed: " + e.what());
  }
  return bundle;
}

}  // namespace gnnx
