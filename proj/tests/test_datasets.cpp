#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "gnnx/datasets.hpp"
#include "gnnx/error.hpp"
#include "gnnx/graph.hpp"

using namespace gnnx;
namespace fs = std::filesystem;

TEST_CASE("syncomp: counts, labels, ground truth") {
  SynCompParams params;
  params.seed = 7;
  params.noise_weight = 0.07;  // distinguishable from the attachment weight
  auto data = gen_syncomp(params);
  const WeightedDigraph& g = data.graph;

  CHECK(g.node_count == 65);
  // 14 skeleton edges (BA with m=1), 60 house edges, 10 attachments, 6 noise
  CHECK(g.arc_count() == 2 * (14 + 60 + 10 + 6));

  std::map<int, int> histogram;
  for (int y : *g.labels) histogram[y] += 1;
  CHECK(histogram[0] == 15);
  CHECK(histogram[1] == 20);
  CHECK(histogram[2] == 20);
  CHECK(histogram[3] == 10);

  // constant 2-d features
  for (double v : g.features.data) CHECK(v == 1.0);

  // each motif: 6 undirected internal edges as 12 arcs, all weight 1
  std::set<std::pair<int, int>> arc_set;
  for (const Arc& a : g.arcs) arc_set.insert({a.src, a.dst});
  REQUIRE(data.motif_arcs.size() == 10);
  for (const auto& motif : data.motif_arcs) {
    CHECK(motif.size() == 12);
    for (auto [s, d] : motif) CHECK(arc_set.count({s, d}) == 1);
  }

  // every motif node is tagged, skeleton nodes are not
  for (int v = 0; v < 15; ++v) CHECK(data.node_motif[static_cast<std::size_t>(v)] == -1);
  for (int v = 15; v < 65; ++v) {
    CHECK(data.node_motif[static_cast<std::size_t>(v)] == (v - 15) / 5);
  }

  // exactly one attachment arc pair per motif, carrying the w weight
  int attach_arcs = 0;
  int noise_arcs = 0;
  for (const Arc& a : g.arcs) {
    if (a.weight == params.attach_weight) {
      CHECK(((a.src >= 15 && a.dst < 15) || (a.src < 15 && a.dst >= 15)));
      ++attach_arcs;
    }
    if (a.weight == params.noise_weight) ++noise_arcs;
  }
  CHECK(attach_arcs == 2 * 10);
  CHECK(noise_arcs == 2 * 6);
}

TEST_CASE("syncomp is reproducible per seed") {
  SynCompParams params;
  params.seed = 11;
  auto a = gen_syncomp(params);
  auto b = gen_syncomp(params);
  CHECK(a.graph.arcs.size() == b.graph.arcs.size());
  for (std::size_t i = 0; i < a.graph.arcs.size(); ++i) {
    CHECK(a.graph.arcs[i].src == b.graph.arcs[i].src);
    CHECK(a.graph.arcs[i].dst == b.graph.arcs[i].dst);
    CHECK(a.graph.arcs[i].weight == b.graph.arcs[i].weight);
  }
  params.seed = 12;
  auto c = gen_syncomp(params);
  bool differs = a.graph.arcs.size() != c.graph.arcs.size();
  for (std::size_t i = 0; !differs && i < a.graph.arcs.size(); ++i) {
    differs = a.graph.arcs[i].src != c.graph.arcs[i].src ||
              a.graph.arcs[i].dst != c.graph.arcs[i].dst;
  }
  CHECK(differs);
}

TEST_CASE("synnode: halved edges and label-carrying second feature") {
  SynNodeParams params;
  params.seed = 3;
  auto g = gen_synnode(params);
  CHECK(g.node_count == 60);
  // BA(60, 2) yields 116 undirected edges; half dropped -> 58 -> 116 arcs
  CHECK(g.arc_count() == 116);
  for (const Arc& a : g.arcs) CHECK(a.weight == 1.0);

  for (int u = 0; u < g.node_count; ++u) {
    const double diff = g.features.at(static_cast<std::size_t>(u), 1) -
                        g.features.at(static_cast<std::size_t>(u), 0);
    const double expected = ((*g.labels)[static_cast<std::size_t>(u)] + 1) * 0.2;
    CHECK(diff == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("synnode class-conditional feature gap matches the generator law") {
  // Monte-Carlo check over many regenerations
  std::vector<double> total(4, 0.0);
  std::vector<int> count(4, 0);
  SynNodeParams params;
  for (int rep = 0; rep < 10000; ++rep) {
    params.seed = 1000 + static_cast<std::uint64_t>(rep);
    auto g = gen_synnode(params);
    for (int u = 0; u < g.node_count; ++u) {
      const int y = (*g.labels)[static_cast<std::size_t>(u)];
      total[static_cast<std::size_t>(y)] += g.features.at(static_cast<std::size_t>(u), 1) -
                                            g.features.at(static_cast<std::size_t>(u), 0);
      count[static_cast<std::size_t>(y)] += 1;
    }
  }
  for (int y = 0; y < 4; ++y) {
    CHECK(std::abs(total[static_cast<std::size_t>(y)] / count[static_cast<std::size_t>(y)] -
                   (y + 1) * 0.2) < 0.02);
  }
}

TEST_CASE("rating renormalization") {
  CHECK(renormalize_rating(-10) == 0.0);
  CHECK(renormalize_rating(10) == 1.0);
  CHECK(renormalize_rating(1) == 0.55);
  CHECK_THROWS_AS(renormalize_rating(11), Error);
  CHECK_THROWS_AS(renormalize_rating(-10.5), Error);

  // strictly monotone on the rating scale
  double prev = renormalize_rating(-10);
  for (int s = -9; s <= 10; ++s) {
    const double v = renormalize_rating(s);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("bitcoin label rules in precedence order") {
  auto rec = [](int rater, int ratee, double score) {
    return RatingRecord{rater, ratee, score, 0};
  };
  // node 0: one negative among positives -> risky
  // node 1: {2,3,1} -> two of three above one -> trustworthy
  // node 2: nothing received -> unknown
  // node 3: {1,1} -> neutral
  std::vector<RatingRecord> records{rec(2, 0, -1), rec(3, 0, 5),  rec(1, 0, 5),
                                    rec(0, 1, 2),  rec(2, 1, 3),  rec(3, 1, 1),
                                    rec(0, 3, 1),  rec(1, 3, 1)};
  auto labels = bitcoin_labels(4, records);
  CHECK(labels[0] == static_cast<int>(BitcoinClass::Risky));
  CHECK(labels[1] == static_cast<int>(BitcoinClass::Trustworthy));
  CHECK(labels[2] == static_cast<int>(BitcoinClass::Unknown));
  CHECK(labels[3] == static_cast<int>(BitcoinClass::Neutral));

  // record order is irrelevant
  std::reverse(records.begin(), records.end());
  CHECK(bitcoin_labels(4, records) == labels);
}

TEST_CASE("bitcoin loader: renormalization, dedup, cutoff, split") {
  const fs::path path = fs::temp_directory_path() / "gnnx_bitcoin_test.csv";
  {
    std::ofstream out(path);
    out << "rater,ratee,score,time\n";
    out << "3,7,-10,123\n";
    out << "7,3,2,100\n";
    out << "3,9,1,150\n";      // superseded
    out << "3,9,5,200\n";      // latest wins: weight 0.75
    out << "9,7,4,500\n";      // beyond the cutoff below
    out << "11,3,6,90\n";
  }
  auto data = load_bitcoin(path, 400, 99);
  // users 3,7,9,11 -> compact ids 0,1,2,3
  CHECK(data.original_ids == std::vector<long long>{3, 7, 9, 11});
  CHECK(data.graph.arc_count() == 4);

  std::map<std::pair<int, int>, double> weights;
  std::map<std::pair<int, int>, double> raw;
  for (std::size_t i = 0; i < data.graph.arcs.size(); ++i) {
    const Arc& a = data.graph.arcs[i];
    weights[{a.src, a.dst}] = a.weight;
    raw[{a.src, a.dst}] = data.raw_scores[i];
  }
  CHECK(weights.at({0, 1}) <= 1e-6);  // score -10 renormalizes to 0, floored
  CHECK(raw.at({0, 1}) == -10.0);
  CHECK(weights.at({0, 2}) == 0.75);  // latest record replaced the +1
  CHECK(weights.count({2, 1}) == 0);  // filtered by the time cutoff

  // labels: 7 received {-10} -> risky; 9 received {5} -> trustworthy;
  // 3 received {2,6} -> trustworthy; 11 received none -> unknown
  const auto& labels = *data.graph.labels;
  CHECK(labels[1] == static_cast<int>(BitcoinClass::Risky));
  CHECK(labels[2] == static_cast<int>(BitcoinClass::Trustworthy));
  CHECK(labels[0] == static_cast<int>(BitcoinClass::Trustworthy));
  CHECK(labels[3] == static_cast<int>(BitcoinClass::Unknown));

  // splits partition the node set
  std::set<int> all(data.train_ids.begin(), data.train_ids.end());
  for (int u : data.test_ids) CHECK(all.insert(u).second);
  CHECK(static_cast<int>(all.size()) == data.graph.node_count);

  fs::remove(path);
}

TEST_CASE("bitcoin loader reports malformed rows with their line number") {
  const fs::path path = fs::temp_directory_path() / "gnnx_bitcoin_bad.csv";
  {
    std::ofstream out(path);
    out << "1,2,5,100\n";
    out << "1,2,banana,100\n";
  }
  CHECK_THROWS_WITH_AS(load_bitcoin(path, std::nullopt, 1), doctest::Contains(":2:"), Error);
  fs::remove(path);
}

TEST_CASE("pearson edge weights keep only positive correlations") {
  DenseMatrix features(4, 3,
                       std::vector<double>{1, 2, 3,   // node 0
                                           1, 2, 4,   // node 1: r ~ 0.982 with node 0
                                           3, 2, 1,   // node 2: anticorrelated with node 0
                                           5, 5, 5}); // node 3: zero variance
  int dropped = 0;
  auto arcs = pearson_edge_weights(features, {{0, 1}, {0, 2}, {0, 3}}, &dropped);
  REQUIRE(arcs.size() == 2);  // both directions of the one surviving link
  CHECK(dropped == 2);
  const double expected = 3.0 / (std::sqrt(2.0) * std::sqrt(14.0 / 3.0));
  CHECK(arcs[0].weight == doctest::Approx(expected).epsilon(1e-12));
  CHECK(arcs[0].src == 0);
  CHECK(arcs[1].src == 1);

  // identical vectors correlate perfectly
  DenseMatrix twin(2, 3, std::vector<double>{1, 2, 3, 1, 2, 3});
  auto same = pearson_edge_weights(twin, {{0, 1}});
  CHECK(same[0].weight == doctest::Approx(1.0));
}

TEST_CASE("dot export is deterministic and labels original weights") {
  ExplanationSubgraph sub;
  sub.center = 0;
  sub.nodes = {0, 1};
  sub.arcs = {{0, 1, 0.5}};
  sub.scores = {0.9};
  const std::string dot = export_dot(sub);
  CHECK(dot.find("n0 [label=\"0\" shape=doublecircle]") != std::string::npos);
  CHECK(dot.find("n1 [label=\"1\"]") != std::string::npos);
  CHECK(dot.find("n0 -> n1 [label=\"0.5\"]") != std::string::npos);

  std::map<std::pair<int, int>, double> raw{{{0, 1}, -7.0}};
  const std::string with_raw = export_dot(sub, &raw);
  CHECK(with_raw.find("label=\"-7\"") != std::string::npos);

  ExplanationSubgraph lonely;
  lonely.center = 4;
  lonely.nodes = {4};
  const std::string single = export_dot(lonely);
  CHECK(single.find("n4") != std::string::npos);
  CHECK(single.find("->") == std::string::npos);
}

TEST_CASE("bundle round-trip preserves graph and metadata") {
  const fs::path dir = fs::temp_directory_path() / "gnnx_bundle_test";
  SynCompParams params;
  params.seed = 21;
  auto data = gen_syncomp(params);

  DatasetBundle bundle;
  bundle.kind = "syncomp";
  bundle.seed = 21;
  bundle.graph = data.graph;
  bundle.node_motif = data.node_motif;
  bundle.motif_arcs = data.motif_arcs;
  bundle.params_json = "{\"w\":0.1}";
  save_bundle(dir, bundle);

  auto loaded = load_bundle(dir);
  CHECK(loaded.kind == "syncomp");
  CHECK(loaded.seed == 21);
  CHECK(loaded.graph.node_count == bundle.graph.node_count);
  CHECK(loaded.graph.arcs.size() == bundle.graph.arcs.size());
  for (std::size_t i = 0; i < bundle.graph.arcs.size(); ++i) {
    CHECK(loaded.graph.arcs[i].weight == bundle.graph.arcs[i].weight);
  }
  CHECK(loaded.graph.features.data == bundle.graph.features.data);
  CHECK(*loaded.graph.labels == *bundle.graph.labels);
  CHECK(loaded.node_motif == bundle.node_motif);
  CHECK(loaded.motif_arcs == bundle.motif_arcs);
  fs::remove_all(dir);
}
