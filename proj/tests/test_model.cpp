#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gnnx/error.hpp"
#include "gnnx/model.hpp"
#include "gnnx/rng.hpp"
#include "helpers.hpp"

using namespace gnnx;
namespace fs = std::filesystem;
using gnnx::testing::random_graph;
using gnnx::testing::random_model;

namespace {

// center-node true-class probability as a taped scalar; shared by the
// finite-difference checks below
double center_prob(const GnnModel& model, const WeightedDigraph& g, int node, int label) {
  const DenseMatrix probs = forward_probs(model, g, g.features);
  return probs.at(static_cast<std::size_t>(node), static_cast<std::size_t>(label));
}

}  // namespace

TEST_CASE("isolated node: aggregation vanishes") {
  auto g = build_graph(1, {}, DenseMatrix(1, 2, std::vector<double>{0.3, -0.7}));
  auto model = random_model(2, 4, 2, 3);
  const DenseMatrix probs = forward_type1(model, g, g.features);

  // manual propagation: h <- relu(h W_self), head softmax
  DenseMatrix h = g.features.row(0);
  for (const LayerParams& p : model.layers) {
    h = matmul(h, p.w_self);
    for (double& v : h.data) v = std::max(0.0, v);
  }
  DenseMatrix logits = matmul(h, model.head_w);
  for (std::size_t c = 0; c < logits.cols; ++c) logits.data[c] += model.head_b.data[c];
  double denom = 0.0;
  for (double v : logits.data) denom += std::exp(v);
  for (std::size_t c = 0; c < probs.cols; ++c) {
    CHECK(probs.at(0, c) == doctest::Approx(std::exp(logits.data[c]) / denom).epsilon(1e-12));
  }
}

TEST_CASE("zero features and zero parameters give the uniform distribution") {
  auto g = build_graph(3, {{0, 1, 1.0}, {1, 2, 2.0}}, DenseMatrix(3, 2));
  auto model = random_model(2, 4, 2, 4);
  const DenseMatrix probs = forward_type1(model, g, g.features);
  for (std::size_t u = 0; u < probs.rows; ++u) {
    for (std::size_t c = 0; c < probs.cols; ++c) {
      CHECK(probs.at(u, c) == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("output rows are probability vectors") {
  Rng rng(23);
  for (GateKind gate : {GateKind::Sum, GateKind::Gru}) {
    auto g = random_graph(rng, 10, 0.3, 3, 4);
    auto model = random_model(3, 6, 3, 4, gate);
    const DenseMatrix probs = forward_type1(model, g, g.features);
    for (std::size_t u = 0; u < probs.rows; ++u) {
      double total = 0.0;
      for (std::size_t c = 0; c < probs.cols; ++c) {
        CHECK(probs.at(u, c) >= 0.0);
        total += probs.at(u, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("permutation equivariance is exact") {
  Rng rng(29);
  auto g = random_graph(rng, 9, 0.3, 2, 3);
  auto model = random_model(2, 5, 2, 3, GateKind::Gru);
  const DenseMatrix probs = forward_type1(model, g, g.features);

  // relabel nodes, keep arc list order
  std::vector<int> perm(static_cast<std::size_t>(g.node_count));
  for (int i = 0; i < g.node_count; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
  }
  std::vector<Arc> arcs;
  for (const Arc& a : g.arcs) {
    arcs.push_back({perm[static_cast<std::size_t>(a.src)], perm[static_cast<std::size_t>(a.dst)],
                    a.weight});
  }
  DenseMatrix features(g.features.rows, g.features.cols);
  for (int u = 0; u < g.node_count; ++u) {
    for (std::size_t c = 0; c < g.features.cols; ++c) {
      features.at(static_cast<std::size_t>(perm[static_cast<std::size_t>(u)]), c) =
          g.features.at(static_cast<std::size_t>(u), c);
    }
  }
  auto permuted = build_graph(g.node_count, std::move(arcs), std::move(features), std::nullopt,
                              g.class_count);
  const DenseMatrix probs2 = forward_type1(model, permuted, permuted.features);
  for (int u = 0; u < g.node_count; ++u) {
    for (std::size_t c = 0; c < probs.cols; ++c) {
      CHECK(probs.at(static_cast<std::size_t>(u), c) ==
            probs2.at(static_cast<std::size_t>(perm[static_cast<std::size_t>(u)]), c));
    }
  }
}

TEST_CASE("uniform scaling of a node's incoming weights leaves Type I unchanged") {
  Rng rng(31);
  auto g = random_graph(rng, 10, 0.3, 2, 3);
  auto model = random_model(2, 5, 3, 3);
  const DenseMatrix probs = forward_type1(model, g, g.features);
  auto arcs = g.arcs;
  for (Arc& a : arcs) {
    if (a.dst == 4) a.weight *= 37.5;
  }
  auto scaled = build_graph(g.node_count, arcs, g.features, std::nullopt, g.class_count);
  const DenseMatrix probs2 = forward_type1(model, scaled, scaled.features);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(std::abs(probs.data[i] - probs2.data[i]) < 1e-9);
  }
}

TEST_CASE("arc weight override replaces the normalized weights") {
  auto g = build_graph(3, {{0, 2, 1.0}, {1, 2, 1.0}}, DenseMatrix(3, 2, 1.0));
  auto model = random_model(2, 4, 2, 2);
  std::vector<double> biased{0.9, 0.1};
  const DenseMatrix with_override = forward_type1(model, g, g.features, &biased);

  // same distribution realized through actual weights
  auto arcs = g.arcs;
  arcs[0].weight = 0.9;
  arcs[1].weight = 0.1;
  auto reweighted = build_graph(3, arcs, g.features, std::nullopt, 2);
  const DenseMatrix direct = forward_type1(model, reweighted, reweighted.features);
  for (std::size_t i = 0; i < with_override.size(); ++i) {
    CHECK(with_override.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-12));
  }

  std::vector<double> bad{0.5, 0.4};
  CHECK_THROWS_AS(forward_type1(model, g, g.features, &bad), Error);
  std::vector<double> negative{1.5, -0.5};
  CHECK_THROWS_AS(forward_type1(model, g, g.features, &negative), Error);
}

TEST_CASE("parameter gradients match central differences") {
  Rng rng(37);
  auto g = random_graph(rng, 8, 0.3, 2, 3);
  const std::vector<int>& labels = *g.labels;

  for (GateKind gate : {GateKind::Sum, GateKind::Gru}) {
    GnnModel model = random_model(2, 4, 2, 3, gate);

    // analytic gradient of the mean training CE
    Tape tape;
    TapedModel tm = bind_model(tape, model);
    const auto logits = taped_logits(tape, tm, g, plain_hooks(g, g.features));
    std::vector<int> ces;
    for (int u = 0; u < g.node_count; ++u) {
      DenseMatrix onehot(1, 3);
      onehot.data[static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])] = 1.0;
      ces.push_back(tape.sum(tape.mul(tape.log(tape.softmax_rows(logits[static_cast<std::size_t>(u)])),
                                      tape.leaf(std::move(onehot)))));
    }
    const int loss = tape.scale(tape.add(std::move(ces)), -1.0 / g.node_count);
    auto grads = tape.backward(loss);

    auto loss_value = [&](const GnnModel& m) {
      const DenseMatrix probs = forward_type1(m, g, g.features);
      double total = 0.0;
      for (int u = 0; u < g.node_count; ++u) {
        total -= std::log(std::max(probs.at(static_cast<std::size_t>(u),
                                            static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])),
                                   1e-12));
      }
      return total / g.node_count;
    };

    auto params = model_parameters(model);
    Rng pick(101);
    for (int trial = 0; trial < 10; ++trial) {
      const auto pi = static_cast<std::size_t>(pick.below(params.size()));
      const auto entry = static_cast<std::size_t>(pick.below(params[pi]->size()));
      const double h = 1e-5;
      GnnModel perturbed = model;
      auto mats = model_parameters(perturbed);
      mats[pi]->data[entry] += h;
      const double up = loss_value(perturbed);
      mats[pi]->data[entry] -= 2 * h;
      const double down = loss_value(perturbed);
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.at(tm.param_ids[pi]).data[entry];
      CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)) < 1e-4);
    }
  }
}

TEST_CASE("edge-weight gradients match central differences (Type I)") {
  Rng rng(43);
  auto g = random_graph(rng, 8, 0.35, 2, 3);
  auto model = random_model(2, 4, 3, 3);
  const int node = 2;
  const int label = 1;

  // analytic: tape with weight leaves and in-tape normalization
  Tape tape;
  TapedModel tm = bind_model(tape, model);
  std::vector<int> weight_leaves(g.arcs.size());
  for (std::size_t a = 0; a < g.arcs.size(); ++a) {
    weight_leaves[a] = tape.leaf(DenseMatrix::scalar(g.arcs[a].weight));
  }
  ForwardHooks hooks;
  hooks.feature_row = [&](Tape& t, int v) {
    return t.leaf(g.features.row(static_cast<std::size_t>(v)));
  };
  hooks.coef_row = [&](Tape& t, int, const std::vector<int>& in_arcs) {
    std::vector<int> logs;
    for (int a : in_arcs) logs.push_back(t.log(weight_leaves[static_cast<std::size_t>(a)]));
    return t.softmax_rows(t.concat(std::move(logs), 1));
  };
  const int only[] = {node};
  const auto logits = taped_logits(tape, tm, g, hooks, only);
  DenseMatrix onehot(1, 3);
  onehot.data[label] = 1.0;
  const int p = tape.sum(tape.mul(tape.softmax_rows(logits[node]), tape.leaf(std::move(onehot))));
  auto grads = tape.backward(p);

  Rng pick(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ai = static_cast<std::size_t>(pick.below(g.arcs.size()));
    const double h = 1e-6;
    auto arcs = g.arcs;
    arcs[ai].weight += h;
    auto up_graph = build_graph(g.node_count, arcs, g.features, std::nullopt, g.class_count);
    const double up = center_prob(model, up_graph, node, label);
    arcs[ai].weight -= 2 * h;
    auto down_graph = build_graph(g.node_count, arcs, g.features, std::nullopt, g.class_count);
    const double down = center_prob(model, down_graph, node, label);
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads.at(weight_leaves[ai]).data[0];
    CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)) < 1e-4);
  }
}

TEST_CASE("Type II: constant embedder ignores the edge weight") {
  GnnConfig config;
  config.mode = GnnMode::TypeII;
  config.layer_dims = {2, 3};
  config.class_count = 2;
  auto model = init_model(config);
  for (double& v : model.layers[0].embed_a->data) v = 0.0;

  auto g1 = build_graph(2, {{0, 1, 0.2}}, DenseMatrix(2, 2, std::vector<double>{1, 2, 3, 4}));
  auto g2 = build_graph(2, {{0, 1, 5.0}}, DenseMatrix(2, 2, std::vector<double>{1, 2, 3, 4}));
  CHECK(forward_type2(model, g1, g1.features).data == forward_type2(model, g2, g2.features).data);

  // equal weights produce identical per-arc transforms: symmetric sources
  auto g3 = build_graph(3, {{0, 2, 0.7}, {1, 2, 0.7}},
                        DenseMatrix(3, 2, std::vector<double>{1, 2, 1, 2, 0, 0}));
  auto model2 = random_model(2, 3, 1, 2, GateKind::Sum, GnnMode::TypeII);
  const DenseMatrix probs = forward_type2(model2, g3, g3.features);
  CHECK(probs.rows == 3);
}

TEST_CASE("Type II: edge-weight gradient matches central differences") {
  Rng rng(51);
  auto g = random_graph(rng, 6, 0.4, 2, 2);
  auto model = random_model(2, 3, 2, 2, GateKind::Sum, GnnMode::TypeII);
  const int node = 1;
  const int label = 0;

  Tape tape;
  TapedModel tm = bind_model(tape, model);
  std::vector<int> weight_leaves(g.arcs.size());
  for (std::size_t a = 0; a < g.arcs.size(); ++a) {
    weight_leaves[a] = tape.leaf(DenseMatrix::scalar(g.arcs[a].weight));
  }
  ForwardHooks hooks;
  hooks.feature_row = [&](Tape& t, int v) {
    return t.leaf(g.features.row(static_cast<std::size_t>(v)));
  };
  hooks.arc_weight = [&](Tape&, int a) { return weight_leaves[static_cast<std::size_t>(a)]; };
  const int only[] = {node};
  const auto logits = taped_logits(tape, tm, g, hooks, only);
  DenseMatrix onehot(1, 2);
  onehot.data[label] = 1.0;
  const int p = tape.sum(tape.mul(tape.softmax_rows(logits[node]), tape.leaf(std::move(onehot))));
  auto grads = tape.backward(p);

  for (std::size_t ai = 0; ai < g.arcs.size(); ai += 2) {
    const double h = 1e-6;
    auto arcs = g.arcs;
    arcs[ai].weight += h;
    auto gup = build_graph(g.node_count, arcs, g.features, std::nullopt, g.class_count);
    const double up = center_prob(model, gup, node, label);
    arcs[ai].weight -= 2 * h;
    auto gdown = build_graph(g.node_count, arcs, g.features, std::nullopt, g.class_count);
    const double down = center_prob(model, gdown, node, label);
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads.count(weight_leaves[ai]) ? grads.at(weight_leaves[ai]).data[0] : 0.0;
    CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)) < 1e-4);
  }
}

TEST_CASE("training separates a trivially separable graph") {
  DenseMatrix features(4, 2, std::vector<double>{1, 0, 0, 1, 1, 0, 0, 1});
  auto g = build_graph(4, {}, std::move(features), std::vector<int>{0, 1, 0, 1}, 2);
  GnnConfig config;
  config.layer_dims = {2, 4};
  config.class_count = 2;
  config.epochs = 300;
  config.seed = 3;
  const int train_ids[] = {0, 1};
  const int test_ids[] = {2, 3};
  auto result = train(config, g, train_ids, test_ids);
  CHECK(result.final_train_acc == 1.0);
  CHECK(result.final_test_acc == 1.0);
  CHECK(result.loss_history.size() == 300);
  CHECK(result.loss_history.back() < result.loss_history.front());
}

TEST_CASE("training rejects bad splits and reports divergence") {
  Rng rng(61);
  auto g = random_graph(rng, 6, 0.3, 2, 2);
  GnnConfig config;
  config.layer_dims = {2, 3};
  config.class_count = 2;
  config.epochs = 50;
  const int a[] = {0, 1};
  const int overlap[] = {1, 2};
  CHECK_THROWS_AS(train(config, g, a, std::span<const int>{}), Error);
  CHECK_THROWS_AS(train(config, g, a, overlap), Error);

  config.lr_initial = 1e18;
  const int b[] = {2, 3};
  try {
    train(config, g, a, b);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("diverged at epoch") != std::string::npos);
  }
}

TEST_CASE("training is deterministic given the seed") {
  Rng rng(67);
  auto g = random_graph(rng, 8, 0.3, 2, 2);
  GnnConfig config;
  config.layer_dims = {2, 4, 4};
  config.class_count = 2;
  config.epochs = 30;
  config.seed = 9;
  const int train_ids[] = {0, 1, 2, 3};
  const int test_ids[] = {4, 5, 6, 7};
  auto r1 = train(config, g, train_ids, test_ids);
  auto r2 = train(config, g, train_ids, test_ids);
  CHECK(r1.loss_history == r2.loss_history);
  CHECK(r1.model.head_w.data == r2.model.head_w.data);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const fs::path path = fs::temp_directory_path() / "gnnx_ckpt_test.json";
  for (GateKind gate : {GateKind::Sum, GateKind::Gru}) {
    auto model = random_model(3, 5, 3, 4, gate, GnnMode::TypeI, 77);
    save_checkpoint(model, path);
    auto loaded = load_checkpoint(path);

    auto orig = model_parameters(model);
    auto back = model_parameters(loaded);
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
      CHECK(orig[i]->data == back[i]->data);  // exact doubles
    }

    Rng rng(83);
    auto g = random_graph(rng, 12, 0.25, 3, 4);
    const DenseMatrix p1 = forward_type1(model, g, g.features);
    const DenseMatrix p2 = forward_type1(loaded, g, g.features);
    CHECK(p1.data == p2.data);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint rejects truncated and mismatched files") {
  const fs::path dir = fs::temp_directory_path() / "gnnx_ckpt_errors";
  fs::create_directories(dir);
  auto model = random_model(2, 4, 2, 3);
  save_checkpoint(model, dir / "good.json");

  // truncated
  {
    std::ifstream in(dir / "good.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir / "truncated.json");
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "truncated.json"), Error);

  // version mismatch
  {
    std::ofstream out(dir / "version.json");
    out << "{\"format_version\": 99}";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint((dir / "version.json")),
                       doctest::Contains("version mismatch"), Error);

  // shapes inconsistent with config: claim different layer dims
  {
    std::ifstream in(dir / "good.json");
    nlohmann::json doc = nlohmann::json::parse(in);
    doc["config"]["layer_dims"] = {2, 8, 8};
    std::ofstream out(dir / "shape.json");
    out << doc.dump();
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "shape.json"), Error);
  fs::remove_all(dir);
}
