#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gnnx/error.hpp"
#include "gnnx/explain_edges.hpp"
#include "gnnx/model.hpp"
#include "gnnx/rng.hpp"
#include "helpers.hpp"

using namespace gnnx;
using gnnx::testing::random_graph;
using gnnx::testing::random_model;

namespace {

// star into node 0 with given weights
ComputationalGraph star_cg(const std::vector<double>& weights) {
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    arcs.push_back({static_cast<int>(i) + 1, 0, weights[i]});
  }
  auto g = build_graph(static_cast<int>(weights.size()) + 1, std::move(arcs),
                       DenseMatrix(weights.size() + 1, 2, 1.0));
  return computational_graph(g, 0, 1);
}

}  // namespace

TEST_CASE("renormalize_mask is a per-node softmax of mask times weight") {
  auto cg = star_cg({1.0, 1.0});
  auto equal = renormalize_mask({0.4, 0.4}, cg);
  CHECK(equal[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(equal[1] == doctest::Approx(0.5).epsilon(1e-12));

  auto skew = renormalize_mask({1.0, 0.0}, cg);
  const double expected = std::exp(1.0) / (std::exp(1.0) + 1.0);
  CHECK(skew[0] == doctest::Approx(expected).epsilon(1e-9));  // ~0.731
  CHECK(skew[1] == doctest::Approx(1.0 - expected).epsilon(1e-9));

  auto single = star_cg({0.7});
  CHECK(renormalize_mask({0.3}, single)[0] == doctest::Approx(1.0));
}

TEST_CASE("renormalized weights sum to one per node") {
  Rng rng(3);
  auto g = random_graph(rng, 12, 0.3, 2, 2);
  auto cg = computational_graph(g, 0, 3);
  std::vector<double> mask(static_cast<std::size_t>(cg.arc_count()));
  for (double& m : mask) m = rng.uniform();
  auto omega = renormalize_mask(mask, cg);
  for (int u = 0; u < cg.local.node_count; ++u) {
    const auto& incoming = cg.local.in_arcs[static_cast<std::size_t>(u)];
    if (incoming.empty()) continue;
    double total = 0.0;
    for (int a : incoming) total += omega[static_cast<std::size_t>(a)];
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("mask_loss arithmetic") {
  auto cg = star_cg({1.0, 1.0});
  DenseMatrix perfect(1, 2, std::vector<double>{1.0, 0.0});

  // CE = 0, entropy of the uniform pair = ln 2
  const double uniform_mask_loss = mask_loss(perfect, 0, {0.5, 0.5}, cg, 1.0, 0.0);
  CHECK(uniform_mask_loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // concentrated omega: entropy ~ 0 (softmax can only saturate, not reach 0/1)
  auto cg_wide = star_cg({30.0, 1e-3});
  const double concentrated = mask_loss(perfect, 0, {1.0, 0.0}, cg_wide, 1.0, 0.0);
  CHECK(concentrated < 1e-9);

  // regularizers off: plain cross-entropy
  DenseMatrix halves(1, 2, std::vector<double>{0.5, 0.5});
  CHECK(mask_loss(halves, 0, {0.3, 0.9}, cg, 0.0, 0.0) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  // zero-probability guard
  DenseMatrix zero(1, 2, std::vector<double>{0.0, 1.0});
  CHECK(std::isfinite(mask_loss(zero, 0, {0.5, 0.5}, cg, 0.0, 0.0)));
}

TEST_CASE("mmi_edge_mask: K=0 returns the initialization untouched") {
  auto cg = star_cg({1.0, 2.0, 0.5});
  auto model = random_model(2, 4, 2, 2);
  EdgeMaskHyper hyper;
  hyper.iterations = 0;
  hyper.seed = 42;
  auto result = mmi_edge_mask(model, cg, 0, hyper);
  CHECK(result.loss_history.empty());
  Rng rng(42);
  for (double m : result.mask) CHECK(m == rng.uniform());
}

TEST_CASE("mmi_edge_mask keeps every entry in [0,1] at every step") {
  Rng rng(11);
  auto g = random_graph(rng, 10, 0.3, 2, 2);
  auto cg = computational_graph(g, 1, 2);
  auto model = random_model(2, 4, 2, 2);
  EdgeMaskHyper hyper;
  hyper.lr = 2.0;  // aggressive steps to stress the projection
  for (int k : {1, 2, 3, 5, 20}) {
    hyper.iterations = k;
    auto result = mmi_edge_mask(model, cg, 0, hyper);
    for (double m : result.mask) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
    }
  }
}

TEST_CASE("taped mask objective equals the reference mask_loss") {
  Rng rng(13);
  auto g = random_graph(rng, 9, 0.3, 2, 2);
  auto cg = computational_graph(g, 0, 2);
  auto model = random_model(2, 4, 2, 2);

  EdgeMaskHyper hyper;
  hyper.iterations = 1;
  hyper.seed = 5;
  auto result = mmi_edge_mask(model, cg, 1, hyper);

  Rng init(5);
  std::vector<double> mask(static_cast<std::size_t>(cg.arc_count()));
  for (double& m : mask) m = init.uniform();
  auto omega = renormalize_mask(mask, cg);
  const DenseMatrix probs = forward_type1(model, cg.local, cg.local.features, &omega);
  const double expected = mask_loss(probs.row(static_cast<std::size_t>(cg.center)), 1, mask, cg,
                                    hyper.lambda_entropy, hyper.lambda_size);
  CHECK(result.loss_history[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mask optimization reduces the loss on nearly all seeded runs") {
  Rng rng(17);
  int improved = 0;
  int runs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_graph(rng, 10, 0.3, 2, 2);
    auto model = random_model(2, 4, 2, 2, GateKind::Sum, GnnMode::TypeI,
                              1000 + static_cast<std::uint64_t>(trial));
    auto cg = computational_graph(g, 0, 2);
    if (cg.arc_count() == 0) continue;
    EdgeMaskHyper hyper;
    hyper.iterations = 100;
    hyper.seed = static_cast<std::uint64_t>(trial);
    auto result = mmi_edge_mask(model, cg, (*g.labels)[0], hyper);
    ++runs;
    if (result.loss_history.back() <= result.loss_history.front()) ++improved;
  }
  CHECK(runs >= 15);
  CHECK(static_cast<double>(improved) / runs >= 0.95);
}

TEST_CASE("explanations leave the model bit-identical") {
  Rng rng(19);
  auto g = random_graph(rng, 10, 0.3, 2, 2);
  auto cg = computational_graph(g, 2, 2);
  auto model = random_model(2, 4, 2, 2);
  GnnModel snapshot = model;

  EdgeMaskHyper hyper;
  hyper.iterations = 30;
  (void)mmi_edge_mask(model, cg, 0, hyper);
  (void)ggd_edge_salience(model, cg, 0);
  (void)baseline_sigmoid_mask(model, cg, 0, hyper);

  auto before = model_parameters(snapshot);
  auto after = model_parameters(model);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i]->data == after[i]->data);
  }
}

TEST_CASE("single incoming arc ranks first for the mmi mask") {
  // the computational graph of u holds exactly one arc: the only message path
  auto g = build_graph(3, {{0, 1, 1.0}, {1, 2, 1.0}}, DenseMatrix(3, 2, 1.0));
  auto cg = computational_graph(g, 2, 1);
  REQUIRE(cg.arc_count() == 1);
  auto model = random_model(2, 4, 1, 2);
  EdgeMaskHyper hyper;
  hyper.iterations = 100;
  auto result = mmi_edge_mask(model, cg, 0, hyper);
  auto scores = mmi_edge_scores(result.mask, cg);
  const double top = *std::max_element(scores.begin(), scores.end());
  CHECK(scores[0] == doctest::Approx(top));
  CHECK(result.loss_history.size() == 100);
}

TEST_CASE("mmi_edge_mask refuses an arcless computational graph") {
  auto g = build_graph(2, {}, DenseMatrix(2, 2, 1.0));
  auto cg = computational_graph(g, 0, 2);
  auto model = random_model(2, 4, 2, 2);
  CHECK_THROWS_WITH_AS(mmi_edge_mask(model, cg, 0, {}),
                       doctest::Contains("nothing to mask"), Error);
  CHECK_THROWS_AS(baseline_sigmoid_mask(model, cg, 0, {}), Error);
}

TEST_CASE("ggd salience is deterministic and max-normalized") {
  Rng rng(23);
  auto g = random_graph(rng, 10, 0.35, 2, 3);
  auto cg = computational_graph(g, 0, 3);
  auto model = random_model(2, 4, 3, 3);
  auto s1 = ggd_edge_salience(model, cg, (*g.labels)[0]);
  auto s2 = ggd_edge_salience(model, cg, (*g.labels)[0]);
  CHECK(s1.values == s2.values);
  if (!s1.all_zero) {
    CHECK(*std::max_element(s1.values.begin(), s1.values.end()) == doctest::Approx(1.0));
    for (double v : s1.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("ggd with a gradient-free model flags all zeros") {
  auto cg = star_cg({1.0, 2.0});
  GnnConfig config;
  config.layer_dims = {2, 3};
  config.class_count = 2;
  auto model = init_model(config);
  for (DenseMatrix* p : model_parameters(model)) {
    for (double& v : p->data) v = 0.0;
  }
  auto salience = ggd_edge_salience(model, cg, 0);
  CHECK(salience.all_zero);
  for (double v : salience.values) CHECK(v == 0.0);
}

TEST_CASE("baseline with K=0 is the normalized sigmoid of the initialization") {
  auto cg = star_cg({1.0, 2.0, 0.5});
  auto model = random_model(2, 4, 2, 2);
  EdgeMaskHyper hyper;
  hyper.iterations = 0;
  hyper.seed = 7;
  auto salience = baseline_sigmoid_mask(model, cg, 0, hyper);

  Rng rng(7);
  std::vector<double> expected(3);
  double mx = 0.0;
  for (double& v : expected) {
    v = 1.0 / (1.0 + std::exp(-rng.uniform()));
    mx = std::max(mx, v);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(salience.values[i] == doctest::Approx(expected[i] / mx).epsilon(1e-12));
  }
  CHECK(*std::max_element(salience.values.begin(), salience.values.end()) ==
        doctest::Approx(1.0));
}

TEST_CASE("baseline on a single-arc graph selects that arc") {
  auto cg = star_cg({0.4});
  auto model = random_model(2, 4, 2, 2);
  EdgeMaskHyper hyper;
  hyper.iterations = 20;
  auto salience = baseline_sigmoid_mask(model, cg, 0, hyper);
  REQUIRE(salience.values.size() == 1);
  CHECK(salience.values[0] == doctest::Approx(1.0));
}

TEST_CASE("explainers require Type I models where masking is defined") {
  auto cg = star_cg({1.0});
  auto model = random_model(2, 3, 1, 2, GateKind::Sum, GnnMode::TypeII);
  CHECK_THROWS_AS(mmi_edge_mask(model, cg, 0, {}), Error);
  CHECK_THROWS_AS(baseline_sigmoid_mask(model, cg, 0, {}), Error);
  // GGD handles Type II via its per-arc weight nodes
  auto salience = ggd_edge_salience(model, cg, 0);
  CHECK(salience.values.size() == 1);
}
