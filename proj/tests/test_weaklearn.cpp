// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "sprout/autodiff.hpp"
#include "sprout/builder.hpp"
#include "sprout/growth.hpp"
#include "sprout/log.hpp"
#include "sprout/train.hpp"
#include "sprout/weaklearn.hpp"

using namespace sprout;

namespace {

void mark(Graph& g, NodeId id, int cell, Role role, const std::string& tag = "", bool is_out = false) {
  auto& n = g.node(id);
  n.cell = cell;
  n.role = role;
  n.tag = tag;
  n.is_out = is_out;
}

Model toy_seed(int cells, SearchMode mode = SearchMode::macro) {
  Skeleton sk;
  sk.cells_per_stage = cells;
  sk.filters = 4;
  return build_model(seed_genotype(mode, "toy", sk, MergeVariant::cp_each, {2}, 2, Task::classification), 5);
}

NodePredicate everything() {
  return [](const Node&) { return true; };
}

}  // namespace

TEST_CASE("seed cell exposes both predecessors and its layers") {
  const auto m = toy_seed(2);
  const NodeId out = *m.graph.cell_output(1);
  const auto scope = enumerate_inputs(m.graph, out);
  CHECK(scope.names == std::vector<std::string>{"in0", "in1", "s1", "s2"});
  CHECK(scope.eligible[0] == *m.graph.cell_output(-1));
  CHECK(scope.eligible[1] == *m.graph.cell_output(0));
}

TEST_CASE("single cell without predecessors exposes only its layers") {
  Graph g;
  ParameterStore p;
  GraphBuilder b(g, p, 0);
  const NodeId in = b.input({3});
  const NodeId s1 = b.dense(in, 3, "s1");
  const NodeId s2 = b.dense(s1, 3, "s2");
  const NodeId out = b.nary(OpKind::add, {in, s2});
  mark(g, s1, 0, Role::layer, "s1");
  mark(g, s2, 0, Role::layer, "s2");
  mark(g, out, 0, Role::cell_output, "out", true);
  const auto scope = enumerate_inputs(g, out);
  CHECK(scope.eligible == std::vector<NodeId>{s1, s2});
  CHECK_THROWS_AS(enumerate_inputs(g, 999), Error);
  CHECK_THROWS_AS(enumerate_inputs(g, s1), Error);
}

TEST_CASE("input scope matches a brute-force filter") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    ParameterStore p;
    GraphBuilder b(g, p, 0);
    std::vector<NodeId> all{b.input({2})};
    const NodeId stem = b.unary(OpKind::relu, all[0]);
    mark(g, stem, kStemCell, Role::cell_output, "out");
    all.push_back(stem);
    const int cells = 1 + static_cast<int>(rng() % 3);
    std::vector<NodeId> outs;
    while (static_cast<int>(g.size()) < 10 - cells || static_cast<int>(outs.size()) < cells) {
      const int cell = static_cast<int>(outs.size());
      const NodeId src = all[rng() % all.size()];
      const NodeId id = b.unary(OpKind::tanh, src);
      all.push_back(id);
      const bool close = cell < cells && (rng() % 3 == 0 || static_cast<int>(g.size()) >= 10 - (cells - cell));
      if (close) {
        mark(g, id, cell, Role::cell_output, "out", true);
        outs.push_back(id);
      } else {
        const int c = cell < cells ? cell : cells - 1;
        const bool layer = rng() % 4 != 0;
        mark(g, id, c, layer ? Role::layer : Role::none, layer ? "s" + std::to_string(id) : "");
      }
    }
    const NodeId target = outs[rng() % outs.size()];
    const int c = g.node(target).cell;
    std::set<NodeId> expected;
    for (const auto& n : g.nodes()) {
      if (g.position(n.id) >= g.position(target)) continue;
      const bool own_layer = n.cell == c && n.role == Role::layer;
      const bool predecessor = n.role == Role::cell_output && (n.cell == c - 1 || n.cell == c - 2);
      if (own_layer || predecessor) expected.insert(n.id);
    }
    const auto scope = enumerate_inputs(g, target);
    const std::set<NodeId> got(scope.eligible.begin(), scope.eligible.end());
    CHECK(got == expected);
    CHECK(got.size() == scope.eligible.size());
  }
}

TEST_CASE("no boosted layer leaves the model untouched") {
  const auto m = toy_seed(2);
  const auto aug = initialize_candidates(m.graph, m.params, [](const Node&) { return false; }, {});
  CHECK(aug.graph == m.graph);
  CHECK(aug.params == m.params);
  CHECK(aug.candidates.empty());
  CHECK(l1_value(aug.extra_loss, aug.params) == 0.0);
}

TEST_CASE("image candidate with two inputs carries fourteen terms") {
  Graph g;
  ParameterStore p;
  GraphBuilder b(g, p, 0);
  const NodeId in = b.input({2, 6, 6});
  const NodeId stem = b.conv(in, 3, 3, "stem/conv");
  mark(g, stem, kStemCell, Role::cell_output, "out");
  const NodeId s1 = b.conv(stem, 3, 3, "c0/s1");
  mark(g, s1, 0, Role::layer, "s1");
  const NodeId out = b.nary(OpKind::add, {stem, s1});
  mark(g, out, 0, Role::cell_output, "out", true);
  b.loss(OpKind::softmax_xent, b.dense(b.unary(OpKind::global_avg_pool, out), 2, "head/dense"));
  g.validate();

  CandidateOptions opt;
  opt.opset = image_opset();
  const auto aug = initialize_candidates(g, p, everything(), opt);
  REQUIRE(aug.candidates.size() == 1);
  CHECK(aug.candidates[0].terms.size() == 14);
  CHECK(l1_value(aug.extra_loss, aug.params) == doctest::Approx(1.4e-5).epsilon(1e-12));
  aug.graph.validate();
}

TEST_CASE("empty opset is rejected") {
  const auto m = toy_seed(1);
  CandidateOptions opt;
  opt.opset = {};
  CHECK_THROWS_AS(initialize_candidates(m.graph, m.params, everything(), opt), ConfigError);
}

TEST_CASE("isolated candidates do not disturb the model trajectory") {
  const auto m = toy_seed(2);
  const auto data = oracle::spirals(64, 4);
  TrainOptions topt;
  topt.epochs = 2;
  topt.batch_size = 16;
  topt.seed = 9;
  auto plain = m.params;
  const auto base = train(m.graph, plain, data, topt);

  for (bool freeze_alpha : {true, false}) {
    CandidateOptions copt;
    copt.seed = 1;
    auto aug = initialize_candidates(m.graph, m.params, everything(), copt);
    auto opts = topt;
    opts.l1 = aug.extra_loss;
    if (freeze_alpha) {
      for (const auto& c : aug.candidates)
        for (const auto& k : c.alpha_keys()) {
          aug.params.get(k).data[0] = 0.0;
          opts.frozen.insert(k);
        }
    }
    const auto stats = train(aug.graph, aug.params, data, opts);
    CHECK(stats.epoch_loss == base.epoch_loss);
    for (const auto& key : plain.keys()) CHECK(aug.params.get(key) == plain.get(key));
  }
}

TEST_CASE("l1 subgradient") {
  ParameterStore p;
  p.set("a/alpha", Tensor::scalar(0.2));
  p.set("b/alpha", Tensor::scalar(-0.3));
  p.set("c/alpha", Tensor::scalar(0.0));
  std::map<std::string, Tensor> grads;
  add_l1_subgradient({{0.001, {"a/alpha", "b/alpha", "c/alpha"}}}, p, grads);
  CHECK(grads.at("a/alpha").data[0] == 0.001);
  CHECK(grads.at("b/alpha").data[0] == -0.001);
  CHECK(grads.at("c/alpha").data[0] == 0.0);
}

TEST_CASE("select_top") {
  CHECK(select_top({0.5, -0.9, 0.1, 0.3}, 2) == std::vector<std::size_t>{1, 0});
  CHECK(select_top({0.5, -0.5}, 1) == std::vector<std::size_t>{0});
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
  CHECK(select_top({0.1, 0.2}, 3) == std::vector<std::size_t>{1, 0});
  set_warning_sink(nullptr);
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(select_top({0.1}, 0), ConfigError);
}

TEST_CASE("candidate gradients equal the inner-product oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    auto opts = oracle::random_model_options(rng);
    opts.stages = 1;
    auto rm = oracle::random_model(rng, opts);
    auto aug = oracle::random_candidates(rm.model, rng, false);
    const auto fwd = forward(aug.graph, aug.params, rm.batch, Mode::train);
    const auto grads = backward(aug.graph, aug.params, rm.batch, fwd);
    const auto expected = oracle::inner_product_gradients(rm.model.graph, rm.model.params, aug, rm.batch);
    REQUIRE(!expected.empty());
    for (const auto& [key, g] : expected) CHECK(oracle::rel_diff(grads.params.at(key), g) <= 1e-8);
  }
}

TEST_CASE("candidate report lists every term") {
  const auto m = toy_seed(2);
  auto aug = initialize_candidates(m.graph, m.params, everything(), {});
  std::ostringstream out;
  write_candidate_report(out, aug.candidates, aug.params, 2);
  std::size_t lines = 0, terms = 0;
  for (const auto& c : aug.candidates) terms += c.terms.size();
  std::string line;
  std::istringstream in(out.str());
  while (std::getline(in, line)) ++lines;
  CHECK(lines == terms);
}

TEST_CASE("select_top depends on order only through ties") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(8);
    for (auto& v : a) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = a[perm[i]];
    const auto top_a = select_top(a, 3);
    const auto top_b = select_top(b, 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(perm[top_b[k]] == top_a[k]);
  }
}

TEST_CASE("weak learning descends its linearized objective") {
  // Frozen linear model with identity shortcuts from per-feature selectors:
  // the shortcut objective <dL/dx_k, x_c> + lambda |alpha| is linear in alpha.
  std::mt19937_64 rng(45);
  Graph g;
  ParameterStore p;
  GraphBuilder b(g, p, 0);
  const NodeId in = b.input({3});
  b.set_cell(0);
  for (int j = 0; j < 3; ++j) {
    const NodeId f = b.dense(in, 1, "f" + std::to_string(j));
    auto& w = p.get("f" + std::to_string(j) + "/w");
    std::fill(w.data.begin(), w.data.end(), 0.0);
    w.data[static_cast<std::size_t>(j)] = 1.0;
    p.get("f" + std::to_string(j) + "/b").data[0] = 0.0;
    mark(g, f, 0, Role::layer, "f" + std::to_string(j));
  }
  const NodeId base = b.dense(in, 1, "base");
  const NodeId out = b.nary(OpKind::add, {base});
  mark(g, out, 0, Role::cell_output, "out", true);
  b.set_cell(kNoCell);
  b.loss(OpKind::mse, out);

  Dataset data;
  data.task = Task::regression;
  data.inputs = oracle::random_tensor({20, 3}, rng);
  data.targets = oracle::random_tensor({20, 1}, rng);
  CandidateOptions copt;
  copt.opset = {ShortcutOp::identity};
  copt.normalize = false;
  auto aug = initialize_candidates(g, p, everything(), copt);
  const auto batch = data.all();
  auto surrogate = [&] {
    const auto fp = forward(g, p, batch, Mode::train);
    const auto gp = backward(g, p, batch, fp);
    const auto fa = forward(aug.graph, aug.params, batch, Mode::train);
    double s = l1_value(aug.extra_loss, aug.params);
    for (const auto& c : aug.candidates) s += dot(gp.nodes.at(c.target_node), fa.at(c.candidate_node));
    return s;
  };
  WeakLearnOptions wopt;
  wopt.freeze_model = true;
  wopt.train.epochs = 1;
  wopt.train.batch_size = 20;
  wopt.train.weight_decay = 0.0;
  wopt.train.lr0 = 0.05;
  double prev = surrogate();
  for (int epoch = 0; epoch < 10; ++epoch) {
    // One step per call; cosine decay over a single step keeps lr0.
    weak_learn(aug, p, data, wopt);
    const double now = surrogate();
    CHECK(now < prev);
    prev = now;
  }
}
