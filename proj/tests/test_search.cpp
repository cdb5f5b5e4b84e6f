// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <random>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "sprout/builder.hpp"
#include "sprout/config.hpp"
#include "sprout/search.hpp"

using namespace sprout;

namespace {

std::vector<HullPoint> hull_points(const std::vector<HullPoint>& pts, const std::vector<std::size_t>& idx) {
  std::vector<HullPoint> out;
  for (auto i : idx) out.push_back(pts[i]);
  return out;
}

bool same(const std::vector<HullPoint>& a, const std::vector<HullPoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].cost != b[i].cost || a[i].error != b[i].error) return false;
  }
  return true;
}

SearchState state_with(const std::vector<std::int64_t>& costs, const std::vector<double>& errors) {
  SearchState s;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    ModelRecord r;
    r.id = static_cast<int>(i);
    r.cost = costs[i];
    r.val_error = errors[i];
    r.status = RecordStatus::done;
    s.records[r.id] = r;
  }
  s.update_hull();
  return s;
}

// Logits graph: the input is the prediction.
struct Logits {
  Graph graph;
  ParameterStore params;
};

Logits logits_graph(std::int64_t classes, OpKind loss) {
  Logits l;
  GraphBuilder b(l.graph, l.params, 0);
  b.loss(loss, b.unary(OpKind::identity, b.input({classes})));
  return l;
}

RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.skeleton.filters = 8;
  c.seed_epochs = 3;
  c.weak_epochs = 2;
  c.child_epochs = 3;
  c.growth_iterations = 2;
  c.lr0 = 0.1;
  c.dataset.size = 300;
  return c;
}

}  // namespace

TEST_CASE("hull examples") {
  CHECK(same(hull_points({{1, 0.9}}, lower_convex_hull({{1, 0.9}})), {{1, 0.9}}));
  const std::vector<HullPoint> four{{1, 0.9}, {2, 0.5}, {3, 0.45}, {4, 0.2}};
  CHECK(same(hull_points(four, lower_convex_hull(four)), {{1, 0.9}, {2, 0.5}, {4, 0.2}}));
  const std::vector<HullPoint> dup{{1, 0.5}, {1, 0.4}, {2, 0.3}};
  CHECK(same(hull_points(dup, lower_convex_hull(dup)), {{1, 0.4}, {2, 0.3}}));
  CHECK_THROWS_AS(lower_convex_hull({}), Error);
}

TEST_CASE("hull matches brute force") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<HullPoint> pts;
    for (int i = 0; i < n; ++i) {
      pts.push_back({static_cast<double>(rng() % 8), static_cast<double>(rng() % 8) / 8.0});
    }
    const auto fast = hull_points(pts, lower_convex_hull(pts));
    const auto slow = hull_points(pts, oracle::brute_hull(pts));
    CHECK(same(fast, slow));
    for (std::size_t i = 1; i < fast.size(); ++i) {
      CHECK(fast[i].cost > fast[i - 1].cost);
      CHECK(fast[i].error < fast[i - 1].error);
    }
  }
}

TEST_CASE("parent distribution") {
  CHECK(parent_distribution({0, 0, 0}) == std::vector<double>{1.0, 0.0, 0.0});
  const auto two = parent_distribution({1, 0});
  CHECK(two[0] == doctest::Approx(0.5));
  CHECK(two[1] == doctest::Approx(0.5));
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int64_t> counts(1 + rng() % 6);
    for (auto& c : counts) c = static_cast<std::int64_t>(rng() % 5);
    const auto p = parent_distribution(counts);
    const auto q = oracle::enumerate_parent_distribution(counts);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-12));
  }
}

TEST_CASE("sampling starts from the most accurate model and counts draws") {
  auto s = state_with({10, 20, 30}, {0.5, 0.3, 0.2});
  REQUIRE(s.hull == std::vector<int>{0, 1, 2});
  std::mt19937_64 rng(2);
  CHECK(sample_parent(s, rng) == 2);
  CHECK(s.records.at(2).sample_count == 1);
  SearchState empty;
  CHECK_THROWS_AS(sample_parent(empty, rng), Error);
}

TEST_CASE("final model filter") {
  const std::int64_t m = 1000000;
  auto s = state_with({10 * m, 55 * m, 62 * m, 90 * m}, {0.9, 0.5, 0.45, 0.44});
  REQUIRE(s.hull.size() == 4);
  CHECK(filter_for_final(s, 60 * m) == std::vector<int>{1, 2});
  auto far = state_with({10 * m, 200 * m}, {0.5, 0.1});
  CHECK(filter_for_final(far, 60 * m) == std::vector<int>{0});
  auto tie = state_with({40 * m, 80 * m}, {0.5, 0.1});
  CHECK(filter_for_final(tie, 60 * m) == std::vector<int>{0});
}

TEST_CASE("evaluation") {
  auto cls = logits_graph(2, OpKind::softmax_xent);
  Dataset perfect;
  perfect.inputs = Tensor({10, 2});
  perfect.targets = Tensor({10});
  perfect.classes = 2;
  for (int i = 0; i < 10; ++i) {
    perfect.targets.data[i] = i % 2;
    perfect.inputs.data[i * 2 + i % 2] = 1.0;
  }
  CHECK(evaluate(cls.graph, cls.params, perfect) == 0.0);
  Dataset constant = perfect;
  for (auto& v : constant.inputs.data) v = 0.25;
  CHECK(evaluate(cls.graph, cls.params, constant) == 0.5);

  auto three = logits_graph(3, OpKind::softmax_xent);
  std::mt19937_64 rng(8);
  Dataset random;
  random.inputs = oracle::random_tensor({30, 3}, rng);
  random.targets = Tensor({30});
  random.classes = 3;
  int wrong = 0;
  for (int i = 0; i < 30; ++i) {
    random.targets.data[i] = static_cast<double>(rng() % 3);
    const double* row = &random.inputs.data[i * 3];
    const int arg = static_cast<int>(std::max_element(row, row + 3) - row);
    if (arg != static_cast<int>(random.targets.data[i])) ++wrong;
  }
  CHECK(evaluate(three.graph, three.params, random) == static_cast<double>(wrong) / 30.0);

  auto reg = logits_graph(1, OpKind::mse);
  Dataset r;
  r.task = Task::regression;
  r.inputs = Tensor({2, 1}, {1.0, 3.0});
  r.targets = Tensor({2, 1}, {0.0, 0.0});
  CHECK(evaluate(reg.graph, reg.params, r) == doctest::Approx(5.0 / 6.0));

  Dataset none;
  CHECK_THROWS_AS(evaluate(cls.graph, cls.params, none), Error);
}

TEST_CASE("zero growth iterations keep only the seed") {
  auto c = small_config(1);
  c.growth_iterations = 0;
  const auto [train, val] = split(generate(c.dataset), c.dataset.val_fraction);
  const auto out = search_loop(c, train, val);
  CHECK(out.state.records.size() == 1);
  CHECK(out.state.hull == std::vector<int>{0});
}

TEST_CASE("each child adds one finalized round and costs more") {
  auto c = small_config(2);
  const auto [train, val] = split(generate(c.dataset), c.dataset.val_fraction);
  const auto dir = std::filesystem::temp_directory_path() / "sprout-test-search";
  std::filesystem::remove_all(dir);
  const auto out = search_loop(c, train, val, dir);
  REQUIRE(out.state.records.size() == 3);
  for (int id : {1, 2}) {
    const auto& child = out.state.records.at(id);
    REQUIRE(child.status == RecordStatus::done);
    const auto& parent = out.state.records.at(child.parent_id);
    CHECK(child.genotype.growth_rounds() == parent.genotype.growth_rounds() + 1);
    CHECK(child.cost > parent.cost);
  }
  for (std::size_t i = 1; i < out.state.hull.size(); ++i) {
    const auto& a = out.state.records.at(out.state.hull[i - 1]);
    const auto& b = out.state.records.at(out.state.hull[i]);
    CHECK(a.cost < b.cost);
    CHECK(*a.val_error > *b.val_error);
  }
  for (const char* f : {"manifest.json", "search.jsonl", "hull.csv", "genotypes/model_0.json",
                        "genotypes/model_2.json", "checkpoints/model_1/params.bin", "candidates/model_1.jsonl"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  }
  const auto events = read_search_log(dir / "search.jsonl");
  CHECK(events.size() == 3);
  std::ifstream csv(dir / "hull.csv");
  const std::string text((std::istreambuf_iterator<char>(csv)), {});
  CHECK(text == hull_csv(events));
  std::filesystem::remove_all(dir);
}

TEST_CASE("parallel workers produce every child") {
  auto c = small_config(3);
  c.workers = 2;
  c.growth_iterations = 3;
  const auto [train, val] = split(generate(c.dataset), c.dataset.val_fraction);
  const auto out = search_loop(c, train, val);
  CHECK(out.state.records.size() == 4);
  CHECK(out.events.size() == 4);
  for (const auto& [id, r] : out.state.records) CHECK(r.status == RecordStatus::done);
}

TEST_CASE("sampling only returns hull models and counts each draw") {
  auto s = state_with({10, 20, 30, 40, 50}, {0.5, 0.3, 0.35, 0.2, 0.19});
  std::mt19937_64 rng(4);
  std::map<int, std::int64_t> seen;
  for (int i = 0; i < 500; ++i) {
    const int id = sample_parent(s, rng);
    CHECK(std::find(s.hull.begin(), s.hull.end(), id) != s.hull.end());
    ++seen[id];
  }
  for (const auto& [id, r] : s.records) CHECK(r.sample_count == (seen.count(id) ? seen[id] : 0));
}
