// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "sprout/fslr.hpp"

using namespace sprout;

namespace {

std::vector<std::vector<double>> rows_of(const DesignMatrix& x) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(x.rows));
  for (std::int64_t i = 0; i < x.rows; ++i)
    for (std::int64_t j = 0; j < x.cols; ++j) out[static_cast<std::size_t>(i)].push_back(x.at(i, j));
  return out;
}

double residual_norm(const DesignMatrix& x, const std::vector<double>& y, const std::vector<double>& beta) {
  double s = 0.0;
  for (std::int64_t i = 0; i < x.rows; ++i) {
    double r = y[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < x.cols; ++j) r -= x.at(i, j) * beta[static_cast<std::size_t>(j)];
    s += r * r;
  }
  return std::sqrt(s);
}

DesignMatrix random_design(std::mt19937_64& rng, std::int64_t rows, std::int64_t cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (auto& e : v) e = n(rng);
  return standardize(DesignMatrix(rows, cols, v));
}

// Index of the column with the largest |x_j . y|, by direct summation.
std::int64_t strongest(const DesignMatrix& x, const std::vector<double>& y, double* margin) {
  std::vector<double> c(static_cast<std::size_t>(x.cols), 0.0);
  for (std::int64_t j = 0; j < x.cols; ++j)
    for (std::int64_t i = 0; i < x.rows; ++i) c[static_cast<std::size_t>(j)] += x.at(i, j) * y[static_cast<std::size_t>(i)];
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < x.cols; ++j)
    if (std::abs(c[static_cast<std::size_t>(j)]) > std::abs(c[static_cast<std::size_t>(best)])) best = j;
  double second = 0.0;
  for (std::int64_t j = 0; j < x.cols; ++j)
    if (j != best) second = std::max(second, std::abs(c[static_cast<std::size_t>(j)]));
  if (margin) *margin = std::abs(c[static_cast<std::size_t>(best)]) / std::max(second, 1e-300);
  return best;
}

}  // namespace

TEST_CASE("boost_select examples") {
  CHECK(boost_select({{1, 0}, {0, 1}}, {-2, 1}) == 0);
  CHECK(boost_select({{1, 0}, {0, 1}, {1, 1}}, {0, 0}) == 0);
  CHECK_THROWS_AS(boost_select({}, {1.0}), Error);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> learners(50, std::vector<double>(8));
    for (auto& h : learners)
      for (auto& v : h) v = n(rng);
    std::vector<double> g(8);
    for (auto& v : g) v = n(rng);
    std::size_t best = 0;
    double best_v = INFINITY;
    for (std::size_t h = 0; h < learners.size(); ++h) {
      double v = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) v += g[i] * learners[h][i];
      if (v < best_v) {
        best_v = v;
        best = h;
      }
    }
    CHECK(boost_select(learners, g) == best);
  }
}

TEST_CASE("fslr on a zero target") {
  const DesignMatrix x(3, 2, {1, 0, 0, 1, 1, 1});
  const auto path = fslr_run(x, {0, 0, 0}, 0.1, 5);
  for (const auto& s : path.steps) {
    CHECK(s.coefficients == std::vector<double>{0.0, 0.0});
    CHECK(s.residual_norm == 0.0);
  }
}

TEST_CASE("fslr on an orthonormal design") {
  const DesignMatrix x(2, 2, {1, 0, 0, 1});
  const auto path = fslr_run(x, {2, 1}, 0.1, 200);
  CHECK(path.steps.front().feature == 0);
  CHECK(path.final_coefficients()[0] == doctest::Approx(2.0).epsilon(0.06));
  CHECK(path.final_coefficients()[1] == doctest::Approx(1.0).epsilon(0.11));
  CHECK(path.final_residual_norm() <= 0.1 + 1e-12);
  CHECK_THROWS_AS(fslr_run(x, {2, 1}, 0.0, 5), Error);
}

TEST_CASE("fslr approaches least squares") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_design(rng, 20, 5);
    std::vector<double> y(20);
    for (auto& v : y) v = n(rng);
    const auto beta = oracle::normal_equations(rows_of(x), y);
    const double oracle_norm = residual_norm(x, y, beta);
    const auto ls = least_squares(x, y);
    CHECK(ls.residual_norm == doctest::Approx(oracle_norm).epsilon(1e-10));
    const auto path = fslr_run(x, y, 0.001, 20000);
    CHECK(path.final_residual_norm() <= 1.01 * oracle_norm);
  }
}

TEST_CASE("weak learning ranks the dominant feature first") {
  const DesignMatrix x(4, 2, {0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5});
  std::vector<double> y(4);
  for (std::int64_t i = 0; i < 4; ++i) y[static_cast<std::size_t>(i)] = 10.0 * x.at(i, 0) + 1.0 * x.at(i, 1);
  EquivalenceOptions opt;
  opt.standardize = false;
  const auto report = linear_equivalence_run(x, y, opt);
  REQUIRE(report.rounds.size() == 1);
  CHECK(report.rounds[0].alpha_ranking.front() == 0);
  CHECK(report.rounds[0].boost_choice == 0);
  CHECK(report.rounds[0].fslr_choice == 0);
  CHECK(report.all_agree());
}

TEST_CASE("no signal is flagged") {
  const DesignMatrix x(4, 2, {0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5});
  // Orthogonal to both columns.
  const std::vector<double> y{1, 1, -1, -1};
  EquivalenceOptions opt;
  opt.standardize = false;
  const auto report = linear_equivalence_run(x, y, opt);
  CHECK_FALSE(report.rounds[0].informative);
}

TEST_CASE("well separated random instances agree") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  int done = 0;
  while (done < 5) {
    const auto x = random_design(rng, 40, 5);
    std::vector<double> y(40);
    const auto k = static_cast<std::int64_t>(rng() % 5);
    for (std::int64_t i = 0; i < 40; ++i) y[static_cast<std::size_t>(i)] = 3.0 * x.at(i, k) + 0.3 * n(rng);
    double margin = 0.0;
    const auto expected = strongest(x, y, &margin);
    if (margin < 2.0) continue;
    ++done;
    EquivalenceOptions opt;
    opt.rounds = 3;
    opt.seed = static_cast<std::uint64_t>(done);
    const auto report = linear_equivalence_run(x, y, opt);
    CHECK(report.rounds[0].alpha_ranking.front() == expected);
    CHECK(report.rounds[0].fslr_choice == expected);
    CHECK(report.all_agree());
  }
}

TEST_CASE("coefficient path csv") {
  const DesignMatrix x(2, 2, {1, 0, 0, 1});
  const auto csv = fslr_run(x, {2, 1}, 0.5, 2).to_csv();
  CHECK(csv == "iteration,feature,coef_0,coef_1,residual_norm\n1,0,0.5,0,1.8027756377319946\n2,0,1,0,1.4142135623730951\n");
}

TEST_CASE("boost_select ignores positive gradient scale") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> learners(10, std::vector<double>(6));
    for (auto& h : learners)
      for (auto& v : h) v = n(rng);
    std::vector<double> g(6), scaled(6);
    const double s = std::exp(n(rng) * 3.0);
    for (std::size_t i = 0; i < 6; ++i) {
      g[i] = n(rng);
      scaled[i] = s * g[i];
    }
    CHECK(boost_select(learners, g) == boost_select(learners, scaled));
  }
}

TEST_CASE("fslr residual never grows with a small step") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto x = random_design(rng, 30, 4);
  std::vector<double> y(30);
  for (auto& v : y) v = n(rng);
  const auto path = fslr_run(x, y, 0.01, 3000);
  double prev = path.initial_residual_norm;
  int grew = 0;
  for (const auto& s : path.steps) {
    // Once the path oscillates around the least-squares fit the residual can
    // tick up by O(step^2); anything larger is a real increase.
    if (s.residual_norm > prev + 1e-4) ++grew;
    prev = s.residual_norm;
  }
  CHECK(grew == 0);
}

TEST_CASE("fslr on an orthonormal design touches only the active features") {
  // Columns of a 4x4 Hadamard matrix scaled to unit norm.
  const DesignMatrix x(4, 4, {0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5, 0.5});
  const std::vector<double> beta{2.0, 0.0, 1.0, 0.0};
  std::vector<double> y(4, 0.0);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) y[static_cast<std::size_t>(i)] += x.at(i, j) * beta[static_cast<std::size_t>(j)];
  const auto path = fslr_run(x, y, 0.1, 40);
  std::set<std::int64_t> touched;
  for (const auto& s : path.steps) {
    if (s.residual_norm > 1e-9 || touched.empty()) touched.insert(s.feature);
  }
  CHECK(touched == std::set<std::int64_t>{0, 2});
}
