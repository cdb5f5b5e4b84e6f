// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sprout {

/// Row-major design matrix with cached column norms.
struct DesignMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;
  std::vector<double> col_norms;

  DesignMatrix() = default;
  DesignMatrix(std::int64_t rows, std::int64_t cols, std::vector<double> values);

  double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
  std::vector<double> column(std::int64_t c) const;
  /// X^T v
  std::vector<double> correlate(const std::vector<double>& v) const;
};

/// Zero-mean, unit-norm columns. Throws on a constant column.
DesignMatrix standardize(const DesignMatrix& x);

/// argmin_h <gradient, h>, ties to the lowest index.
std::size_t boost_select(const std::vector<std::vector<double>>& learners, const std::vector<double>& gradient);

struct PathStep {
  std::int64_t iteration = 0;
  std::int64_t feature = 0;
  std::vector<double> coefficients;
  double residual_norm = 0.0;
};

struct CoefficientPath {
  std::vector<PathStep> steps;
  double initial_residual_norm = 0.0;

  const std::vector<double>& final_coefficients() const { return steps.back().coefficients; }
  double final_residual_norm() const { return steps.empty() ? initial_residual_norm : steps.back().residual_norm; }
  std::string to_csv() const;
};

/// Forward-stagewise regression: each iteration moves the coefficient of the
/// feature most correlated with the residual by step * sign(correlation).
CoefficientPath fslr_run(const DesignMatrix& x, const std::vector<double>& y, double step, std::int64_t iterations);

struct LeastSquares {
  std::vector<double> coefficients;
  double residual_norm = 0.0;
};

LeastSquares least_squares(const DesignMatrix& x, const std::vector<double>& y);

struct EquivalenceOptions {
  int rounds = 1;
  int epochs = 30;
  double lr = 0.05;
  double lambda = 0.001;
  double step = 0.1;
  bool standardize = true;
  std::uint64_t seed = 0;
  /// Correlations below this (relative to |y|) count as no signal.
  double signal_tolerance = 1e-9;
};

struct EquivalenceRound {
  int round = 0;
  /// Features ordered by |alpha| after weak learning.
  std::vector<std::int64_t> alpha_ranking;
  std::vector<double> alpha;
  std::int64_t boost_choice = 0;
  std::int64_t fslr_choice = 0;
  bool informative = true;
  bool agree = false;
};

struct EquivalenceReport {
  std::vector<EquivalenceRound> rounds;
  bool all_agree() const;
};

/// Expresses y ~ X beta as a graph whose prediction is boosted with one
/// identity shortcut per feature, runs candidate insertion and weak learning,
/// and compares the |alpha| ranking with boosting/FSLR on the same residual.
EquivalenceReport linear_equivalence_run(const DesignMatrix& x, const std::vector<double>& y,
                                         const EquivalenceOptions& options);

/// Reads a numeric CSV (optional header row) into rows.
std::vector<std::vector<double>> read_csv_matrix(const std::string& path);

}  // namespace sprout
