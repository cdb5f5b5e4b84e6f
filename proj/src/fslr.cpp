// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/fslr.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "sprout/builder.hpp"
#include "sprout/error.hpp"
#include "sprout/weaklearn.hpp"

namespace sprout {
namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::int64_t argmax_abs(const std::vector<double>& v) {
  std::int64_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (std::abs(v[j]) > std::abs(v[static_cast<std::size_t>(best)])) best = static_cast<std::int64_t>(j);
  }
  return best;
}

std::vector<double> residual(const DesignMatrix& x, const std::vector<double>& y, const std::vector<double>& beta) {
  std::vector<double> r = y;
  for (std::int64_t i = 0; i < x.rows; ++i) {
    for (std::int64_t j = 0; j < x.cols; ++j) r[static_cast<std::size_t>(i)] -= x.at(i, j) * beta[static_cast<std::size_t>(j)];
  }
  return r;
}

}  // namespace

DesignMatrix::DesignMatrix(std::int64_t r, std::int64_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)), col_norms(static_cast<std::size_t>(c), 0.0) {
  if (r < 1 || c < 1 || static_cast<std::int64_t>(values.size()) != r * c) {
    throw Error(fmt::format("design matrix {}x{} does not match {} values", r, c, values.size()));
  }
  for (double x : values) {
    if (!std::isfinite(x)) throw NumericError(-1, "design matrix has a non-finite entry");
  }
  for (std::int64_t j = 0; j < c; ++j) col_norms[static_cast<std::size_t>(j)] = norm(column(j));
}

std::vector<double> DesignMatrix::column(std::int64_t c) const {
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) out[static_cast<std::size_t>(i)] = at(i, c);
  return out;
}

std::vector<double> DesignMatrix::correlate(const std::vector<double>& v) const {
  if (static_cast<std::int64_t>(v.size()) != rows) throw Error("vector length does not match design rows");
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] += at(i, j) * v[static_cast<std::size_t>(i)];
  }
  return out;
}

DesignMatrix standardize(const DesignMatrix& x) {
  std::vector<double> v = x.values;
  for (std::int64_t j = 0; j < x.cols; ++j) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < x.rows; ++i) mean += x.at(i, j);
    mean /= static_cast<double>(x.rows);
    double ss = 0.0;
    for (std::int64_t i = 0; i < x.rows; ++i) {
      auto& e = v[static_cast<std::size_t>(i * x.cols + j)];
      e -= mean;
      ss += e * e;
    }
    const double n = std::sqrt(ss);
    if (n <= 1e-12 * (1.0 + std::abs(mean))) throw Error(fmt::format("column {} is constant", j));
    for (std::int64_t i = 0; i < x.rows; ++i) v[static_cast<std::size_t>(i * x.cols + j)] /= n;
  }
  return {x.rows, x.cols, std::move(v)};
}

std::size_t boost_select(const std::vector<std::vector<double>>& learners, const std::vector<double>& gradient) {
  if (learners.empty()) throw Error("boost_select needs at least one learner");
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t h = 0; h < learners.size(); ++h) {
    if (learners[h].size() != gradient.size()) throw Error("learner and gradient lengths differ");
    double v = 0.0;
    for (std::size_t i = 0; i < gradient.size(); ++i) v += gradient[i] * learners[h][i];
    if (h == 0 || v < best_value) {
      best = h;
      best_value = v;
    }
  }
  return best;
}

std::string CoefficientPath::to_csv() const {
  std::string out = "iteration,feature";
  const std::size_t p = steps.empty() ? 0 : steps.front().coefficients.size();
  for (std::size_t j = 0; j < p; ++j) out += fmt::format(",coef_{}", j);
  out += ",residual_norm\n";
  for (const auto& s : steps) {
    out += fmt::format("{},{}", s.iteration, s.feature);
    for (double c : s.coefficients) out += fmt::format(",{}", c);
    out += fmt::format(",{}\n", s.residual_norm);
  }
  return out;
}

CoefficientPath fslr_run(const DesignMatrix& x, const std::vector<double>& y, double step, std::int64_t iterations) {
  if (!(step > 0.0)) throw Error("FSLR step must be positive");
  if (static_cast<std::int64_t>(y.size()) != x.rows) throw Error("target length does not match design rows");
  CoefficientPath path;
  std::vector<double> beta(static_cast<std::size_t>(x.cols), 0.0);
  std::vector<double> r = y;
  path.initial_residual_norm = norm(r);
  path.steps.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, iterations)));
  for (std::int64_t it = 1; it <= iterations; ++it) {
    const auto corr = x.correlate(r);
    const auto j = argmax_abs(corr);
    const double c = corr[static_cast<std::size_t>(j)];
    const double delta = c > 0.0 ? step : (c < 0.0 ? -step : 0.0);
    beta[static_cast<std::size_t>(j)] += delta;
    for (std::int64_t i = 0; i < x.rows; ++i) r[static_cast<std::size_t>(i)] -= delta * x.at(i, j);
    const double rn = norm(r);
    if (!std::isfinite(rn)) {
      throw NumericError(-1, fmt::format("FSLR residual became non-finite at iteration {} (feature {}, step {})", it, j, delta));
    }
    path.steps.push_back({it, j, beta, rn});
  }
  return path;
}

LeastSquares least_squares(const DesignMatrix& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.rows, x.cols);
  Eigen::VectorXd b(x.rows);
  for (std::int64_t i = 0; i < x.rows; ++i) {
    for (std::int64_t j = 0; j < x.cols; ++j) a(i, j) = x.at(i, j);
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
  LeastSquares out;
  out.coefficients.assign(beta.data(), beta.data() + beta.size());
  out.residual_norm = (b - a * beta).norm();
  return out;
}

bool EquivalenceReport::all_agree() const {
  for (const auto& r : rounds) {
    if (r.informative && !r.agree) return false;
  }
  return true;
}

EquivalenceReport linear_equivalence_run(const DesignMatrix& raw, const std::vector<double>& y,
                                         const EquivalenceOptions& options) {
  const DesignMatrix x = options.standardize ? standardize(raw) : raw;
  if (static_cast<std::int64_t>(y.size()) != x.rows) throw Error("target length does not match design rows");
  const auto p = x.cols;
  Dataset data;
  data.inputs = Tensor({x.rows, p}, x.values);
  data.targets = Tensor({x.rows, 1}, y);
  data.task = Task::regression;

  std::vector<double> beta(static_cast<std::size_t>(p), 0.0);
  EquivalenceReport report;
  for (int round = 0; round < options.rounds; ++round) {
    // y ~ base(x) where base holds the current coefficients; one frozen
    // column-selecting layer per feature serves as a shortcut source.
    Graph g;
    ParameterStore params;
    GraphBuilder b(g, params, options.seed);
    const NodeId in = b.input({p});
    b.set_cell(0);
    for (std::int64_t j = 0; j < p; ++j) {
      const NodeId f = b.dense(in, 1, fmt::format("feat/f{}", j));
      auto& w = params.get(fmt::format("feat/f{}/w", j));
      std::fill(w.data.begin(), w.data.end(), 0.0);
      w.data[static_cast<std::size_t>(j)] = 1.0;
      auto& n = g.node(f);
      n.role = Role::layer;
      n.tag = fmt::format("f{}", j);
    }
    const NodeId base = b.dense(in, 1, "base");
    params.get("base/w").data = beta;
    params.get("base/b").data.assign(1, 0.0);
    const NodeId out = b.nary(OpKind::add, {base});
    auto& on = g.node(out);
    on.role = Role::cell_output;
    on.is_out = true;
    on.tag = "out";
    b.set_cell(kNoCell);
    b.loss(OpKind::mse, out);

    CandidateOptions copts;
    copts.lambda = options.lambda;
    copts.opset = {ShortcutOp::identity};
    copts.normalize = false;
    copts.seed = options.seed;
    auto aug = initialize_candidates(g, params, [](const Node&) { return true; }, copts);
    WeakLearnOptions wopts;
    wopts.freeze_model = true;
    wopts.train.epochs = options.epochs;
    wopts.train.lr0 = options.lr;
    wopts.train.weight_decay = 0.0;
    wopts.train.batch_size = static_cast<int>(x.rows);
    wopts.train.seed = options.seed;
    const auto wl = weak_learn(aug, params, data, wopts);
    if (wl.diverged) throw NumericError(-1, wl.message);

    EquivalenceRound rec;
    rec.round = round;
    rec.alpha = candidate_alphas(aug.candidates.at(0), aug.params);
    for (auto i : select_top(rec.alpha, static_cast<int>(p))) rec.alpha_ranking.push_back(static_cast<std::int64_t>(i));

    const auto r = residual(x, y, beta);
    std::vector<double> grad(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) grad[i] = -2.0 * r[i] / static_cast<double>(x.rows);
    std::vector<std::vector<double>> learners;
    for (std::int64_t j = 0; j < p; ++j) learners.push_back(x.column(j));
    for (std::int64_t j = 0; j < p; ++j) {
      auto neg = x.column(j);
      for (auto& v : neg) v = -v;
      learners.push_back(std::move(neg));
    }
    rec.boost_choice = static_cast<std::int64_t>(boost_select(learners, grad)) % p;
    const auto corr = x.correlate(r);
    rec.fslr_choice = argmax_abs(corr);
    rec.informative = std::abs(corr[static_cast<std::size_t>(rec.fslr_choice)]) > options.signal_tolerance * (1.0 + norm(y));
    rec.agree = rec.alpha_ranking.front() == rec.fslr_choice && rec.boost_choice == rec.fslr_choice;
    const auto k = static_cast<std::size_t>(rec.alpha_ranking.front());
    const double c = corr[k];
    beta[k] += c > 0.0 ? options.step : (c < 0.0 ? -options.step : 0.0);
    report.rounds.push_back(std::move(rec));
  }
  return report;
}

std::vector<std::vector<double>> read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open '{}'", path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;
      throw FormatError(fmt::format("{}:{}: non-numeric value", path, lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(fmt::format("{}:{}: expected {} columns, got {}", path, lineno, rows.front().size(), row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(fmt::format("'{}' holds no numeric rows", path));
  return rows;
}

}  // namespace sprout
