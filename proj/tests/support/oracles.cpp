// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <fmt/core.h>

#include "sprout/builder.hpp"

namespace oracle {

using namespace sprout;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data) v = u(rng);
  return t;
}

namespace {

int pick(std::mt19937_64& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

}  // namespace

void jitter(ParameterStore& params, std::mt19937_64& rng) {
  for (const auto& key : params.keys()) {
    auto& t = params.get(key);
    const auto leaf = key.substr(key.rfind('/') + 1);
    if (leaf == "running_var") {
      for (auto& v : t.data) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    } else if (leaf == "gamma") {
      for (auto& v : t.data) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    } else {
      for (auto& v : t.data) v = std::uniform_real_distribution<double>(-0.8, 0.8)(rng);
    }
  }
}

namespace {

void finish(RandomGraph& rg, GraphBuilder& b, std::vector<NodeId>& pool, std::mt19937_64& rng, bool image) {
  NodeId last = pool.back();
  if (image) last = b.unary(OpKind::global_avg_pool, last);
  const std::int64_t rows = rg.batch.inputs.dim(0);
  if (pick(rng, 2) == 0) {
    const NodeId head = b.dense(last, 3, "head");
    b.loss(OpKind::softmax_xent, head);
    Tensor t({rows});
    for (auto& v : t.data) v = pick(rng, 3);
    rg.batch.targets = t;
  } else {
    const NodeId head = b.dense(last, 2, "head");
    b.loss(OpKind::mse, head);
    rg.batch.targets = random_tensor({rows, 2}, rng);
  }
  rg.batch.size = rows;
  jitter(rg.params, rng);
  rg.graph.validate();
}

}  // namespace

RandomGraph random_toy_graph(std::mt19937_64& rng, const ToyGraphOptions& o) {
  RandomGraph rg;
  const std::int64_t rows = 4, features = 2 + pick(rng, 3);
  GraphBuilder b(rg.graph, rg.params, rng());
  std::vector<NodeId> pool{b.input({features})};
  rg.batch.inputs = random_tensor({rows, features}, rng);
  auto width = [&](NodeId id) { return b.shape(id)[1]; };
  for (int i = 0; i < o.ops; ++i) {
    const NodeId a = pool[static_cast<std::size_t>(pick(rng, static_cast<int>(pool.size())))];
    const std::string prefix = fmt::format("n{}", i);
    std::vector<NodeId> same;
    for (auto id : pool) {
      if (width(id) == width(a)) same.push_back(id);
    }
    const NodeId other = same[static_cast<std::size_t>(pick(rng, static_cast<int>(same.size())))];
    NodeId out;
    switch (pick(rng, 14)) {
      case 0: out = b.dense(a, 2 + pick(rng, 3), prefix); break;
      case 1: out = b.unary(OpKind::relu, a); break;
      case 2: out = b.unary(OpKind::tanh, a); break;
      case 3: out = b.nary(OpKind::add, {a, other}); break;
      case 4: out = b.nary(OpKind::mul, {a, other}); break;
      case 5: out = b.nary(OpKind::concat, {a, other}); break;
      case 6: out = b.weighted_sum({a, other}, {prefix + "/w0", prefix + "/w1"}, {0.3, -0.7}); break;
      case 7: out = b.gate(a, prefix + "/eta", 0.5); break;
      case 8: out = b.proj(a, 2 + pick(rng, 3), 1, prefix); break;
      case 9: out = o.batch_norm ? b.batch_norm(a, prefix) : b.unary(OpKind::identity, a); break;
      case 10: out = o.pools ? b.pool(pick(rng, 2) ? OpKind::avg_pool : OpKind::max_pool, a, 3, 1)
                             : b.unary(OpKind::tanh, a);
        break;
      case 11: {
        if (o.guards) {
          out = b.unary(pick(rng, 2) ? OpKind::stop_gradient : OpKind::stop_forward, a);
        } else {
          out = b.unary(OpKind::identity, a);
        }
        break;
      }
      case 12: {
        if (o.shortcut_blocks) {
          const auto ops = toy_opset();
          out = b.shortcut_op(ops[static_cast<std::size_t>(pick(rng, static_cast<int>(ops.size())))], a, prefix,
                              o.batch_norm && pick(rng, 2));
        } else {
          out = b.dense(a, width(a), prefix);
        }
        break;
      }
      default: out = b.dense(a, width(a), prefix); break;
    }
    pool.push_back(out);
  }
  // Make sure the head sees most of the graph.
  std::vector<NodeId> tails;
  for (auto id : pool) {
    if (rg.graph.consumers(id).empty() && id != pool.front()) tails.push_back(id);
  }
  if (tails.size() > 1) {
    std::vector<NodeId> flat;
    for (auto id : tails) flat.push_back(id);
    pool.push_back(b.nary(OpKind::concat, flat));
  }
  finish(rg, b, pool, rng, false);
  return rg;
}

RandomGraph random_image_graph(std::mt19937_64& rng, int ops) {
  RandomGraph rg;
  const std::int64_t rows = 2, channels = 2, side = 5;
  GraphBuilder b(rg.graph, rg.params, rng());
  std::vector<NodeId> pool{b.input({channels, side, side})};
  rg.batch.inputs = random_tensor({rows, channels, side, side}, rng);
  for (int i = 0; i < ops; ++i) {
    const NodeId a = pool[static_cast<std::size_t>(pick(rng, static_cast<int>(pool.size())))];
    const std::string prefix = fmt::format("n{}", i);
    std::vector<NodeId> same;
    for (auto id : pool) {
      if (b.shape(id) == b.shape(a)) same.push_back(id);
    }
    const NodeId other = same[static_cast<std::size_t>(pick(rng, static_cast<int>(same.size())))];
    const auto c = b.shape(a)[1];
    NodeId out;
    switch (pick(rng, 11)) {
      case 0: out = b.conv(a, 2 + pick(rng, 2), pick(rng, 2) ? 3 : 1, prefix); break;
      case 1: out = b.sep_conv(a, 2 + pick(rng, 2), pick(rng, 2) ? 3 : 5, 1 + pick(rng, 2), prefix); break;
      case 2: out = b.dilated_conv(a, pick(rng, 2) ? 3 : 5, prefix); break;
      case 3: out = b.pool(pick(rng, 2) ? OpKind::avg_pool : OpKind::max_pool, a, 3, 1 + pick(rng, 2)); break;
      case 4: out = b.batch_norm(a, prefix); break;
      case 5: out = b.proj(b.unary(OpKind::relu, a), c + pick(rng, 2), 1 + pick(rng, 2), prefix); break;
      case 6: out = b.nary(OpKind::add, {a, other}); break;
      case 7: out = b.nary(OpKind::concat, {a, other}); break;
      case 8: out = b.unary(OpKind::tanh, a); break;
      default: {
        const auto opset = image_opset();
        out = b.shortcut_op(opset[static_cast<std::size_t>(pick(rng, static_cast<int>(opset.size())))], a, prefix,
                            pick(rng, 2));
        break;
      }
    }
    pool.push_back(out);
  }
  finish(rg, b, pool, rng, true);
  return rg;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw std::runtime_error("reference interpreter handles rank-2 tensors only");
  Matrix m(static_cast<std::size_t>(t.shape[0]), std::vector<double>(static_cast<std::size_t>(t.shape[1])));
  for (std::size_t r = 0; r < m.size(); ++r) {
    for (std::size_t c = 0; c < m[r].size(); ++c) m[r][c] = t.data[r * m[r].size() + c];
  }
  return m;
}

Matrix map(const Matrix& a, double (*fn)(double)) {
  Matrix out = a;
  for (auto& row : out)
    for (auto& v : row) v = fn(v);
  return out;
}

double relu(double v) { return v > 0 ? v : 0; }
double keep(double v) { return v; }
double zero(double) { return 0.0; }

Matrix linear(const Matrix& x, const Tensor& w, const Tensor* bias) {
  const auto out_n = static_cast<std::size_t>(w.shape[0]);
  const auto in_n = static_cast<std::size_t>(w.shape[1]);
  Matrix y(x.size(), std::vector<double>(out_n, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out_n; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in_n; ++i) s += x[r][i] * w.data[o * in_n + i];
      y[r][o] = s + (bias ? bias->data[o] : 0.0);
    }
  }
  return y;
}

}  // namespace

double reference_loss(const Graph& graph, const ParameterStore& params, const Batch& batch) {
  std::map<NodeId, Matrix> val;
  for (const auto& n : graph.nodes()) {
    auto in = [&](std::size_t i) -> const Matrix& { return val.at(n.inputs.at(i)); };
    auto p = [&](std::size_t i) -> const Tensor& { return params.get(n.params.at(i)); };
    switch (n.op) {
      case OpKind::input: val[n.id] = to_matrix(batch.inputs); break;
      case OpKind::dense: val[n.id] = linear(in(0), p(0), &p(1)); break;
      case OpKind::proj_1x1: val[n.id] = linear(in(0), p(0), nullptr); break;
      case OpKind::relu: val[n.id] = map(in(0), relu); break;
      case OpKind::tanh: val[n.id] = map(in(0), [](double v) { return std::tanh(v); }); break;
      case OpKind::identity:
      case OpKind::stop_gradient: val[n.id] = map(in(0), keep); break;
      case OpKind::stop_forward: val[n.id] = map(in(0), zero); break;
      case OpKind::scalar_gate: {
        Matrix m = in(0);
        for (auto& row : m)
          for (auto& v : row) v *= p(0).data[0];
        val[n.id] = m;
        break;
      }
      case OpKind::add:
      case OpKind::weighted_sum: {
        Matrix m(in(0).size(), std::vector<double>(in(0)[0].size(), 0.0));
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const double a = n.op == OpKind::weighted_sum ? p(k).data[0] : 1.0;
          for (std::size_t r = 0; r < m.size(); ++r)
            for (std::size_t c = 0; c < m[r].size(); ++c) m[r][c] += a * in(k)[r][c];
        }
        val[n.id] = m;
        break;
      }
      case OpKind::mul: {
        Matrix m = in(0);
        for (std::size_t r = 0; r < m.size(); ++r)
          for (std::size_t c = 0; c < m[r].size(); ++c) m[r][c] *= in(1)[r][c];
        val[n.id] = m;
        break;
      }
      case OpKind::concat: {
        Matrix m(in(0).size());
        for (std::size_t k = 0; k < n.inputs.size(); ++k)
          for (std::size_t r = 0; r < m.size(); ++r) m[r].insert(m[r].end(), in(k)[r].begin(), in(k)[r].end());
        val[n.id] = m;
        break;
      }
      case OpKind::batch_norm: {
        const Matrix& x = in(0);
        Matrix m = x;
        const double rows = static_cast<double>(x.size());
        for (std::size_t c = 0; c < x[0].size(); ++c) {
          double mean = 0.0;
          for (const auto& row : x) mean += row[c];
          mean /= rows;
          double var = 0.0;
          for (const auto& row : x) var += (row[c] - mean) * (row[c] - mean);
          var /= rows;
          for (std::size_t r = 0; r < x.size(); ++r) {
            m[r][c] = p(0).data[c] * (x[r][c] - mean) / std::sqrt(var + 1e-5) + p(1).data[c];
          }
        }
        val[n.id] = m;
        break;
      }
      case OpKind::avg_pool:
      case OpKind::max_pool: {
        const Matrix& x = in(0);
        const int k = static_cast<int>(n.attr("kernel", 3));
        const int half = k / 2;
        Matrix m = x;
        for (std::size_t r = 0; r < x.size(); ++r) {
          const int w = static_cast<int>(x[r].size());
          for (int c = 0; c < w; ++c) {
            double acc = n.op == OpKind::max_pool ? -1e300 : 0.0;
            int count = 0;
            for (int j = c - half; j <= c + half; ++j) {
              if (j < 0 || j >= w) continue;
              acc = n.op == OpKind::max_pool ? std::max(acc, x[r][static_cast<std::size_t>(j)])
                                             : acc + x[r][static_cast<std::size_t>(j)];
              ++count;
            }
            m[r][static_cast<std::size_t>(c)] = n.op == OpKind::max_pool ? acc : acc / count;
          }
        }
        val[n.id] = m;
        break;
      }
      case OpKind::mse: {
        const Matrix& x = in(0);
        double s = 0.0;
        std::size_t i = 0;
        for (const auto& row : x)
          for (double v : row) {
            const double d = v - batch.targets.data[i++];
            s += d * d;
          }
        return s / static_cast<double>(i);
      }
      case OpKind::softmax_xent: {
        const Matrix& x = in(0);
        double s = 0.0;
        for (std::size_t r = 0; r < x.size(); ++r) {
          double z = 0.0;
          for (double v : x[r]) z += std::exp(v);
          s += std::log(z) - x[r][static_cast<std::size_t>(batch.targets.data[r])];
        }
        return s / static_cast<double>(x.size());
      }
      default:
        throw std::runtime_error(fmt::format("reference interpreter lacks op {}", to_string(n.op)));
    }
  }
  throw std::runtime_error("graph has no loss");
}

double rel_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return INFINITY;
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
    scale = std::max({scale, std::abs(a.data[i]), std::abs(b.data[i])});
  }
  if (diff == 0.0) return 0.0;
  return scale == 0.0 ? INFINITY : diff / scale;
}

FdReport check_gradients(const Graph& graph, const ParameterStore& params, const Batch& batch, double h, double rtol,
                         double atol) {
  FdReport report;
  const auto fwd = forward(graph, params, batch, Mode::train);
  const auto grads = backward(graph, params, batch, fwd);
  ParameterStore probe = params;
  auto loss_at = [&](const std::string& key, std::size_t i, double delta) {
    auto& v = probe.get(key).data[i];
    const double saved = v;
    v = saved + delta;
    const double l = forward(graph, probe, batch, Mode::train).loss;
    v = saved;
    return l;
  };
  for (const auto& [key, g] : grads.params) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double fd = (loss_at(key, i, h) - loss_at(key, i, -h)) / (2 * h);
      const double fd_half = (loss_at(key, i, h / 2) - loss_at(key, i, -h / 2)) / h;
      if (std::abs(fd - fd_half) > 1e-3 * std::max(std::abs(fd), std::abs(fd_half)) + 1e-6) {
        ++report.skipped;
        continue;
      }
      const double a = g.data[i];
      const double err = std::abs(a - fd);
      const double tol = rtol * std::max(std::abs(a), std::abs(fd)) + atol;
      ++report.checked;
      report.worst = std::max(report.worst, err / tol);
      if (err > tol) {
        if (report.failed == 0) report.first_failure = fmt::format("{}[{}]: analytic {} vs numeric {}", key, i, a, fd);
        ++report.failed;
      }
    }
  }
  return report;
}

std::vector<std::size_t> brute_hull(const std::vector<HullPoint>& pts) {
  std::vector<std::size_t> keep;
  const auto n = pts.size();
  for (std::size_t p = 0; p < n; ++p) {
    bool ok = true;
    for (std::size_t q = 0; q < n && ok; ++q) {
      if (q == p) continue;
      const bool le = pts[q].cost <= pts[p].cost && pts[q].error <= pts[p].error;
      const bool strictly = pts[q].cost < pts[p].cost || pts[q].error < pts[p].error;
      if (le && strictly) ok = false;
      if (le && !strictly && q < p) ok = false;
    }
    for (std::size_t a = 0; a < n && ok; ++a) {
      for (std::size_t c = 0; c < n && ok; ++c) {
        if (!(pts[a].cost < pts[p].cost && pts[p].cost < pts[c].cost)) continue;
        const double lhs = (pts[p].error - pts[a].error) * (pts[c].cost - pts[a].cost);
        const double rhs = (pts[c].error - pts[a].error) * (pts[p].cost - pts[a].cost);
        if (lhs > rhs) ok = false;
      }
    }
    if (ok) keep.push_back(p);
  }
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return pts[a].cost < pts[b].cost; });
  return keep;
}

std::vector<double> enumerate_parent_distribution(const std::vector<std::int64_t>& counts) {
  std::vector<double> prob(counts.size(), 0.0);
  double alive = 1.0;
  while (alive > 1e-17) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double accept = 1.0 / static_cast<double>(counts[k] + 1);
      prob[k] += alive * accept;
      alive *= 1.0 - accept;
    }
  }
  return prob;
}

std::vector<double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t p = x.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += x[r][i] * x[r][j];
      a[i][p] += x[r][i] * y[r];
    }
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

std::map<std::string, Tensor> inner_product_gradients(const Graph& parent, const ParameterStore& parent_params,
                                                      const AugmentedModel& aug, const Batch& batch) {
  const auto f1 = forward(parent, parent_params, batch, Mode::train);
  const auto g1 = backward(parent, parent_params, batch, f1);
  std::unordered_map<NodeId, Tensor> seeds;
  for (const auto& c : aug.candidates) seeds.emplace(c.candidate_node, g1.nodes.at(c.target_node));
  const auto f2 = forward(aug.graph, aug.params, batch, Mode::train);
  auto g2 = backward_from(aug.graph, aug.params, batch, f2, seeds);
  std::map<std::string, Tensor> out;
  for (auto& [key, t] : g2.params) {
    if (!parent_params.contains(key)) out.emplace(key, std::move(t));
  }
  return out;
}

RandomModelOptions random_model_options(std::mt19937_64& rng) {
  RandomModelOptions o;
  o.image = pick(rng, 2) == 1;
  o.mode = pick(rng, 2) ? SearchMode::cell : SearchMode::macro;
  o.merge = static_cast<MergeVariant>(pick(rng, 3));
  o.task = pick(rng, 3) == 0 ? Task::regression : Task::classification;
  o.cells_per_stage = 1 + pick(rng, 2);
  o.stages = o.image ? 1 + pick(rng, 2) : 1;
  o.rounds = pick(rng, 3);
  return o;
}

namespace {

AugmentedModel attach(const Model& parent, std::mt19937_64& rng, bool joint) {
  CandidateOptions copts;
  copts.opset = opset_by_name(parent.genotype.opset);
  copts.joint = joint;
  copts.seed = rng();
  copts.mode = parent.genotype.mode;
  const auto normal = parent.genotype.normal_cells();
  const int rep = normal.back();
  NodePredicate boosted = [](const Node&) { return true; };
  if (parent.genotype.mode == SearchMode::cell) boosted = [rep](const Node& n) { return n.cell == rep; };
  auto aug = initialize_candidates(parent.graph, parent.params, boosted, copts);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& c : aug.candidates) {
    for (const auto& key : c.alpha_keys()) aug.params.get(key).data[0] = u(rng);
  }
  return aug;
}

}  // namespace

AugmentedModel random_candidates(const Model& parent, std::mt19937_64& rng, bool joint) {
  return attach(parent, rng, joint);
}

Model grow_untrained(const Model& parent, MergeVariant merge, std::mt19937_64& rng, int i_max) {
  auto aug = attach(parent, rng, false);
  finalize_candidates(aug.graph, aug.params, aug.candidates, i_max, merge);
  const auto grown = extract_genotype(aug.graph, parent.genotype);
  Genotype genotype = grown;
  if (parent.genotype.mode == SearchMode::cell) {
    const int rep = parent.genotype.normal_cells().back();
    genotype = apply_tying(parent.genotype, rep, grown.cells.at(static_cast<std::size_t>(rep)).groups.back());
  }
  return build_model(genotype, rng(), &aug.params);
}

RandomModel random_model(std::mt19937_64& rng, const RandomModelOptions& o) {
  Skeleton sk;
  sk.cells_per_stage = o.cells_per_stage;
  sk.stages = o.stages;
  sk.filters = o.image ? 3 : 4;
  const Shape input = o.image ? Shape{2, 6, 6} : Shape{3};
  const int classes = o.task == Task::regression ? 2 : 3;
  const auto genotype = seed_genotype(o.mode, o.image ? "image" : "toy", sk, o.merge, input, classes, o.task);
  RandomModel rm{build_model(genotype, rng()), {}};
  for (int r = 0; r < o.rounds; ++r) rm.model = grow_untrained(rm.model, o.merge, rng);
  jitter(rm.model.params, rng);
  const std::int64_t rows = o.image ? 2 : 4;
  Shape full{rows};
  full.insert(full.end(), input.begin(), input.end());
  rm.batch.inputs = random_tensor(full, rng);
  rm.batch.size = rows;
  if (o.task == Task::regression) {
    rm.batch.targets = random_tensor({rows, classes}, rng);
  } else {
    Tensor t({rows});
    for (auto& v : t.data) v = pick(rng, classes);
    rm.batch.targets = t;
  }
  return rm;
}

Dataset spirals(std::int64_t n, std::uint64_t seed) { return make_spirals(n, 0.1, 2, seed); }

}  // namespace oracle
