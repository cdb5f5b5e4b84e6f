// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

namespace sprout {
namespace {

[[noreturn]] void fail(const Node& node, const std::string& msg) {
  throw ShapeError(node.id, fmt::format("node {} ({}): {}", node.id, to_string(node.op), msg));
}

void expect_shape(const Node& node, const std::string& what, const Shape& expected,
                  const Shape& actual) {
  if (expected != actual) {
    fail(node, fmt::format("{} expected shape {}, got {}", what, shape_str(expected), shape_str(actual)));
  }
}

const Tensor& param(const Node& node, const ParameterStore& params, std::size_t i) {
  if (i >= node.params.size()) fail(node, "missing parameter key");
  if (!params.contains(node.params[i])) fail(node, fmt::format("parameter '{}' not in store", node.params[i]));
  return params.get(node.params[i]);
}

// ---------------------------------------------------------------------------
// Convolution over NCHW with square kernels, symmetric "same" padding.

struct ConvGeom {
  std::int64_t batch, c_in, h, w, c_out, k, stride, dilation, pad, groups, ho, wo;
};

ConvGeom conv_geom(const Node& node, const Shape& x, std::int64_t c_out, std::int64_t k,
                   std::int64_t stride, std::int64_t dilation, std::int64_t groups) {
  if (x.size() != 4) fail(node, fmt::format("expects NCHW input, got {}", shape_str(x)));
  if (stride < 1 || dilation < 1 || k < 1) fail(node, "kernel, stride and dilation must be positive");
  ConvGeom g{x[0], x[1], x[2], x[3], c_out, k, stride, dilation, dilation * (k - 1) / 2, groups, 0, 0};
  if (g.c_in % groups != 0 || g.c_out % groups != 0) fail(node, "channels not divisible by groups");
  g.ho = (g.h + 2 * g.pad - dilation * (k - 1) - 1) / stride + 1;
  g.wo = (g.w + 2 * g.pad - dilation * (k - 1) - 1) / stride + 1;
  if (g.ho < 1 || g.wo < 1) fail(node, "spatial output would be empty");
  return g;
}

Shape conv_weight_shape(const ConvGeom& g) { return {g.c_out, g.c_in / g.groups, g.k, g.k}; }

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeom& g) {
  Tensor y({g.batch, g.c_out, g.ho, g.wo});
  const auto cin_g = g.c_in / g.groups;
  const auto cout_g = g.c_out / g.groups;
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.c_out; ++co) {
      const auto grp = co / cout_g;
      double* yp = &y.data[static_cast<std::size_t>(((b * g.c_out + co) * g.ho) * g.wo)];
      for (std::int64_t cig = 0; cig < cin_g; ++cig) {
        const auto ci = grp * cin_g + cig;
        const double* xp = &x.data[static_cast<std::size_t>(((b * g.c_in + ci) * g.h) * g.w)];
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            const double wv = w.data[static_cast<std::size_t>(((co * cin_g + cig) * g.k + ky) * g.k + kx)];
            for (std::int64_t oy = 0; oy < g.ho; ++oy) {
              const auto iy = oy * g.stride - g.pad + ky * g.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                const auto ix = ox * g.stride - g.pad + kx * g.dilation;
                if (ix < 0 || ix >= g.w) continue;
                yp[oy * g.wo + ox] += wv * xp[iy * g.w + ix];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& dy, const ConvGeom& g, Tensor& dx,
                   Tensor& dw) {
  dx = Tensor(x.shape);
  dw = Tensor(w.shape);
  const auto cin_g = g.c_in / g.groups;
  const auto cout_g = g.c_out / g.groups;
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.c_out; ++co) {
      const auto grp = co / cout_g;
      const double* gp = &dy.data[static_cast<std::size_t>(((b * g.c_out + co) * g.ho) * g.wo)];
      for (std::int64_t cig = 0; cig < cin_g; ++cig) {
        const auto ci = grp * cin_g + cig;
        const auto xoff = static_cast<std::size_t>(((b * g.c_in + ci) * g.h) * g.w);
        const double* xp = &x.data[xoff];
        double* dxp = &dx.data[xoff];
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            const auto widx = static_cast<std::size_t>(((co * cin_g + cig) * g.k + ky) * g.k + kx);
            const double wv = w.data[widx];
            double acc = 0.0;
            for (std::int64_t oy = 0; oy < g.ho; ++oy) {
              const auto iy = oy * g.stride - g.pad + ky * g.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                const auto ix = ox * g.stride - g.pad + kx * g.dilation;
                if (ix < 0 || ix >= g.w) continue;
                const double gv = gp[oy * g.wo + ox];
                acc += gv * xp[iy * g.w + ix];
                dxp[iy * g.w + ix] += gv * wv;
              }
            }
            dw.data[widx] += acc;
          }
        }
      }
    }
  }
}

// Depthwise k x k (optionally dilated) followed by pointwise 1x1.
struct SepGeom {
  ConvGeom depth;
  ConvGeom point;
};

SepGeom sep_geom(const Node& node, const Shape& x, const ParameterStore& params) {
  const auto& pw = param(node, params, 1);
  if (pw.rank() != 4) fail(node, "pointwise weight must be rank 4");
  const auto dilation = node.attr("dilation", node.op == OpKind::dilated_conv ? 2 : 1);
  const auto k = node.attr("kernel", 3);
  if (x.size() != 4) fail(node, fmt::format("expects NCHW input, got {}", shape_str(x)));
  SepGeom g;
  g.depth = conv_geom(node, x, x[1], k, node.attr("stride", 1), dilation, x[1]);
  g.point = conv_geom(node, {g.depth.batch, g.depth.c_out, g.depth.ho, g.depth.wo}, pw.dim(0), 1, 1, 1, 1);
  expect_shape(node, "depthwise weight", conv_weight_shape(g.depth), param(node, params, 0).shape);
  expect_shape(node, "pointwise weight", conv_weight_shape(g.point), pw.shape);
  return g;
}

// ---------------------------------------------------------------------------
// Pooling. Rank-4 tensors pool k x k spatially; rank-2 tensors pool a width-k
// window along the feature axis. Padding positions are excluded.

struct PoolGeom {
  std::int64_t batch, channels, h, w, kh, kw, stride, pad_h, pad_w, ho, wo;
};

PoolGeom pool_geom(const Node& node, const Shape& x) {
  const auto k = node.attr("kernel", 3);
  const auto stride = node.attr("stride", 1);
  if (k < 1 || stride < 1) fail(node, "kernel and stride must be positive");
  PoolGeom g{};
  if (x.size() == 4) {
    g = {x[0], x[1], x[2], x[3], k, k, stride, k / 2, k / 2, 0, 0};
  } else if (x.size() == 2) {
    g = {x[0], 1, 1, x[1], 1, k, stride, 0, k / 2, 0, 0};
  } else {
    fail(node, fmt::format("pooling expects rank 2 or 4, got {}", shape_str(x)));
  }
  g.ho = (g.h + 2 * g.pad_h - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad_w - g.kw) / g.stride + 1;
  if (g.ho < 1 || g.wo < 1) fail(node, "pool output would be empty");
  return g;
}

Shape pool_out_shape(const Shape& x, const PoolGeom& g) {
  if (x.size() == 2) return {g.batch, g.wo};
  return {g.batch, g.channels, g.ho, g.wo};
}

template <typename Fn>
void for_each_window(const PoolGeom& g, Fn&& fn) {
  for (std::int64_t bc = 0; bc < g.batch * g.channels; ++bc) {
    for (std::int64_t oy = 0; oy < g.ho; ++oy) {
      for (std::int64_t ox = 0; ox < g.wo; ++ox) {
        const auto y0 = std::max<std::int64_t>(0, oy * g.stride - g.pad_h);
        const auto y1 = std::min<std::int64_t>(g.h, oy * g.stride - g.pad_h + g.kh);
        const auto x0 = std::max<std::int64_t>(0, ox * g.stride - g.pad_w);
        const auto x1 = std::min<std::int64_t>(g.w, ox * g.stride - g.pad_w + g.kw);
        fn(bc * g.h * g.w, (bc * g.ho + oy) * g.wo + ox, y0, y1, x0, x1);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Batch normalization over all axes except 1.

struct ChannelLayout {
  std::int64_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Node& node, const Shape& x) {
  if (x.size() == 2) return {x[0], x[1], 1};
  if (x.size() == 4) return {x[0], x[1], x[2] * x[3]};
  fail(node, fmt::format("batch_norm expects rank 2 or 4, got {}", shape_str(x)));
}

struct BatchStats {
  std::vector<double> mean, var;
};

BatchStats batch_stats(const Tensor& x, const ChannelLayout& l) {
  BatchStats s{std::vector<double>(l.channels, 0.0), std::vector<double>(l.channels, 0.0)};
  const double m = static_cast<double>(l.batch * l.spatial);
  for (std::int64_t c = 0; c < l.channels; ++c) {
    double sum = 0.0;
    for (std::int64_t b = 0; b < l.batch; ++b) {
      const auto off = (b * l.channels + c) * l.spatial;
      for (std::int64_t i = 0; i < l.spatial; ++i) sum += x.data[off + i];
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (std::int64_t b = 0; b < l.batch; ++b) {
      const auto off = (b * l.channels + c) * l.spatial;
      for (std::int64_t i = 0; i < l.spatial; ++i) {
        const double d = x.data[off + i] - mean;
        sq += d * d;
      }
    }
    s.mean[c] = mean;
    s.var[c] = sq / m;
  }
  return s;
}

std::vector<std::int64_t> class_targets(const Node& node, const Batch& batch, std::int64_t rows,
                                        std::int64_t classes) {
  if (batch.targets.size() != static_cast<std::size_t>(rows)) {
    fail(node, fmt::format("targets expected {} class indices, got shape {}", rows,
                           shape_str(batch.targets.shape)));
  }
  std::vector<std::int64_t> out(rows);
  for (std::int64_t i = 0; i < rows; ++i) {
    const double v = batch.targets.data[i];
    const auto c = static_cast<std::int64_t>(v);
    if (static_cast<double>(c) != v || c < 0 || c >= classes) {
      fail(node, fmt::format("target {} is not a class index in [0, {})", v, classes));
    }
    out[i] = c;
  }
  return out;
}

void same_shapes(const Node& node, std::span<const Shape> inputs) {
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    expect_shape(node, fmt::format("input {}", i), inputs[0], inputs[i]);
  }
}

}  // namespace

Shape output_shape(const Node& node, std::span<const Shape> in, const ParameterStore& params,
                   const Shape& batch_input) {
  switch (node.op) {
    case OpKind::input:
      return batch_input;
    case OpKind::parameter:
      return param(node, params, 0).shape;
    case OpKind::dense: {
      const auto& w = param(node, params, 0);
      if (in[0].size() != 2) fail(node, fmt::format("dense expects [batch, features], got {}", shape_str(in[0])));
      if (w.rank() != 2) fail(node, "dense weight must be rank 2");
      expect_shape(node, "weight", {w.dim(0), in[0][1]}, w.shape);
      expect_shape(node, "bias", {w.dim(0)}, param(node, params, 1).shape);
      return {in[0][0], w.dim(0)};
    }
    case OpKind::conv: {
      const auto& w = param(node, params, 0);
      if (w.rank() != 4) fail(node, "conv weight must be rank 4");
      const auto g = conv_geom(node, in[0], w.dim(0), node.attr("kernel", w.dim(2)), node.attr("stride", 1),
                               node.attr("dilation", 1), 1);
      expect_shape(node, "weight", conv_weight_shape(g), w.shape);
      return {g.batch, g.c_out, g.ho, g.wo};
    }
    case OpKind::sep_conv:
    case OpKind::dilated_conv: {
      const auto g = sep_geom(node, in[0], params);
      return {g.point.batch, g.point.c_out, g.point.ho, g.point.wo};
    }
    case OpKind::proj_1x1: {
      const auto& w = param(node, params, 0);
      if (in[0].size() == 2) {
        expect_shape(node, "weight", {w.dim(0), in[0][1]}, w.shape);
        return {in[0][0], w.dim(0)};
      }
      if (w.rank() != 4) fail(node, "projection weight must be rank 4 for image input");
      const auto g = conv_geom(node, in[0], w.dim(0), 1, node.attr("stride", 1), 1, 1);
      expect_shape(node, "weight", conv_weight_shape(g), w.shape);
      return {g.batch, g.c_out, g.ho, g.wo};
    }
    case OpKind::max_pool:
    case OpKind::avg_pool:
      return pool_out_shape(in[0], pool_geom(node, in[0]));
    case OpKind::global_avg_pool:
      if (in[0].size() != 4) fail(node, fmt::format("expects NCHW input, got {}", shape_str(in[0])));
      return {in[0][0], in[0][1]};
    case OpKind::identity:
    case OpKind::relu:
    case OpKind::tanh:
    case OpKind::stop_gradient:
    case OpKind::stop_forward:
      return in[0];
    case OpKind::batch_norm: {
      const auto l = channel_layout(node, in[0]);
      for (std::size_t i = 0; i < 4; ++i) {
        expect_shape(node, "normalization parameter", {l.channels}, param(node, params, i).shape);
      }
      return in[0];
    }
    case OpKind::scalar_gate:
      expect_shape(node, "gate", {1}, param(node, params, 0).shape);
      return in[0];
    case OpKind::weighted_sum:
      same_shapes(node, in);
      for (std::size_t i = 0; i < node.params.size(); ++i) {
        expect_shape(node, "weight", {1}, param(node, params, i).shape);
      }
      return in[0];
    case OpKind::add:
    case OpKind::mul:
      same_shapes(node, in);
      return in[0];
    case OpKind::concat: {
      Shape out = in[0];
      if (out.size() != 2 && out.size() != 4) fail(node, "concat expects rank 2 or 4");
      for (std::size_t i = 1; i < in.size(); ++i) {
        Shape probe = in[i];
        if (probe.size() != out.size()) fail(node, "concat rank mismatch");
        probe[1] = out[1];
        expect_shape(node, fmt::format("input {} (except channels)", i), out, probe);
        out[1] += in[i][1];
      }
      return out;
    }
    case OpKind::softmax_xent:
      if (in[0].size() != 2) fail(node, fmt::format("softmax_xent expects [batch, classes], got {}", shape_str(in[0])));
      return {1};
    case OpKind::mse:
      return {1};
  }
  fail(node, "unknown op_kind");
}

Tensor eval_node(const Node& node, std::span<const Tensor* const> inputs, const ParameterStore& params,
                 Mode mode, const Batch& batch, RunningUpdates* running) {
  std::vector<Shape> in_shapes;
  in_shapes.reserve(inputs.size());
  for (const auto* t : inputs) in_shapes.push_back(t->shape);
  const Shape out_shape = output_shape(node, in_shapes, params, batch.inputs.shape);

  switch (node.op) {
    case OpKind::input:
      return batch.inputs;
    case OpKind::parameter:
      return param(node, params, 0);
    case OpKind::identity:
    case OpKind::stop_gradient:
      return *inputs[0];
    case OpKind::stop_forward:
      return Tensor(out_shape, 0.0);
    case OpKind::relu: {
      Tensor y = *inputs[0];
      for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case OpKind::tanh: {
      Tensor y = *inputs[0];
      for (auto& v : y.data) v = std::tanh(v);
      return y;
    }
    case OpKind::dense: {
      const auto& x = *inputs[0];
      const auto& w = param(node, params, 0);
      const auto& b = param(node, params, 1);
      const auto rows = x.dim(0), in = x.dim(1), out = w.dim(0);
      Tensor y(out_shape);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t o = 0; o < out; ++o) {
          double s = b.data[o];
          for (std::int64_t i = 0; i < in; ++i) s += w.data[o * in + i] * x.data[r * in + i];
          y.data[r * out + o] = s;
        }
      }
      return y;
    }
    case OpKind::conv: {
      const auto& w = param(node, params, 0);
      const auto g = conv_geom(node, inputs[0]->shape, w.dim(0), w.dim(2), node.attr("stride", 1),
                               node.attr("dilation", 1), 1);
      return conv_forward(*inputs[0], w, g);
    }
    case OpKind::sep_conv:
    case OpKind::dilated_conv: {
      const auto g = sep_geom(node, inputs[0]->shape, params);
      const Tensor h = conv_forward(*inputs[0], param(node, params, 0), g.depth);
      return conv_forward(h, param(node, params, 1), g.point);
    }
    case OpKind::proj_1x1: {
      const auto& x = *inputs[0];
      const auto& w = param(node, params, 0);
      if (x.rank() == 2) {
        const auto rows = x.dim(0), in = x.dim(1), out = w.dim(0);
        Tensor y(out_shape);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t o = 0; o < out; ++o) {
            double s = 0.0;
            for (std::int64_t i = 0; i < in; ++i) s += w.data[o * in + i] * x.data[r * in + i];
            y.data[r * out + o] = s;
          }
        }
        return y;
      }
      return conv_forward(x, w, conv_geom(node, x.shape, w.dim(0), 1, node.attr("stride", 1), 1, 1));
    }
    case OpKind::max_pool: {
      const auto& x = *inputs[0];
      const auto g = pool_geom(node, x.shape);
      Tensor y(out_shape);
      for_each_window(g, [&](std::int64_t base, std::int64_t o, auto y0, auto y1, auto x0, auto x1) {
        double m = -std::numeric_limits<double>::infinity();
        for (auto iy = y0; iy < y1; ++iy)
          for (auto ix = x0; ix < x1; ++ix) m = std::max(m, x.data[base + iy * g.w + ix]);
        y.data[o] = m;
      });
      return y;
    }
    case OpKind::avg_pool: {
      const auto& x = *inputs[0];
      const auto g = pool_geom(node, x.shape);
      Tensor y(out_shape);
      for_each_window(g, [&](std::int64_t base, std::int64_t o, auto y0, auto y1, auto x0, auto x1) {
        double s = 0.0;
        for (auto iy = y0; iy < y1; ++iy)
          for (auto ix = x0; ix < x1; ++ix) s += x.data[base + iy * g.w + ix];
        y.data[o] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      });
      return y;
    }
    case OpKind::global_avg_pool: {
      const auto& x = *inputs[0];
      const auto spatial = x.dim(2) * x.dim(3);
      Tensor y(out_shape);
      for (std::int64_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
        double s = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) s += x.data[bc * spatial + i];
        y.data[bc] = s / static_cast<double>(spatial);
      }
      return y;
    }
    case OpKind::batch_norm: {
      const auto& x = *inputs[0];
      const auto l = channel_layout(node, x.shape);
      const auto& gamma = param(node, params, 0);
      const auto& beta = param(node, params, 1);
      std::vector<double> mean, var;
      if (mode == Mode::train) {
        auto s = batch_stats(x, l);
        if (running) {
          const auto& rm = param(node, params, 2);
          const auto& rv = param(node, params, 3);
          Tensor nm(rm.shape), nv(rv.shape);
          const double m = static_cast<double>(l.batch * l.spatial);
          for (std::int64_t c = 0; c < l.channels; ++c) {
            const double unbiased = m > 1 ? s.var[c] * m / (m - 1) : s.var[c];
            nm.data[c] = kBatchNormMomentum * rm.data[c] + (1 - kBatchNormMomentum) * s.mean[c];
            nv.data[c] = kBatchNormMomentum * rv.data[c] + (1 - kBatchNormMomentum) * unbiased;
          }
          (*running)[node.params[2]] = std::move(nm);
          (*running)[node.params[3]] = std::move(nv);
        }
        mean = std::move(s.mean);
        var = std::move(s.var);
      } else {
        mean = param(node, params, 2).data;
        var = param(node, params, 3).data;
      }
      Tensor y(out_shape);
      for (std::int64_t b = 0; b < l.batch; ++b) {
        for (std::int64_t c = 0; c < l.channels; ++c) {
          const double inv = 1.0 / std::sqrt(var[c] + kBatchNormEps);
          const auto off = (b * l.channels + c) * l.spatial;
          for (std::int64_t i = 0; i < l.spatial; ++i) {
            y.data[off + i] = gamma.data[c] * (x.data[off + i] - mean[c]) * inv + beta.data[c];
          }
        }
      }
      return y;
    }
    case OpKind::scalar_gate: {
      Tensor y = *inputs[0];
      const double eta = param(node, params, 0).data[0];
      for (auto& v : y.data) v *= eta;
      return y;
    }
    case OpKind::weighted_sum: {
      Tensor y(out_shape);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const double a = param(node, params, k).data[0];
        const auto& x = *inputs[k];
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
      }
      return y;
    }
    case OpKind::add: {
      Tensor y = *inputs[0];
      for (std::size_t k = 1; k < inputs.size(); ++k) {
        const auto& x = *inputs[k];
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
      }
      return y;
    }
    case OpKind::mul: {
      Tensor y = *inputs[0];
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= inputs[1]->data[i];
      return y;
    }
    case OpKind::concat: {
      Tensor y(out_shape);
      const auto batch_n = out_shape[0];
      const auto inner = out_shape.size() == 4 ? out_shape[2] * out_shape[3] : 1;
      std::int64_t c_off = 0;
      for (const auto* x : inputs) {
        const auto c = x->dim(1);
        for (std::int64_t b = 0; b < batch_n; ++b) {
          std::copy_n(x->data.begin() + b * c * inner, c * inner,
                      y.data.begin() + (b * out_shape[1] + c_off) * inner);
        }
        c_off += c;
      }
      return y;
    }
    case OpKind::softmax_xent: {
      const auto& z = *inputs[0];
      const auto rows = z.dim(0), k = z.dim(1);
      const auto targets = class_targets(node, batch, rows, k);
      double total = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* zr = &z.data[r * k];
        const double m = *std::max_element(zr, zr + k);
        double s = 0.0;
        for (std::int64_t j = 0; j < k; ++j) s += std::exp(zr[j] - m);
        total += m + std::log(s) - zr[targets[r]];
      }
      return Tensor::scalar(total / static_cast<double>(rows));
    }
    case OpKind::mse: {
      const auto& p = *inputs[0];
      if (batch.targets.size() != p.size()) {
        fail(node, fmt::format("targets expected {} values, got shape {}", p.size(), shape_str(batch.targets.shape)));
      }
      double total = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.data[i] - batch.targets.data[i];
        total += d * d;
      }
      return Tensor::scalar(total / static_cast<double>(p.size()));
    }
  }
  fail(node, "unknown op_kind");
}

NodeGradients backward_node(const Node& node, std::span<const Tensor* const> inputs, const Tensor& output,
                            const Tensor& g, const ParameterStore& params, Mode mode, const Batch& batch) {
  NodeGradients out;
  out.inputs.resize(inputs.size());
  out.params.resize(node.params.size());

  switch (node.op) {
    case OpKind::input:
    case OpKind::stop_gradient:
      break;
    case OpKind::parameter:
      out.params[0] = g;
      break;
    case OpKind::identity:
    case OpKind::stop_forward:
      out.inputs[0] = g;
      break;
    case OpKind::relu: {
      Tensor dx = g;
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(inputs[0]->data[i] > 0.0)) dx.data[i] = 0.0;
      }
      out.inputs[0] = std::move(dx);
      break;
    }
    case OpKind::tanh: {
      Tensor dx = g;
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= 1.0 - output.data[i] * output.data[i];
      out.inputs[0] = std::move(dx);
      break;
    }
    case OpKind::dense: {
      const auto& x = *inputs[0];
      const auto& w = param(node, params, 0);
      const auto rows = x.dim(0), in = x.dim(1), o_n = w.dim(0);
      Tensor dx(x.shape), dw(w.shape), db({o_n});
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t o = 0; o < o_n; ++o) {
          const double gv = g.data[r * o_n + o];
          if (gv == 0.0) continue;
          db.data[o] += gv;
          for (std::int64_t i = 0; i < in; ++i) {
            dw.data[o * in + i] += gv * x.data[r * in + i];
            dx.data[r * in + i] += gv * w.data[o * in + i];
          }
        }
      }
      out.inputs[0] = std::move(dx);
      out.params[0] = std::move(dw);
      out.params[1] = std::move(db);
      break;
    }
    case OpKind::conv: {
      const auto& w = param(node, params, 0);
      const auto geom = conv_geom(node, inputs[0]->shape, w.dim(0), w.dim(2), node.attr("stride", 1),
                                  node.attr("dilation", 1), 1);
      Tensor dx, dw;
      conv_backward(*inputs[0], w, g, geom, dx, dw);
      out.inputs[0] = std::move(dx);
      out.params[0] = std::move(dw);
      break;
    }
    case OpKind::sep_conv:
    case OpKind::dilated_conv: {
      const auto geom = sep_geom(node, inputs[0]->shape, params);
      const auto& dw_w = param(node, params, 0);
      const auto& pw_w = param(node, params, 1);
      const Tensor h = conv_forward(*inputs[0], dw_w, geom.depth);
      Tensor dh, dpw, dx, ddw;
      conv_backward(h, pw_w, g, geom.point, dh, dpw);
      conv_backward(*inputs[0], dw_w, dh, geom.depth, dx, ddw);
      out.inputs[0] = std::move(dx);
      out.params[0] = std::move(ddw);
      out.params[1] = std::move(dpw);
      break;
    }
    case OpKind::proj_1x1: {
      const auto& x = *inputs[0];
      const auto& w = param(node, params, 0);
      if (x.rank() == 2) {
        const auto rows = x.dim(0), in = x.dim(1), o_n = w.dim(0);
        Tensor dx(x.shape), dw(w.shape);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t o = 0; o < o_n; ++o) {
            const double gv = g.data[r * o_n + o];
            for (std::int64_t i = 0; i < in; ++i) {
              dw.data[o * in + i] += gv * x.data[r * in + i];
              dx.data[r * in + i] += gv * w.data[o * in + i];
            }
          }
        }
        out.inputs[0] = std::move(dx);
        out.params[0] = std::move(dw);
      } else {
        Tensor dx, dw;
        conv_backward(x, w, g, conv_geom(node, x.shape, w.dim(0), 1, node.attr("stride", 1), 1, 1), dx, dw);
        out.inputs[0] = std::move(dx);
        out.params[0] = std::move(dw);
      }
      break;
    }
    case OpKind::max_pool: {
      const auto& x = *inputs[0];
      const auto geom = pool_geom(node, x.shape);
      Tensor dx(x.shape);
      for_each_window(geom, [&](std::int64_t base, std::int64_t o, auto y0, auto y1, auto x0, auto x1) {
        std::int64_t best = -1;
        double m = -std::numeric_limits<double>::infinity();
        for (auto iy = y0; iy < y1; ++iy) {
          for (auto ix = x0; ix < x1; ++ix) {
            const auto idx = base + iy * geom.w + ix;
            if (best < 0 || x.data[idx] > m) {
              m = x.data[idx];
              best = idx;
            }
          }
        }
        dx.data[best] += g.data[o];
      });
      out.inputs[0] = std::move(dx);
      break;
    }
    case OpKind::avg_pool: {
      const auto& x = *inputs[0];
      const auto geom = pool_geom(node, x.shape);
      Tensor dx(x.shape);
      for_each_window(geom, [&](std::int64_t base, std::int64_t o, auto y0, auto y1, auto x0, auto x1) {
        const double share = g.data[o] / static_cast<double>((y1 - y0) * (x1 - x0));
        for (auto iy = y0; iy < y1; ++iy)
          for (auto ix = x0; ix < x1; ++ix) dx.data[base + iy * geom.w + ix] += share;
      });
      out.inputs[0] = std::move(dx);
      break;
    }
    case OpKind::global_avg_pool: {
      const auto& x = *inputs[0];
      const auto spatial = x.dim(2) * x.dim(3);
      Tensor dx(x.shape);
      for (std::int64_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
        const double share = g.data[bc] / static_cast<double>(spatial);
        for (std::int64_t i = 0; i < spatial; ++i) dx.data[bc * spatial + i] = share;
      }
      out.inputs[0] = std::move(dx);
      break;
    }
    case OpKind::batch_norm: {
      const auto& x = *inputs[0];
      const auto l = channel_layout(node, x.shape);
      const auto& gamma = param(node, params, 0);
      Tensor dx(x.shape), dgamma({l.channels}), dbeta({l.channels});
      std::vector<double> mean, var;
      if (mode == Mode::train) {
        auto s = batch_stats(x, l);
        mean = std::move(s.mean);
        var = std::move(s.var);
      } else {
        mean = param(node, params, 2).data;
        var = param(node, params, 3).data;
      }
      const double m = static_cast<double>(l.batch * l.spatial);
      for (std::int64_t c = 0; c < l.channels; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + kBatchNormEps);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::int64_t b = 0; b < l.batch; ++b) {
          const auto off = (b * l.channels + c) * l.spatial;
          for (std::int64_t i = 0; i < l.spatial; ++i) {
            const double xhat = (x.data[off + i] - mean[c]) * inv;
            sum_g += g.data[off + i];
            sum_gx += g.data[off + i] * xhat;
          }
        }
        dgamma.data[c] = sum_gx;
        dbeta.data[c] = sum_g;
        const double gm = gamma.data[c];
        for (std::int64_t b = 0; b < l.batch; ++b) {
          const auto off = (b * l.channels + c) * l.spatial;
          for (std::int64_t i = 0; i < l.spatial; ++i) {
            if (mode == Mode::train) {
              const double xhat = (x.data[off + i] - mean[c]) * inv;
              dx.data[off + i] = gm * inv * (g.data[off + i] - sum_g / m - xhat * sum_gx / m);
            } else {
              dx.data[off + i] = gm * inv * g.data[off + i];
            }
          }
        }
      }
      out.inputs[0] = std::move(dx);
      out.params[0] = std::move(dgamma);
      out.params[1] = std::move(dbeta);
      break;
    }
    case OpKind::scalar_gate: {
      const double eta = param(node, params, 0).data[0];
      Tensor dx = g;
      for (auto& v : dx.data) v *= eta;
      out.inputs[0] = std::move(dx);
      out.params[0] = Tensor::scalar(dot(g, *inputs[0]));
      break;
    }
    case OpKind::weighted_sum: {
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const double a = param(node, params, k).data[0];
        Tensor dx = g;
        for (auto& v : dx.data) v *= a;
        out.inputs[k] = std::move(dx);
        out.params[k] = Tensor::scalar(dot(g, *inputs[k]));
      }
      break;
    }
    case OpKind::add:
      for (std::size_t k = 0; k < inputs.size(); ++k) out.inputs[k] = g;
      break;
    case OpKind::mul: {
      Tensor da = g, db = g;
      for (std::size_t i = 0; i < g.size(); ++i) {
        da.data[i] *= inputs[1]->data[i];
        db.data[i] *= inputs[0]->data[i];
      }
      out.inputs[0] = std::move(da);
      out.inputs[1] = std::move(db);
      break;
    }
    case OpKind::concat: {
      const auto& shape = output.shape;
      const auto batch_n = shape[0];
      const auto inner = shape.size() == 4 ? shape[2] * shape[3] : 1;
      std::int64_t c_off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto c = inputs[k]->dim(1);
        Tensor dx(inputs[k]->shape);
        for (std::int64_t b = 0; b < batch_n; ++b) {
          std::copy_n(g.data.begin() + (b * shape[1] + c_off) * inner, c * inner,
                      dx.data.begin() + b * c * inner);
        }
        out.inputs[k] = std::move(dx);
        c_off += c;
      }
      break;
    }
    case OpKind::softmax_xent: {
      const auto& z = *inputs[0];
      const auto rows = z.dim(0), k = z.dim(1);
      const auto targets = class_targets(node, batch, rows, k);
      const double scale = g.data[0] / static_cast<double>(rows);
      Tensor dz(z.shape);
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* zr = &z.data[r * k];
        const double m = *std::max_element(zr, zr + k);
        double s = 0.0;
        for (std::int64_t j = 0; j < k; ++j) s += std::exp(zr[j] - m);
        for (std::int64_t j = 0; j < k; ++j) {
          const double p = std::exp(zr[j] - m) / s;
          dz.data[r * k + j] = scale * (p - (j == targets[r] ? 1.0 : 0.0));
        }
      }
      out.inputs[0] = std::move(dz);
      break;
    }
    case OpKind::mse: {
      const auto& p = *inputs[0];
      const double scale = 2.0 * g.data[0] / static_cast<double>(p.size());
      Tensor dp(p.shape);
      for (std::size_t i = 0; i < p.size(); ++i) dp.data[i] = scale * (p.data[i] - batch.targets.data[i]);
      out.inputs[0] = std::move(dp);
      break;
    }
  }
  return out;
}

}  // namespace sprout
