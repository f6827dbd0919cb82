/* Copyright 2026 The dcss Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "dcss/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#include <Eigen/Core>

namespace dcss::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

bool want_grad(Tape* tape, const Tensor& a) {
  return tape != nullptr && a.requires_grad();
}

bool want_grad(Tape* tape, const Tensor& a, const Tensor& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  DCSS_CHECK(same_shape(a, b), op, ": shape mismatch ", shape_str(a.shape()),
             " vs ", shape_str(b.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x + std::exp(-x);
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  bool rg = want_grad(tape, a, b);
  Tensor out(a.shape(), rg);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (rg) {
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  bool rg = want_grad(tape, a, b);
  Tensor out(a.shape(), rg);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (rg) {
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  bool rg = want_grad(tape, a, b);
  Tensor out(a.shape(), rg);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (rg) {
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& bv2 = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& av2 = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return out;
}

Tensor affine(Tape* tape, const Tensor& x, double scale, double shift) {
  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = scale * xv[i] + shift;
  if (rg) {
    tape->record([x, out, scale]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
  }
  return out;
}

Tensor scalar_mul(Tape* tape, const Tensor& x, const Tensor& s) {
  DCSS_CHECK(s.numel() == 1, "scalar_mul: scale must be a scalar, got shape ",
             shape_str(s.shape()));
  bool rg = want_grad(tape, x, s);
  Tensor out(x.shape(), rg);
  const double sv = s.data()[0];
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = sv * xv[i];
  if (rg) {
    tape->record([x, s, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (x.requires_grad()) {
        const double sv2 = s.data()[0];
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv2 * g[i];
      }
      if (s.requires_grad()) {
        const auto& xv2 = x.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv2[i];
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor select(Tape* tape, const Tensor& x, index_t flat_index) {
  DCSS_CHECK(flat_index >= 0 && flat_index < x.numel(),
             "select: index ", flat_index, " out of range for ",
             shape_str(x.shape()));
  bool rg = want_grad(tape, x);
  Tensor out = Tensor::scalar(x.data()[static_cast<std::size_t>(flat_index)], rg);
  if (rg) {
    tape->record([x, out, flat_index]() mutable {
      if (!out.has_grad()) return;
      x.grad()[static_cast<std::size_t>(flat_index)] += out.grad()[0];
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  bool rg = want_grad(tape, x);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc, rg);
  if (rg) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor relu(Tape* tape, const Tensor& x) {
  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (rg) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& xv2 = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv2[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = stable_sigmoid(xv[i]);
  if (rg) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& ov2 = out.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * ov2[i] * (1.0 - ov2[i]);
      }
    });
  }
  return out;
}

Tensor log(Tape* tape, const Tensor& x) {
  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    DCSS_CHECK(xv[i] > 0.0, "log: non-positive input ", xv[i], " at index ", i);
    ov[i] = std::log(xv[i]);
  }
  if (rg) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& xv2 = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv2[i];
    });
  }
  return out;
}

Tensor softplus(Tape* tape, const Tensor& x) {
  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = stable_softplus(xv[i]);
  if (rg) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& xv2 = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * stable_sigmoid(xv2[i]);
      }
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x, int axis) {
  const auto& shape = x.shape();
  DCSS_CHECK(axis >= 0 && axis < x.rank(), "softmax: axis ", axis,
             " out of range for ", shape_str(shape));
  index_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < x.rank(); ++i) {
    inner *= shape[static_cast<std::size_t>(i)];
  }
  const index_t len = shape[static_cast<std::size_t>(axis)];
  DCSS_CHECK(len > 0, "softmax: empty axis");

  bool rg = want_grad(tape, x);
  Tensor out(shape, rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t o = 0; o < outer; ++o) {
    for (index_t in = 0; in < inner; ++in) {
      const index_t base = o * len * inner + in;
      double mx = xv[static_cast<std::size_t>(base)];
      for (index_t i = 1; i < len; ++i) {
        mx = std::max(mx, xv[static_cast<std::size_t>(base + i * inner)]);
      }
      double denom = 0.0;
      for (index_t i = 0; i < len; ++i) {
        const std::size_t idx = static_cast<std::size_t>(base + i * inner);
        ov[idx] = std::exp(xv[idx] - mx);
        denom += ov[idx];
      }
      for (index_t i = 0; i < len; ++i) {
        ov[static_cast<std::size_t>(base + i * inner)] /= denom;
      }
    }
  }
  if (rg) {
    tape->record([x, out, outer, inner, len]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& ov2 = out.data();
      auto& gx = x.grad();
      for (index_t o = 0; o < outer; ++o) {
        for (index_t in = 0; in < inner; ++in) {
          const index_t base = o * len * inner + in;
          double dot = 0.0;
          for (index_t i = 0; i < len; ++i) {
            const std::size_t idx = static_cast<std::size_t>(base + i * inner);
            dot += g[idx] * ov2[idx];
          }
          for (index_t i = 0; i < len; ++i) {
            const std::size_t idx = static_cast<std::size_t>(base + i * inner);
            gx[idx] += ov2[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor masked_softmax(Tape* tape, const Tensor& x,
                      const std::vector<std::uint8_t>& mask) {
  DCSS_CHECK(x.rank() == 1, "masked_softmax: expected rank-1 tensor, got ",
             shape_str(x.shape()));
  DCSS_CHECK(mask.size() == static_cast<std::size_t>(x.numel()),
             "masked_softmax: mask size ", mask.size(), " vs tensor ",
             x.numel());
  bool any = false;
  for (auto m : mask) any = any || (m != 0);
  DCSS_CHECK(any, "masked_softmax: empty selection");

  bool rg = want_grad(tape, x);
  Tensor out(x.shape(), rg);
  const auto& xv = x.data();
  auto& ov = out.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask[i]) mx = std::max(mx, xv[i]);
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask[i]) {
      ov[i] = std::exp(xv[i] - mx);
      denom += ov[i];
    }
  }
  for (std::size_t i = 0; i < xv.size(); ++i) {
    ov[i] = mask[i] ? ov[i] / denom : 0.0;
  }
  if (rg) {
    tape->record([x, out, mask]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& ov2 = out.data();
      auto& gx = x.grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (mask[i]) dot += g[i] * ov2[i];
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (mask[i]) gx[i] += ov2[i] * (g[i] - dot);
      }
    });
  }
  return out;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& xs, int axis) {
  DCSS_CHECK(!xs.empty(), "concat: no inputs");
  const int rank = xs[0].rank();
  DCSS_CHECK(axis >= 0 && axis < rank, "concat: axis ", axis,
             " out of range for rank ", rank);
  std::vector<index_t> out_shape = xs[0].shape();
  index_t axis_total = 0;
  for (const auto& x : xs) {
    DCSS_CHECK(x.rank() == rank, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == axis) continue;
      DCSS_CHECK(x.dim(d) == out_shape[static_cast<std::size_t>(d)],
                 "concat: dim ", d, " mismatch ", shape_str(x.shape()),
                 " vs ", shape_str(xs[0].shape()));
    }
    axis_total += x.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  bool rg = false;
  for (const auto& x : xs) rg = rg || want_grad(tape, x);
  Tensor out(out_shape, rg);

  index_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) {
    inner *= out_shape[static_cast<std::size_t>(i)];
  }

  auto& ov = out.data();
  index_t axis_off = 0;
  for (const auto& x : xs) {
    const index_t len = x.dim(axis);
    const auto& xv = x.data();
    for (index_t o = 0; o < outer; ++o) {
      const double* src = xv.data() + o * len * inner;
      double* dst = ov.data() + (o * axis_total + axis_off) * inner;
      std::memcpy(dst, src, static_cast<std::size_t>(len * inner) * sizeof(double));
    }
    axis_off += len;
  }
  if (rg) {
    tape->record([xs, out, outer, inner, axis_total, axis]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      index_t off = 0;
      for (auto& x : xs) {
        const index_t len = x.dim(axis);
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (index_t o = 0; o < outer; ++o) {
            const double* src = g.data() + (o * axis_total + off) * inner;
            double* dst = gx.data() + o * len * inner;
            for (index_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        off += len;
      }
    });
  }
  return out;
}

Tensor channel_gather(Tape* tape, const Tensor& x,
                      const std::vector<index_t>& channels) {
  DCSS_CHECK(x.rank() == 4, "channel_gather: expected NCHW, got ",
             shape_str(x.shape()));
  const index_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DCSS_CHECK(!channels.empty(), "channel_gather: empty channel list");
  for (index_t c : channels) {
    DCSS_CHECK(c >= 0 && c < C, "channel_gather: channel ", c,
               " out of range [0,", C, ")");
  }
  const index_t K = static_cast<index_t>(channels.size());
  bool rg = want_grad(tape, x);
  Tensor out({N, K, H, W}, rg);
  const index_t plane = H * W;
  const auto& xv = x.data();
  auto& ov = out.data();
  for (index_t n = 0; n < N; ++n) {
    for (index_t j = 0; j < K; ++j) {
      std::memcpy(ov.data() + (n * K + j) * plane,
                  xv.data() + (n * C + channels[static_cast<std::size_t>(j)]) * plane,
                  static_cast<std::size_t>(plane) * sizeof(double));
    }
  }
  if (rg) {
    tape->record([x, out, channels, N, K, C, plane]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (index_t n = 0; n < N; ++n) {
        for (index_t j = 0; j < K; ++j) {
          const double* src = g.data() + (n * K + j) * plane;
          double* dst =
              gx.data() + (n * C + channels[static_cast<std::size_t>(j)]) * plane;
          for (index_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor channel_scatter_merge(Tape* tape, const Tensor& y, const Tensor& base,
                             const std::vector<index_t>& channels) {
  DCSS_CHECK(y.rank() == 4 && base.rank() == 4,
             "channel_scatter_merge: expected NCHW inputs");
  const index_t N = base.dim(0), C = base.dim(1), H = base.dim(2),
                W = base.dim(3);
  const index_t K = static_cast<index_t>(channels.size());
  DCSS_CHECK(y.dim(0) == N && y.dim(2) == H && y.dim(3) == W && y.dim(1) == K,
             "channel_scatter_merge: slice shape ", shape_str(y.shape()),
             " incompatible with base ", shape_str(base.shape()), " and ", K,
             " channels");
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(C), 0);
  for (index_t c : channels) {
    DCSS_CHECK(c >= 0 && c < C, "channel_scatter_merge: channel ", c,
               " out of range [0,", C, ")");
    DCSS_CHECK(!taken[static_cast<std::size_t>(c)],
               "channel_scatter_merge: duplicate channel ", c);
    taken[static_cast<std::size_t>(c)] = 1;
  }
  bool rg = want_grad(tape, y, base);
  Tensor out(base.shape(), rg);
  const index_t plane = H * W;
  // Pass-through channels are bitwise copies of base; no arithmetic touches
  // them.
  out.data() = base.data();
  const auto& yv = y.data();
  auto& ov = out.data();
  for (index_t n = 0; n < N; ++n) {
    for (index_t j = 0; j < K; ++j) {
      std::memcpy(ov.data() + (n * C + channels[static_cast<std::size_t>(j)]) * plane,
                  yv.data() + (n * K + j) * plane,
                  static_cast<std::size_t>(plane) * sizeof(double));
    }
  }
  if (rg) {
    tape->record([y, base, out, channels, taken, N, C, K, plane]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (y.requires_grad()) {
        auto& gy = y.grad();
        for (index_t n = 0; n < N; ++n) {
          for (index_t j = 0; j < K; ++j) {
            const double* src =
                g.data() + (n * C + channels[static_cast<std::size_t>(j)]) * plane;
            double* dst = gy.data() + (n * K + j) * plane;
            for (index_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
        }
      }
      if (base.requires_grad()) {
        auto& gb = base.grad();
        for (index_t n = 0; n < N; ++n) {
          for (index_t c = 0; c < C; ++c) {
            if (taken[static_cast<std::size_t>(c)]) continue;
            const double* src = g.data() + (n * C + c) * plane;
            double* dst = gb.data() + (n * C + c) * plane;
            for (index_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  index_t N, Cin, H, W, Cout, k, Ho, Wo, cpg_in, cpg_out;
  int stride, padding, groups;
};

ConvDims conv_check(const Tensor& input, const Tensor& weight, int stride,
                    int padding, int groups) {
  DCSS_CHECK(input.rank() == 4, "conv2d: input must be NCHW, got ",
             shape_str(input.shape()));
  DCSS_CHECK(weight.rank() == 4, "conv2d: weight must be [Cout,Cin/g,k,k], got ",
             shape_str(weight.shape()));
  DCSS_CHECK(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square, got ",
             weight.dim(2), "x", weight.dim(3));
  DCSS_CHECK(stride >= 1, "conv2d: stride must be >= 1, got ", stride);
  DCSS_CHECK(padding >= 0, "conv2d: padding must be >= 0, got ", padding);
  DCSS_CHECK(groups >= 1, "conv2d: groups must be >= 1, got ", groups);

  ConvDims d;
  d.N = input.dim(0);
  d.Cin = input.dim(1);
  d.H = input.dim(2);
  d.W = input.dim(3);
  d.Cout = weight.dim(0);
  d.k = weight.dim(2);
  d.stride = stride;
  d.padding = padding;
  d.groups = groups;
  DCSS_CHECK(d.Cin % groups == 0, "conv2d: input channels ", d.Cin,
             " not divisible by groups ", groups);
  DCSS_CHECK(d.Cout % groups == 0, "conv2d: output channels ", d.Cout,
             " not divisible by groups ", groups);
  DCSS_CHECK(weight.dim(1) == d.Cin / groups, "conv2d: weight expects ",
             weight.dim(1), " channels per group, input provides ",
             d.Cin / groups);
  d.cpg_in = d.Cin / groups;
  d.cpg_out = d.Cout / groups;
  d.Ho = (d.H + 2 * padding - d.k) / stride + 1;
  d.Wo = (d.W + 2 * padding - d.k) / stride + 1;
  DCSS_CHECK(d.H + 2 * padding >= d.k && d.W + 2 * padding >= d.k,
             "conv2d: kernel ", d.k, " exceeds padded input ",
             d.H + 2 * padding, "x", d.W + 2 * padding);
  return d;
}

// Pointwise stride-1 convolution: per-image GEMM straight on the buffers.
Tensor conv1x1(Tape* tape, const Tensor& input, const Tensor& weight,
               const ConvDims& d) {
  bool rg = want_grad(tape, input, weight);
  Tensor out({d.N, d.Cout, d.H, d.W}, rg);
  const index_t plane = d.H * d.W;
  CMapRM wmat(weight.data().data(), d.Cout, d.Cin);
  const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (index_t n = 0; n < d.N; ++n) {
    CMapRM in_n(input.data().data() + n * d.Cin * plane, d.Cin, plane);
    MapRM out_n(out.data().data() + n * d.Cout * plane, d.Cout, plane);
    out_n.noalias() = wmat * in_n;
  }
  if (rg) {
    ConvDims dims = d;
    tape->record([input, weight, out, dims, plane]() mutable {
      if (!out.has_grad()) return;
      CMapRM wmat2(weight.data().data(), dims.Cout, dims.Cin);
      if (input.requires_grad()) {
        // Materialize the grad buffer before the parallel region; grad() may
        // allocate and must not race.
        auto& gin = input.grad();
        const auto& g = out.grad();
        const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
        for (index_t n = 0; n < dims.N; ++n) {
          CMapRM g_n(g.data() + n * dims.Cout * plane, dims.Cout, plane);
          MapRM gin_n(gin.data() + n * dims.Cin * plane, dims.Cin, plane);
          gin_n.noalias() += wmat2.transpose() * g_n;
        }
      }
      if (weight.requires_grad()) {
        MapRM gw(weight.grad().data(), dims.Cout, dims.Cin);
        for (index_t n = 0; n < dims.N; ++n) {
          CMapRM g_n(out.grad().data() + n * dims.Cout * plane, dims.Cout, plane);
          CMapRM in_n(input.data().data() + n * dims.Cin * plane, dims.Cin,
                      plane);
          gw.noalias() += g_n * in_n.transpose();
        }
      }
    });
  }
  return out;
}

// Valid output range [lo, hi) for one kernel tap: those y with
// 0 <= y*stride - padding + tap < limit.
inline void tap_range(index_t tap, index_t limit, int stride, int padding,
                      index_t out_len, index_t& lo, index_t& hi) {
  const index_t off = tap - padding;
  lo = off < 0 ? (-off + stride - 1) / stride : 0;
  hi = std::min(out_len, off < limit ? (limit - off + stride - 1) / stride
                                     : index_t{0});
}

// Depthwise convolution: direct tap-major loops (no per-pixel bounds checks),
// parallel over channels.
Tensor conv_depthwise(Tape* tape, const Tensor& input, const Tensor& weight,
                      const ConvDims& d) {
  bool rg = want_grad(tape, input, weight);
  Tensor out({d.N, d.Cout, d.Ho, d.Wo}, rg);
  const auto& xv = input.data();
  const auto& wv = weight.data();
  auto& ov = out.data();
  const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt) collapse(2)
  for (index_t n = 0; n < d.N; ++n) {
    for (index_t c = 0; c < d.Cout; ++c) {
      const double* in_p = xv.data() + (n * d.Cin + c) * d.H * d.W;
      const double* w_p = wv.data() + c * d.k * d.k;
      double* out_p = ov.data() + (n * d.Cout + c) * d.Ho * d.Wo;
      for (index_t i = 0; i < d.k; ++i) {
        index_t ylo, yhi;
        tap_range(i, d.H, d.stride, d.padding, d.Ho, ylo, yhi);
        for (index_t j = 0; j < d.k; ++j) {
          index_t xlo, xhi;
          tap_range(j, d.W, d.stride, d.padding, d.Wo, xlo, xhi);
          const double wij = w_p[i * d.k + j];
          for (index_t y = ylo; y < yhi; ++y) {
            const double* row = in_p + (y * d.stride - d.padding + i) * d.W - d.padding + j;
            double* orow = out_p + y * d.Wo;
            for (index_t x = xlo; x < xhi; ++x) {
              orow[x] += wij * row[x * d.stride];
            }
          }
        }
      }
    }
  }
  if (rg) {
    ConvDims dims = d;
    tape->record([input, weight, out, dims]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& xv2 = input.data();
      const auto& wv2 = weight.data();
      const bool gin = input.requires_grad();
      const bool gw = weight.requires_grad();
      double* gin_base = gin ? input.grad().data() : nullptr;
      double* gw_base = gw ? weight.grad().data() : nullptr;
      const int nt = compute_threads();
      // Parallel over channels: each channel owns disjoint slices of both
      // grad buffers, so accumulation stays deterministic.
#pragma omp parallel for schedule(static) num_threads(nt)
      for (index_t c = 0; c < dims.Cout; ++c) {
        for (index_t n = 0; n < dims.N; ++n) {
          const double* g_p = g.data() + (n * dims.Cout + c) * dims.Ho * dims.Wo;
          const double* in_p = xv2.data() + (n * dims.Cin + c) * dims.H * dims.W;
          const double* w_p = wv2.data() + c * dims.k * dims.k;
          double* gin_p =
              gin_base ? gin_base + (n * dims.Cin + c) * dims.H * dims.W
                       : nullptr;
          double* gw_p = gw_base ? gw_base + c * dims.k * dims.k : nullptr;
          for (index_t i = 0; i < dims.k; ++i) {
            index_t ylo, yhi;
            tap_range(i, dims.H, dims.stride, dims.padding, dims.Ho, ylo, yhi);
            for (index_t j = 0; j < dims.k; ++j) {
              index_t xlo, xhi;
              tap_range(j, dims.W, dims.stride, dims.padding, dims.Wo, xlo, xhi);
              const double wij = w_p[i * dims.k + j];
              double wacc = 0.0;
              for (index_t y = ylo; y < yhi; ++y) {
                const index_t base =
                    (y * dims.stride - dims.padding + i) * dims.W - dims.padding + j;
                const double* grow = g_p + y * dims.Wo;
                for (index_t x = xlo; x < xhi; ++x) {
                  const double gv = grow[x];
                  if (gin_p) gin_p[base + x * dims.stride] += gv * wij;
                  wacc += gv * in_p[base + x * dims.stride];
                }
              }
              if (gw_p) gw_p[i * dims.k + j] += wacc;
            }
          }
        }
      }
    });
  }
  return out;
}

void im2col_group(const ConvDims& d, const std::vector<double>& xv, int group,
                  MatRM& cols) {
  const index_t K = d.cpg_in * d.k * d.k;
  const index_t ncols = d.N * d.Ho * d.Wo;
  cols.resize(K, ncols);
  const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (index_t n = 0; n < d.N; ++n) {
    for (index_t ci = 0; ci < d.cpg_in; ++ci) {
      const double* in_p =
          xv.data() + (n * d.Cin + group * d.cpg_in + ci) * d.H * d.W;
      for (index_t i = 0; i < d.k; ++i) {
        for (index_t j = 0; j < d.k; ++j) {
          double* row = cols.data() + ((ci * d.k + i) * d.k + j) * ncols +
                        n * d.Ho * d.Wo;
          for (index_t y = 0; y < d.Ho; ++y) {
            const index_t h = y * d.stride - d.padding + i;
            for (index_t x = 0; x < d.Wo; ++x) {
              const index_t w = x * d.stride - d.padding + j;
              row[y * d.Wo + x] = (h >= 0 && h < d.H && w >= 0 && w < d.W)
                                      ? in_p[h * d.W + w]
                                      : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_group(const ConvDims& d, const MatRM& grad_cols, int group,
                  std::vector<double>& gin) {
  const index_t ncols = d.N * d.Ho * d.Wo;
  const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (index_t n = 0; n < d.N; ++n) {
    for (index_t ci = 0; ci < d.cpg_in; ++ci) {
      double* gin_p =
          gin.data() + (n * d.Cin + group * d.cpg_in + ci) * d.H * d.W;
      for (index_t i = 0; i < d.k; ++i) {
        for (index_t j = 0; j < d.k; ++j) {
          const double* row = grad_cols.data() +
                              ((ci * d.k + i) * d.k + j) * ncols +
                              n * d.Ho * d.Wo;
          for (index_t y = 0; y < d.Ho; ++y) {
            const index_t h = y * d.stride - d.padding + i;
            if (h < 0 || h >= d.H) continue;
            for (index_t x = 0; x < d.Wo; ++x) {
              const index_t w = x * d.stride - d.padding + j;
              if (w < 0 || w >= d.W) continue;
              gin_p[h * d.W + w] += row[y * d.Wo + x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              int stride, int padding, int groups) {
  const ConvDims d = conv_check(input, weight, stride, padding, groups);
  if (d.k == 1 && stride == 1 && padding == 0 && groups == 1) {
    return conv1x1(tape, input, weight, d);
  }
  if (groups > 1 && d.cpg_in == 1 && d.cpg_out == 1) {
    return conv_depthwise(tape, input, weight, d);
  }

  bool rg = want_grad(tape, input, weight);
  Tensor out({d.N, d.Cout, d.Ho, d.Wo}, rg);
  const index_t K = d.cpg_in * d.k * d.k;
  const index_t ncols = d.N * d.Ho * d.Wo;
  const index_t oplane = d.Ho * d.Wo;

  // im2col + GEMM per group; the column matrices are kept for the weight
  // gradient.
  auto cols_all = std::make_shared<std::vector<MatRM>>(
      static_cast<std::size_t>(d.groups));
  for (int g = 0; g < d.groups; ++g) {
    MatRM& cols = (*cols_all)[static_cast<std::size_t>(g)];
    im2col_group(d, input.data(), g, cols);
    CMapRM wmat(weight.data().data() + g * d.cpg_out * K, d.cpg_out, K);
    MatRM prod = wmat * cols;  // [cpg_out, ncols]
    for (index_t r = 0; r < d.cpg_out; ++r) {
      for (index_t n = 0; n < d.N; ++n) {
        std::memcpy(out.data().data() +
                        (n * d.Cout + g * d.cpg_out + r) * oplane,
                    prod.data() + r * ncols + n * oplane,
                    static_cast<std::size_t>(oplane) * sizeof(double));
      }
    }
  }
  if (rg) {
    ConvDims dims = d;
    tape->record([input, weight, out, cols_all, dims, K, ncols, oplane]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (int grp = 0; grp < dims.groups; ++grp) {
        MatRM gmat(dims.cpg_out, ncols);
        for (index_t r = 0; r < dims.cpg_out; ++r) {
          for (index_t n = 0; n < dims.N; ++n) {
            std::memcpy(gmat.data() + r * ncols + n * oplane,
                        g.data() +
                            (n * dims.Cout + grp * dims.cpg_out + r) * oplane,
                        static_cast<std::size_t>(oplane) * sizeof(double));
          }
        }
        const MatRM& cols = (*cols_all)[static_cast<std::size_t>(grp)];
        if (weight.requires_grad()) {
          MapRM gw(weight.grad().data() + grp * dims.cpg_out * K, dims.cpg_out,
                   K);
          gw.noalias() += gmat * cols.transpose();
        }
        if (input.requires_grad()) {
          CMapRM wmat(weight.data().data() + grp * dims.cpg_out * K,
                      dims.cpg_out, K);
          MatRM grad_cols = wmat.transpose() * gmat;  // [K, ncols]
          col2im_group(dims, grad_cols, grp, input.grad());
        }
      }
    });
  }
  return out;
}

Tensor bilinear_upsample(Tape* tape, const Tensor& input, int factor) {
  DCSS_CHECK(input.rank() == 4, "bilinear_upsample: expected NCHW, got ",
             shape_str(input.shape()));
  DCSS_CHECK(factor >= 1, "bilinear_upsample: factor must be >= 1, got ",
             factor);
  DCSS_CHECK((factor & (factor - 1)) == 0,
             "bilinear_upsample: factor must be a power of two, got ", factor);
  const index_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const index_t Ho = H * factor, Wo = W * factor;

  // Per-axis interpolation tables (align-corners=false, clamped borders).
  struct Interp {
    std::vector<index_t> lo, hi;
    std::vector<double> frac;
  };
  auto build = [factor](index_t src, index_t dst) {
    Interp t;
    t.lo.resize(static_cast<std::size_t>(dst));
    t.hi.resize(static_cast<std::size_t>(dst));
    t.frac.resize(static_cast<std::size_t>(dst));
    for (index_t o = 0; o < dst; ++o) {
      double s = (static_cast<double>(o) + 0.5) / factor - 0.5;
      double fl = std::floor(s);
      index_t i0 = static_cast<index_t>(fl);
      double f = s - fl;
      index_t lo = std::clamp<index_t>(i0, 0, src - 1);
      index_t hi = std::clamp<index_t>(i0 + 1, 0, src - 1);
      t.lo[static_cast<std::size_t>(o)] = lo;
      t.hi[static_cast<std::size_t>(o)] = hi;
      t.frac[static_cast<std::size_t>(o)] = f;
    }
    return t;
  };
  auto ty = std::make_shared<Interp>(build(H, Ho));
  auto tx = std::make_shared<Interp>(build(W, Wo));

  bool rg = want_grad(tape, input);
  Tensor out({N, C, Ho, Wo}, rg);
  const auto& xv = input.data();
  auto& ov = out.data();
  const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (index_t p = 0; p < N * C; ++p) {
    const double* in_p = xv.data() + p * H * W;
    double* out_p = ov.data() + p * Ho * Wo;
    for (index_t y = 0; y < Ho; ++y) {
      const index_t y0 = ty->lo[static_cast<std::size_t>(y)];
      const index_t y1 = ty->hi[static_cast<std::size_t>(y)];
      const double fy = ty->frac[static_cast<std::size_t>(y)];
      for (index_t x = 0; x < Wo; ++x) {
        const index_t x0 = tx->lo[static_cast<std::size_t>(x)];
        const index_t x1 = tx->hi[static_cast<std::size_t>(x)];
        const double fx = tx->frac[static_cast<std::size_t>(x)];
        const double v00 = in_p[y0 * W + x0];
        const double v01 = in_p[y0 * W + x1];
        const double v10 = in_p[y1 * W + x0];
        const double v11 = in_p[y1 * W + x1];
        out_p[y * Wo + x] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                            fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
  }
  if (rg) {
    tape->record([input, out, ty, tx, N, C, H, W, Ho, Wo]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      auto& gx = input.grad();
      const int nt = compute_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
      for (index_t p = 0; p < N * C; ++p) {
        const double* g_p = g.data() + p * Ho * Wo;
        double* gx_p = gx.data() + p * H * W;
        for (index_t y = 0; y < Ho; ++y) {
          const index_t y0 = ty->lo[static_cast<std::size_t>(y)];
          const index_t y1 = ty->hi[static_cast<std::size_t>(y)];
          const double fy = ty->frac[static_cast<std::size_t>(y)];
          for (index_t x = 0; x < Wo; ++x) {
            const index_t x0 = tx->lo[static_cast<std::size_t>(x)];
            const index_t x1 = tx->hi[static_cast<std::size_t>(x)];
            const double fx = tx->frac[static_cast<std::size_t>(x)];
            const double gv = g_p[y * Wo + x];
            gx_p[y0 * W + x0] += (1.0 - fy) * (1.0 - fx) * gv;
            gx_p[y0 * W + x1] += (1.0 - fy) * fx * gv;
            gx_p[y1 * W + x0] += fy * (1.0 - fx) * gv;
            gx_p[y1 * W + x1] += fy * fx * gv;
          }
        }
      }
    });
  }
  return out;
}

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta_shift, Tensor running_mean,
                  Tensor running_var, bool training, double momentum,
                  double eps) {
  DCSS_CHECK(x.rank() == 4, "batch_norm: expected NCHW, got ",
             shape_str(x.shape()));
  const index_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DCSS_CHECK(gamma.numel() == C, "batch_norm: gamma has ", gamma.numel(),
             " entries, input has ", C, " channels");
  DCSS_CHECK(beta_shift.numel() == C, "batch_norm: beta has ",
             beta_shift.numel(), " entries, input has ", C, " channels");
  DCSS_CHECK(running_mean.numel() == C && running_var.numel() == C,
             "batch_norm: running stats size mismatch");
  const index_t M = N * H * W;
  if (training) {
    DCSS_CHECK(M > 1,
               "batch_norm: batch*H*W == 1 in training mode (degenerate "
               "variance)");
  }

  bool rg = tape != nullptr && (x.requires_grad() || gamma.requires_grad() ||
                                beta_shift.requires_grad());
  Tensor out(x.shape(), rg);
  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto invstd = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(C));

  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta_shift.data();
  auto& ov = out.data();
  const index_t plane = H * W;

  for (index_t c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (index_t n = 0; n < N; ++n) {
        const double* p = xv.data() + (n * C + c) * plane;
        for (index_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / static_cast<double>(M);
      double sq = 0.0;
      for (index_t n = 0; n < N; ++n) {
        const double* p = xv.data() + (n * C + c) * plane;
        for (index_t i = 0; i < plane; ++i) {
          const double dv = p[i] - mean;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(M);
      auto& rm = running_mean.data();
      auto& rv = running_var.data();
      rm[static_cast<std::size_t>(c)] =
          momentum * rm[static_cast<std::size_t>(c)] + (1.0 - momentum) * mean;
      rv[static_cast<std::size_t>(c)] =
          momentum * rv[static_cast<std::size_t>(c)] + (1.0 - momentum) * var;
    } else {
      mean = running_mean.data()[static_cast<std::size_t>(c)];
      var = running_var.data()[static_cast<std::size_t>(c)];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(c)] = is;
    const double gc = gv[static_cast<std::size_t>(c)];
    const double bc = bv[static_cast<std::size_t>(c)];
    for (index_t n = 0; n < N; ++n) {
      const double* p = xv.data() + (n * C + c) * plane;
      double* xh = xhat->data() + (n * C + c) * plane;
      double* o = ov.data() + (n * C + c) * plane;
      for (index_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = gc * xh[i] + bc;
      }
    }
  }

  if (rg) {
    tape->record([x, gamma, beta_shift, out, xhat, invstd, N, C, plane, M,
                  training]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const auto& gv2 = gamma.data();
      for (index_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (index_t n = 0; n < N; ++n) {
          const double* gp = g.data() + (n * C + c) * plane;
          const double* xh = xhat->data() + (n * C + c) * plane;
          for (index_t i = 0; i < plane; ++i) {
            sum_g += gp[i];
            sum_gx += gp[i] * xh[i];
          }
        }
        if (gamma.requires_grad()) {
          gamma.grad()[static_cast<std::size_t>(c)] += sum_gx;
        }
        if (beta_shift.requires_grad()) {
          beta_shift.grad()[static_cast<std::size_t>(c)] += sum_g;
        }
        if (x.requires_grad()) {
          const double gc = gv2[static_cast<std::size_t>(c)];
          const double is = (*invstd)[static_cast<std::size_t>(c)];
          auto& gx = x.grad();
          if (training) {
            const double mg = sum_g / static_cast<double>(M);
            const double mgx = sum_gx / static_cast<double>(M);
            for (index_t n = 0; n < N; ++n) {
              const double* gp = g.data() + (n * C + c) * plane;
              const double* xh = xhat->data() + (n * C + c) * plane;
              double* gxp = gx.data() + (n * C + c) * plane;
              for (index_t i = 0; i < plane; ++i) {
                gxp[i] += gc * is * (gp[i] - mg - xh[i] * mgx);
              }
            }
          } else {
            for (index_t n = 0; n < N; ++n) {
              const double* gp = g.data() + (n * C + c) * plane;
              double* gxp = gx.data() + (n * C + c) * plane;
              for (index_t i = 0; i < plane; ++i) gxp[i] += gc * is * gp[i];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, const LabelMap& labels,
                     int ignore_index) {
  DCSS_CHECK(logits.rank() == 4, "cross_entropy: logits must be NCHW, got ",
             shape_str(logits.shape()));
  const index_t N = logits.dim(0), C = logits.dim(1), H = logits.dim(2),
                W = logits.dim(3);
  DCSS_CHECK(labels.n == N && labels.h == H && labels.w == W,
             "cross_entropy: labels [", labels.n, ",", labels.h, ",", labels.w,
             "] do not match logits ", shape_str(logits.shape()));

  auto probs = std::make_shared<std::vector<double>>(logits.data().size());
  const auto& lv = logits.data();
  const index_t plane = H * W;

  double total = 0.0;
  index_t valid = 0;
  for (index_t n = 0; n < N; ++n) {
    for (index_t px = 0; px < plane; ++px) {
      const std::int32_t lab = labels.v[static_cast<std::size_t>(n * plane + px)];
      const index_t base = n * C * plane + px;
      double mx = lv[static_cast<std::size_t>(base)];
      for (index_t c = 1; c < C; ++c) {
        mx = std::max(mx, lv[static_cast<std::size_t>(base + c * plane)]);
      }
      double denom = 0.0;
      for (index_t c = 0; c < C; ++c) {
        const std::size_t idx = static_cast<std::size_t>(base + c * plane);
        (*probs)[idx] = std::exp(lv[idx] - mx);
        denom += (*probs)[idx];
      }
      for (index_t c = 0; c < C; ++c) {
        (*probs)[static_cast<std::size_t>(base + c * plane)] /= denom;
      }
      if (lab == ignore_index) continue;
      DCSS_CHECK(lab >= 0 && lab < C, "cross_entropy: label ", lab,
                 " outside [0,", C, ") and not ignore_index ", ignore_index);
      const double lse = mx + std::log(denom);
      total += lse - lv[static_cast<std::size_t>(base + lab * plane)];
      ++valid;
    }
  }
  DCSS_CHECK(valid > 0, "cross_entropy: all pixels ignored");
  const double inv_m = 1.0 / static_cast<double>(valid);

  bool rg = want_grad(tape, logits);
  Tensor out = Tensor::scalar(total * inv_m, rg);
  if (rg) {
    LabelMap labs = labels;
    tape->record([logits, out, probs, labs, N, C, plane, inv_m,
                  ignore_index]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] * inv_m;
      auto& gx = logits.grad();
      for (index_t n = 0; n < N; ++n) {
        for (index_t px = 0; px < plane; ++px) {
          const std::int32_t lab = labs.v[static_cast<std::size_t>(n * plane + px)];
          if (lab == ignore_index) continue;
          const index_t base = n * C * plane + px;
          for (index_t c = 0; c < C; ++c) {
            const std::size_t idx = static_cast<std::size_t>(base + c * plane);
            gx[idx] += g * ((*probs)[idx] - (c == lab ? 1.0 : 0.0));
          }
        }
      }
    });
  }
  return out;
}

}  // namespace dcss::ops
