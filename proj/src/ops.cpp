// Copyright 2026 The hccrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hccrop/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "hccrop/error.hpp"
#include "hccrop/losses.hpp"

namespace hccrop::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Vec = Eigen::VectorXd;

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

void require_map(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) < 1 || t.dim(1) < 1 || t.dim(2) < 1) {
    throw ValidationError(std::string(what) + ": expected a [C, H, W] map, got " + t.shape_string());
  }
}

struct ConvGeom {
  int cin, h, w, cout, k, stride, pad, ho, wo;
  int rows() const { return cin * k * k; }
  int cols() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const int n = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * n;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeom& g, double* dx) {
  const int n = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * n;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = dx + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const double* src = row + oy * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Per-axis taps for half-pixel bilinear resampling.
struct Axis {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

Axis resample_axis(int in, int out) {
  Axis a;
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    const int hi = lo + (lo < in - 1 ? 1 : 0);
    const double l = src - lo;
    a.i0.push_back(lo);
    a.i1.push_back(hi);
    a.w0.push_back(1.0 - l);
    a.w1.push_back(l);
  }
  return a;
}

struct Window {
  std::vector<int> start, end;
};

Window pool_windows(int in, int out) {
  Window w;
  for (int o = 0; o < out; ++o) {
    w.start.push_back(static_cast<int>(std::floor(double(o) * in / out)));
    w.end.push_back(static_cast<int>(std::ceil(double(o + 1) * in / out)));
  }
  return w;
}

// Sparse linear map from map cells to output cells, shared by all channels.
struct Taps {
  std::vector<std::vector<std::pair<int, double>>> per_output;
};

Var apply_taps(Tape& tape, Var x, std::shared_ptr<const Taps> taps, std::vector<int> out_shape) {
  const Tensor& xv = tape.value(x);
  const int channels = xv.dim(0);
  const std::size_t in_plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  const std::size_t out_plane = taps->per_output.size();
  Tensor out(std::move(out_shape));
  for (int c = 0; c < channels; ++c) {
    const double* src = xv.data() + c * in_plane;
    double* dst = out.data() + c * out_plane;
    for (std::size_t o = 0; o < out_plane; ++o) {
      double s = 0.0;
      for (const auto& [idx, w] : taps->per_output[o]) s += w * src[idx];
      dst[o] = s;
    }
  }
  return tape.record(std::move(out), {x}, [x, taps, channels, in_plane, out_plane](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (int c = 0; c < channels; ++c) {
      double* dst = dx->data() + c * in_plane;
      const double* src = g.data() + c * out_plane;
      for (std::size_t o = 0; o < out_plane; ++o) {
        for (const auto& [idx, w] : taps->per_output[o]) dst[idx] += w * src[o];
      }
    }
  });
}

}  // namespace

Var conv2d(Tape& tape, Var x, Var weight, Var bias, int stride, int pad) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  require_map(xv, "conv2d input");
  require(wv.rank() == 4 && wv.dim(1) == xv.dim(0) && wv.dim(2) == wv.dim(3), "conv2d: weight shape mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  ConvGeom g{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(2), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  require(g.ho >= 1 && g.wo >= 1, "conv2d: input smaller than kernel");
  if (bias.valid()) require(tape.value(bias).size() == static_cast<std::size_t>(g.cout), "conv2d: bias size");

  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  im2col(xv.data(), g, cols.data());
  Tensor out({g.cout, g.ho, g.wo});
  MapMat om(out.data(), g.cout, g.cols());
  om.noalias() = ConstMapMat(wv.data(), g.cout, g.rows()) * ConstMapMat(cols.data(), g.rows(), g.cols());
  if (bias.valid()) {
    const Tensor& bv = tape.value(bias);
    for (int o = 0; o < g.cout; ++o) om.row(o).array() += bv[o];
  }

  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, g](Tape& t, const Tensor&, const Tensor& grad) {
    ConstMapMat gm(grad.data(), g.cout, g.cols());
    if (Tensor* db = t.grad_buffer(bias)) {
      for (int o = 0; o < g.cout; ++o) (*db)[o] += gm.row(o).sum();
    }
    Tensor* dw = t.grad_buffer(weight);
    Tensor* dx = t.grad_buffer(x);
    if (dw == nullptr && dx == nullptr) return;
    std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
    if (dw != nullptr) {
      im2col(t.value(x).data(), g, cols.data());
      MapMat(dw->data(), g.cout, g.rows()).noalias() += gm * ConstMapMat(cols.data(), g.rows(), g.cols()).transpose();
    }
    if (dx != nullptr) {
      MapMat cm(cols.data(), g.rows(), g.cols());
      cm.noalias() = ConstMapMat(t.value(weight).data(), g.cout, g.rows()).transpose() * gm;
      col2im(cols.data(), g, dx->data());
    }
  });
}

Var linear(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  require(wv.rank() == 2 && static_cast<std::size_t>(wv.dim(1)) == xv.size(), "linear: weight/input mismatch");
  const int out_dim = wv.dim(0);
  const int in_dim = wv.dim(1);
  Tensor out({out_dim});
  Eigen::Map<Vec> y(out.data(), out_dim);
  y.noalias() = ConstMapMat(wv.data(), out_dim, in_dim) * Eigen::Map<const Vec>(xv.data(), in_dim);
  if (bias.valid()) {
    require(tape.value(bias).size() == static_cast<std::size_t>(out_dim), "linear: bias size");
    y += Eigen::Map<const Vec>(tape.value(bias).data(), out_dim);
  }
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, out_dim, in_dim](Tape& t, const Tensor&, const Tensor& g) {
    Eigen::Map<const Vec> gv(g.data(), out_dim);
    if (Tensor* db = t.grad_buffer(bias)) Eigen::Map<Vec>(db->data(), out_dim) += gv;
    if (Tensor* dw = t.grad_buffer(weight)) {
      MapMat(dw->data(), out_dim, in_dim).noalias() += gv * Eigen::Map<const Vec>(t.value(x).data(), in_dim).transpose();
    }
    if (Tensor* dx = t.grad_buffer(x)) {
      Eigen::Map<Vec>(dx->data(), in_dim).noalias() += ConstMapMat(t.value(weight).data(), out_dim, in_dim).transpose() * gv;
    }
  });
}

Var relu(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0.0) (*dx)[i] += g[i];
    }
  });
}

Var sigmoid(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require(av.same_shape(bv), "add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = tape.value(x);
  for (double& v : out.values()) v *= factor;
  return tape.record(std::move(out), {x}, [x, factor](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += factor * g[i];
  });
}

Var resize_bilinear(Tape& tape, Var x, int out_h, int out_w) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "resize_bilinear");
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: bad output size");
  const int h = xv.dim(1);
  const int w = xv.dim(2);
  const Axis ay = resample_axis(h, out_h);
  const Axis ax = resample_axis(w, out_w);
  auto taps = std::make_shared<Taps>();
  taps->per_output.resize(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      auto& list = taps->per_output[static_cast<std::size_t>(oy) * out_w + ox];
      list = {{ay.i0[oy] * w + ax.i0[ox], ay.w0[oy] * ax.w0[ox]},
              {ay.i0[oy] * w + ax.i1[ox], ay.w0[oy] * ax.w1[ox]},
              {ay.i1[oy] * w + ax.i0[ox], ay.w1[oy] * ax.w0[ox]},
              {ay.i1[oy] * w + ax.i1[ox], ay.w1[oy] * ax.w1[ox]}};
    }
  }
  return apply_taps(tape, x, std::move(taps), {xv.dim(0), out_h, out_w});
}

Var adaptive_avg_pool(Tape& tape, Var x, int out_h, int out_w) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "adaptive_avg_pool");
  require(out_h >= 1 && out_w >= 1, "adaptive_avg_pool: bad output size");
  const int w = xv.dim(2);
  const Window wy = pool_windows(xv.dim(1), out_h);
  const Window wx = pool_windows(w, out_w);
  auto taps = std::make_shared<Taps>();
  taps->per_output.resize(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      auto& list = taps->per_output[static_cast<std::size_t>(oy) * out_w + ox];
      const double inv = 1.0 / double((wy.end[oy] - wy.start[oy]) * (wx.end[ox] - wx.start[ox]));
      for (int y = wy.start[oy]; y < wy.end[oy]; ++y) {
        for (int xx = wx.start[ox]; xx < wx.end[ox]; ++xx) list.emplace_back(y * w + xx, inv);
      }
    }
  }
  return apply_taps(tape, x, std::move(taps), {xv.dim(0), out_h, out_w});
}

Var spatial_mean(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "spatial_mean");
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out({c});
  for (int i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += xv[i * plane + j];
    out[i] = s / double(plane);
  }
  return tape.record(std::move(out), {x}, [x, c, plane](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (int i = 0; i < c; ++i) {
      const double v = g[i] / double(plane);
      for (std::size_t j = 0; j < plane; ++j) (*dx)[i * plane + j] += v;
    }
  });
}

Var concat(Tape& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat: no inputs");
  std::vector<int> shape = tape.value(parts[0]).shape();
  require(!shape.empty(), "concat: scalar input");
  std::vector<int> trailing(shape.begin() + 1, shape.end());
  int lead = 0;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& v = tape.value(p);
    require(std::vector<int>(v.shape().begin() + 1, v.shape().end()) == trailing, "concat: trailing dims differ");
    lead += v.dim(0);
    offsets.push_back(total);
    total += v.size();
  }
  shape[0] = lead;
  Tensor out(shape);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = tape.value(parts[i]);
    std::copy(v.data(), v.data() + v.size(), out.data() + offsets[i]);
  }
  return tape.record(std::move(out), parts, [parts, offsets](Tape& t, const Tensor&, const Tensor& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Tensor* d = t.grad_buffer(parts[i]);
      if (d == nullptr) continue;
      for (std::size_t j = 0; j < d->size(); ++j) (*d)[j] += g[offsets[i] + j];
    }
  });
}

Var reshape(Tape& tape, Var x, std::vector<int> shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
  });
}

Var tile_vector(Tape& tape, Var v, int h, int w) {
  const Tensor& vv = tape.value(v);
  require(vv.rank() == 1, "tile_vector: expected a vector");
  const int d = vv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({d, h, w});
  for (int c = 0; c < d; ++c) std::fill(out.data() + c * plane, out.data() + (c + 1) * plane, vv[c]);
  return tape.record(std::move(out), {v}, [v, d, plane](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dv = t.grad_buffer(v);
    if (dv == nullptr) return;
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < plane; ++j) s += g[c * plane + j];
      (*dv)[c] += s;
    }
  });
}

Var masked_crop(Tape& tape, Var x, CellRect rect, std::span<const std::uint8_t> mask) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "masked_crop");
  const int h = xv.dim(1);
  const int w = xv.dim(2);
  require(mask.size() == static_cast<std::size_t>(h) * w, "masked_crop: mask size");
  require(!rect.empty() && rect.y0 >= 0 && rect.x0 >= 0 && rect.y0 + rect.h <= h && rect.x0 + rect.w <= w,
          "masked_crop: rect outside map");
  const int c = xv.dim(0);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out({c, rect.h, rect.w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < rect.h; ++y) {
      for (int xx = 0; xx < rect.w; ++xx) {
        const int sy = rect.y0 + y, sx = rect.x0 + xx;
        out.at(ch, y, xx) = m[static_cast<std::size_t>(sy) * w + sx] ? xv.at(ch, sy, sx) : 0.0;
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, rect, m = std::move(m), c, w](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < rect.h; ++y) {
        for (int xx = 0; xx < rect.w; ++xx) {
          const int sy = rect.y0 + y, sx = rect.x0 + xx;
          if (m[static_cast<std::size_t>(sy) * w + sx]) dx->at(ch, sy, sx) += g.at(ch, y, xx);
        }
      }
    }
  });
}

Var masked_paste(Tape& tape, Var base, Var patch, CellRect rect, std::span<const std::uint8_t> mask) {
  const Tensor& bv = tape.value(base);
  const Tensor& pv = tape.value(patch);
  require_map(bv, "masked_paste");
  const int c = bv.dim(0);
  const int h = bv.dim(1);
  const int w = bv.dim(2);
  require(mask.size() == static_cast<std::size_t>(h) * w, "masked_paste: mask size");
  require(pv.rank() == 3 && pv.dim(0) == c && pv.dim(1) == rect.h && pv.dim(2) == rect.w, "masked_paste: patch shape");
  require(rect.y0 >= 0 && rect.x0 >= 0 && rect.y0 + rect.h <= h && rect.x0 + rect.w <= w, "masked_paste: rect outside map");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Tensor out = bv;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < rect.h; ++y) {
      for (int xx = 0; xx < rect.w; ++xx) {
        const int sy = rect.y0 + y, sx = rect.x0 + xx;
        if (m[static_cast<std::size_t>(sy) * w + sx]) out.at(ch, sy, sx) = pv.at(ch, y, xx);
      }
    }
  }
  return tape.record(std::move(out), {base, patch}, [base, patch, rect, m = std::move(m), c, w](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* db = t.grad_buffer(base);
    Tensor* dp = t.grad_buffer(patch);
    if (db != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
    }
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < rect.h; ++y) {
        for (int xx = 0; xx < rect.w; ++xx) {
          const int sy = rect.y0 + y, sx = rect.x0 + xx;
          if (!m[static_cast<std::size_t>(sy) * w + sx]) continue;
          if (db != nullptr) db->at(ch, sy, sx) -= g.at(ch, sy, sx);
          if (dp != nullptr) dp->at(ch, y, xx) += g.at(ch, sy, sx);
        }
      }
    }
  });
}

namespace {

constexpr double kZeroNorm = 1e-12;

// Forward intermediates of the graph layer, kept for the backward pass.
struct GraphState {
  int channels = 0, cells = 0;
  RowMat X;       // [L, C]
  RowMat U;       // unit rows (zero rows stay zero)
  Vec norms;      // [L]
  RowMat cosine;  // [L, L]
  Vec row_sum;    // of the clamped similarity
  RowMat A;       // row-normalized adjacency
  RowMat G;       // A X
  RowMat Y;       // G theta, before the rectifier
  bool learned_adjacency = true;
};

RowMat as_cells(const Tensor& x) {
  const int c = x.dim(0);
  const int l = x.dim(1) * x.dim(2);
  return ConstMapMat(x.data(), c, l).transpose();
}

void build_adjacency(GraphState& s) {
  const int l = s.cells;
  s.norms = s.X.rowwise().norm();
  s.U = s.X;
  for (int i = 0; i < l; ++i) {
    if (s.norms[i] > kZeroNorm) {
      s.U.row(i) /= s.norms[i];
    } else {
      s.U.row(i).setZero();
    }
  }
  s.cosine = s.U * s.U.transpose();
  RowMat sim = s.cosine.cwiseMax(0.0);
  for (int i = 0; i < l; ++i) sim(i, i) = 1.0;
  s.row_sum = sim.rowwise().sum();
  s.A = sim;
  for (int i = 0; i < l; ++i) s.A.row(i) /= s.row_sum[i];
}

Var graph_forward(Tape& tape, Var x, Var theta, std::shared_ptr<GraphState> s) {
  const Tensor& xv = tape.value(x);
  const Tensor& tv = tape.value(theta);
  s->G = s->A * s->X;
  s->Y = s->G * ConstMapMat(tv.data(), s->channels, s->channels);
  Tensor out({xv.dim(0), xv.dim(1), xv.dim(2)});
  MapMat(out.data(), s->channels, s->cells) = s->Y.transpose().cwiseMax(0.0);
  return tape.record(std::move(out), {x, theta}, [x, theta, s](Tape& t, const Tensor&, const Tensor& g) {
    const int c = s->channels;
    const int l = s->cells;
    RowMat dY = ConstMapMat(g.data(), c, l).transpose();
    dY = (s->Y.array() > 0.0).select(dY, 0.0);
    const ConstMapMat th(t.value(theta).data(), c, c);
    if (Tensor* dth = t.grad_buffer(theta)) MapMat(dth->data(), c, c).noalias() += s->G.transpose() * dY;
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    const RowMat dG = dY * th.transpose();
    RowMat dX = s->A.transpose() * dG;
    if (s->learned_adjacency) {
      const RowMat dA = dG * s->X.transpose();
      // A = S / rowsum(S)
      RowMat dS(l, l);
      for (int i = 0; i < l; ++i) {
        const double dot = dA.row(i).dot(s->A.row(i));
        dS.row(i) = (dA.row(i).array() - dot) / s->row_sum[i];
      }
      // S_ij = max(0, cos_ij) off the diagonal
      RowMat W = RowMat::Zero(l, l);
      for (int i = 0; i < l; ++i) {
        for (int j = 0; j < l; ++j) {
          if (i != j && s->cosine(i, j) > 0.0) W(i, j) = dS(i, j);
        }
      }
      W = W + W.transpose().eval();
      const RowMat WU = W * s->U;
      for (int i = 0; i < l; ++i) {
        if (s->norms[i] <= kZeroNorm) continue;
        const double proj = W.row(i).dot(s->cosine.row(i));
        dX.row(i) += (WU.row(i) - proj * s->U.row(i)) / s->norms[i];
      }
    }
    MapMat(dx->data(), c, l) += dX.transpose();
  });
}

}  // namespace

Tensor cosine_adjacency(const Tensor& x) {
  require_map(x, "cosine_adjacency");
  GraphState s;
  s.channels = x.dim(0);
  s.cells = x.dim(1) * x.dim(2);
  s.X = as_cells(x);
  build_adjacency(s);
  Tensor out({s.cells, s.cells});
  MapMat(out.data(), s.cells, s.cells) = s.A;
  return out;
}

Var graph_relation(Tape& tape, Var x, Var theta) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "graph_relation");
  const Tensor& tv = tape.value(theta);
  require(tv.rank() == 2 && tv.dim(0) == xv.dim(0) && tv.dim(1) == xv.dim(0), "graph_relation: theta must be [C, C]");
  auto s = std::make_shared<GraphState>();
  s->channels = xv.dim(0);
  s->cells = xv.dim(1) * xv.dim(2);
  s->X = as_cells(xv);
  build_adjacency(*s);
  return graph_forward(tape, x, theta, std::move(s));
}

Var graph_propagate(Tape& tape, Var x, Var theta, Tensor adjacency) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "graph_propagate");
  const int l = xv.dim(1) * xv.dim(2);
  require(adjacency.rank() == 2 && adjacency.dim(0) == l && adjacency.dim(1) == l, "graph_propagate: adjacency shape");
  auto s = std::make_shared<GraphState>();
  s->channels = xv.dim(0);
  s->cells = l;
  s->X = as_cells(xv);
  s->A = ConstMapMat(adjacency.data(), l, l);
  s->learned_adjacency = false;
  return graph_forward(tape, x, theta, std::move(s));
}

Var roi_align(Tape& tape, Var x, const Box& box, int pooled, int sampling_ratio) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "roi_align");
  require(pooled >= 1 && sampling_ratio >= 1, "roi_align: bad pooling parameters");
  const int h = xv.dim(1);
  const int w = xv.dim(2);
  const double x1 = std::clamp(box.x1, 0.0, double(w));
  const double y1 = std::clamp(box.y1, 0.0, double(h));
  const double x2 = std::clamp(box.x2, x1, double(w));
  const double y2 = std::clamp(box.y2, y1, double(h));
  const double bin_w = (x2 - x1) / pooled;
  const double bin_h = (y2 - y1) / pooled;
  const double inv = 1.0 / double(sampling_ratio * sampling_ratio);

  auto taps = std::make_shared<Taps>();
  taps->per_output.resize(static_cast<std::size_t>(pooled) * pooled);
  for (int py = 0; py < pooled; ++py) {
    for (int px = 0; px < pooled; ++px) {
      auto& list = taps->per_output[static_cast<std::size_t>(py) * pooled + px];
      for (int iy = 0; iy < sampling_ratio; ++iy) {
        // cell centers sit at integer + 0.5
        const double sy = std::clamp(y1 + (py + (iy + 0.5) / sampling_ratio) * bin_h - 0.5, 0.0, double(h - 1));
        const int ylo = static_cast<int>(sy);
        const int yhi = std::min(ylo + 1, h - 1);
        const double ly = sy - ylo;
        for (int ix = 0; ix < sampling_ratio; ++ix) {
          const double sx = std::clamp(x1 + (px + (ix + 0.5) / sampling_ratio) * bin_w - 0.5, 0.0, double(w - 1));
          const int xlo = static_cast<int>(sx);
          const int xhi = std::min(xlo + 1, w - 1);
          const double lx = sx - xlo;
          list.emplace_back(ylo * w + xlo, inv * (1.0 - ly) * (1.0 - lx));
          list.emplace_back(ylo * w + xhi, inv * (1.0 - ly) * lx);
          list.emplace_back(yhi * w + xlo, inv * ly * (1.0 - lx));
          list.emplace_back(yhi * w + xhi, inv * ly * lx);
        }
      }
    }
  }
  return apply_taps(tape, x, std::move(taps), {xv.dim(0), pooled, pooled});
}

Var zero_inside(Tape& tape, Var x, const Box& box) {
  const Tensor& xv = tape.value(x);
  require_map(xv, "zero_inside");
  const int c = xv.dim(0);
  const int h = xv.dim(1);
  const int w = xv.dim(2);
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(h) * w, 1);
  for (int y = 0; y < h; ++y) {
    const double cy = y + 0.5;
    if (cy < box.y1 || cy >= box.y2) continue;
    for (int xx = 0; xx < w; ++xx) {
      const double cx = xx + 0.5;
      if (cx >= box.x1 && cx < box.x2) keep[static_cast<std::size_t>(y) * w + xx] = 0;
    }
  }
  const std::size_t plane = keep.size();
  Tensor out = xv;
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < plane; ++j) {
      if (!keep[j]) out[ch * plane + j] = 0.0;
    }
  }
  return tape.record(std::move(out), {x}, [x, keep = std::move(keep), c, plane](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* dx = t.grad_buffer(x);
    if (dx == nullptr) return;
    for (int ch = 0; ch < c; ++ch) {
      for (std::size_t j = 0; j < plane; ++j) {
        if (keep[j]) (*dx)[ch * plane + j] += g[ch * plane + j];
      }
    }
  });
}

Var regression_loss(Tape& tape, Var pred, std::span<const double> targets) {
  const Tensor& pv = tape.value(pred);
  std::vector<double> y(targets.begin(), targets.end());
  Tensor out({1}, hccrop::regression_loss(y, pv.values()));
  return tape.record(std::move(out), {pred}, [pred, y = std::move(y)](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* d = t.grad_buffer(pred);
    if (d == nullptr) return;
    const auto grad = hccrop::regression_loss_grad(y, t.value(pred).values());
    for (std::size_t i = 0; i < grad.size(); ++i) (*d)[i] += g[0] * grad[i];
  });
}

Var ranking_loss(Tape& tape, Var pred, std::span<const double> targets) {
  const Tensor& pv = tape.value(pred);
  std::vector<double> y(targets.begin(), targets.end());
  Tensor out({1}, hccrop::ranking_loss(y, pv.values()));
  return tape.record(std::move(out), {pred}, [pred, y = std::move(y)](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* d = t.grad_buffer(pred);
    if (d == nullptr) return;
    const auto grad = hccrop::ranking_loss_grad(y, t.value(pred).values());
    for (std::size_t i = 0; i < grad.size(); ++i) (*d)[i] += g[0] * grad[i];
  });
}

Var mean_abs_error(Tape& tape, Var pred, const Tensor& target) {
  const Tensor& pv = tape.value(pred);
  require(pv.size() == target.size() && pv.size() > 0, "mean_abs_error: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(pv[i] - target[i]);
  const double n = double(pv.size());
  Tensor out({1}, s / n);
  return tape.record(std::move(out), {pred}, [pred, target, n](Tape& t, const Tensor&, const Tensor& g) {
    Tensor* d = t.grad_buffer(pred);
    if (d == nullptr) return;
    const Tensor& p = t.value(pred);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double diff = p[i] - target[i];
      (*d)[i] += g[0] * double((diff > 0.0) - (diff < 0.0)) / n;
    }
  });
}

Var weighted_sum(Tape& tape, const std::vector<Var>& scalars, const std::vector<double>& weights) {
  require(scalars.size() == weights.size(), "weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(tape.value(scalars[i]).size() == 1, "weighted_sum: inputs must be scalars");
    s += weights[i] * tape.value(scalars[i])[0];
  }
  return tape.record(Tensor({1}, s), scalars, [scalars, weights](Tape& t, const Tensor&, const Tensor& g) {
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (Tensor* d = t.grad_buffer(scalars[i])) (*d)[0] += weights[i] * g[0];
    }
  });
}

}  // namespace hccrop::nn
