#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vsgnet/common.hpp"
#include "vsgnet/tensor.hpp"

namespace vsg {

namespace detail {

template <typename Real>
bool any_requires_grad(std::initializer_list<const Tensor<Real>*> ts) {
  for (const auto* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Real>
bool track_op(std::initializer_list<const Tensor<Real>*> ts) {
  return tracking<Real>() && any_requires_grad<Real>(ts);
}

}  // namespace detail

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw DataError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  Tensor<Real> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  const bool track = detail::track_op<Real>({&a, &b});
  detail::finalize_op(out, track, [sa = a.storage(), sb = b.storage(),
                                   so = out.storage()]() {
    const std::size_t n = so->grad.size();
    if (sa->requires_grad)
      for (std::size_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i];
    if (sb->requires_grad)
      for (std::size_t i = 0; i < n; ++i) sb->grad[i] += so->grad[i];
  });
  check_finite(out, "add");
  return out;
}

template <typename Real>
Tensor<Real> add_n(const std::vector<Tensor<Real>>& ts) {
  if (ts.empty()) throw UsageError("add_n: empty input list");
  Tensor<Real> out(ts[0].shape());
  bool track = false;
  for (const auto& t : ts) {
    if (t.shape() != ts[0].shape()) throw DataError("add_n: shape mismatch");
    track = track || t.requires_grad();
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] += t[i];
  }
  track = track && detail::tracking<Real>();
  std::vector<std::shared_ptr<detail::TensorStorage<Real>>> ins;
  if (track)
    for (const auto& t : ts) ins.push_back(t.storage());
  detail::finalize_op(out, track, [ins, so = out.storage()]() {
    const std::size_t n = so->grad.size();
    for (auto& si : ins)
      if (si->requires_grad)
        for (std::size_t i = 0; i < n; ++i) si->grad[i] += so->grad[i];
  });
  check_finite(out, "add_n");
  return out;
}

// Elementwise product; both operands must have identical shapes.
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw DataError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  Tensor<Real> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  const bool track = detail::track_op<Real>({&a, &b});
  detail::finalize_op(out, track, [sa = a.storage(), sb = b.storage(),
                                   so = out.storage()]() {
    const std::size_t n = so->grad.size();
    if (sa->requires_grad)
      for (std::size_t i = 0; i < n; ++i) sa->grad[i] += so->grad[i] * sb->value[i];
    if (sb->requires_grad)
      for (std::size_t i = 0; i < n; ++i) sb->grad[i] += so->grad[i] * sa->value[i];
  });
  check_finite(out, "mul");
  return out;
}

// x scaled by a single-element tensor; gradient flows into both operands.
template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& x, const Tensor<Real>& s) {
  if (s.numel() != 1) throw UsageError("mul_scalar: scale must be a scalar tensor");
  Tensor<Real> out(x.shape());
  const Real sv = s[0];
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * sv;
  const bool track = detail::track_op<Real>({&x, &s});
  detail::finalize_op(out, track, [sx = x.storage(), ss = s.storage(),
                                   so = out.storage()]() {
    const std::size_t n = so->grad.size();
    if (sx->requires_grad)
      for (std::size_t i = 0; i < n; ++i) sx->grad[i] += so->grad[i] * ss->value[0];
    if (ss->requires_grad) {
      Real acc = Real(0);
      for (std::size_t i = 0; i < n; ++i) acc += so->grad[i] * sx->value[i];
      ss->grad[0] += acc;
    }
  });
  check_finite(out, "mul_scalar");
  return out;
}

// Multiply by a plain constant (no gradient path through the constant).
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
  Tensor<Real> out(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * c;
  const bool track = detail::track_op<Real>({&x});
  detail::finalize_op(out, track, [sx = x.storage(), so = out.storage(), c]() {
    const std::size_t n = so->grad.size();
    for (std::size_t i = 0; i < n; ++i) sx->grad[i] += so->grad[i] * c;
  });
  check_finite(out, "scale");
  return out;
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  Tensor<Real> out(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > Real(0) ? x[i] : Real(0);
  const bool track = detail::track_op<Real>({&x});
  detail::finalize_op(out, track, [sx = x.storage(), so = out.storage()]() {
    const std::size_t n = so->grad.size();
    for (std::size_t i = 0; i < n; ++i)
      if (sx->value[i] > Real(0)) sx->grad[i] += so->grad[i];
  });
  check_finite(out, "relu");
  return out;
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  Tensor<Real> out(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = Real(1) / (Real(1) + std::exp(-x[i]));
  const bool track = detail::track_op<Real>({&x});
  detail::finalize_op(out, track, [sx = x.storage(), so = out.storage()]() {
    const std::size_t n = so->grad.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Real y = so->value[i];
      sx->grad[i] += so->grad[i] * y * (Real(1) - y);
    }
  });
  check_finite(out, "sigmoid");
  return out;
}

// Concatenation of rank-1 tensors.
template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw UsageError("concat: empty input list");
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw DataError("concat: expects rank-1 tensors");
    total += p.numel();
    track = track || p.requires_grad();
  }
  track = track && detail::tracking<Real>();
  Tensor<Real> out(Shape{static_cast<int>(total)});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + off);
    off += p.numel();
  }
  std::vector<std::shared_ptr<detail::TensorStorage<Real>>> ins;
  if (track)
    for (const auto& p : parts) ins.push_back(p.storage());
  detail::finalize_op(out, track, [ins, so = out.storage()]() {
    std::size_t off = 0;
    for (auto& si : ins) {
      const std::size_t n = si->value.size();
      if (si->requires_grad)
        for (std::size_t i = 0; i < n; ++i) si->grad[i] += so->grad[off + i];
      off += n;
    }
  });
  check_finite(out, "concat");
  return out;
}

// out = W x + b with W of shape [M, N], x of length N, b of length M.
template <typename Real>
Tensor<Real> fully_connected(const Tensor<Real>& x, const Tensor<Real>& weight,
                             const Tensor<Real>& bias) {
  if (x.rank() != 1 || weight.rank() != 2 || bias.rank() != 1)
    throw DataError("fully_connected: expects rank-1 input, rank-2 weight, rank-1 bias");
  const int m = weight.dim(0);
  const int n = weight.dim(1);
  if (x.dim(0) != n || bias.dim(0) != m)
    throw DataError("fully_connected: dimension mismatch, weight " +
                    shape_str(weight.shape()) + ", input " + shape_str(x.shape()) +
                    ", bias " + shape_str(bias.shape()));
  Tensor<Real> out(Shape{m});
  const Real* wp = weight.data();
  const Real* xp = x.data();
  for (int r = 0; r < m; ++r) {
    Real acc = bias[static_cast<std::size_t>(r)];
    const Real* row = wp + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) acc += row[c] * xp[c];
    out[static_cast<std::size_t>(r)] = acc;
  }
  const bool track = detail::track_op<Real>({&x, &weight, &bias});
  detail::finalize_op(out, track, [sx = x.storage(), sw = weight.storage(),
                                   sb = bias.storage(), so = out.storage(), m, n]() {
    for (int r = 0; r < m; ++r) {
      const Real g = so->grad[static_cast<std::size_t>(r)];
      if (g == Real(0)) continue;
      const std::size_t row = static_cast<std::size_t>(r) * n;
      if (sb->requires_grad) sb->grad[static_cast<std::size_t>(r)] += g;
      if (sw->requires_grad)
        for (int c = 0; c < n; ++c) sw->grad[row + c] += g * sx->value[c];
      if (sx->requires_grad)
        for (int c = 0; c < n; ++c) sx->grad[c] += g * sw->value[row + c];
    }
  });
  check_finite(out, "fully_connected");
  return out;
}

// Cross-correlation with bias. Input [C_in, H, W], weight
// [C_out, C_in, k, k], bias [C_out]; output spatial dims follow
// (H + 2p - k) / s + 1.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& weight,
                    const Tensor<Real>& bias, int stride = 1, int pad = 0) {
  if (x.rank() != 3 || weight.rank() != 4 || bias.rank() != 1)
    throw DataError("conv2d: expects rank-3 input, rank-4 weight, rank-1 bias");
  if (stride < 1) throw UsageError("conv2d: stride must be >= 1");
  if (pad < 0) throw UsageError("conv2d: padding must be >= 0");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    throw DataError("conv2d: input channels " + std::to_string(cin) +
                    " do not match weight " + shape_str(weight.shape()));
  if (bias.dim(0) != cout) throw DataError("conv2d: bias size mismatch");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw DataError("conv2d: kernel larger than padded input");

  Tensor<Real> out(Shape{cout, ho, wo});
  const Real* xp = x.data();
  const Real* wp = weight.data();
  Real* op = out.data();
  for (int co = 0; co < cout; ++co) {
    const Real b = bias[static_cast<std::size_t>(co)];
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        Real acc = b;
        const int iy0 = oy * stride - pad;
        const int ix0 = ox * stride - pad;
        for (int ci = 0; ci < cin; ++ci) {
          const Real* xc = xp + (static_cast<std::size_t>(ci) * h) * w;
          const Real* wc =
              wp + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const Real* xr = xc + static_cast<std::size_t>(iy) * w;
            const Real* wr = wc + static_cast<std::size_t>(ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += wr[kx] * xr[ix];
            }
          }
        }
        op[(static_cast<std::size_t>(co) * ho + oy) * wo + ox] = acc;
      }
    }
  }

  const bool track = detail::track_op<Real>({&x, &weight, &bias});
  detail::finalize_op(out, track, [sx = x.storage(), sw = weight.storage(),
                                   sb = bias.storage(), so = out.storage(), cin, h,
                                   w, cout, kh, kw, ho, wo, stride, pad]() {
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const Real g = so->grad[(static_cast<std::size_t>(co) * ho + oy) * wo + ox];
          if (g == Real(0)) continue;
          if (sb->requires_grad) sb->grad[static_cast<std::size_t>(co)] += g;
          const int iy0 = oy * stride - pad;
          const int ix0 = ox * stride - pad;
          for (int ci = 0; ci < cin; ++ci) {
            const std::size_t xoff = (static_cast<std::size_t>(ci) * h) * w;
            const std::size_t woff =
                ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                const std::size_t xi = xoff + static_cast<std::size_t>(iy) * w + ix;
                const std::size_t wi = woff + static_cast<std::size_t>(ky) * kw + kx;
                if (sw->requires_grad) sw->grad[wi] += g * sx->value[xi];
                if (sx->requires_grad) sx->grad[xi] += g * sw->value[wi];
              }
            }
          }
        }
      }
    }
  });
  check_finite(out, "conv2d");
  return out;
}

// Per-channel mean over the spatial dims of a rank-3 tensor.
template <typename Real>
Tensor<Real> global_average_pool(const Tensor<Real>& x) {
  if (x.rank() != 3) throw DataError("global_average_pool: expects rank-3 input");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (hw == 0) throw DataError("global_average_pool: empty spatial extent");
  Tensor<Real> out(Shape{c});
  const Real* xp = x.data();
  for (int ch = 0; ch < c; ++ch) {
    Real acc = Real(0);
    const Real* base = xp + static_cast<std::size_t>(ch) * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += base[i];
    out[static_cast<std::size_t>(ch)] = acc / static_cast<Real>(hw);
  }
  const bool track = detail::track_op<Real>({&x});
  detail::finalize_op(out, track, [sx = x.storage(), so = out.storage(), c, hw]() {
    for (int ch = 0; ch < c; ++ch) {
      const Real g = so->grad[static_cast<std::size_t>(ch)] / static_cast<Real>(hw);
      Real* base = sx->grad.data() + static_cast<std::size_t>(ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) base[i] += g;
    }
  });
  check_finite(out, "global_average_pool");
  return out;
}

namespace detail {

struct RoiBins {
  int r0, r1, c0, c1;  // covered cell span [r0,r1) x [c0,c1), at least 1x1
};

// Rasterize a normalized box onto an h x w grid: clip, floor/ceil to cell
// boundaries, enforce at least one cell per side.
inline RoiBins roi_cells(const Box& box, int h, int w) {
  const Box b = clip_box(box);
  if (b.x2 - b.x1 <= 0.0 || b.y2 - b.y1 <= 0.0)
    throw DataError("roi_pool: box has zero area after clipping to the image");
  RoiBins r{};
  r.c0 = std::clamp(static_cast<int>(std::floor(b.x1 * w)), 0, w - 1);
  r.c1 = std::clamp(static_cast<int>(std::ceil(b.x2 * w)), r.c0 + 1, w);
  r.r0 = std::clamp(static_cast<int>(std::floor(b.y1 * h)), 0, h - 1);
  r.r1 = std::clamp(static_cast<int>(std::ceil(b.y2 * h)), r.r0 + 1, h);
  return r;
}

}  // namespace detail

// Adaptive max pooling of the box region into an out_h x out_w grid with
// floor/ceil bin boundaries. Gradient is routed to the argmax cells.
template <typename Real>
Tensor<Real> roi_pool(const Tensor<Real>& feature, const Box& box, int out_h = 10,
                      int out_w = 10) {
  if (feature.rank() != 3) throw DataError("roi_pool: expects rank-3 feature map");
  if (out_h < 1 || out_w < 1) throw UsageError("roi_pool: output size must be >= 1");
  const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const auto span = detail::roi_cells(box, h, w);
  const int rh = span.r1 - span.r0;
  const int rw = span.c1 - span.c0;

  Tensor<Real> out(Shape{c, out_h, out_w});
  std::vector<std::size_t> argmax(static_cast<std::size_t>(c) * out_h * out_w);
  const Real* xp = feature.data();
  for (int ch = 0; ch < c; ++ch) {
    const Real* base = xp + static_cast<std::size_t>(ch) * h * w;
    for (int oy = 0; oy < out_h; ++oy) {
      const int ys = span.r0 + (oy * rh) / out_h;
      const int ye = span.r0 + (((oy + 1) * rh) + out_h - 1) / out_h;
      for (int ox = 0; ox < out_w; ++ox) {
        const int xs = span.c0 + (ox * rw) / out_w;
        const int xe = span.c0 + (((ox + 1) * rw) + out_w - 1) / out_w;
        Real best = base[static_cast<std::size_t>(ys) * w + xs];
        std::size_t besti = static_cast<std::size_t>(ys) * w + xs;
        for (int iy = ys; iy < ye; ++iy)
          for (int ix = xs; ix < xe; ++ix) {
            const std::size_t idx = static_cast<std::size_t>(iy) * w + ix;
            if (base[idx] > best) {
              best = base[idx];
              besti = idx;
            }
          }
        const std::size_t oidx = (static_cast<std::size_t>(ch) * out_h + oy) * out_w + ox;
        out[oidx] = best;
        argmax[oidx] = static_cast<std::size_t>(ch) * h * w + besti;
      }
    }
  }
  const bool track = detail::track_op<Real>({&feature});
  detail::finalize_op(out, track,
                      [sx = feature.storage(), so = out.storage(), argmax]() {
    const std::size_t n = so->grad.size();
    for (std::size_t i = 0; i < n; ++i) sx->grad[argmax[i]] += so->grad[i];
  });
  check_finite(out, "roi_pool");
  return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Tensor<Real> out(Shape{1});
  Real acc = Real(0);
  for (const Real v : x.values()) acc += v;
  out[0] = acc;
  const bool track = detail::track_op<Real>({&x});
  detail::finalize_op(out, track, [sx = x.storage(), so = out.storage()]() {
    const Real g = so->grad[0];
    for (auto& gv : sx->grad) gv += g;
  });
  check_finite(out, "sum");
  return out;
}

template <typename Real>
Tensor<Real> mean_all(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

// Mean over elements of the binary cross-entropy between predictions p and
// constant targets y; p is clamped to [eps, 1-eps] before the logs.
template <typename Real>
Tensor<Real> bce_mean(const Tensor<Real>& p, const std::vector<Real>& target,
                      Real eps = Real(1e-7)) {
  if (p.numel() != target.size())
    throw DataError("bce_mean: prediction/target size mismatch");
  const std::size_t n = p.numel();
  Tensor<Real> out(Shape{1});
  Real acc = Real(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Real pc = std::clamp(p[i], eps, Real(1) - eps);
    const Real y = target[i];
    acc += -(y * std::log(pc) + (Real(1) - y) * std::log(Real(1) - pc));
  }
  out[0] = acc / static_cast<Real>(n);
  const bool track = detail::track_op<Real>({&p});
  detail::finalize_op(out, track,
                      [sp = p.storage(), so = out.storage(), target, eps, n]() {
    const Real g = so->grad[0] / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Real pv = sp->value[i];
      if (pv < eps || pv > Real(1) - eps) continue;  // clamped: zero slope
      sp->grad[i] += g * (pv - target[i]) / (pv * (Real(1) - pv));
    }
  });
  check_finite(out, "bce_mean");
  return out;
}

}  // namespace vsg
