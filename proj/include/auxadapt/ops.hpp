// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/tape.hpp"
#include "auxadapt/tensor.hpp"

namespace auxadapt {

namespace detail {

template <typename T>
void require_rank4(const Tensor<T>& t, const char* op) {
  if (t.rank() != 4) fail(Error::Kind::shape, std::string(op) + ": expected a 4-D tensor, got " + shape_string(t.shape()));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) fail(Error::Kind::shape, std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

// Valid output range [lo, hi) for a tap at offset d along an axis of length n.
inline std::pair<std::size_t, std::size_t> tap_range(std::ptrdiff_t d, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -d);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, len - d);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Flat index of input element (yy + dy, x0 + dx) in a plane of width wd.
inline std::size_t offset(std::size_t yy, std::ptrdiff_t dy, std::size_t x0, std::ptrdiff_t dx, std::size_t wd) {
  const auto row = static_cast<std::ptrdiff_t>(yy) + dy;
  return static_cast<std::size_t>(row * static_cast<std::ptrdiff_t>(wd) + static_cast<std::ptrdiff_t>(x0) + dx);
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = w.dim(0), k = w.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> y = Tensor<T>::nchw(n_batch, c_out, h, wd);
  std::vector<double> acc(h * wd);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < c_out; ++co) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(b[co]));
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* in = &x.at(n, ci, 0, 0);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const auto [y0, y1] = tap_range(dy, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const auto [x0, x1] = tap_range(dx, wd);
            const double wv = static_cast<double>(w.at(co, ci, ky, kx));
            const std::size_t len = x1 - x0;
            for (std::size_t yy = y0; yy < y1; ++yy) {
              const T* src = in + offset(yy, dy, x0, dx, wd);
              double* dst = acc.data() + yy * wd + x0;
              for (std::size_t i = 0; i < len; ++i) dst[i] += wv * static_cast<double>(src[i]);
            }
          }
        }
      }
      T* out = &y.at(n, co, 0, 0);
      for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
    }
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, std::size_t f) {
  const std::size_t n_batch = x.dim(0), c = x.dim(1), oh = x.dim(2) / f, ow = x.dim(3) / f;
  Tensor<T> y = Tensor<T>::nchw(n_batch, c, oh, ow);
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = 0.0;
          for (std::size_t a = 0; a < f; ++a)
            for (std::size_t b = 0; b < f; ++b) s += static_cast<double>(x.at(n, ch, i * f + a, j * f + b));
          y.at(n, ch, i, j) = static_cast<T>(s * inv);
        }
  return y;
}

// Corner-aligned source coordinate for output index i.
struct Tap {
  std::size_t lo = 0, hi = 0;
  double frac = 0.0;
};

inline std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out > 1 ? static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1) : 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    taps[i] = Tap{lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

template <typename T>
Tensor<T> bilinear_forward(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  const std::size_t n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (oh == h && ow == w) return x;
  const auto ty = resize_taps(h, oh), tx = resize_taps(w, ow);
  Tensor<T> y = Tensor<T>::nchw(n_batch, c, oh, ow);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const Tap& a = ty[i];
          const Tap& b = tx[j];
          const double top = (1.0 - b.frac) * static_cast<double>(x.at(n, ch, a.lo, b.lo)) +
                             b.frac * static_cast<double>(x.at(n, ch, a.lo, b.hi));
          const double bot = (1.0 - b.frac) * static_cast<double>(x.at(n, ch, a.hi, b.lo)) +
                             b.frac * static_cast<double>(x.at(n, ch, a.hi, b.hi));
          y.at(n, ch, i, j) = static_cast<T>((1.0 - a.frac) * top + a.frac * bot);
        }
  return y;
}

template <typename T>
void check_labels(const Tensor<T>& logits, const SegMap& labels, const Mask* mask, const char* op) {
  require_single_image(logits, op);
  const std::size_t k = logits.dim(1);
  if (!labels.same_dims(logits.dim(2), logits.dim(3)))
    fail(Error::Kind::shape, std::string(op) + ": label map does not match logits spatial size");
  if (mask && !mask->same_dims(labels)) fail(Error::Kind::shape, std::string(op) + ": mask does not match label map");
  for (int l : labels.values) {
    if (l < 1 || static_cast<std::size_t>(l) > k)
      fail(Error::Kind::argument, std::string(op) + ": label " + std::to_string(l) + " outside 1.." + std::to_string(k));
  }
}

}  // namespace detail

/// Corner-aligned bilinear resize of an (N,C,H,W) tensor.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, std::size_t out_h, std::size_t out_w) {
  detail::require_rank4(t, "bilinear_resize");
  if (out_h == 0 || out_w == 0) fail(Error::Kind::shape, "bilinear_resize: output size must be positive");
  return detail::bilinear_forward(t, out_h, out_w);
}

/// Non-overlapping factor x factor mean pooling.
template <typename T>
Tensor<T> avg_pool_downsample(const Tensor<T>& t, std::size_t factor) {
  detail::require_rank4(t, "avg_pool");
  if (factor == 0 || t.dim(2) % factor || t.dim(3) % factor) {
    fail(Error::Kind::shape, "avg_pool: spatial size " + shape_string(t.shape()) + " not divisible by factor " +
                                 std::to_string(factor));
  }
  return factor == 1 ? t : detail::avg_pool_forward(t, factor);
}

namespace ops {

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::require_same_shape(va.shape(), vb.shape(), "add");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      auto& gv = tp.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::require_same_shape(va.shape(), vb.shape(), "mul");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad(a);
      const auto& vb2 = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb2[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad(b);
      const auto& va2 = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va2[i];
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += static_cast<double>(va[i]);
  return tape.record(Tensor<T>(Shape{1}, static_cast<T>(s)), tape.requires_grad(a), [a](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_of(self)[0];
    auto& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& in = tp.value(x);
    auto& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > T{0}) gx[i] += g[i];
  });
}

/// Stride-1 convolution with zero padding k/2. Weight (C_out, C_in, k, k),
/// bias (C_out).
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(weight);
  const auto& vb = tape.value(bias);
  detail::require_rank4(vx, "conv2d");
  if (vw.rank() != 4 || vw.dim(2) != vw.dim(3) || vw.dim(2) % 2 == 0)
    fail(Error::Kind::shape, "conv2d: weight must be (C_out,C_in,k,k) with odd k, got " + shape_string(vw.shape()));
  if (vw.dim(1) != vx.dim(1))
    fail(Error::Kind::shape, "conv2d: input has " + std::to_string(vx.dim(1)) + " channels, weight expects " +
                                 std::to_string(vw.dim(1)));
  if (vb.shape() != Shape{vw.dim(0)}) fail(Error::Kind::shape, "conv2d: bias shape " + shape_string(vb.shape()));

  Tensor<T> out = detail::conv2d_forward(vx, vw, vb);
  const bool rg = tape.requires_grad(x) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [x, weight, bias](Tape<T>& tp, std::size_t self) {
    const auto& gy = tp.grad_of(self);
    const auto& in = tp.value(x);
    const auto& w = tp.value(weight);
    const std::size_t n_batch = in.dim(0), c_in = in.dim(1), h = in.dim(2), wd = in.dim(3);
    const std::size_t c_out = w.dim(0), k = w.dim(2);
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);

    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad(bias);
      for (std::size_t co = 0; co < c_out; ++co) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* g = &gy.at(n, co, 0, 0);
          for (std::size_t i = 0; i < h * wd; ++i) s += static_cast<double>(g[i]);
        }
        gb[co] += static_cast<T>(s);
      }
    }
    if (tp.requires_grad(weight)) {
      auto& gw = tp.grad(weight);
      for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t ci = 0; ci < c_in; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const auto [y0, y1] = detail::tap_range(dy, h);
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
              const auto [x0, x1] = detail::tap_range(dx, wd);
              double s = 0.0;
              for (std::size_t n = 0; n < n_batch; ++n) {
                const T* g = &gy.at(n, co, 0, 0);
                const T* src = &in.at(n, ci, 0, 0);
                for (std::size_t yy = y0; yy < y1; ++yy) {
                  const T* grow = g + yy * wd + x0;
                  const T* srow = src + detail::offset(yy, dy, x0, dx, wd);
                  for (std::size_t i = 0; i < x1 - x0; ++i) s += static_cast<double>(grow[i]) * static_cast<double>(srow[i]);
                }
              }
              gw.at(co, ci, ky, kx) += static_cast<T>(s);
            }
          }
    }
    if (tp.requires_grad(x)) {
      auto& gx = tp.grad(x);
      std::vector<double> acc(h * wd);
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t co = 0; co < c_out; ++co) {
            const T* g = &gy.at(n, co, 0, 0);
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
              const auto [y0, y1] = detail::tap_range(dy, h);
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const auto [x0, x1] = detail::tap_range(dx, wd);
                const double wv = static_cast<double>(w.at(co, ci, ky, kx));
                for (std::size_t yy = y0; yy < y1; ++yy) {
                  const T* grow = g + yy * wd + x0;
                  double* dst = acc.data() + detail::offset(yy, dy, x0, dx, wd);
                  for (std::size_t i = 0; i < x1 - x0; ++i) dst[i] += wv * static_cast<double>(grow[i]);
                }
              }
            }
          }
          T* out = &gx.at(n, ci, 0, 0);
          for (std::size_t i = 0; i < acc.size(); ++i) out[i] += static_cast<T>(acc[i]);
        }
    }
  });
}

/// Inference-form batch norm: running statistics are inputs, never
/// differentiated. Scale and shift are differentiable.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, Var mean, Var var, double eps = 1e-5) {
  const auto& vx = tape.value(x);
  detail::require_rank4(vx, "batch_norm");
  const std::size_t c = vx.dim(1);
  for (Var v : {gamma, beta, mean, var}) {
    if (tape.value(v).shape() != Shape{c})
      fail(Error::Kind::shape, "batch_norm: parameter shape " + shape_string(tape.value(v).shape()) + " for " +
                                   std::to_string(c) + " channels");
  }
  const auto& g = tape.value(gamma);
  const auto& b = tape.value(beta);
  const auto& m = tape.value(mean);
  const auto& s2 = tape.value(var);
  const std::size_t plane = vx.dim(2) * vx.dim(3);
  Tensor<T> out(vx.shape());
  for (std::size_t n = 0; n < vx.dim(0); ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(s2[ch]) + eps);
      const double scale = static_cast<double>(g[ch]) * inv;
      const double shift = static_cast<double>(b[ch]) - static_cast<double>(m[ch]) * scale;
      const T* src = &vx.at(n, ch, 0, 0);
      T* dst = &out.at(n, ch, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(static_cast<double>(src[i]) * scale + shift);
    }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(std::move(out), rg, [x, gamma, beta, mean, var, eps](Tape<T>& tp, std::size_t self) {
    const auto& gy = tp.grad_of(self);
    const auto& in = tp.value(x);
    const auto& gm = tp.value(gamma);
    const auto& mu = tp.value(mean);
    const auto& s2b = tp.value(var);
    const std::size_t ch_n = in.dim(1), pl = in.dim(2) * in.dim(3);
    for (std::size_t ch = 0; ch < ch_n; ++ch) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(s2b[ch]) + eps);
      double sg = 0.0, sgx = 0.0;
      for (std::size_t n = 0; n < in.dim(0); ++n) {
        const T* g = &gy.at(n, ch, 0, 0);
        const T* src = &in.at(n, ch, 0, 0);
        for (std::size_t i = 0; i < pl; ++i) {
          sg += static_cast<double>(g[i]);
          sgx += static_cast<double>(g[i]) * (static_cast<double>(src[i]) - static_cast<double>(mu[ch])) * inv;
        }
        if (tp.requires_grad(x)) {
          T* gx = &tp.grad(x).at(n, ch, 0, 0);
          const double scale = static_cast<double>(gm[ch]) * inv;
          for (std::size_t i = 0; i < pl; ++i) gx[i] += static_cast<T>(static_cast<double>(g[i]) * scale);
        }
      }
      if (tp.requires_grad(gamma)) tp.grad(gamma)[ch] += static_cast<T>(sgx);
      if (tp.requires_grad(beta)) tp.grad(beta)[ch] += static_cast<T>(sg);
    }
  });
}

template <typename T>
Var avg_pool(Tape<T>& tape, Var x, std::size_t factor) {
  Tensor<T> out = avg_pool_downsample(tape.value(x), factor);
  return tape.record(std::move(out), tape.requires_grad(x), [x, factor](Tape<T>& tp, std::size_t self) {
    const auto& gy = tp.grad_of(self);
    auto& gx = tp.grad(x);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t n = 0; n < gy.dim(0); ++n)
      for (std::size_t c = 0; c < gy.dim(1); ++c)
        for (std::size_t i = 0; i < gy.dim(2); ++i)
          for (std::size_t j = 0; j < gy.dim(3); ++j) {
            const T share = static_cast<T>(static_cast<double>(gy.at(n, c, i, j)) * inv);
            for (std::size_t a = 0; a < factor; ++a)
              for (std::size_t b = 0; b < factor; ++b) gx.at(n, c, i * factor + a, j * factor + b) += share;
          }
  });
}

template <typename T>
Var resize(Tape<T>& tape, Var x, std::size_t out_h, std::size_t out_w) {
  Tensor<T> out = bilinear_resize(tape.value(x), out_h, out_w);
  return tape.record(std::move(out), tape.requires_grad(x), [x, out_h, out_w](Tape<T>& tp, std::size_t self) {
    const auto& gy = tp.grad_of(self);
    auto& gx = tp.grad(x);
    const std::size_t h = gx.dim(2), w = gx.dim(3);
    if (h == out_h && w == out_w) {
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      return;
    }
    const auto ty = detail::resize_taps(h, out_h), tx = detail::resize_taps(w, out_w);
    std::vector<double> acc(h * w);
    for (std::size_t n = 0; n < gy.dim(0); ++n)
      for (std::size_t c = 0; c < gy.dim(1); ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < out_h; ++i)
          for (std::size_t j = 0; j < out_w; ++j) {
            const double g = static_cast<double>(gy.at(n, c, i, j));
            const auto& a = ty[i];
            const auto& b = tx[j];
            acc[a.lo * w + b.lo] += g * (1.0 - a.frac) * (1.0 - b.frac);
            acc[a.lo * w + b.hi] += g * (1.0 - a.frac) * b.frac;
            acc[a.hi * w + b.lo] += g * a.frac * (1.0 - b.frac);
            acc[a.hi * w + b.hi] += g * a.frac * b.frac;
          }
        T* dst = &gx.at(n, c, 0, 0);
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += static_cast<T>(acc[i]);
      }
  });
}

/// Mean over selected pixels of -log softmax(logits)[label]. With no mask
/// every pixel is selected and the divisor is H*W. Throws
/// Error::Kind::empty_selection when the mask selects nothing.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const SegMap& labels, const Mask* mask = nullptr) {
  const auto& z = tape.value(logits);
  detail::check_labels(z, labels, mask, "softmax_cross_entropy");
  const std::size_t k = z.dim(1), plane = labels.size();
  std::vector<std::size_t> selected;
  selected.reserve(plane);
  for (std::size_t p = 0; p < plane; ++p)
    if (!mask || (*mask)[p]) selected.push_back(p);
  if (selected.empty()) fail(Error::Kind::empty_selection, "softmax_cross_entropy: no pixels selected");

  double total = 0.0;
  for (std::size_t p : selected) {
    double zmax = static_cast<double>(z[p]);
    for (std::size_t c = 1; c < k; ++c) zmax = std::max(zmax, static_cast<double>(z[c * plane + p]));
    double se = 0.0;
    for (std::size_t c = 0; c < k; ++c) se += std::exp(static_cast<double>(z[c * plane + p]) - zmax);
    const auto label = static_cast<std::size_t>(labels[p] - 1);
    total += zmax + std::log(se) - static_cast<double>(z[label * plane + p]);
  }
  const double count = static_cast<double>(selected.size());
  Tensor<T> out(Shape{1}, static_cast<T>(total / count));
  return tape.record(std::move(out), tape.requires_grad(logits),
                     [logits, labels, sel = std::move(selected), count](Tape<T>& tp, std::size_t self) {
                       const double g = static_cast<double>(tp.grad_of(self)[0]) / count;
                       const auto& zz = tp.value(logits);
                       auto& gz = tp.grad(logits);
                       const std::size_t kk = zz.dim(1), pl = labels.size();
                       std::vector<double> e(kk);
                       for (std::size_t p : sel) {
                         double zmax = static_cast<double>(zz[p]);
                         for (std::size_t c = 1; c < kk; ++c) zmax = std::max(zmax, static_cast<double>(zz[c * pl + p]));
                         double se = 0.0;
                         for (std::size_t c = 0; c < kk; ++c) se += (e[c] = std::exp(static_cast<double>(zz[c * pl + p]) - zmax));
                         const auto label = static_cast<std::size_t>(labels[p] - 1);
                         for (std::size_t c = 0; c < kk; ++c) {
                           const double target = c == label ? 1.0 : 0.0;
                           gz[c * pl + p] += static_cast<T>(g * (e[c] / se - target));
                         }
                       }
                     });
}

}  // namespace ops
}  // namespace auxadapt
