#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ascnet/blas.hpp"
#include "ascnet/rng.hpp"
#include "ascnet/tensor.hpp"

namespace ascnet {

// Forward-pass mode.
//  - train:  batch statistics, dropout active, running stats updated
//  - eval:   running statistics, no dropout; deterministic inference
//  - frozen: batch statistics but nothing mutated; used when gradients must
//    flow through a network whose weights (and buffers) stay untouched
enum class NetMode { train, eval, frozen };

template <class T>
struct Param {
  std::string name;
  std::vector<T> v, g;

  void resize(const std::string& n, std::size_t count) {
    name = n;
    v.assign(count, T(0));
    g.assign(count, T(0));
  }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
};

// Fan-in-scaled uniform init, limit scale * sqrt(6 / fan_in).
template <class T>
void he_uniform(std::vector<T>& w, std::size_t fan_in, Rng& rng) {
  double scale = 1.0;  // experiment hook, temporary
  if (const char* env = std::getenv("ASCNET_INIT_SCALE")) scale = atof(env);
  const double limit = scale * std::sqrt(6.0 / double(fan_in));
  for (auto& x : w) x = T(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Channel-major activation storage: one matrix row per channel, one
// (h+2)x(w+2) plane per sample with a one-pixel zero halo. The halo realizes
// zero padding, so a 3x3 convolution is nine shifted GEMMs on this matrix
// directly, with no im2col materialization. Invariant throughout: halo
// pixels are zero on every tensor handed between layers.
// ---------------------------------------------------------------------------
template <class T>
struct PlaneTensor {
  int c = 0, n = 0, h = 0, w = 0;  // logical dims
  std::vector<T> v;                // c * n * (h+2) * (w+2)

  PlaneTensor() = default;
  PlaneTensor(int c_, int n_, int h_, int w_)
      : c(c_), n(n_), h(h_), w(w_),
        v(std::size_t(c_) * n_ * (h_ + 2) * (w_ + 2), T(0)) {}

  int ph() const { return h + 2; }
  int pw() const { return w + 2; }
  std::size_t plane() const { return std::size_t(ph()) * pw(); }
  std::size_t cols() const { return std::size_t(n) * plane(); }
  std::size_t size() const { return v.size(); }

  T* chan(int ci) { return v.data() + std::size_t(ci) * cols(); }
  const T* chan(int ci) const { return v.data() + std::size_t(ci) * cols(); }
  // top-left interior pixel of sample i, channel ci
  T* interior(int ci, int i) {
    return chan(ci) + std::size_t(i) * plane() + pw() + 1;
  }
  const T* interior(int ci, int i) const {
    return chan(ci) + std::size_t(i) * plane() + pw() + 1;
  }

  void zero_halos();

  bool same_shape(const PlaneTensor& o) const {
    return c == o.c && n == o.n && h == o.h && w == o.w;
  }
};

template <class T>
void zero_channel_halos(PlaneTensor<T>& t, int ci) {
  for (int i = 0; i < t.n; ++i) {
    T* p = t.chan(ci) + std::size_t(i) * t.plane();
    std::fill(p, p + t.pw(), T(0));  // top row
    std::fill(p + std::size_t(t.ph() - 1) * t.pw(), p + t.plane(), T(0));
    for (int y = 1; y < t.ph() - 1; ++y) {
      p[std::size_t(y) * t.pw()] = T(0);
      p[std::size_t(y) * t.pw() + t.pw() - 1] = T(0);
    }
  }
}

template <class T>
void PlaneTensor<T>::zero_halos() {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) zero_channel_halos(*this, ci);
}

// (N, 1, H, W) batch -> single-channel plane tensor with zero halo.
template <class T>
PlaneTensor<T> import_batch(const Tensor<T>& batch) {
  if (batch.c != 1) throw std::invalid_argument("import_batch: expect 1 channel");
  PlaneTensor<T> out(1, batch.n, batch.h, batch.w);
  for (int i = 0; i < batch.n; ++i) {
    const T* src = batch.plane(i, 0);
    T* dst = out.interior(0, i);
    for (int y = 0; y < batch.h; ++y)
      std::copy(src + std::size_t(y) * batch.w,
                src + std::size_t(y) * batch.w + batch.w,
                dst + std::size_t(y) * out.pw());
  }
  return out;
}

template <class T>
Tensor<T> export_channel(const PlaneTensor<T>& pt, int channel = 0) {
  Tensor<T> out(pt.n, 1, pt.h, pt.w);
  for (int i = 0; i < pt.n; ++i) {
    const T* src = pt.interior(channel, i);
    T* dst = out.plane(i, 0);
    for (int y = 0; y < pt.h; ++y)
      std::copy(src + std::size_t(y) * pt.pw(),
                src + std::size_t(y) * pt.pw() + pt.w,
                dst + std::size_t(y) * pt.w);
  }
  return out;
}

template <class T>
PlaneTensor<T> concat_planes(const PlaneTensor<T>& a, const PlaneTensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_planes: shape mismatch");
  PlaneTensor<T> out(a.c + b.c, a.n, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

template <class T>
void split_planes(const PlaneTensor<T>& cat, int c_first, PlaneTensor<T>& a,
                  PlaneTensor<T>& b) {
  a = PlaneTensor<T>(c_first, cat.n, cat.h, cat.w);
  b = PlaneTensor<T>(cat.c - c_first, cat.n, cat.h, cat.w);
  std::copy(cat.v.begin(), cat.v.begin() + a.v.size(), a.v.begin());
  std::copy(cat.v.begin() + a.v.size(), cat.v.end(), b.v.begin());
}

template <class T>
void add_planes(PlaneTensor<T>& dst, const PlaneTensor<T>& src) {
  if (!dst.same_shape(src))
    throw std::invalid_argument("add_planes: shape mismatch");
  const long long total = (long long)dst.v.size();
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < total; ++i) dst.v[i] += src.v[i];
}

// ---------------------------------------------------------------------------
// Convolution, stride 1, kernel 3x3 (same padding via the halo) or 1x1.
// The halo makes im2col nine contiguous shifted copies per input channel
// with no boundary branches, feeding one well-shaped GEMM per pass.
// Weight layout: cout x (cin*9), column index (c*3 + ky)*3 + kx.
// ---------------------------------------------------------------------------
namespace detail {
template <class T>
std::vector<T>& conv_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}
template <class T>
std::vector<T>& conv_scratch2() {
  thread_local std::vector<T> buf;
  return buf;
}
}  // namespace detail

template <class T>
struct Conv2d {
  int cin = 0, cout = 0, k = 3;
  Param<T> weight;
  Param<T> bias;  // cout
  PlaneTensor<T> input_;

  void init(const std::string& name, int cin_, int cout_, int k_, int /*pad*/,
            Rng& rng) {
    if (k_ != 1 && k_ != 3)
      throw std::invalid_argument("conv: only 1x1 and 3x3 kernels");
    cin = cin_;
    cout = cout_;
    k = k_;
    weight.resize(name + ".weight", std::size_t(k) * k * cout * cin);
    bias.resize(name + ".bias", cout);
    he_uniform(weight.v, std::size_t(cin) * k * k, rng);
  }

  // col[(c*3+ky)*3+kx][j] = x[c][j + d(ky,kx)], zero outside the window.
  void build_col(const PlaneTensor<T>& x, std::vector<T>& col) const {
    const int cols = int(x.cols());
    const int pw = x.pw();
    col.resize(std::size_t(cin) * 9 * cols);
    T* colp = col.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cin; ++c) {
      const T* src = x.chan(c);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int d = (ky - 1) * pw + (kx - 1);
          const int jlo = std::max(0, -d);
          const int jhi = cols - std::max(0, d);
          T* dst = colp + (std::size_t(c * 3 + ky) * 3 + kx) * cols;
          std::fill(dst, dst + jlo, T(0));
          std::copy(src + jlo + d, src + jhi + d, dst + jlo);
          std::fill(dst + jhi, dst + cols, T(0));
        }
    }
  }

  PlaneTensor<T> forward(PlaneTensor<T> x) {
    if (x.c != cin) throw std::invalid_argument("conv: channel mismatch");
    PlaneTensor<T> y(cout, x.n, x.h, x.w);
    const int cols = int(x.cols());
    if (k == 1) {
      gemm(false, false, cout, cols, cin, T(1), weight.v.data(), cin,
           x.v.data(), cols, T(0), y.v.data(), cols);
    } else {
      auto& col = detail::conv_scratch<T>();
      build_col(x, col);
      gemm(false, false, cout, cols, cin * 9, T(1), weight.v.data(), cin * 9,
           col.data(), cols, T(0), y.v.data(), cols);
    }
    // One sweep: clear the garbage the full-width GEMM left in the halos
    // and add the bias to the interior.
    const int ypw = y.pw();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cout; ++c) {
      const T b = bias.v[c];
      for (int i = 0; i < y.n; ++i) {
        T* base = y.chan(c) + std::size_t(i) * y.plane();
        std::fill(base, base + ypw, T(0));
        std::fill(base + std::size_t(y.ph() - 1) * ypw, base + y.plane(),
                  T(0));
        for (int yy = 1; yy < y.ph() - 1; ++yy) {
          T* row = base + std::size_t(yy) * ypw;
          row[0] = T(0);
          row[ypw - 1] = T(0);
          for (int xx = 1; xx < ypw - 1; ++xx) row[xx] += b;
        }
      }
    }
    input_ = std::move(x);
    return y;
  }

  PlaneTensor<T> backward(const PlaneTensor<T>& gy) {
    const PlaneTensor<T>& x = input_;
    PlaneTensor<T> gx(cin, x.n, x.h, x.w);
    const int cols = int(x.cols());
    const int pw = x.pw();
    // db: gy halos are zero, so whole-row sums equal interior sums.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cout; ++c) {
      const T* row = gy.chan(c);
      T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
      int j = 0;
      for (; j + 4 <= cols; j += 4) {
        acc0 += row[j];
        acc1 += row[j + 1];
        acc2 += row[j + 2];
        acc3 += row[j + 3];
      }
      for (; j < cols; ++j) acc0 += row[j];
      bias.g[c] += acc0 + acc1 + acc2 + acc3;
    }
    if (k == 1) {
      gemm(false, true, cout, cin, cols, T(1), gy.v.data(), cols, x.v.data(),
           cols, T(1), weight.g.data(), cin);
      gemm(true, false, cin, cols, cout, T(1), weight.v.data(), cin,
           gy.v.data(), cols, T(0), gx.v.data(), cols);
    } else {
      auto& col = detail::conv_scratch<T>();
      build_col(x, col);
      // dW += gy * col^T
      gemm(false, true, cout, cin * 9, cols, T(1), gy.v.data(), cols,
           col.data(), cols, T(1), weight.g.data(), cin * 9);
      // dcol = W^T * gy, folded back by shifted accumulation
      auto& dcol = detail::conv_scratch2<T>();
      dcol.resize(std::size_t(cin) * 9 * cols);
      gemm(true, false, cin * 9, cols, cout, T(1), weight.v.data(), cin * 9,
           gy.v.data(), cols, T(0), dcol.data(), cols);
      const T* dcolp = dcol.data();
#pragma omp parallel for schedule(static)
      for (int c = 0; c < cin; ++c) {
        T* dst = gx.chan(c);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int d = (ky - 1) * pw + (kx - 1);
            const int jlo = std::max(0, -d);
            const int jhi = cols - std::max(0, d);
            const T* src = dcolp + (std::size_t(c * 3 + ky) * 3 + kx) * cols;
            T* out = dst + d;
            for (int j = jlo; j < jhi; ++j) out[j] += src[j];
          }
      }
    }
    gx.zero_halos();  // gradients that fell on padding are discarded
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Transposed convolution, kernel 2x2, stride 2 (the pool replacement).
// Weight layout: cin x (cout*4); output blocks do not overlap.
// ---------------------------------------------------------------------------
template <class T>
struct ConvTranspose2d {
  int cin = 0, cout = 0;
  Param<T> weight;  // cin x (cout*4)
  Param<T> bias;    // cout
  PlaneTensor<T> input_;

  void init(const std::string& name, int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    weight.resize(name + ".weight", std::size_t(cin) * cout * 4);
    bias.resize(name + ".bias", cout);
    // Each output unit receives exactly cin contributions.
    he_uniform(weight.v, std::size_t(cin), rng);
  }

  PlaneTensor<T> forward(PlaneTensor<T> x) {
    if (x.c != cin) throw std::invalid_argument("convT: channel mismatch");
    PlaneTensor<T> y(cout, x.n, 2 * x.h, 2 * x.w);
    const int cols = int(x.cols());
    thread_local std::vector<T> g;
    g.assign(std::size_t(cout) * 4 * cols, T(0));
    // g = W^T(cout*4 x cin) * x
    gemm(true, false, cout * 4, cols, cin, T(1), weight.v.data(), cout * 4,
         x.v.data(), cols, T(0), g.data(), cols);
    const T* gp = g.data();  // workers must not touch the thread_local itself
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cout; ++c) {
      const T b = bias.v[c];
      for (int i = 0; i < x.n; ++i)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const T* src = gp +
                           (std::size_t(c) * 4 + dy * 2 + dx) * cols +
                           std::size_t(i) * x.plane() + x.pw() + 1;
            T* dst = y.interior(c, i);
            for (int yy = 0; yy < x.h; ++yy) {
              const T* srow = src + std::size_t(yy) * x.pw();
              T* drow = dst + std::size_t(2 * yy + dy) * y.pw() + dx;
              for (int xx = 0; xx < x.w; ++xx) drow[2 * xx] = srow[xx] + b;
            }
          }
    }
    input_ = std::move(x);
    return y;
  }

  PlaneTensor<T> backward(const PlaneTensor<T>& gy) {
    const PlaneTensor<T>& x = input_;
    PlaneTensor<T> gx(cin, x.n, x.h, x.w);
    const int cols = int(x.cols());
    thread_local std::vector<T> dg;
    dg.assign(std::size_t(cout) * 4 * cols, T(0));
    T* dgp = dg.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cout; ++c) {
      T acc = 0;
      for (int i = 0; i < x.n; ++i) {
        const T* gsrc = gy.interior(c, i);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            T* dst = dgp + (std::size_t(c) * 4 + dy * 2 + dx) * cols +
                     std::size_t(i) * x.plane() + x.pw() + 1;
            for (int yy = 0; yy < x.h; ++yy) {
              const T* grow = gsrc + std::size_t(2 * yy + dy) * gy.pw() + dx;
              T* drow = dst + std::size_t(yy) * x.pw();
              for (int xx = 0; xx < x.w; ++xx) {
                drow[xx] = grow[2 * xx];
                acc += grow[2 * xx];
              }
            }
          }
      }
      bias.g[c] += acc;
    }
    // dW += x * dg^T ; gx = W * dg
    gemm(false, true, cin, cout * 4, cols, T(1), x.v.data(), cols, dg.data(),
         cols, T(1), weight.g.data(), cout * 4);
    gemm(false, false, cin, cols, cout * 4, T(1), weight.v.data(), cout * 4,
         dg.data(), cols, T(0), gx.v.data(), cols);
    gx.zero_halos();
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel (interior pixels only).
// ---------------------------------------------------------------------------
template <class T>
struct BatchNorm2d {
  int c = 0;
  T eps = T(1e-3), momentum = T(0.9);
  std::string name;
  Param<T> gamma, beta;
  std::vector<T> run_mean, run_var;  // buffers, not optimized

  PlaneTensor<T> xhat_;
  std::vector<T> inv_std_;
  NetMode mode_ = NetMode::eval;

  void init(const std::string& name_, int c_, T eps_, T momentum_) {
    c = c_;
    eps = eps_;
    momentum = momentum_;
    name = name_;
    gamma.resize(name + ".gamma", c);
    beta.resize(name + ".beta", c);
    std::fill(gamma.v.begin(), gamma.v.end(), T(1));
    run_mean.assign(c, T(0));
    run_var.assign(c, T(1));
  }

  // Statistics run over whole channel rows: halos are zero so the sums are
  // the interior sums, with the divisor kept at the interior count. The
  // transform also sweeps whole rows and re-zeroes the halos afterwards.
  PlaneTensor<T> forward(PlaneTensor<T> x, NetMode mode) {
    mode_ = mode;
    PlaneTensor<T> y(x.c, x.n, x.h, x.w);
    const std::size_t m = std::size_t(x.n) * x.h * x.w;
    const std::size_t cols = x.cols();
    if (mode == NetMode::eval) {
#pragma omp parallel for schedule(static)
      for (int j = 0; j < c; ++j) {
        const T scale = gamma.v[j] / std::sqrt(run_var[j] + eps);
        const T shift = beta.v[j] - run_mean[j] * scale;
        const T* src = x.chan(j);
        T* dst = y.chan(j);
        for (std::size_t o = 0; o < cols; ++o) dst[o] = src[o] * scale + shift;
        zero_channel_halos(y, j);
      }
      return y;
    }
    xhat_ = PlaneTensor<T>(x.c, x.n, x.h, x.w);
    inv_std_.assign(c, T(0));
#pragma omp parallel for schedule(static)
    for (int j = 0; j < c; ++j) {
      const T* src = x.chan(j);
      double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
      std::size_t o = 0;
      for (; o + 2 <= cols; o += 2) {
        const double a = src[o], b = src[o + 1];
        s0 += a;
        s1 += b;
        q0 += a * a;
        q1 += b * b;
      }
      for (; o < cols; ++o) {
        const double a = src[o];
        s0 += a;
        q0 += a * a;
      }
      const double mean = (s0 + s1) / double(m);
      const double var = std::max(0.0, (q0 + q1) / double(m) - mean * mean);
      const T istd = T(1.0 / std::sqrt(var + double(eps)));
      inv_std_[j] = istd;
      const T g = gamma.v[j], b = beta.v[j], mu = T(mean);
      T* xh = xhat_.chan(j);
      T* dst = y.chan(j);
      for (std::size_t p = 0; p < cols; ++p) {
        const T normalized = (src[p] - mu) * istd;
        xh[p] = normalized;
        dst[p] = g * normalized + b;
      }
      zero_channel_halos(y, j);
      zero_channel_halos(xhat_, j);
      if (mode == NetMode::train) {
        run_mean[j] = momentum * run_mean[j] + (T(1) - momentum) * T(mean);
        run_var[j] = momentum * run_var[j] + (T(1) - momentum) * T(var);
      }
    }
    return y;
  }

  PlaneTensor<T> backward(const PlaneTensor<T>& gy) {
    PlaneTensor<T> gx(gy.c, gy.n, gy.h, gy.w);
    const std::size_t cols = gy.cols();
    if (mode_ == NetMode::eval) {
#pragma omp parallel for schedule(static)
      for (int j = 0; j < c; ++j) {
        const T scale = gamma.v[j] / std::sqrt(run_var[j] + eps);
        const T* g = gy.chan(j);
        T* d = gx.chan(j);
        for (std::size_t o = 0; o < cols; ++o) d[o] = g[o] * scale;
      }
      return gx;
    }
    const std::size_t m = std::size_t(gy.n) * gy.h * gy.w;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < c; ++j) {
      const T* g = gy.chan(j);
      const T* xh = xhat_.chan(j);
      double s0 = 0, s1 = 0, t0 = 0, t1 = 0;
      std::size_t o = 0;
      for (; o + 2 <= cols; o += 2) {
        s0 += g[o];
        s1 += g[o + 1];
        t0 += double(g[o]) * xh[o];
        t1 += double(g[o + 1]) * xh[o + 1];
      }
      for (; o < cols; ++o) {
        s0 += g[o];
        t0 += double(g[o]) * xh[o];
      }
      const double sum_gy = s0 + s1, sum_gy_xhat = t0 + t1;
      gamma.g[j] += T(sum_gy_xhat);
      beta.g[j] += T(sum_gy);
      const T k1 = T(sum_gy / double(m));
      const T k2 = T(sum_gy_xhat / double(m));
      const T scale = gamma.v[j] * inv_std_[j];
      T* d = gx.chan(j);
      for (std::size_t p = 0; p < cols; ++p)
        d[p] = scale * (g[p] - k1 - xh[p] * k2);
      zero_channel_halos(gx, j);
    }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2.
// ---------------------------------------------------------------------------
template <class T>
struct MaxPool2 {
  std::vector<std::uint8_t> argmax_;  // dy*2+dx per interior output element
  int in_h = 0, in_w = 0, n = 0, c = 0;

  PlaneTensor<T> forward(const PlaneTensor<T>& x) {
    if (x.h % 2 || x.w % 2)
      throw std::invalid_argument("maxpool: odd spatial dims");
    n = x.n;
    c = x.c;
    in_h = x.h;
    in_w = x.w;
    PlaneTensor<T> y(x.c, x.n, x.h / 2, x.w / 2);
    argmax_.assign(std::size_t(x.c) * x.n * y.h * y.w, 0);
    const std::size_t per_chan = std::size_t(x.n) * y.h * y.w;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < x.c; ++j)
      for (int i = 0; i < x.n; ++i) {
        const T* src = x.interior(j, i);
        T* dst = y.interior(j, i);
        std::size_t o = per_chan * j + std::size_t(i) * y.h * y.w;
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx, ++o) {
            const T* p = src + std::size_t(2 * yy) * x.pw() + 2 * xx;
            T best = p[0];
            std::uint8_t arg = 0;
            if (p[1] > best) { best = p[1]; arg = 1; }
            if (p[x.pw()] > best) { best = p[x.pw()]; arg = 2; }
            if (p[x.pw() + 1] > best) { best = p[x.pw() + 1]; arg = 3; }
            dst[std::size_t(yy) * y.pw() + xx] = best;
            argmax_[o] = arg;
          }
      }
    return y;
  }

  PlaneTensor<T> backward(const PlaneTensor<T>& gy) {
    PlaneTensor<T> gx(c, n, in_h, in_w);
    const std::size_t per_chan = std::size_t(n) * gy.h * gy.w;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < n; ++i) {
        const T* g = gy.interior(j, i);
        T* d = gx.interior(j, i);
        std::size_t o = per_chan * j + std::size_t(i) * gy.h * gy.w;
        for (int yy = 0; yy < gy.h; ++yy)
          for (int xx = 0; xx < gy.w; ++xx, ++o) {
            const std::uint8_t arg = argmax_[o];
            const int dy = arg >> 1, dx = arg & 1;
            d[std::size_t(2 * yy + dy) * gx.pw() + 2 * xx + dx] =
                g[std::size_t(yy) * gy.pw() + xx];
          }
      }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Inverted dropout; identity outside train mode. Halo pixels are zero and
// stay zero under masking, but they do consume mask draws.
// ---------------------------------------------------------------------------
template <class T>
struct Dropout {
  T rate = T(0.3);
  Rng* rng = nullptr;
  std::vector<std::uint8_t> mask_;
  bool active_ = false;

  PlaneTensor<T> forward(PlaneTensor<T> x, NetMode mode) {
    active_ = (mode == NetMode::train) && rate > T(0);
    if (!active_) return x;
    const T scale = T(1) / (T(1) - rate);
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool keep = rng->uniform() >= double(rate);
      mask_[i] = keep;
      x.v[i] = keep ? x.v[i] * scale : T(0);
    }
    return x;
  }

  PlaneTensor<T> backward(PlaneTensor<T> gy) {
    if (!active_) return gy;
    const T scale = T(1) / (T(1) - rate);
    for (std::size_t i = 0; i < gy.size(); ++i)
      gy.v[i] = mask_[i] ? gy.v[i] * scale : T(0);
    return gy;
  }
};

// ---------------------------------------------------------------------------
// Fully connected layer over flattened interior features.
// ---------------------------------------------------------------------------
template <class T>
struct Dense {
  int in = 0, out = 0;
  Param<T> weight;  // out x in
  Param<T> bias;    // out
  std::vector<T> input_;  // n x in, gathered
  int n_ = 0, src_c_ = 0, src_h_ = 0, src_w_ = 0;

  void init(const std::string& name, int in_, int out_, Rng& rng) {
    in = in_;
    out = out_;
    weight.resize(name + ".weight", std::size_t(out) * in);
    bias.resize(name + ".bias", out);
    he_uniform(weight.v, std::size_t(in), rng);
  }

  // Flattening order: (channel, y, x) per sample.
  Tensor<T> forward(const PlaneTensor<T>& x) {
    if (x.c * x.h * x.w != in)
      throw std::invalid_argument("dense: input size mismatch");
    n_ = x.n;
    src_c_ = x.c;
    src_h_ = x.h;
    src_w_ = x.w;
    input_.assign(std::size_t(x.n) * in, T(0));
    for (int i = 0; i < x.n; ++i) {
      T* dst = input_.data() + std::size_t(i) * in;
      for (int j = 0; j < x.c; ++j) {
        const T* src = x.interior(j, i);
        for (int yy = 0; yy < x.h; ++yy)
          std::copy(src + std::size_t(yy) * x.pw(),
                    src + std::size_t(yy) * x.pw() + x.w,
                    dst + (std::size_t(j) * x.h + yy) * x.w);
      }
    }
    Tensor<T> y(x.n, out, 1, 1);
    gemm(false, true, x.n, out, in, T(1), input_.data(), in, weight.v.data(),
         in, T(0), y.data(), out);
    for (int i = 0; i < x.n; ++i)
      for (int j = 0; j < out; ++j) y.v[std::size_t(i) * out + j] += bias.v[j];
    return y;
  }

  PlaneTensor<T> backward(const Tensor<T>& gy) {
    gemm(true, false, out, in, n_, T(1), gy.data(), out, input_.data(), in,
         T(1), weight.g.data(), in);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < out; ++j) bias.g[j] += gy.v[std::size_t(i) * out + j];
    std::vector<T> flat(std::size_t(n_) * in);
    gemm(false, false, n_, in, out, T(1), gy.data(), out, weight.v.data(), in,
         T(0), flat.data(), in);
    PlaneTensor<T> gx(src_c_, n_, src_h_, src_w_);
    for (int i = 0; i < n_; ++i) {
      const T* src = flat.data() + std::size_t(i) * in;
      for (int j = 0; j < src_c_; ++j) {
        T* dst = gx.interior(j, i);
        for (int yy = 0; yy < src_h_; ++yy)
          std::copy(src + (std::size_t(j) * src_h_ + yy) * src_w_,
                    src + (std::size_t(j) * src_h_ + yy) * src_w_ + src_w_,
                    dst + std::size_t(yy) * gx.pw());
      }
    }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Activations. ReLU/Tanh are zero-preserving so whole-buffer application
// keeps the halo invariant; Sigmoid writes interior-only for the same reason.
// ---------------------------------------------------------------------------
template <class T>
struct ReLU {
  std::vector<std::uint8_t> mask_;
  PlaneTensor<T> forward(PlaneTensor<T> x) {
    mask_.assign(x.size(), 0);
    const long long total = (long long)x.size();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < total; ++i) {
      if (x.v[i] > T(0))
        mask_[i] = 1;
      else
        x.v[i] = T(0);
    }
    return x;
  }
  PlaneTensor<T> backward(PlaneTensor<T> gy) {
    const long long total = (long long)gy.size();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < total; ++i)
      if (!mask_[i]) gy.v[i] = T(0);
    return gy;
  }
};

template <class T>
struct SigmoidPlane {
  PlaneTensor<T> out_;
  PlaneTensor<T> forward(const PlaneTensor<T>& x) {
    PlaneTensor<T> y(x.c, x.n, x.h, x.w);
    for (int j = 0; j < x.c; ++j)
      for (int i = 0; i < x.n; ++i) {
        const T* src = x.interior(j, i);
        T* dst = y.interior(j, i);
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) {
            const std::size_t o = std::size_t(yy) * x.pw() + xx;
            dst[o] = T(1) / (T(1) + std::exp(-src[o]));
          }
      }
    out_ = y;
    return y;
  }
  PlaneTensor<T> backward(PlaneTensor<T> gy) {
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T y = out_.v[i];
      gy.v[i] *= y * (T(1) - y);
    }
    return gy;
  }
};

// Scalar tanh on (N, out, 1, 1) score tensors.
template <class T>
struct Tanh {
  Tensor<T> out_;
  Tensor<T> forward(Tensor<T> x) {
    for (auto& v : x.v) v = std::tanh(v);
    out_ = x;
    return x;
  }
  Tensor<T> backward(Tensor<T> gy) {
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T y = out_.v[i];
      gy.v[i] *= (T(1) - y * y);
    }
    return gy;
  }
};

}  // namespace ascnet
