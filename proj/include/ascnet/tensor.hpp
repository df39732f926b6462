#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ascnet {

// Dense NCHW tensor. All network math runs on these; images enter the
// network as (N, 1, H, W).
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  // Pointer to channel j of sample i.
  T* plane(int i, int j) {
    return v.data() + (static_cast<std::size_t>(i) * c + j) * plane_size();
  }
  const T* plane(int i, int j) const {
    return v.data() + (static_cast<std::size_t>(i) * c + j) * plane_size();
  }

  T& at(int i, int j, int y, int x) { return plane(i, j)[y * w + x]; }
  T at(int i, int j, int y, int x) const { return plane(i, j)[y * w + x]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(T value) { std::fill(v.begin(), v.end(), value); }
};

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const std::size_t ps = a.plane_size();
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.plane(i, 0), a.plane(i, 0) + a.c * ps, out.plane(i, 0));
    std::copy(b.plane(i, 0), b.plane(i, 0) + b.c * ps, out.plane(i, a.c));
  }
  return out;
}

// Inverse of concat_channels for gradient routing.
template <class T>
void split_channels(const Tensor<T>& cat, int c_first, Tensor<T>& a,
                    Tensor<T>& b) {
  if (c_first <= 0 || c_first >= cat.c)
    throw std::invalid_argument("split_channels: bad split point");
  a = Tensor<T>(cat.n, c_first, cat.h, cat.w);
  b = Tensor<T>(cat.n, cat.c - c_first, cat.h, cat.w);
  const std::size_t ps = cat.plane_size();
  for (int i = 0; i < cat.n; ++i) {
    std::copy(cat.plane(i, 0), cat.plane(i, 0) + a.c * ps, a.plane(i, 0));
    std::copy(cat.plane(i, c_first), cat.plane(i, c_first) + b.c * ps,
              b.plane(i, 0));
  }
}

template <class T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src))
    throw std::invalid_argument("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace ascnet
