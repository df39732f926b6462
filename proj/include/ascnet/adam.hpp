#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ascnet/layers.hpp"

namespace ascnet {

// Adaptive-moment gradient descent with bias correction.
template <class T>
struct Adam {
  T lr = T(5e-5), beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-7);
  long long t = 0;
  std::vector<Param<T>*> params;
  std::vector<std::vector<T>> m, v;

  void attach(std::vector<Param<T>*> ps, T lr_) {
    params = std::move(ps);
    lr = lr_;
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->v.size(), T(0));
      v.emplace_back(p->v.size(), T(0));
    }
    t = 0;
  }

  void step() {
    ++t;
    const T bc1 = T(1) - T(std::pow(double(beta1), double(t)));
    const T bc2 = T(1) - T(std::pow(double(beta2), double(t)));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      auto& mk = m[k];
      auto& vk = v[k];
      for (std::size_t i = 0; i < p.v.size(); ++i) {
        const T g = p.g[i];
        mk[i] = beta1 * mk[i] + (T(1) - beta1) * g;
        vk[i] = beta2 * vk[i] + (T(1) - beta2) * g * g;
        const T mhat = mk[i] / bc1;
        const T vhat = vk[i] / bc2;
        p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grads() {
    for (auto* p : params) p->zero_grad();
  }
};

}  // namespace ascnet
