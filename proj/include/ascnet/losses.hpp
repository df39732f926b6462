#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "ascnet/tensor.hpp"

namespace ascnet {

// Smoothing constant for the disjoincy loss; keeps 0/0 off empty images.
inline constexpr double kDiceSmooth = 1e-6;

namespace detail {
template <class T>
inline T sgn(T x) {
  return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
}
}  // namespace detail

// Mean |score - 1| over discriminator outputs of generated fence images.
template <class T>
T loss_fence(std::span<const T> scores) {
  if (scores.empty()) throw std::invalid_argument("loss_fence: empty scores");
  T acc = 0;
  for (T s : scores) acc += std::abs(s - T(1));
  return acc / T(scores.size());
}

template <class T>
void loss_fence_grad(std::span<const T> scores, std::span<T> grad) {
  if (scores.empty()) throw std::invalid_argument("loss_fence: empty scores");
  const T inv = T(1) / T(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    grad[i] = detail::sgn(scores[i] - T(1)) * inv;
}

// Soft Dice overlap of one fence/wild pair: (2*sum(f*w) + eps) over
// (sum(f) + sum(w) + eps). Minimizing drives the supports apart.
template <class T>
T loss_disjoint(std::span<const T> fence, std::span<const T> wild) {
  if (fence.size() != wild.size())
    throw std::invalid_argument("loss_disjoint: shape mismatch");
  T inter = 0, mag = 0;
  for (std::size_t i = 0; i < fence.size(); ++i) {
    inter += fence[i] * wild[i];
    mag += fence[i] + wild[i];
  }
  const T eps = T(kDiceSmooth);
  return (T(2) * inter + eps) / (mag + eps);
}

template <class T>
void loss_disjoint_grad(std::span<const T> fence, std::span<const T> wild,
                        std::span<T> grad_fence, std::span<T> grad_wild) {
  if (fence.size() != wild.size())
    throw std::invalid_argument("loss_disjoint: shape mismatch");
  T inter = 0, mag = 0;
  for (std::size_t i = 0; i < fence.size(); ++i) {
    inter += fence[i] * wild[i];
    mag += fence[i] + wild[i];
  }
  const T eps = T(kDiceSmooth);
  const T num = T(2) * inter + eps;
  const T den = mag + eps;
  const T inv_den = T(1) / den;
  const T num_den2 = num * inv_den * inv_den;
  for (std::size_t i = 0; i < fence.size(); ++i) {
    grad_fence[i] = T(2) * wild[i] * inv_den - num_den2;
    grad_wild[i] = T(2) * fence[i] * inv_den - num_den2;
  }
}

// Per-image Dice, averaged over the batch.
template <class T>
T loss_disjoint_batch(const Tensor<T>& fence, const Tensor<T>& wild) {
  if (!fence.same_shape(wild))
    throw std::invalid_argument("loss_disjoint: shape mismatch");
  const std::size_t per = fence.size() / fence.n;
  T acc = 0;
  for (int i = 0; i < fence.n; ++i)
    acc += loss_disjoint(std::span<const T>(fence.data() + i * per, per),
                         std::span<const T>(wild.data() + i * per, per));
  return acc / T(fence.n);
}

template <class T>
void loss_disjoint_batch_grad(const Tensor<T>& fence, const Tensor<T>& wild,
                              Tensor<T>& grad_fence, Tensor<T>& grad_wild) {
  grad_fence = Tensor<T>(fence.n, fence.c, fence.h, fence.w);
  grad_wild = Tensor<T>(fence.n, fence.c, fence.h, fence.w);
  const std::size_t per = fence.size() / fence.n;
  for (int i = 0; i < fence.n; ++i) {
    loss_disjoint_grad(std::span<const T>(fence.data() + i * per, per),
                       std::span<const T>(wild.data() + i * per, per),
                       std::span<T>(grad_fence.data() + i * per, per),
                       std::span<T>(grad_wild.data() + i * per, per));
  }
  const T inv_n = T(1) / T(fence.n);
  for (auto& g : grad_fence.v) g *= inv_n;
  for (auto& g : grad_wild.v) g *= inv_n;
}

// MSE over all pixels and all samples.
template <class T>
T loss_reconstruction(const Tensor<T>& input, const Tensor<T>& recon) {
  if (!input.same_shape(recon))
    throw std::invalid_argument("loss_reconstruction: shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T d = input.v[i] - recon.v[i];
    acc += d * d;
  }
  return acc / T(input.size());
}

// Gradients with respect to both arguments; grad_recon = -grad_input.
template <class T>
void loss_reconstruction_grad(const Tensor<T>& input, const Tensor<T>& recon,
                              Tensor<T>& grad_input, Tensor<T>& grad_recon) {
  if (!input.same_shape(recon))
    throw std::invalid_argument("loss_reconstruction: shape mismatch");
  grad_input = Tensor<T>(input.n, input.c, input.h, input.w);
  grad_recon = Tensor<T>(input.n, input.c, input.h, input.w);
  const T scale = T(2) / T(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T d = (input.v[i] - recon.v[i]) * scale;
    grad_input.v[i] = d;
    grad_recon.v[i] = -d;
  }
}

// Pooled MAE: generated images target -1, reference images target +1.
template <class T>
T loss_discriminator(std::span<const T> scores_fake,
                     std::span<const T> scores_real) {
  const std::size_t total = scores_fake.size() + scores_real.size();
  if (total == 0) throw std::invalid_argument("loss_discriminator: empty");
  T acc = 0;
  for (T s : scores_fake) acc += std::abs(s + T(1));
  for (T s : scores_real) acc += std::abs(s - T(1));
  return acc / T(total);
}

template <class T>
void loss_discriminator_grad(std::span<const T> scores_fake,
                             std::span<const T> scores_real,
                             std::span<T> grad_fake, std::span<T> grad_real) {
  const std::size_t total = scores_fake.size() + scores_real.size();
  if (total == 0) throw std::invalid_argument("loss_discriminator: empty");
  const T inv = T(1) / T(total);
  for (std::size_t i = 0; i < scores_fake.size(); ++i)
    grad_fake[i] = detail::sgn(scores_fake[i] + T(1)) * inv;
  for (std::size_t i = 0; i < scores_real.size(); ++i)
    grad_real[i] = detail::sgn(scores_real[i] - T(1)) * inv;
}

// Composite main-module objective.
template <class T>
T loss_main_total(T fence, T disjoint, T recon,
                  const std::array<T, 3>& weights) {
  for (T w : weights)
    if (w < T(0))
      throw std::invalid_argument("loss_main_total: negative weight");
  if (weights[0] == T(0) && weights[1] == T(0) && weights[2] == T(0))
    throw std::invalid_argument("loss_main_total: all weights zero");
  return weights[0] * fence + weights[1] * disjoint + weights[2] * recon;
}

}  // namespace ascnet
