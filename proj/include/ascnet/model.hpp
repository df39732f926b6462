#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ascnet/layers.hpp"
#include "ascnet/rng.hpp"
#include "ascnet/tensor.hpp"

namespace ascnet {

// Declarative architecture. The defaults mirror the network used for every
// experiment: four encoder blocks of 32/64/128/256 maps, a 512-wide
// transition, 3x3 convolutions, 2x2 pooling and 0.3 dropout.
struct NetworkSpec {
  int input_h = 64, input_w = 64;
  std::vector<int> encoder_widths{32, 64, 128, 256};
  int transition_width = 512;
  int conv_kernel = 3;
  int pool_kernel = 2;
  float dropout_rate = 0.3f;
  float bn_eps = 1e-3f;
  float bn_momentum = 0.9f;

  int levels() const { return int(encoder_widths.size()); }

  void validate() const {
    if (encoder_widths.empty())
      throw std::invalid_argument("spec: no encoder widths");
    const int down = 1 << levels();
    if (input_h <= 0 || input_w <= 0 || input_h % down || input_w % down)
      throw std::invalid_argument(
          "spec: input size not divisible by 2^" + std::to_string(levels()));
    for (std::size_t i = 0; i + 1 < encoder_widths.size(); ++i)
      if (encoder_widths[i] >= encoder_widths[i + 1])
        throw std::invalid_argument("spec: widths must be strictly increasing");
    if (encoder_widths.back() >= transition_width)
      throw std::invalid_argument("spec: widths must be strictly increasing");
    if (conv_kernel != 3 || pool_kernel != 2)
      throw std::invalid_argument("spec: unsupported kernel configuration");
    if (dropout_rate < 0.0f || dropout_rate >= 1.0f)
      throw std::invalid_argument("spec: dropout rate out of range");
  }

  bool operator==(const NetworkSpec&) const = default;
};

namespace detail {

// conv -> bn -> relu, the repeated unit of every block.
template <class T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  ReLU<T> relu;

  void init(const std::string& name, int cin, int cout, const NetworkSpec& s,
            Rng& rng) {
    conv.init(name + ".conv", cin, cout, s.conv_kernel, s.conv_kernel / 2, rng);
    bn.init(name + ".bn", cout, T(s.bn_eps), T(s.bn_momentum));
  }
  PlaneTensor<T> forward(PlaneTensor<T> x, NetMode mode) {
    return relu.forward(bn.forward(conv.forward(std::move(x)), mode));
  }
  PlaneTensor<T> backward(PlaneTensor<T> gy) {
    return conv.backward(bn.backward(relu.backward(std::move(gy))));
  }
  template <class F>
  void visit_params(F&& f) {
    f(conv.weight);
    f(conv.bias);
    f(bn.gamma);
    f(bn.beta);
  }
  template <class F>
  void visit_buffers(F&& f) {
    f(bn.name + ".run_mean", bn.run_mean);
    f(bn.name + ".run_var", bn.run_var);
  }
};

template <class T>
struct EncoderBlock {
  ConvBnRelu<T> c1, c2;
  MaxPool2<T> pool;
  Dropout<T> drop;

  void init(const std::string& name, int cin, int cout, const NetworkSpec& s,
            Rng& rng, Rng* dropout_rng, bool use_dropout) {
    c1.init(name + ".c1", cin, cout, s, rng);
    c2.init(name + ".c2", cout, cout, s, rng);
    drop.rate = use_dropout ? T(s.dropout_rate) : T(0);
    drop.rng = dropout_rng;
  }
  // Returns {downsampled, skip}; skip is the pre-pool activation.
  std::pair<PlaneTensor<T>, PlaneTensor<T>> forward(PlaneTensor<T> x,
                                                    NetMode mode) {
    PlaneTensor<T> skip = c2.forward(c1.forward(std::move(x), mode), mode);
    PlaneTensor<T> down = drop.forward(pool.forward(skip), mode);
    return {std::move(down), std::move(skip)};
  }
  // g_down: gradient of the pooled path; g_skip: summed skip gradients.
  PlaneTensor<T> backward(PlaneTensor<T> g_down, PlaneTensor<T> g_skip) {
    PlaneTensor<T> g = pool.backward(drop.backward(std::move(g_down)));
    add_planes(g, g_skip);
    return c1.backward(c2.backward(std::move(g)));
  }
  template <class F>
  void visit_params(F&& f) {
    c1.visit_params(f);
    c2.visit_params(f);
  }
  template <class F>
  void visit_buffers(F&& f) {
    c1.visit_buffers(f);
    c2.visit_buffers(f);
  }
};

template <class T>
struct DecoderLevel {
  ConvTranspose2d<T> up;
  ConvBnRelu<T> c1, c2;
  int skip_channels = 0;

  void init(const std::string& name, int cin, int cout, const NetworkSpec& s,
            Rng& rng) {
    up.init(name + ".up", cin, cout, rng);
    c1.init(name + ".c1", 2 * cout, cout, s, rng);
    c2.init(name + ".c2", cout, cout, s, rng);
    skip_channels = cout;
  }
  PlaneTensor<T> forward(PlaneTensor<T> x, const PlaneTensor<T>& skip,
                         NetMode mode) {
    PlaneTensor<T> u = up.forward(std::move(x));
    return c2.forward(c1.forward(concat_planes(u, skip), mode), mode);
  }
  // Returns {grad to deeper level, grad to skip}.
  std::pair<PlaneTensor<T>, PlaneTensor<T>> backward(PlaneTensor<T> gy) {
    PlaneTensor<T> g = c1.backward(c2.backward(std::move(gy)));
    PlaneTensor<T> g_up, g_skip;
    split_planes(g, g.c - skip_channels, g_up, g_skip);
    return {up.backward(g_up), std::move(g_skip)};
  }
  template <class F>
  void visit_params(F&& f) {
    f(up.weight);
    f(up.bias);
    c1.visit_params(f);
    c2.visit_params(f);
  }
  template <class F>
  void visit_buffers(F&& f) {
    c1.visit_buffers(f);
    c2.visit_buffers(f);
  }
};

template <class T>
struct Decoder {
  std::vector<DecoderLevel<T>> levels;  // coarse to fine
  Conv2d<T> head;                       // 1x1 to a single map
  SigmoidPlane<T> out_act;

  void init(const std::string& name, const NetworkSpec& s, Rng& rng) {
    const auto& widths = s.encoder_widths;
    levels.resize(widths.size());
    int cin = s.transition_width;
    for (int i = int(widths.size()) - 1; i >= 0; --i) {
      const int cout = widths[i];
      levels[widths.size() - 1 - i].init(
          name + ".level" + std::to_string(int(widths.size()) - i), cin, cout,
          s, rng);
      cin = cout;
    }
    head.init(name + ".head", widths.front(), 1, 1, 0, rng);
  }
  PlaneTensor<T> forward(PlaneTensor<T> bottom,
                         const std::vector<PlaneTensor<T>>& skips,
                         NetMode mode) {
    PlaneTensor<T> x = std::move(bottom);
    for (std::size_t i = 0; i < levels.size(); ++i)
      x = levels[i].forward(std::move(x), skips[skips.size() - 1 - i], mode);
    return out_act.forward(head.forward(std::move(x)));
  }
  // Returns {grad at the transition output, skip grads in encoder order}.
  std::pair<PlaneTensor<T>, std::vector<PlaneTensor<T>>> backward(
      PlaneTensor<T> g_out) {
    PlaneTensor<T> g = head.backward(out_act.backward(std::move(g_out)));
    std::vector<PlaneTensor<T>> skip_grads(levels.size());
    for (int i = int(levels.size()) - 1; i >= 0; --i) {
      auto [g_deeper, g_skip] = levels[i].backward(std::move(g));
      g = std::move(g_deeper);
      skip_grads[levels.size() - 1 - i] = std::move(g_skip);
    }
    return {std::move(g), std::move(skip_grads)};
  }
  template <class F>
  void visit_params(F&& f) {
    for (auto& l : levels) l.visit_params(f);
    f(head.weight);
    f(head.bias);
  }
  template <class F>
  void visit_buffers(F&& f) {
    for (auto& l : levels) l.visit_buffers(f);
  }
};

}  // namespace detail

// Outputs of one main-module pass: fence cut, wild cut, reconstruction.
template <class T>
struct MainModuleOutput {
  Tensor<T> fence, wild, recon;
};

// ---------------------------------------------------------------------------
// Main module M: shared encoder, two mirrored decoders with skip connections
// into both, and a 1x1 sigmoid reconstructor over the concatenated cuts.
// ---------------------------------------------------------------------------
template <class T>
struct MainModule {
  NetworkSpec spec;
  std::vector<detail::EncoderBlock<T>> enc;
  detail::ConvBnRelu<T> trans1, trans2;
  detail::Decoder<T> dec_fence, dec_wild;
  Conv2d<T> recon;  // 1x1, 2 -> 1
  SigmoidPlane<T> recon_act;
  Rng dropout_rng;

  // captured at forward for introspection/tests
  std::vector<std::array<int, 2>> level_dims;

  void build(const NetworkSpec& s, std::uint64_t seed) {
    spec = s;
    spec.validate();
    Rng rng(seed);
    dropout_rng = rng.fork(0xd0);
    enc.resize(s.encoder_widths.size());
    int cin = 1;
    for (std::size_t i = 0; i < enc.size(); ++i) {
      enc[i].init("enc" + std::to_string(i + 1), cin, s.encoder_widths[i], s,
                  rng, &dropout_rng, true);
      cin = s.encoder_widths[i];
    }
    trans1.init("trans.c1", cin, s.transition_width, s, rng);
    trans2.init("trans.c2", s.transition_width, s.transition_width, s, rng);
    dec_fence.init("fence", s, rng);
    dec_wild.init("wild", s, rng);
    recon.init("recon", 2, 1, 1, 0, rng);
  }

  MainModuleOutput<T> forward(const Tensor<T>& batch, NetMode mode) {
    if (batch.c != 1 || batch.h != spec.input_h || batch.w != spec.input_w)
      throw std::invalid_argument("main module: batch dims do not match spec");
    level_dims.clear();
    level_dims.push_back({batch.h, batch.w});
    std::vector<PlaneTensor<T>> skips;
    PlaneTensor<T> x = import_batch(batch);
    for (auto& block : enc) {
      auto [down, skip] = block.forward(std::move(x), mode);
      x = std::move(down);
      skips.push_back(std::move(skip));
      level_dims.push_back({x.h, x.w});
    }
    x = trans2.forward(trans1.forward(std::move(x), mode), mode);

    PlaneTensor<T> fence_pt = dec_fence.forward(x, skips, mode);  // x reused
    PlaneTensor<T> wild_pt = dec_wild.forward(std::move(x), skips, mode);
    PlaneTensor<T> recon_pt =
        recon_act.forward(recon.forward(concat_planes(fence_pt, wild_pt)));

    MainModuleOutput<T> out;
    out.fence = export_channel(fence_pt);
    out.wild = export_channel(wild_pt);
    out.recon = export_channel(recon_pt);
    return out;
  }

  // Gradients with respect to the three outputs; d_fence/d_wild carry the
  // direct contributions (adversarial, disjoincy), d_recon the MSE path.
  void backward(const Tensor<T>& d_fence, const Tensor<T>& d_wild,
                const Tensor<T>& d_recon) {
    PlaneTensor<T> d_cat =
        recon.backward(recon_act.backward(import_batch(d_recon)));
    PlaneTensor<T> d_fc, d_wc;
    split_planes(d_cat, 1, d_fc, d_wc);
    add_planes(d_fc, import_batch(d_fence));
    add_planes(d_wc, import_batch(d_wild));

    auto [g_bottom_f, skip_g_f] = dec_fence.backward(std::move(d_fc));
    auto [g_bottom_w, skip_g_w] = dec_wild.backward(std::move(d_wc));
    add_planes(g_bottom_f, g_bottom_w);

    PlaneTensor<T> g = trans1.backward(trans2.backward(std::move(g_bottom_f)));
    for (int i = int(enc.size()) - 1; i >= 0; --i) {
      add_planes(skip_g_f[i], skip_g_w[i]);
      g = enc[i].backward(std::move(g), std::move(skip_g_f[i]));
    }
  }

  template <class F>
  void visit_params(F&& f) {
    for (auto& b : enc) b.visit_params(f);
    trans1.visit_params(f);
    trans2.visit_params(f);
    dec_fence.visit_params(f);
    dec_wild.visit_params(f);
    f(recon.weight);
    f(recon.bias);
  }
  template <class F>
  void visit_buffers(F&& f) {
    for (auto& b : enc) b.visit_buffers(f);
    trans1.visit_buffers(f);
    trans2.visit_buffers(f);
    dec_fence.visit_buffers(f);
    dec_wild.visit_buffers(f);
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit_params([&](Param<T>& p) { out.push_back(&p); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Discriminator D: the encoder architecture (including the transition) with
// a dense head and tanh output in (-1,1).
// ---------------------------------------------------------------------------
template <class T>
struct Discriminator {
  NetworkSpec spec;
  std::vector<detail::EncoderBlock<T>> blocks;
  detail::ConvBnRelu<T> trans1, trans2;
  Dense<T> dense;
  Tanh<T> out_act;

  void build(const NetworkSpec& s, std::uint64_t seed) {
    spec = s;
    spec.validate();
    Rng rng(seed);
    blocks.resize(s.encoder_widths.size());
    int cin = 1;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      // No dropout in the discriminator.
      blocks[i].init("d.enc" + std::to_string(i + 1), cin,
                     s.encoder_widths[i], s, rng, nullptr, false);
      cin = s.encoder_widths[i];
    }
    trans1.init("d.trans.c1", cin, s.transition_width, s, rng);
    trans2.init("d.trans.c2", s.transition_width, s.transition_width, s, rng);
    const int down = 1 << s.levels();
    const int flat =
        s.transition_width * (s.input_h / down) * (s.input_w / down);
    dense.init("d.dense", flat, 1, rng);
  }

  // One tanh-bounded scalar per image.
  std::vector<T> forward(const Tensor<T>& batch, NetMode mode) {
    if (batch.c != 1 || batch.h != spec.input_h || batch.w != spec.input_w)
      throw std::invalid_argument("discriminator: batch dims mismatch");
    PlaneTensor<T> x = import_batch(batch);
    for (auto& b : blocks) {
      auto [down, skip] = b.forward(std::move(x), mode);
      x = std::move(down);
    }
    x = trans2.forward(trans1.forward(std::move(x), mode), mode);
    Tensor<T> s = out_act.forward(dense.forward(x));
    return std::vector<T>(s.v.begin(), s.v.end());
  }

  // Gradient with respect to the input batch given dL/dscore per image.
  Tensor<T> backward(const std::vector<T>& d_scores) {
    Tensor<T> g(int(d_scores.size()), 1, 1, 1);
    std::copy(d_scores.begin(), d_scores.end(), g.v.begin());
    PlaneTensor<T> gx = dense.backward(out_act.backward(std::move(g)));
    gx = trans1.backward(trans2.backward(std::move(gx)));
    for (int i = int(blocks.size()) - 1; i >= 0; --i) {
      // No skip consumers here, so the skip gradient is zero.
      auto& b = blocks[i];
      PlaneTensor<T> g_skip(b.pool.c, b.pool.n, b.pool.in_h, b.pool.in_w);
      gx = b.backward(std::move(gx), std::move(g_skip));
    }
    return export_channel(gx);
  }

  template <class F>
  void visit_params(F&& f) {
    for (auto& b : blocks) b.visit_params(f);
    trans1.visit_params(f);
    trans2.visit_params(f);
    f(dense.weight);
    f(dense.bias);
  }
  template <class F>
  void visit_buffers(F&& f) {
    for (auto& b : blocks) b.visit_buffers(f);
    trans1.visit_buffers(f);
    trans2.visit_buffers(f);
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit_params([&](Param<T>& p) { out.push_back(&p); });
    return out;
  }
};

// Exact count of trainable scalars.
template <class Net>
std::size_t count_parameters(Net& net) {
  std::size_t total = 0;
  net.visit_params([&](auto& p) { total += p.v.size(); });
  return total;
}

// Convenience builders mirroring the operation names used elsewhere.
template <class T = float>
MainModule<T> build_main_module(const NetworkSpec& spec, std::uint64_t seed) {
  MainModule<T> m;
  m.build(spec, seed);
  return m;
}

template <class T = float>
Discriminator<T> build_discriminator(const NetworkSpec& spec,
                                     std::uint64_t seed) {
  Discriminator<T> d;
  d.build(spec, seed);
  return d;
}

}  // namespace ascnet
