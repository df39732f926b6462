#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ascnet/adam.hpp"
#include "ascnet/checkpoint.hpp"
#include "ascnet/image.hpp"
#include "ascnet/losses.hpp"
#include "ascnet/model.hpp"
#include "ascnet/segment.hpp"

namespace ascnet {

struct TrainingSchedule {
  int stage1_cycles = 2;
  int stage2_cycles = 1;
  int epochs_per_d_step = 1;
  int epochs_per_m_step = 1;
  int batch_size = 16;
  float learning_rate = 5e-5f;
  float loss_w_fence = 1.0f;
  float loss_w_disjoint = 1.0f;
  float loss_w_recon = 1.0f;
  bool stop_on_peak_separation = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (stage1_cycles < 1 || stage2_cycles < 0)
      throw std::invalid_argument("schedule: stage1_cycles must be >= 1");
    if (epochs_per_d_step < 1 || epochs_per_m_step < 1)
      throw std::invalid_argument("schedule: epochs per step must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("schedule: bad batch size");
    if (!(learning_rate > 0)) throw std::invalid_argument("schedule: lr <= 0");
    if (loss_w_fence < 0 || loss_w_disjoint < 0 || loss_w_recon < 0)
      throw std::invalid_argument("schedule: negative loss weight");
  }
};

struct StepLog {
  long long step = 0;
  int stage = 1;
  int cycle = 0;
  char phase = 'D';  // 'D' or 'M'
  std::vector<std::pair<std::string, double>> losses;
  int n_slices = 0;
  double ms_per_slice = 0.0;
};

struct PeakReport {
  int n_peaks = 0;
  bool separated = false;  // three-or-four-peak band
};

template <class T>
struct TrainingState;

template <class T = float>
struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(TrainingState<T>&)> on_cycle_end;
};

template <class T>
struct TrainingState {
  NetworkSpec spec;
  TrainingSchedule schedule;
  MainModule<T> main;
  Discriminator<T> disc;
  Adam<T> opt_main, opt_disc;
  int stage = 1;
  int cycle = 0;        // completed cycles, global across stages
  long long step = 0;   // optimizer updates, D and M pooled
  SliceDataset augmented_reference;
  Rng rng;  // shuffle stream

  void rebind_optimizers() {
    // Adam holds raw pointers into the modules; they must be refreshed
    // whenever the state object is relocated.
    opt_main.params = main.parameters();
    opt_disc.params = disc.parameters();
  }
};

template <class T = float>
std::unique_ptr<TrainingState<T>> init_training(const NetworkSpec& spec,
                                                const TrainingSchedule& sch) {
  spec.validate();
  sch.validate();
  auto st = std::make_unique<TrainingState<T>>();
  st->spec = spec;
  st->schedule = sch;
  Rng root(sch.seed);
  st->main.build(spec, root.fork(1).next());
  st->disc.build(spec, root.fork(2).next());
  st->rng = root.fork(3);
  st->main.dropout_rng = root.fork(4);
  st->opt_main.attach(st->main.parameters(), T(sch.learning_rate));
  st->opt_disc.attach(st->disc.parameters(), T(sch.learning_rate));
  st->augmented_reference.role = DatasetRole::reference;
  return st;
}

namespace detail {

template <class T>
Tensor<T> gather_batch(const NetworkSpec& spec,
                       const std::vector<const ImageSlice*>& slices) {
  Tensor<T> batch(int(slices.size()), 1, spec.input_h, spec.input_w);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const ImageSlice& s = *slices[i];
    if (s.height != spec.input_h || s.width != spec.input_w)
      throw std::invalid_argument("trainer: slice dims do not match spec");
    std::copy(s.pixels.begin(), s.pixels.end(), batch.plane(int(i), 0));
  }
  return batch;
}

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

// Run the main module over a dataset in inference mode, returning the three
// outputs slice by slice.
template <class T>
std::vector<MainModuleOutput<T>> forward_dataset(MainModule<T>& main,
                                                 const SliceDataset& data,
                                                 int batch_size) {
  std::vector<MainModuleOutput<T>> out;
  std::vector<const ImageSlice*> chunk;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    chunk.clear();
    for (std::size_t j = i; j < std::min(i + batch_size, data.size()); ++j)
      chunk.push_back(&data.slices[j]);
    auto batch = detail::gather_batch<T>(main.spec, chunk);
    auto res = main.forward(batch, NetMode::eval);
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      MainModuleOutput<T> one;
      auto take = [&](const Tensor<T>& src) {
        Tensor<T> t(1, 1, src.h, src.w);
        std::copy(src.plane(int(j), 0), src.plane(int(j), 0) + src.plane_size(),
                  t.data());
        return t;
      };
      one.fence = take(res.fence);
      one.wild = take(res.wild);
      one.recon = take(res.recon);
      out.push_back(std::move(one));
    }
  }
  return out;
}

template <class T>
ImageSlice tensor_to_slice(const Tensor<T>& t, int sample,
                           const std::string& subject = {}, int index = 0) {
  ImageSlice s(t.h, t.w, subject, index);
  const T* src = t.plane(sample, 0);
  for (std::size_t i = 0; i < s.size(); ++i)
    s.pixels[i] = std::clamp(float(src[i]), 0.0f, 1.0f);
  return s;
}

// ---------------------------------------------------------------------------
// Discriminator step: reference images (plus the stage-2 augmentation) are
// labeled +1, fence cuts generated from the frozen main module are labeled
// -1, and the combined stream is shuffled before batching.
// ---------------------------------------------------------------------------
template <class T>
void train_discriminator_step(TrainingState<T>& st,
                              const SliceDataset& reference,
                              const SliceDataset& query,
                              const TrainHooks<T>& hooks = {}) {
  if (reference.size() == 0 || query.size() == 0)
    throw std::invalid_argument("train_discriminator_step: empty datasets");
  struct Item {
    const ImageSlice* slice;
    bool fake;
  };
  std::vector<Item> stream;
  for (const auto& s : reference.slices) stream.push_back({&s, false});
  if (st.stage >= 2)
    for (const auto& s : st.augmented_reference.slices)
      stream.push_back({&s, false});
  for (const auto& s : query.slices) stream.push_back({&s, true});

  const int B = st.schedule.batch_size;
  for (int epoch = 0; epoch < st.schedule.epochs_per_d_step; ++epoch) {
    st.rng.shuffle(stream);
    for (std::size_t beg = 0; beg < stream.size(); beg += B) {
      const double t0 = detail::now_ms();
      const std::size_t end = std::min(beg + B, stream.size());
      std::vector<const ImageSlice*> fake_sources, real_sources;
      for (std::size_t i = beg; i < end; ++i)
        (stream[i].fake ? fake_sources : real_sources)
            .push_back(stream[i].slice);

      Tensor<T> batch(int(end - beg), 1, st.spec.input_h, st.spec.input_w);
      std::vector<T> targets(end - beg);
      // Fence cuts are regenerated fresh for every batch with M frozen.
      Tensor<T> fakes;
      if (!fake_sources.empty()) {
        auto fake_in = detail::gather_batch<T>(st.spec, fake_sources);
        fakes = st.main.forward(fake_in, NetMode::eval).fence;
      }
      std::size_t fi = 0, ri = 0;
      for (std::size_t i = beg; i < end; ++i) {
        const std::size_t pos = i - beg;
        if (stream[i].fake) {
          std::copy(fakes.plane(int(fi), 0),
                    fakes.plane(int(fi), 0) + fakes.plane_size(),
                    batch.plane(int(pos), 0));
          targets[pos] = T(-1);
          ++fi;
        } else {
          const ImageSlice& s = *real_sources[ri];
          std::copy(s.pixels.begin(), s.pixels.end(), batch.plane(int(pos), 0));
          targets[pos] = T(1);
          ++ri;
        }
      }

      auto scores = st.disc.forward(batch, NetMode::train);
      std::vector<T> fake_scores, real_scores;
      for (std::size_t i = 0; i < scores.size(); ++i)
        (targets[i] < 0 ? fake_scores : real_scores).push_back(scores[i]);
      const double loss =
          fake_scores.empty() && real_scores.empty()
              ? 0.0
              : double(loss_discriminator(std::span<const T>(fake_scores),
                                          std::span<const T>(real_scores)));

      std::vector<T> d_scores(scores.size());
      const T inv = T(1) / T(scores.size());
      for (std::size_t i = 0; i < scores.size(); ++i)
        d_scores[i] = detail::sgn(scores[i] - targets[i]) * inv;
      st.disc.backward(d_scores);
      st.opt_disc.step();
      st.opt_disc.zero_grads();
      ++st.step;

      if (hooks.on_step) {
        StepLog log;
        log.step = st.step;
        log.stage = st.stage;
        log.cycle = st.cycle + 1;
        log.phase = 'D';
        log.losses = {{"loss_discriminator", loss}};
        log.n_slices = int(end - beg);
        log.ms_per_slice = (detail::now_ms() - t0) / double(end - beg);
        hooks.on_step(log);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Main-module step: minimizes the composite objective with the discriminator
// frozen but connected, so the adversarial gradient reaches the fence decoder.
// ---------------------------------------------------------------------------
template <class T>
void train_main_step(TrainingState<T>& st, const SliceDataset& query,
                     const TrainHooks<T>& hooks = {}) {
  if (query.size() == 0)
    throw std::invalid_argument("train_main_step: empty query set");
  std::vector<const ImageSlice*> stream;
  for (const auto& s : query.slices) stream.push_back(&s);

  const int B = st.schedule.batch_size;
  const T wf = T(st.schedule.loss_w_fence);
  const T ww = T(st.schedule.loss_w_disjoint);
  const T wr = T(st.schedule.loss_w_recon);
  for (int epoch = 0; epoch < st.schedule.epochs_per_m_step; ++epoch) {
    st.rng.shuffle(stream);
    for (std::size_t beg = 0; beg < stream.size(); beg += B) {
      const double t0 = detail::now_ms();
      const std::size_t end = std::min(beg + B, stream.size());
      std::vector<const ImageSlice*> chunk(stream.begin() + beg,
                                           stream.begin() + end);
      auto input = detail::gather_batch<T>(st.spec, chunk);

      auto out = st.main.forward(input, NetMode::train);
      auto scores = st.disc.forward(out.fence, NetMode::frozen);

      const T lf = loss_fence(std::span<const T>(scores));
      const T lw = loss_disjoint_batch(out.fence, out.wild);
      const T lr = loss_reconstruction(input, out.recon);
      const T total = loss_main_total(lf, lw, lr, {wf, ww, wr});

      std::vector<T> d_scores(scores.size());
      loss_fence_grad(std::span<const T>(scores), std::span<T>(d_scores));
      for (auto& g : d_scores) g *= wf;
      Tensor<T> d_fence = st.disc.backward(d_scores);

      Tensor<T> g_fence, g_wild;
      loss_disjoint_batch_grad(out.fence, out.wild, g_fence, g_wild);
      for (auto& g : g_fence.v) g *= ww;
      for (auto& g : g_wild.v) g *= ww;
      add_inplace(d_fence, g_fence);

      Tensor<T> g_input, g_recon;
      loss_reconstruction_grad(input, out.recon, g_input, g_recon);
      for (auto& g : g_recon.v) g *= wr;

      st.main.backward(d_fence, g_wild, std::move(g_recon));
      st.opt_main.step();
      st.opt_main.zero_grads();
      // Gradients leaked into the frozen discriminator are discarded.
      st.opt_disc.zero_grads();
      ++st.step;

      if (hooks.on_step) {
        StepLog log;
        log.step = st.step;
        log.stage = st.stage;
        log.cycle = st.cycle + 1;
        log.phase = 'M';
        log.losses = {{"loss_fence", double(lf)},
                      {"loss_disjoint", double(lw)},
                      {"loss_reconstruction", double(lr)},
                      {"loss_main_total", double(total)}};
        log.n_slices = int(end - beg);
        log.ms_per_slice = (detail::now_ms() - t0) / double(end - beg);
        hooks.on_step(log);
      }
    }
  }
}

// One discriminator step followed by one main step.
template <class T>
void run_cycle(TrainingState<T>& st, const SliceDataset& reference,
               const SliceDataset& query, const TrainHooks<T>& hooks = {}) {
  train_discriminator_step(st, reference, query, hooks);
  train_main_step(st, query, hooks);
  ++st.cycle;
  if (hooks.on_cycle_end) hooks.on_cycle_end(st);
}

// Stage-2 entry: the reference distribution is augmented with the fence cuts
// the current main module generates for it, treated as true images from then
// on. Computed once, with the weights at stage entry.
template <class T>
void enter_stage2(TrainingState<T>& st, const SliceDataset& reference) {
  if (st.stage != 1)
    throw std::invalid_argument("enter_stage2: called twice");
  st.augmented_reference.slices.clear();
  st.augmented_reference.role = DatasetRole::reference;
  auto outputs = forward_dataset(st.main, reference, st.schedule.batch_size);
  for (std::size_t i = 0; i < outputs.size(); ++i)
    st.augmented_reference.slices.push_back(tensor_to_slice(
        outputs[i].fence, 0, "aug:" + reference.slices[i].subject_id,
        reference.slices[i].slice_index));
  st.stage = 2;
}

// Advisory monitor: counts detected peaks of the pooled reconstruction
// histogram over a probe set; the guidance band is three or four peaks.
template <class T>
PeakReport peak_separation_monitor(TrainingState<T>& st,
                                   const SliceDataset& probe) {
  auto outputs = forward_dataset(st.main, probe, st.schedule.batch_size);
  HistogramProfile hist;
  for (auto& out : outputs)
    accumulate_histogram(hist, tensor_to_slice(out.recon, 0));
  PeakReport report;
  report.n_peaks = int(find_peaks(hist).size());
  report.separated = report.n_peaks >= 3 && report.n_peaks <= 4;
  return report;
}

// ---------------------------------------------------------------------------
// Full schedule: stage-1 cycles, stage switch, stage-2 cycles. Resumes from
// the state's current cycle when it is mid-schedule (checkpoint restart).
// ---------------------------------------------------------------------------
template <class T>
void run_training(TrainingState<T>& st, const SliceDataset& reference,
                  const SliceDataset& query, const TrainHooks<T>& hooks = {}) {
  if (reference.size() != query.size())
    throw std::invalid_argument(
        "run_training: datasets must be balanced first (see balance_sets)");
  const int total = st.schedule.stage1_cycles + st.schedule.stage2_cycles;
  // The monitor is advisory; it only terminates when explicitly enabled.
  auto stop_early = [&] {
    return st.schedule.stop_on_peak_separation && st.cycle < total &&
           peak_separation_monitor(st, query).separated;
  };
  while (st.stage == 1 && st.cycle < st.schedule.stage1_cycles) {
    run_cycle(st, reference, query, hooks);
    if (stop_early()) return;
  }
  if (st.stage == 1) enter_stage2(st, reference);
  while (st.cycle < total) {
    run_cycle(st, reference, query, hooks);
    if (stop_early()) return;
  }
}

// ---------------------------------------------------------------------------
// Checkpointing: spec echo, named parameter/buffer/optimizer arrays, training
// progress and RNG streams. Round-trips bit-exactly.
// ---------------------------------------------------------------------------
template <class T>
Archive<T> state_to_archive(TrainingState<T>& st) {
  Archive<T> ar;
  auto& meta = ar.meta;
  meta["format"] = "ascnet-checkpoint";
  meta["version"] = 1;
  meta["spec"] = {{"input_h", st.spec.input_h},
                  {"input_w", st.spec.input_w},
                  {"encoder_widths", st.spec.encoder_widths},
                  {"transition_width", st.spec.transition_width},
                  {"conv_kernel", st.spec.conv_kernel},
                  {"pool_kernel", st.spec.pool_kernel},
                  {"dropout_rate", st.spec.dropout_rate},
                  {"bn_eps", st.spec.bn_eps},
                  {"bn_momentum", st.spec.bn_momentum}};
  meta["schedule"] = {{"stage1_cycles", st.schedule.stage1_cycles},
                      {"stage2_cycles", st.schedule.stage2_cycles},
                      {"epochs_per_d_step", st.schedule.epochs_per_d_step},
                      {"epochs_per_m_step", st.schedule.epochs_per_m_step},
                      {"batch_size", st.schedule.batch_size},
                      {"learning_rate", st.schedule.learning_rate},
                      {"loss_w_fence", st.schedule.loss_w_fence},
                      {"loss_w_disjoint", st.schedule.loss_w_disjoint},
                      {"loss_w_recon", st.schedule.loss_w_recon},
                      {"stop_on_peak_separation",
                       st.schedule.stop_on_peak_separation},
                      {"seed", st.schedule.seed}};
  meta["progress"] = {{"stage", st.stage},
                      {"cycle", st.cycle},
                      {"step", st.step},
                      {"seed", st.schedule.seed}};
  meta["rng"] = {{"trainer", st.rng.state()},
                 {"dropout", st.main.dropout_rng.state()}};
  meta["adam"] = {{"main_t", st.opt_main.t}, {"disc_t", st.opt_disc.t}};

  st.main.visit_params([&](Param<T>& p) {
    ar.arrays.emplace_back("param/main/" + p.name, p.v);
  });
  st.main.visit_buffers([&](const std::string& n, std::vector<T>& b) {
    ar.arrays.emplace_back("buffer/main/" + n, b);
  });
  st.disc.visit_params([&](Param<T>& p) {
    ar.arrays.emplace_back("param/disc/" + p.name, p.v);
  });
  st.disc.visit_buffers([&](const std::string& n, std::vector<T>& b) {
    ar.arrays.emplace_back("buffer/disc/" + n, b);
  });
  for (std::size_t k = 0; k < st.opt_main.params.size(); ++k) {
    ar.arrays.emplace_back("adam/main/" + st.opt_main.params[k]->name + "/m",
                           st.opt_main.m[k]);
    ar.arrays.emplace_back("adam/main/" + st.opt_main.params[k]->name + "/v",
                           st.opt_main.v[k]);
  }
  for (std::size_t k = 0; k < st.opt_disc.params.size(); ++k) {
    ar.arrays.emplace_back("adam/disc/" + st.opt_disc.params[k]->name + "/m",
                           st.opt_disc.m[k]);
    ar.arrays.emplace_back("adam/disc/" + st.opt_disc.params[k]->name + "/v",
                           st.opt_disc.v[k]);
  }
  if (!st.augmented_reference.slices.empty()) {
    const auto& aug = st.augmented_reference.slices;
    meta["aug_ref"] = {{"count", aug.size()},
                       {"height", aug.front().height},
                       {"width", aug.front().width}};
    std::vector<T> packed;
    packed.reserve(aug.size() * aug.front().size());
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& s : aug) {
      ids.push_back(s.subject_id);
      for (float v : s.pixels) packed.push_back(T(v));
    }
    meta["aug_ref"]["subject_ids"] = ids;
    ar.arrays.emplace_back("aug_ref/pixels", std::move(packed));
  }
  return ar;
}

template <class T>
void save_checkpoint(const std::string& path, TrainingState<T>& st) {
  write_archive(path, state_to_archive(st));
}

template <class T = float>
std::unique_ptr<TrainingState<T>> load_checkpoint(const std::string& path) {
  Archive<T> ar = read_archive<T>(path);
  const auto& meta = ar.meta;
  if (meta.value("format", "") != "ascnet-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized format in " + path);

  NetworkSpec spec;
  const auto& js = meta.at("spec");
  spec.input_h = js.at("input_h");
  spec.input_w = js.at("input_w");
  spec.encoder_widths = js.at("encoder_widths").template get<std::vector<int>>();
  spec.transition_width = js.at("transition_width");
  spec.conv_kernel = js.at("conv_kernel");
  spec.pool_kernel = js.at("pool_kernel");
  spec.dropout_rate = js.at("dropout_rate");
  spec.bn_eps = js.at("bn_eps");
  spec.bn_momentum = js.at("bn_momentum");

  TrainingSchedule sch;
  const auto& jc = meta.at("schedule");
  sch.stage1_cycles = jc.at("stage1_cycles");
  sch.stage2_cycles = jc.at("stage2_cycles");
  sch.epochs_per_d_step = jc.at("epochs_per_d_step");
  sch.epochs_per_m_step = jc.at("epochs_per_m_step");
  sch.batch_size = jc.at("batch_size");
  sch.learning_rate = jc.at("learning_rate");
  sch.loss_w_fence = jc.at("loss_w_fence");
  sch.loss_w_disjoint = jc.at("loss_w_disjoint");
  sch.loss_w_recon = jc.at("loss_w_recon");
  sch.stop_on_peak_separation = jc.at("stop_on_peak_separation");
  sch.seed = jc.at("seed");

  auto st = init_training<T>(spec, sch);
  st->stage = meta.at("progress").at("stage");
  st->cycle = meta.at("progress").at("cycle");
  st->step = meta.at("progress").at("step");

  std::array<std::uint64_t, 4> rs{};
  rs = meta.at("rng").at("trainer").template get<std::array<std::uint64_t, 4>>();
  st->rng.set_state(rs);
  rs = meta.at("rng").at("dropout").template get<std::array<std::uint64_t, 4>>();
  st->main.dropout_rng.set_state(rs);

  auto restore = [&](const std::string& param_prefix,
                     const std::string& buffer_prefix, auto& module) {
    module.visit_params(
        [&](Param<T>& p) { p.v = ar.require(param_prefix + p.name); });
    module.visit_buffers([&](const std::string& n, std::vector<T>& b) {
      b = ar.require(buffer_prefix + n);
    });
  };
  restore("param/main/", "buffer/main/", st->main);
  restore("param/disc/", "buffer/disc/", st->disc);
  st->opt_main.t = meta.at("adam").at("main_t");
  st->opt_disc.t = meta.at("adam").at("disc_t");
  for (std::size_t k = 0; k < st->opt_main.params.size(); ++k) {
    st->opt_main.m[k] = ar.require("adam/main/" +
                                   st->opt_main.params[k]->name + "/m");
    st->opt_main.v[k] = ar.require("adam/main/" +
                                   st->opt_main.params[k]->name + "/v");
  }
  for (std::size_t k = 0; k < st->opt_disc.params.size(); ++k) {
    st->opt_disc.m[k] = ar.require("adam/disc/" +
                                   st->opt_disc.params[k]->name + "/m");
    st->opt_disc.v[k] = ar.require("adam/disc/" +
                                   st->opt_disc.params[k]->name + "/v");
  }
  if (meta.contains("aug_ref")) {
    const auto& ja = meta.at("aug_ref");
    const std::size_t count = ja.at("count");
    const int h = ja.at("height"), w = ja.at("width");
    const auto& packed = ar.require("aug_ref/pixels");
    const auto& ids = ja.at("subject_ids");
    st->augmented_reference.slices.clear();
    for (std::size_t i = 0; i < count; ++i) {
      ImageSlice s(h, w, ids[i].template get<std::string>(), 0);
      for (std::size_t p = 0; p < s.size(); ++p)
        s.pixels[p] = float(packed[i * s.size() + p]);
      st->augmented_reference.slices.push_back(std::move(s));
    }
  }
  return st;
}

}  // namespace ascnet
