#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ascnet/rng.hpp"

namespace ascnet {

// 2D single-channel slice with intensities in [0,1]; the universal currency
// of the pipeline.
struct ImageSlice {
  int height = 0, width = 0;
  std::vector<float> pixels;  // row-major, height*width
  std::string subject_id;
  int slice_index = 0;

  ImageSlice() = default;
  ImageSlice(int h, int w, std::string subject = {}, int index = 0)
      : height(h), width(w),
        pixels(static_cast<std::size_t>(h) * w, 0.0f),
        subject_id(std::move(subject)), slice_index(index) {}

  float& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
  float at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
};

// Binary 2D mask, values in {0,1}.
struct Mask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  Mask() = default;
  Mask(int h, int w)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const {
    return pixels[std::size_t(y) * width + x];
  }
  std::size_t count() const {
    std::size_t k = 0;
    for (auto p : pixels) k += p != 0;
    return k;
  }
};

enum class DatasetRole { query, reference };

struct SliceDataset {
  std::vector<ImageSlice> slices;
  DatasetRole role = DatasetRole::query;
  std::vector<Mask> masks;  // empty, or parallel to slices

  std::size_t size() const { return slices.size(); }
  bool has_masks() const { return !masks.empty(); }

  void validate() const {
    if (has_masks()) {
      if (masks.size() != slices.size())
        throw std::invalid_argument("dataset: masks not parallel to slices");
      for (std::size_t i = 0; i < slices.size(); ++i)
        if (masks[i].height != slices[i].height ||
            masks[i].width != slices[i].width)
          throw std::invalid_argument("dataset: mask/slice dimension mismatch");
      if (role == DatasetRole::reference)
        throw std::invalid_argument(
            "dataset: reference sets never carry masks into training");
    }
  }
};

// 3D volume stored as (depth, height, width); depth indexes axial slices.
struct Volume {
  int depth = 0, height = 0, width = 0;
  std::vector<float> voxels;

  Volume() = default;
  Volume(int d, int h, int w)
      : depth(d), height(h), width(w),
        voxels(static_cast<std::size_t>(d) * h * w, 0.0f) {}

  float& at(int z, int y, int x) {
    return voxels[(std::size_t(z) * height + y) * width + x];
  }
  float at(int z, int y, int x) const {
    return voxels[(std::size_t(z) * height + y) * width + x];
  }
  std::size_t size() const { return voxels.size(); }
};

// Min-max normalization over the whole 3D volume (not per slice).
inline Volume normalize_volume(const Volume& volume) {
  if (volume.size() == 0)
    throw std::invalid_argument("normalize_volume: empty volume");
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (float v : volume.voxels) {
    if (!std::isfinite(v))
      throw std::invalid_argument("normalize_volume: invalid intensities");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo)
    throw std::invalid_argument("normalize_volume: degenerate volume");
  Volume out = volume;
  const float scale = 1.0f / (hi - lo);
  for (float& v : out.voxels) v = (v - lo) * scale;
  return out;
}

// One ImageSlice per axial index; slices whose pixel sum is exactly zero are
// dropped when drop_empty is set. slice_index keeps the original position.
inline std::vector<ImageSlice> extract_slices(const Volume& volume,
                                              bool drop_empty,
                                              const std::string& subject_id) {
  std::vector<ImageSlice> out;
  out.reserve(volume.depth);
  for (int z = 0; z < volume.depth; ++z) {
    ImageSlice s(volume.height, volume.width, subject_id, z);
    const float* src = volume.voxels.data() +
                       std::size_t(z) * volume.height * volume.width;
    std::copy(src, src + s.size(), s.pixels.begin());
    if (drop_empty) {
      double sum = 0.0;
      for (float v : s.pixels) sum += v;
      if (sum == 0.0) continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Bilinear resize with half-pixel centers; output clamped back to [0,1].
inline ImageSlice resize_slice(const ImageSlice& slice, int target_h,
                               int target_w) {
  if (target_h <= 0 || target_w <= 0)
    throw std::invalid_argument("resize_slice: non-positive target");
  if (slice.height == target_h && slice.width == target_w) return slice;
  ImageSlice out(target_h, target_w, slice.subject_id, slice.slice_index);
  const double sy = double(slice.height) / target_h;
  const double sx = double(slice.width) / target_w;
  for (int y = 0; y < target_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = int(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, slice.height - 1);
    int y1c = std::clamp(y0 + 1, 0, slice.height - 1);
    for (int x = 0; x < target_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = int(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, slice.width - 1);
      int x1c = std::clamp(x0 + 1, 0, slice.width - 1);
      double top = slice.at(y0c, x0c) * (1.0 - wx) + slice.at(y0c, x1c) * wx;
      double bot = slice.at(y1c, x0c) * (1.0 - wx) + slice.at(y1c, x1c) * wx;
      double v = top * (1.0 - wy) + bot * wy;
      out.at(y, x) = float(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// Pads the smaller set with randomly sampled duplicates until both sets have
// the size of the larger one. The larger set is returned unchanged.
inline std::pair<SliceDataset, SliceDataset> balance_sets(
    const SliceDataset& a, const SliceDataset& b, std::uint64_t seed) {
  if (a.size() == 0 || b.size() == 0)
    throw std::invalid_argument("balance_sets: empty input set");
  SliceDataset a2 = a, b2 = b;
  Rng rng(seed);
  auto pad = [&rng](SliceDataset& d, std::size_t target) {
    const std::size_t original = d.slices.size();
    while (d.slices.size() < target) {
      std::size_t pick = rng.uniform_index(original);
      d.slices.push_back(d.slices[pick]);
      if (d.has_masks()) d.masks.push_back(d.masks[pick]);
    }
  };
  const std::size_t target = std::max(a.size(), b.size());
  pad(a2, target);
  pad(b2, target);
  return {std::move(a2), std::move(b2)};
}

// Output = slice * mask, elementwise.
inline ImageSlice apply_region_mask(const ImageSlice& slice, const Mask& mask) {
  if (slice.height != mask.height || slice.width != mask.width)
    throw std::invalid_argument("apply_region_mask: dimension mismatch");
  ImageSlice out = slice;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    if (!mask.pixels[i]) out.pixels[i] = 0.0f;
  return out;
}

// A subject's extracted slices plus per-slice ground truth; input to the
// cross-validation split.
struct SubjectRecord {
  std::string subject_id;
  std::vector<ImageSlice> slices;
  std::vector<Mask> masks;  // parallel; empty mask plane = anomaly-free slice
};

struct FoldSplit {
  int fold_id = 0;
  SliceDataset train_reference;
  SliceDataset train_query;
  SliceDataset held_out;
};

// Patient-wise split into `folds` disjoint groups. Within a fold's training
// group the slices get a train_fraction/rest split: anomaly-free slices of
// the large part form train_reference, anomalous slices of the large part
// plus all slices of the small part form train_query. The other groups form
// held_out.
inline std::vector<FoldSplit> split_crossval(
    const std::vector<SubjectRecord>& corpus, int folds,
    double train_fraction, std::uint64_t seed) {
  if (int(corpus.size()) < folds)
    throw std::invalid_argument("split_crossval: fewer subjects than folds");
  if (folds < 2) throw std::invalid_argument("split_crossval: folds must be >=2");
  for (const auto& s : corpus)
    if (s.masks.size() != s.slices.size())
      throw std::invalid_argument("split_crossval: subject masks misaligned");

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> groups(folds);
  for (std::size_t i = 0; i < order.size(); ++i)
    groups[i % folds].push_back(order[i]);

  std::vector<FoldSplit> out;
  for (int f = 0; f < folds; ++f) {
    FoldSplit split;
    split.fold_id = f;
    split.train_reference.role = DatasetRole::reference;
    split.train_query.role = DatasetRole::query;
    split.held_out.role = DatasetRole::query;

    // Slice-level train_fraction split inside the training group.
    std::vector<std::pair<std::size_t, std::size_t>> train_slices;
    for (std::size_t subj : groups[f])
      for (std::size_t k = 0; k < corpus[subj].slices.size(); ++k)
        train_slices.emplace_back(subj, k);
    Rng fold_rng = rng.fork(1000 + f);
    fold_rng.shuffle(train_slices);
    const std::size_t n_big =
        std::size_t(std::floor(train_fraction * double(train_slices.size())));

    for (std::size_t i = 0; i < train_slices.size(); ++i) {
      auto [subj, k] = train_slices[i];
      const auto& slice = corpus[subj].slices[k];
      const auto& mask = corpus[subj].masks[k];
      const bool anomalous = mask.count() > 0;
      if (i < n_big && !anomalous) {
        split.train_reference.slices.push_back(slice);
      } else {
        split.train_query.slices.push_back(slice);
        split.train_query.masks.push_back(mask);
      }
    }
    for (int g = 0; g < folds; ++g) {
      if (g == f) continue;
      for (std::size_t subj : groups[g])
        for (std::size_t k = 0; k < corpus[subj].slices.size(); ++k) {
          split.held_out.slices.push_back(corpus[subj].slices[k]);
          split.held_out.masks.push_back(corpus[subj].masks[k]);
        }
    }
    out.push_back(std::move(split));
  }
  return out;
}

}  // namespace ascnet
