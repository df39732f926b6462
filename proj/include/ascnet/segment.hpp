#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ascnet/image.hpp"
#include "ascnet/synth.hpp"

namespace ascnet {

// 256-bin intensity histogram over levels round(v*255), with detected peaks.
struct HistogramProfile {
  std::array<std::uint64_t, 256> bins{};
  std::vector<int> peaks;  // strictly increasing bin indices

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto b : bins) t += b;
    return t;
  }
};

// round-half-up of v*255
inline int intensity_level(float v) {
  if (!(v >= 0.0f && v <= 1.0f))
    throw std::invalid_argument("histogram: values outside [0,1]");
  return int(std::floor(double(v) * 255.0 + 0.5));
}

inline void accumulate_histogram(HistogramProfile& hist, const ImageSlice& s,
                                 const Mask* region = nullptr) {
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    if (region && !region->pixels[i]) continue;  // excluded pixels are omitted
    ++hist.bins[intensity_level(s.pixels[i])];
  }
}

inline HistogramProfile compute_histogram(const std::vector<ImageSlice>& images) {
  HistogramProfile h;
  for (const auto& s : images) accumulate_histogram(h, s);
  return h;
}

inline HistogramProfile compute_histogram(const ImageSlice& image) {
  HistogramProfile h;
  accumulate_histogram(h, image);
  return h;
}

// Peaks of the smoothed histogram: strict local maxima (one-sided at the
// boundaries) whose prominence over the higher flanking minimum reaches
// min_prominence_fraction of the smoothed maximum. Smoothing is a centered
// moving average truncated at the edges.
inline std::vector<int> find_peaks(const HistogramProfile& hist,
                                   double min_prominence_fraction = 0.05,
                                   int smoothing_window = 5) {
  if (smoothing_window < 1 || smoothing_window % 2 == 0)
    throw std::invalid_argument("find_peaks: window must be odd and >= 1");
  if (hist.total() == 0) throw std::invalid_argument("find_peaks: empty histogram");

  const int n = 256;
  const int half = smoothing_window / 2;
  std::array<double, 256> s{};
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
    double acc = 0;
    for (int j = lo; j <= hi; ++j) acc += double(hist.bins[j]);
    s[i] = acc / double(hi - lo + 1);
  }
  double smax = 0;
  for (double v : s) smax = std::max(smax, v);

  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) {
    const bool left_ok = (i == 0) || s[i] > s[i - 1];
    const bool right_ok = (i == n - 1) || s[i] > s[i + 1];
    if (left_ok && right_ok) candidates.push_back(i);
  }

  std::vector<int> peaks;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const int i = candidates[k];
    double flank = -std::numeric_limits<double>::infinity();
    if (k > 0) {
      double m = std::numeric_limits<double>::infinity();
      for (int j = candidates[k - 1] + 1; j < i; ++j) m = std::min(m, s[j]);
      flank = std::max(flank, m);
    }
    if (k + 1 < candidates.size()) {
      double m = std::numeric_limits<double>::infinity();
      for (int j = i + 1; j < candidates[k + 1]; ++j) m = std::min(m, s[j]);
      flank = std::max(flank, m);
    }
    if (k == 0) {
      double m = std::numeric_limits<double>::infinity();
      for (int j = 0; j < i; ++j) m = std::min(m, s[j]);
      if (std::isfinite(m)) flank = std::max(flank, m);
    }
    if (k + 1 == candidates.size()) {
      double m = std::numeric_limits<double>::infinity();
      for (int j = i + 1; j < n; ++j) m = std::min(m, s[j]);
      if (std::isfinite(m)) flank = std::max(flank, m);
    }
    const double prominence =
        std::isfinite(flank) ? s[i] - flank : s[i];
    if (prominence >= min_prominence_fraction * smax) peaks.push_back(i);
  }
  return peaks;
}

// Bright anomalies threshold at the rightmost peak; dark ones at the
// leftmost. The dark segmentation pipeline instead inverts images first and
// reuses the rightmost-peak rule on the inverted histogram (see
// auto_threshold below), which realizes the same cut.
inline int select_threshold(const HistogramProfile& hist, Polarity polarity) {
  if (hist.peaks.empty())
    throw std::invalid_argument("select_threshold: no peaks");
  return polarity == Polarity::bright ? hist.peaks.back() : hist.peaks.front();
}

// v -> 1 - v
inline ImageSlice invert_image(const ImageSlice& slice) {
  ImageSlice out = slice;
  for (float& v : out.pixels) v = 1.0f - v;
  return out;
}

// Pixels outside the region go to the pre-inversion background value 0.
inline ImageSlice mask_out_region(const ImageSlice& slice, const Mask& region) {
  return apply_region_mask(slice, region);
}

struct SegmentationResult {
  Mask mask;
  int threshold_level = 0;
  Polarity polarity = Polarity::bright;
  bool post_processed = false;
};

// mask = (level >= threshold) after the polarity-dependent preparation.
inline SegmentationResult threshold_mask(const ImageSlice& slice,
                                         int threshold_level,
                                         Polarity polarity) {
  if (threshold_level < 0 || threshold_level > 255)
    throw std::invalid_argument("threshold_mask: threshold out of 0..255");
  SegmentationResult res;
  res.threshold_level = threshold_level;
  res.polarity = polarity;
  res.mask = Mask(slice.height, slice.width);
  for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
    const float v = polarity == Polarity::bright ? slice.pixels[i]
                                                 : 1.0f - slice.pixels[i];
    res.mask.pixels[i] = intensity_level(v) >= threshold_level;
  }
  return res;
}

namespace detail {

// Separable min/max filter with zero padding; on binary data this is exactly
// erosion/dilation with a (2r+1)^2 all-ones element.
inline Mask rect_filter(const Mask& in, int radius, bool take_min) {
  const int H = in.height, W = in.width;
  Mask tmp(H, W), out(H, W);
  auto fold = [&](std::uint8_t a, std::uint8_t b) {
    return take_min ? std::uint8_t(a & b) : std::uint8_t(a | b);
  };
  const std::uint8_t pad = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::uint8_t acc = take_min ? 1 : 0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        const std::uint8_t v =
            (xx < 0 || xx >= W) ? pad : in.at(y, xx);
        acc = fold(acc, v);
      }
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::uint8_t acc = take_min ? 1 : 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        const std::uint8_t v =
            (yy < 0 || yy >= H) ? pad : tmp.at(yy, x);
        acc = fold(acc, v);
      }
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace detail

// Morphological opening (erode then dilate) with a 5x5 all-ones element,
// zero padding at the borders.
inline Mask morph_open_close(const Mask& mask) {
  for (auto p : mask.pixels)
    if (p > 1) throw std::invalid_argument("morph_open_close: non-binary input");
  const int radius = 2;  // 5x5
  return detail::rect_filter(detail::rect_filter(mask, radius, true), radius,
                             false);
}

// One pooled threshold for the whole dataset: rightmost peak of the pooled
// histogram, computed over inverted images for dark anomalies. Excluded
// region pixels do not enter the histogram.
inline int auto_threshold(const std::vector<ImageSlice>& recons,
                          Polarity polarity,
                          const std::vector<Mask>* regions = nullptr) {
  if (regions && regions->size() != recons.size())
    throw std::invalid_argument("auto_threshold: region masks misaligned");
  HistogramProfile h;
  for (std::size_t i = 0; i < recons.size(); ++i) {
    const ImageSlice prepared = polarity == Polarity::bright
                                    ? recons[i]
                                    : invert_image(recons[i]);
    accumulate_histogram(h, prepared, regions ? &(*regions)[i] : nullptr);
  }
  h.peaks = find_peaks(h);
  return select_threshold(h, Polarity::bright);
}

// Full per-slice pipeline: [region] -> [invert if dark] -> threshold ->
// [opening]. Predicted anomalies are confined to the region mask.
inline SegmentationResult segment_slice(const ImageSlice& recon,
                                        Polarity polarity, int threshold_level,
                                        const Mask* region = nullptr,
                                        bool post_process = false) {
  ImageSlice prepared = region ? mask_out_region(recon, *region) : recon;
  SegmentationResult res = threshold_mask(prepared, threshold_level, polarity);
  if (region)
    for (std::size_t i = 0; i < res.mask.pixels.size(); ++i)
      if (!region->pixels[i]) res.mask.pixels[i] = 0;
  if (post_process) {
    res.mask = morph_open_close(res.mask);
    if (region)
      for (std::size_t i = 0; i < res.mask.pixels.size(); ++i)
        if (!region->pixels[i]) res.mask.pixels[i] = 0;
    res.post_processed = true;
  }
  return res;
}

struct SegmentOptions {
  Polarity polarity = Polarity::bright;
  int threshold = -1;  // -1 = auto via pooled histogram
  bool post_process = false;
};

inline std::vector<SegmentationResult> segment_dataset(
    const std::vector<ImageSlice>& recons, const SegmentOptions& opt,
    const std::vector<Mask>* regions = nullptr) {
  const int level = opt.threshold >= 0
                        ? opt.threshold
                        : auto_threshold(recons, opt.polarity, regions);
  std::vector<SegmentationResult> out;
  out.reserve(recons.size());
  for (std::size_t i = 0; i < recons.size(); ++i)
    out.push_back(segment_slice(recons[i], opt.polarity, level,
                                regions ? &(*regions)[i] : nullptr,
                                opt.post_process));
  return out;
}

}  // namespace ascnet
