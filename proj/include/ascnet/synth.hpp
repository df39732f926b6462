#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "ascnet/image.hpp"
#include "ascnet/rng.hpp"

namespace ascnet {

enum class Polarity { bright, dark };

inline const char* to_string(Polarity p) {
  return p == Polarity::bright ? "bright" : "dark";
}

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "bright") return Polarity::bright;
  if (s == "dark") return Polarity::dark;
  throw std::invalid_argument("unknown polarity: " + s);
}

// Desk-scale stand-in corpus: soft-edged ellipse "anatomy" over a flat
// background, query images carry one inserted disk of contrasting intensity.
struct SynthConfig {
  int size = 64;
  int n_reference = 500;
  int n_query = 300;
  Polarity polarity = Polarity::bright;
  int blob_radius_min = 4;
  int blob_radius_max = 10;

  // Intensity design. Per-image jitter keeps pooled input histograms from
  // degenerating into single-bin spikes while the blob level stays tight.
  float background_level = 0.06f;
  float background_jitter = 0.02f;
  float ellipse_level = 0.52f;
  float ellipse_jitter = 0.04f;
  float blob_level = 0.95f;
  float blob_jitter = 0.01f;

  void validate() const {
    if (size < 16) throw std::invalid_argument("synth: size too small");
    if (n_reference <= 0 || n_query <= 0)
      throw std::invalid_argument("synth: counts must be positive");
    if (blob_radius_min < 1 || blob_radius_max < blob_radius_min)
      throw std::invalid_argument("synth: bad blob radius range");
    if (blob_radius_max >= size / 2)
      throw std::invalid_argument("synth: anomaly radius >= image size");
  }
};

struct SynthCorpus {
  SliceDataset reference;  // mask-free
  SliceDataset query;      // with ground-truth masks
};

namespace detail {

struct EllipsePose {
  double cx, cy;      // center
  double a, b;        // semi-axes
  double cos_t, sin_t;
  float level;        // fill intensity
  float background;
};

// Normalized ellipse distance: <1 inside, 1 on the boundary.
inline double ellipse_dist(const EllipsePose& e, double x, double y) {
  double dx = x - e.cx, dy = y - e.cy;
  double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
  double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
  return std::sqrt(u * u + v * v);
}

inline EllipsePose sample_pose(const SynthConfig& cfg, Rng& rng) {
  EllipsePose e;
  const double s = cfg.size;
  e.cx = s / 2.0 + rng.uniform(-s / 16.0, s / 16.0);
  e.cy = s / 2.0 + rng.uniform(-s / 16.0, s / 16.0);
  e.a = rng.uniform(0.30, 0.36) * s;
  e.b = rng.uniform(0.24, 0.30) * s;
  double theta = rng.uniform(-0.35, 0.35);
  e.cos_t = std::cos(theta);
  e.sin_t = std::sin(theta);
  e.level = cfg.ellipse_level +
            float(rng.uniform(-cfg.ellipse_jitter, cfg.ellipse_jitter));
  e.background = cfg.background_level +
                 float(rng.uniform(-cfg.background_jitter,
                                   cfg.background_jitter));
  return e;
}

inline ImageSlice render_anatomy(const SynthConfig& cfg,
                                 const EllipsePose& e,
                                 const std::string& subject, int index) {
  ImageSlice img(cfg.size, cfg.size, subject, index);
  const double edge = 0.06;  // fractional softness of the boundary
  for (int y = 0; y < cfg.size; ++y)
    for (int x = 0; x < cfg.size; ++x) {
      double d = ellipse_dist(e, x + 0.5, y + 0.5);
      double alpha = std::clamp((1.0 - d) / edge + 0.5, 0.0, 1.0);
      img.at(y, x) =
          float(e.background + alpha * (e.level - e.background));
    }
  return img;
}

}  // namespace detail

// Deterministic under seed; masks are exactly the blob support and lie
// strictly inside the image bounds.
inline SynthCorpus synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.reference.role = DatasetRole::reference;
  corpus.query.role = DatasetRole::query;
  Rng rng(seed);

  auto finish = [&cfg](ImageSlice& img) {
    if (cfg.polarity == Polarity::dark)
      for (float& v : img.pixels) v = 1.0f - v;
  };

  for (int i = 0; i < cfg.n_reference; ++i) {
    auto pose = detail::sample_pose(cfg, rng);
    char name[32];
    std::snprintf(name, sizeof name, "r%04d", i);
    ImageSlice img = detail::render_anatomy(cfg, pose, name, 0);
    finish(img);
    corpus.reference.slices.push_back(std::move(img));
  }

  for (int i = 0; i < cfg.n_query; ++i) {
    auto pose = detail::sample_pose(cfg, rng);
    char name[32];
    std::snprintf(name, sizeof name, "q%04d", i);
    ImageSlice img = detail::render_anatomy(cfg, pose, name, 0);

    const int r =
        int(rng.uniform_index(cfg.blob_radius_max - cfg.blob_radius_min + 1)) +
        cfg.blob_radius_min;
    // Anywhere strictly inside the image bounds. The blob level contrasts
    // with both anatomy and background, so ring contrast holds for every
    // placement.
    const double bx = rng.uniform(r + 1.0, cfg.size - r - 1.0);
    const double by = rng.uniform(r + 1.0, cfg.size - r - 1.0);
    const float blob =
        cfg.blob_level + float(rng.uniform(-cfg.blob_jitter, cfg.blob_jitter));

    Mask mask(cfg.size, cfg.size);
    for (int y = 0; y < cfg.size; ++y)
      for (int x = 0; x < cfg.size; ++x) {
        double dx = x + 0.5 - bx, dy = y + 0.5 - by;
        if (dx * dx + dy * dy <= double(r) * r) {
          img.at(y, x) = blob;
          mask.at(y, x) = 1;
        }
      }
    finish(img);
    corpus.query.slices.push_back(std::move(img));
    corpus.query.masks.push_back(std::move(mask));
  }
  return corpus;
}

}  // namespace ascnet
