#include <catch2/catch_amalgamated.hpp>

#include "ascnet/rng.hpp"
#include "ascnet/segment.hpp"

using namespace ascnet;

namespace {

// Independent oracle: strict local maxima of the raw counts, boundaries
// one-sided. Mirrors the documented window-1/prominence-0 limit.
std::vector<int> brute_force_peaks(const std::array<std::uint64_t, 256>& c) {
  std::vector<int> out;
  for (int i = 0; i < 256; ++i) {
    const bool left = (i == 0) || c[i] > c[i - 1];
    const bool right = (i == 255) || c[i] > c[i + 1];
    if (left && right) out.push_back(i);
  }
  return out;
}

// Independent oracle: set-definition erosion and dilation with a 5x5
// all-ones element and zero padding.
Mask brute_force_erode(const Mask& in) {
  Mask out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      bool all = true;
      for (int dy = -2; dy <= 2 && all; ++dy)
        for (int dx = -2; dx <= 2 && all; ++dx) {
          const int yy = y + dy, xx = x + dx;
          const bool v = yy >= 0 && yy < in.height && xx >= 0 &&
                         xx < in.width && in.at(yy, xx);
          if (!v) all = false;
        }
      out.at(y, x) = all;
    }
  return out;
}

Mask brute_force_dilate(const Mask& in) {
  Mask out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      bool any = false;
      for (int dy = -2; dy <= 2 && !any; ++dy)
        for (int dx = -2; dx <= 2 && !any; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < in.height && xx >= 0 && xx < in.width &&
              in.at(yy, xx))
            any = true;
        }
      out.at(y, x) = any;
    }
  return out;
}

ImageSlice constant_slice(int h, int w, float v) {
  ImageSlice s(h, w);
  std::fill(s.pixels.begin(), s.pixels.end(), v);
  return s;
}

}  // namespace

TEST_CASE("compute_histogram pools levels with round-half-up") {
  auto zero = constant_slice(4, 4, 0.0f);
  auto h = compute_histogram(zero);
  CHECK(h.bins[0] == 16);
  CHECK(h.total() == 16);

  ImageSlice split(4, 4);
  for (int i = 0; i < 8; ++i) split.pixels[i] = 1.0f;
  auto h2 = compute_histogram(split);
  CHECK(h2.bins[255] == 8);
  CHECK(h2.bins[0] == 8);

  CHECK(intensity_level(0.5f) == 128);  // 127.5 rounds up
  CHECK(intensity_level(0.0f) == 0);
  CHECK(intensity_level(1.0f) == 255);

  ImageSlice bad(1, 1);
  bad.pixels[0] = 1.5f;
  CHECK_THROWS_AS(compute_histogram(bad), std::invalid_argument);
}

TEST_CASE("find_peaks") {
  SECTION("documented example: window 1, prominence 0") {
    HistogramProfile h;
    const std::uint64_t counts[] = {0, 5, 10, 5, 0, 8, 2, 0};
    for (int i = 0; i < 8; ++i) h.bins[i] = counts[i];
    auto peaks = find_peaks(h, 0.0, 1);
    CHECK(peaks == std::vector<int>{2, 5});
  }
  SECTION("monotone increasing counts peak at the right boundary") {
    HistogramProfile h;
    for (int i = 0; i < 256; ++i) h.bins[i] = std::uint64_t(i) + 1;
    auto peaks = find_peaks(h);
    CHECK(peaks == std::vector<int>{255});
  }
  SECTION("unimodal bell shape has exactly one peak at defaults") {
    HistogramProfile h;
    for (int i = 0; i < 256; ++i) {
      const double d = (i - 128) / 20.0;
      h.bins[i] = std::uint64_t(1000.0 * std::exp(-d * d));
    }
    CHECK(find_peaks(h).size() == 1);
    CHECK(find_peaks(h).front() == 128);
  }
  SECTION("window-1/prominence-0 limit equals the brute-force scan") {
    Rng rng(314);
    for (int trial = 0; trial < 100; ++trial) {
      HistogramProfile h;
      for (auto& b : h.bins) b = rng.uniform_index(40);
      if (h.total() == 0) h.bins[0] = 1;
      CHECK(find_peaks(h, 0.0, 1) == brute_force_peaks(h.bins));
    }
  }
  SECTION("empty histogram errors") {
    HistogramProfile h;
    CHECK_THROWS_WITH(find_peaks(h),
                      Catch::Matchers::ContainsSubstring("empty histogram"));
  }
}

TEST_CASE("select_threshold picks the polarity-dependent extreme peak") {
  HistogramProfile h;
  h.peaks = {30, 128, 242};
  CHECK(select_threshold(h, Polarity::bright) == 242);
  CHECK(select_threshold(h, Polarity::dark) == 30);
  h.peaks = {77};
  CHECK(select_threshold(h, Polarity::bright) == 77);
  CHECK(select_threshold(h, Polarity::dark) == 77);
  h.peaks.clear();
  CHECK_THROWS_AS(select_threshold(h, Polarity::bright), std::invalid_argument);
}

TEST_CASE("threshold_mask") {
  auto zero = constant_slice(4, 4, 0.0f);
  CHECK(threshold_mask(zero, 254, Polarity::bright).mask.count() == 0);

  ImageSlice one_hot(4, 4);
  one_hot.pixels[5] = 1.0f;
  auto res = threshold_mask(one_hot, 254, Polarity::bright);
  CHECK(res.mask.count() == 1);
  CHECK(res.mask.pixels[5] == 1);

  auto ones = constant_slice(4, 4, 1.0f);
  CHECK(threshold_mask(ones, 242, Polarity::dark).mask.count() == 0);

  SECTION("raising the threshold never adds pixels (bright)") {
    Rng rng(8);
    ImageSlice img(8, 8);
    for (auto& v : img.pixels) v = float(rng.uniform());
    std::size_t prev = 64;
    for (int t = 0; t <= 255; t += 17) {
      const std::size_t count =
          threshold_mask(img, t, Polarity::bright).mask.count();
      CHECK(count <= prev);
      prev = count;
    }
  }
  CHECK_THROWS_AS(threshold_mask(zero, 300, Polarity::bright),
                  std::invalid_argument);
}

TEST_CASE("invert_image") {
  auto zeros = constant_slice(3, 3, 0.0f);
  for (float v : invert_image(zeros).pixels) CHECK(v == 1.0f);
  ImageSlice x(3, 3);
  Rng rng(4);
  for (auto& v : x.pixels) v = float(rng.uniform());
  CHECK(invert_image(invert_image(x)).pixels == x.pixels);
  CHECK(invert_image(constant_slice(1, 1, 0.3f)).pixels[0] ==
        Catch::Approx(0.7f));
}

TEST_CASE("morph_open_close equals brute-force erosion then dilation") {
  SECTION("bit-exact on random 32x32 masks") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      Mask m(32, 32);
      for (auto& p : m.pixels) p = rng.uniform() < 0.45;
      CHECK(morph_open_close(m).pixels ==
            brute_force_dilate(brute_force_erode(m)).pixels);
    }
  }
  SECTION("an isolated pixel is removed") {
    Mask m(32, 32);
    m.at(15, 16) = 1;
    CHECK(morph_open_close(m).count() == 0);
  }
  SECTION("an interior solid square is preserved") {
    Mask m(32, 32);
    for (int y = 6; y < 26; ++y)
      for (int x = 6; x < 26; ++x) m.at(y, x) = 1;
    CHECK(morph_open_close(m).pixels == m.pixels);
  }
  SECTION("all-zero stays all-zero") {
    CHECK(morph_open_close(Mask(16, 16)).count() == 0);
  }
  SECTION("non-binary input is rejected") {
    Mask m(4, 4);
    m.pixels[3] = 7;
    CHECK_THROWS_AS(morph_open_close(m), std::invalid_argument);
  }
}

namespace {
// Two-mode image: dim background with a bright square blob.
ImageSlice blob_image(float bg, float blob) {
  ImageSlice img(16, 16);
  std::fill(img.pixels.begin(), img.pixels.end(), bg);
  for (int y = 5; y < 11; ++y)
    for (int x = 5; x < 11; ++x) img.at(y, x) = blob;
  return img;
}
}  // namespace

TEST_CASE("segment_slice pipeline") {
  SECTION("auto threshold lands on the blob mode") {
    std::vector<ImageSlice> recons{blob_image(0.1f, 1.0f),
                                   blob_image(0.1f, 1.0f)};
    const int level = auto_threshold(recons, Polarity::bright);
    CHECK(level == 255);
    auto res = segment_slice(recons[0], Polarity::bright, level);
    CHECK(res.mask.count() == 36);
    CHECK(res.mask.at(6, 6) == 1);
  }
  SECTION("opening wipes a single-pixel component") {
    ImageSlice tiny(16, 16);
    std::fill(tiny.pixels.begin(), tiny.pixels.end(), 0.1f);
    tiny.at(8, 8) = 1.0f;
    auto res = segment_slice(tiny, Polarity::bright, 254, nullptr, true);
    CHECK(res.post_processed);
    CHECK(res.mask.count() == 0);
  }
  SECTION("dark polarity equals bright on the inverted image, bit-exact") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      ImageSlice img(12, 12);
      for (auto& v : img.pixels) v = float(rng.uniform());
      const int level = int(rng.uniform_index(256));
      auto dark = segment_slice(img, Polarity::dark, level);
      auto bright = segment_slice(invert_image(img), Polarity::bright, level);
      CHECK(dark.mask.pixels == bright.mask.pixels);
    }
  }
  SECTION("pooled threshold is slice-order invariant") {
    Rng rng(31);
    std::vector<ImageSlice> recons;
    for (int i = 0; i < 6; ++i) {
      ImageSlice img(8, 8);
      for (auto& v : img.pixels) v = float(rng.uniform());
      recons.push_back(std::move(img));
    }
    const int a = auto_threshold(recons, Polarity::bright);
    std::reverse(recons.begin(), recons.end());
    CHECK(auto_threshold(recons, Polarity::bright) == a);
  }
  SECTION("region mask confines the prediction and the pooled histogram") {
    // The excluded region holds the brightest pixels; with the region mask
    // they must not become the threshold nor appear in the output.
    ImageSlice img = blob_image(0.3f, 0.8f);
    img.at(0, 0) = 1.0f;
    Mask region(16, 16);
    std::fill(region.pixels.begin(), region.pixels.end(), 1);
    region.at(0, 0) = 0;
    std::vector<ImageSlice> recons{img};
    std::vector<Mask> regions{region};
    const int level = auto_threshold(recons, Polarity::bright, &regions);
    CHECK(level == intensity_level(0.8f));
    auto res = segment_slice(img, Polarity::bright, level, &region, false);
    CHECK(res.mask.pixels[0] == 0);
    CHECK(res.mask.count() == 36);
  }
  SECTION("one pooled threshold reused across a dataset") {
    std::vector<ImageSlice> recons{blob_image(0.1f, 0.9f),
                                   blob_image(0.15f, 0.9f)};
    SegmentOptions opt;
    auto results = segment_dataset(recons, opt);
    CHECK(results[0].threshold_level == results[1].threshold_level);
  }
}

TEST_CASE("mask_out_region zeroes the excluded pixels") {
  ImageSlice img = blob_image(0.4f, 0.9f);
  Mask full(16, 16);
  std::fill(full.pixels.begin(), full.pixels.end(), 1);
  CHECK(mask_out_region(img, full).pixels == img.pixels);
  Mask empty(16, 16);
  for (float v : mask_out_region(img, empty).pixels) CHECK(v == 0.0f);
}
