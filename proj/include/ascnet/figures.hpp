#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ascnet/image.hpp"
#include "ascnet/pgm_io.hpp"
#include "ascnet/segment.hpp"

namespace ascnet {

namespace detail {

// 5x7 glyphs, one byte per row, low five bits used (bit 4 = left column).
// Covers only what the panel labels need.
inline const std::array<std::uint8_t, 7>* glyph5x7(char ch) {
  static const struct {
    char ch;
    std::array<std::uint8_t, 7> rows;
  } table[] = {
      {' ', {0, 0, 0, 0, 0, 0, 0}},
      {'#', {0x0a, 0x1f, 0x0a, 0x0a, 0x1f, 0x0a, 0x00}},
      {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
      {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
      {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
      {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
      {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
      {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
      {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
      {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
      {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
      {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
      {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
      {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}},
      {'b', {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x1e}},
      {'c', {0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e}},
      {'d', {0x01, 0x01, 0x0d, 0x13, 0x11, 0x11, 0x0f}},
      {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
      {'f', {0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08}},
      {'g', {0x00, 0x00, 0x0f, 0x11, 0x0f, 0x01, 0x0e}},
      {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
      {'l', {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15}},
      {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'o', {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e}},
      {'p', {0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10}},
      {'q', {0x00, 0x00, 0x0d, 0x13, 0x0f, 0x01, 0x01}},
      {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0x00, 0x00, 0x0e, 0x10, 0x0e, 0x01, 0x1e}},
      {'t', {0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d}},
      {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04}},
      {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0a}},
      {'x', {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11}},
      {'y', {0x00, 0x00, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
  };
  for (const auto& g : table)
    if (g.ch == ch) return &g.rows;
  return nullptr;
}

}  // namespace detail

// Grayscale drawing surface for diagnostic panels.
struct Canvas {
  int width = 0, height = 0;
  std::vector<std::uint8_t> px;

  Canvas(int w, int h, std::uint8_t bg = 0)
      : width(w), height(h), px(std::size_t(w) * h, bg) {}

  void set(int x, int y, std::uint8_t v) {
    if (x >= 0 && x < width && y >= 0 && y < height)
      px[std::size_t(y) * width + x] = v;
  }

  void blit(const ImageSlice& img, int x0, int y0) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = std::clamp(double(img.at(y, x)), 0.0, 1.0);
        set(x0 + x, y0 + y, std::uint8_t(v * 255.0 + 0.5));
      }
  }

  void blit_mask(const Mask& mask, int x0, int y0) {
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x)
        set(x0 + x, y0 + y, mask.at(y, x) ? 255 : 0);
  }

  void draw_hist(const HistogramProfile& hist, int x0, int y0, int plot_h) {
    std::uint64_t peak = 1;
    for (auto b : hist.bins) peak = std::max(peak, b);
    for (int i = 0; i < 256; ++i) {
      const int bar = int(double(hist.bins[i]) / double(peak) * (plot_h - 1));
      for (int y = 0; y < bar; ++y) set(x0 + i, y0 + plot_h - 1 - y, 200);
      set(x0 + i, y0 + plot_h - 1, 90);  // baseline
    }
  }

  void draw_text(int x0, int y0, const std::string& text,
                 std::uint8_t v = 255) {
    int x = x0;
    for (char ch : text) {
      if (const auto* rows = detail::glyph5x7(ch)) {
        for (int r = 0; r < 7; ++r)
          for (int c = 0; c < 5; ++c)
            if ((*rows)[r] & (1 << (4 - c))) set(x + c, y0 + r, v);
      }
      x += 6;
    }
  }

  void save(const std::string& path) const {
    write_pgm(path, height, width, px);
  }
};

// Panel of image/histogram pairs, one row per image.
inline void emit_histogram_figure(const std::vector<ImageSlice>& images,
                                  const std::string& out_path) {
  if (images.empty())
    throw std::invalid_argument("emit_histogram_figure: no images");
  const int pad = 8;
  int cell_h = 0, img_w = 0;
  for (const auto& img : images) {
    cell_h = std::max(cell_h, img.height);
    img_w = std::max(img_w, img.width);
  }
  cell_h = std::max(cell_h, 96);
  const int width = pad + img_w + pad + 256 + pad;
  const int height = pad + int(images.size()) * (cell_h + pad);
  Canvas canvas(width, height);
  int y = pad;
  for (const auto& img : images) {
    canvas.blit(img, pad, y);
    canvas.draw_hist(compute_histogram(img), pad + img_w + pad, y, cell_h);
    y += cell_h + pad;
  }
  canvas.save(out_path);
}

// One row per sample: input, fence cut, wild cut, reconstruction, optional
// ground truth, estimated mask, and the mask/input overlay.
struct BranchPanelRow {
  ImageSlice input, fence, wild, recon;
  const Mask* gt = nullptr;
  Mask est;
};

inline void emit_branch_panel(const std::vector<BranchPanelRow>& rows,
                              const std::string& out_path) {
  if (rows.empty()) throw std::invalid_argument("emit_branch_panel: no rows");
  const bool with_gt = rows.front().gt != nullptr;
  std::vector<std::string> labels = {"Iin", "Ifc", "Iwc", "Iro"};
  if (with_gt) labels.push_back("Mgt");
  labels.push_back("Mest");
  labels.push_back("Mest x Iin");
  const int pad = 6, label_h = 12;
  const int cw = rows.front().input.width, ch = rows.front().input.height;
  const int cols = int(labels.size());
  Canvas canvas(pad + cols * (cw + pad),
                label_h + pad + int(rows.size()) * (ch + pad));
  for (int c = 0; c < cols; ++c)
    canvas.draw_text(pad + c * (cw + pad), 2, labels[c]);
  int y = label_h + pad;
  for (const auto& row : rows) {
    int c = 0;
    auto cell_x = [&](int col) { return pad + col * (cw + pad); };
    canvas.blit(row.input, cell_x(c++), y);
    canvas.blit(row.fence, cell_x(c++), y);
    canvas.blit(row.wild, cell_x(c++), y);
    canvas.blit(row.recon, cell_x(c++), y);
    if (with_gt) canvas.blit_mask(*row.gt, cell_x(c++), y);
    canvas.blit_mask(row.est, cell_x(c++), y);
    ImageSlice overlay = row.input;  // est * input, elementwise
    for (std::size_t i = 0; i < overlay.pixels.size(); ++i)
      overlay.pixels[i] *= float(row.est.pixels[i]);
    canvas.blit(overlay, cell_x(c++), y);
    y += ch + pad;
  }
  canvas.save(out_path);
}

namespace detail {

// Histogram-equalized view of the pixels whose level falls in [lo, hi];
// everything else black.
inline ImageSlice equalize_band(const ImageSlice& img, int lo, int hi) {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total = 0;
  for (float v : img.pixels) {
    const int level = intensity_level(v);
    if (level >= lo && level <= hi) {
      ++counts[level];
      ++total;
    }
  }
  ImageSlice out(img.height, img.width, img.subject_id, img.slice_index);
  if (total == 0) return out;
  std::array<double, 256> cdf{};
  double acc = 0;
  for (int i = 0; i < 256; ++i) {
    acc += double(counts[i]) / double(total);
    cdf[i] = acc;
  }
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const int level = intensity_level(img.pixels[i]);
    out.pixels[i] = (level >= lo && level <= hi) ? float(cdf[level]) : 0.0f;
  }
  return out;
}

}  // namespace detail

// Disjoincy visualization: for each branch image, the image, its histogram,
// and one equalized sub-image per detected peak (bands split halfway between
// adjacent peaks).
inline void emit_disjoincy_strip(const ImageSlice& fence,
                                 const ImageSlice& wild,
                                 const std::string& out_path) {
  struct Row {
    const ImageSlice* img;
    std::vector<int> peaks;
  };
  Row rows[2] = {{&fence, {}}, {&wild, {}}};
  std::size_t max_peaks = 1;
  for (auto& row : rows) {
    HistogramProfile h = compute_histogram(*row.img);
    row.peaks = find_peaks(h);
    max_peaks = std::max(max_peaks, row.peaks.size());
  }
  const int pad = 14, label_h = 12;
  const int cw = fence.width, ch = std::max(fence.height, 96);
  const int cols = 2 + int(max_peaks);
  Canvas canvas(pad + cw + pad + 256 + pad + int(max_peaks) * (cw + pad),
                label_h + pad + 2 * (ch + pad));
  int y = label_h + pad;
  const char* names[2] = {"Ifc", "Iwc"};
  (void)cols;
  for (int r = 0; r < 2; ++r) {
    const auto& row = rows[r];
    canvas.draw_text(pad, y - label_h + 2, names[r]);
    canvas.blit(*row.img, pad, y);
    canvas.draw_hist(compute_histogram(*row.img), pad + cw + pad, y, ch);
    int x = pad + cw + pad + 256 + pad;
    for (std::size_t k = 0; k < row.peaks.size(); ++k) {
      const int lo = k == 0 ? 0 : (row.peaks[k - 1] + row.peaks[k]) / 2 + 1;
      const int hi = k + 1 == row.peaks.size()
                         ? 255
                         : (row.peaks[k] + row.peaks[k + 1]) / 2;
      canvas.blit(detail::equalize_band(*row.img, lo, hi), x, y);
      char label[16];
      std::snprintf(label, sizeof label, "peak %d", int(k + 1));
      canvas.draw_text(x, y + fence.height + 2, label);
      x += cw + pad;
    }
    y += ch + pad;
  }
  canvas.save(out_path);
}

}  // namespace ascnet
