#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ascnet/image.hpp"

namespace ascnet {

namespace detail {

inline int pnm_token(std::istream& in) {
  // skip whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF) throw std::runtime_error("pgm: truncated header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace detail

// 8-bit or 16-bit grayscale PGM (binary P5 or ascii P2). 16-bit samples are
// big-endian per the Netpbm convention. Intensities map to [0,1] by maxval.
inline ImageSlice read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  char p, kind;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '2'))
    throw std::runtime_error("pgm: unsupported format in " + path);
  const int w = detail::pnm_token(in);
  const int h = detail::pnm_token(in);
  const int maxval = detail::pnm_token(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error("pgm: bad header in " + path);
  ImageSlice img(h, w);
  const float scale = 1.0f / float(maxval);
  if (kind == '2') {
    for (auto& v : img.pixels) v = float(detail::pnm_token(in)) * scale;
    return img;
  }
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(img.size());
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw std::runtime_error("pgm: truncated data in " + path);
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] * scale;
  } else {
    std::vector<std::uint8_t> raw(img.size() * 2);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw std::runtime_error("pgm: truncated data in " + path);
    for (std::size_t i = 0; i < img.size(); ++i)
      img.pixels[i] = float((raw[2 * i] << 8) | raw[2 * i + 1]) * scale;
  }
  return img;
}

inline void write_pgm(const std::string& path, int height, int width,
                      const std::vector<std::uint8_t>& gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()),
            std::streamsize(gray.size()));
  if (!out) throw std::runtime_error("pgm: write failed " + path);
}

inline void write_slice_pgm(const std::string& path, const ImageSlice& img) {
  std::vector<std::uint8_t> gray(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(double(img.pixels[i]), 0.0, 1.0);
    gray[i] = std::uint8_t(std::floor(v * 255.0 + 0.5));
  }
  write_pgm(path, img.height, img.width, gray);
}

// Binary masks stored as 0/255.
inline void write_mask_pgm(const std::string& path, const Mask& mask) {
  std::vector<std::uint8_t> gray(mask.pixels.size());
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = mask.pixels[i] ? 255 : 0;
  write_pgm(path, mask.height, mask.width, gray);
}

inline Mask read_mask_pgm(const std::string& path) {
  const ImageSlice img = read_pgm(path);
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i)
    m.pixels[i] = img.pixels[i] >= 0.5f;
  return m;
}

}  // namespace ascnet
