#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ascnet/image.hpp"
#include "ascnet/nifti.hpp"
#include "ascnet/pgm_io.hpp"

namespace ascnet {

namespace detail {

// "subj_0042" -> ("subj", 42); otherwise the whole stem with index 0.
inline std::pair<std::string, int> parse_slice_name(const std::string& stem) {
  const auto us = stem.rfind('_');
  if (us != std::string::npos && us + 1 < stem.size()) {
    const std::string tail = stem.substr(us + 1);
    if (std::all_of(tail.begin(), tail.end(),
                    [](unsigned char c) { return std::isdigit(c); }))
      return {stem.substr(0, us), std::stoi(tail)};
  }
  return {stem, 0};
}

inline std::vector<std::filesystem::path> sorted_pgm_files(
    const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error("dataset: not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

// Directory layout: grayscale .pgm files; masks mirror query filenames.
inline SliceDataset load_dataset_dir(const std::string& dir, DatasetRole role) {
  SliceDataset ds;
  ds.role = role;
  for (const auto& path : detail::sorted_pgm_files(dir)) {
    ImageSlice s = read_pgm(path.string());
    auto [subject, index] = detail::parse_slice_name(path.stem().string());
    s.subject_id = subject;
    s.slice_index = index;
    ds.slices.push_back(std::move(s));
  }
  if (ds.slices.empty())
    throw std::runtime_error("dataset: no .pgm files in " + dir);
  return ds;
}

// Masks aligned with a query directory by filename.
inline std::vector<Mask> load_mask_dir(const std::string& mask_dir,
                                       const std::string& query_dir) {
  std::vector<Mask> masks;
  for (const auto& path : detail::sorted_pgm_files(query_dir)) {
    const auto mask_path =
        std::filesystem::path(mask_dir) / path.filename();
    if (!std::filesystem::exists(mask_path))
      throw std::runtime_error("dataset: missing mask " + mask_path.string());
    masks.push_back(read_mask_pgm(mask_path.string()));
  }
  return masks;
}

inline void save_dataset_dir(const std::string& dir, const SliceDataset& ds) {
  std::filesystem::create_directories(dir);
  for (const auto& s : ds.slices) {
    char name[128];
    std::snprintf(name, sizeof name, "%s_%04d.pgm", s.subject_id.c_str(),
                  s.slice_index);
    write_slice_pgm((std::filesystem::path(dir) / name).string(), s);
  }
}

// ---------------------------------------------------------------------------
// Volumetric layout: a JSON manifest lists subject_id -> image volume and an
// optional mask volume. Volumes are min-max normalized, sliced axially with
// empty slices dropped, and optionally resized to the working resolution.
// ---------------------------------------------------------------------------
struct ManifestOptions {
  bool drop_empty = true;
  int resize_h = 0, resize_w = 0;  // 0 = keep native
};

inline std::vector<SubjectRecord> load_manifest(
    const std::string& manifest_path, const ManifestOptions& opt = {}) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (!doc.contains("subjects") || !doc["subjects"].is_array())
    throw std::runtime_error("manifest: missing subjects array");
  const auto base = std::filesystem::path(manifest_path).parent_path();

  std::vector<SubjectRecord> out;
  for (const auto& entry : doc["subjects"]) {
    SubjectRecord rec;
    rec.subject_id = entry.at("id").get<std::string>();
    const auto img_path = base / entry.at("image").get<std::string>();
    Volume vol = normalize_volume(read_nifti(img_path.string()));

    Volume mask_vol;
    bool has_mask = entry.contains("mask");
    if (has_mask) {
      const auto mask_path = base / entry.at("mask").get<std::string>();
      mask_vol = read_nifti(mask_path.string());
      if (mask_vol.depth != vol.depth || mask_vol.height != vol.height ||
          mask_vol.width != vol.width)
        throw std::runtime_error("manifest: mask dims mismatch for " +
                                 rec.subject_id);
    }

    auto slices = extract_slices(vol, opt.drop_empty, rec.subject_id);
    for (auto& s : slices) {
      Mask m(s.height, s.width);
      if (has_mask) {
        const float* src = mask_vol.voxels.data() +
                           std::size_t(s.slice_index) * vol.height * vol.width;
        for (std::size_t i = 0; i < m.pixels.size(); ++i)
          m.pixels[i] = src[i] > 0.5f;
      }
      if (opt.resize_h > 0 && opt.resize_w > 0 &&
          (s.height != opt.resize_h || s.width != opt.resize_w)) {
        // Masks resize through the same bilinear map, re-binarized at 0.5.
        ImageSlice mask_img(s.height, s.width);
        for (std::size_t i = 0; i < m.pixels.size(); ++i)
          mask_img.pixels[i] = float(m.pixels[i]);
        mask_img = resize_slice(mask_img, opt.resize_h, opt.resize_w);
        m = Mask(opt.resize_h, opt.resize_w);
        for (std::size_t i = 0; i < m.pixels.size(); ++i)
          m.pixels[i] = mask_img.pixels[i] >= 0.5f;
        s = resize_slice(s, opt.resize_h, opt.resize_w);
      }
      rec.slices.push_back(std::move(s));
      rec.masks.push_back(std::move(m));
    }
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw std::runtime_error("manifest: no subjects");
  return out;
}

}  // namespace ascnet
