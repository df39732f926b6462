#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "ascnet/image.hpp"

namespace ascnet {

namespace detail {

// NIfTI-1 header, 348 bytes, naturally packed on x86.
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration, toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348, "nifti header layout broken");

template <class T>
void byteswap(T& v) {
  auto* b = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(b[i], b[sizeof(T) - 1 - i]);
}

inline std::vector<unsigned char> gz_read_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");  // reads plain files transparently
  if (!f) throw std::runtime_error("nifti: cannot open " + path);
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  gzclose(f);
  if (n < 0) throw std::runtime_error("nifti: decompression failed " + path);
  return out;
}

}  // namespace detail

// Minimal NIfTI-1 volume reader (.nii or .nii.gz); returns the volume as
// (depth=nz, height=ny, width=nx) with scl slope/intercept applied. Intensity
// normalization is a separate step.
inline Volume read_nifti(const std::string& path) {
  const auto bytes = detail::gz_read_all(path);
  if (bytes.size() < sizeof(detail::NiftiHeader))
    throw std::runtime_error("nifti: truncated header in " + path);
  detail::NiftiHeader hdr;
  std::memcpy(&hdr, bytes.data(), sizeof hdr);
  bool swapped = false;
  if (hdr.dim[0] < 1 || hdr.dim[0] > 7) {
    swapped = true;
    detail::byteswap(hdr.sizeof_hdr);
    for (auto& d : hdr.dim) detail::byteswap(d);
    detail::byteswap(hdr.datatype);
    detail::byteswap(hdr.bitpix);
    detail::byteswap(hdr.vox_offset);
    detail::byteswap(hdr.scl_slope);
    detail::byteswap(hdr.scl_inter);
  }
  if (hdr.sizeof_hdr != 348)
    throw std::runtime_error("nifti: not a NIfTI-1 file: " + path);
  if (std::strncmp(hdr.magic, "n+1", 3) != 0 &&
      std::strncmp(hdr.magic, "ni1", 3) != 0)
    throw std::runtime_error("nifti: bad magic in " + path);
  if (hdr.dim[0] < 3) throw std::runtime_error("nifti: not a 3D volume: " + path);
  const int nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
  for (int d = 4; d <= hdr.dim[0]; ++d)
    if (hdr.dim[d] > 1)
      throw std::runtime_error("nifti: multi-volume files unsupported: " + path);
  const std::size_t count = std::size_t(nx) * ny * nz;
  const std::size_t offset = std::size_t(hdr.vox_offset);
  const float slope = hdr.scl_slope == 0.0f ? 1.0f : hdr.scl_slope;
  const float inter = hdr.scl_slope == 0.0f ? 0.0f : hdr.scl_inter;

  Volume vol(nz, ny, nx);
  auto fill = [&](auto sample_type) {
    using S = decltype(sample_type);
    if (bytes.size() < offset + count * sizeof(S))
      throw std::runtime_error("nifti: truncated data in " + path);
    const unsigned char* src = bytes.data() + offset;
    for (std::size_t i = 0; i < count; ++i) {
      S s;
      std::memcpy(&s, src + i * sizeof(S), sizeof(S));
      if (swapped && sizeof(S) > 1) detail::byteswap(s);
      vol.voxels[i] = float(s) * slope + inter;
    }
  };
  switch (hdr.datatype) {
    case 2: fill(std::uint8_t{}); break;
    case 4: fill(std::int16_t{}); break;
    case 8: fill(std::int32_t{}); break;
    case 16: fill(float{}); break;
    case 64: fill(double{}); break;
    case 256: fill(std::int8_t{}); break;
    case 512: fill(std::uint16_t{}); break;
    default:
      throw std::runtime_error("nifti: unsupported datatype " +
                               std::to_string(hdr.datatype) + " in " + path);
  }
  return vol;
}

// float32 writer; gz-compresses when the name ends in .gz.
inline void write_nifti(const std::string& path, const Volume& vol) {
  detail::NiftiHeader hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  hdr.dim[1] = std::int16_t(vol.width);
  hdr.dim[2] = std::int16_t(vol.height);
  hdr.dim[3] = std::int16_t(vol.depth);
  for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
  hdr.datatype = 16;  // float32
  hdr.bitpix = 32;
  for (int d = 0; d < 8; ++d) hdr.pixdim[d] = 1.0f;
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  std::memcpy(hdr.magic, "n+1", 4);

  std::vector<unsigned char> out(352 + vol.size() * 4, 0);
  std::memcpy(out.data(), &hdr, sizeof hdr);
  std::memcpy(out.data() + 352, vol.voxels.data(), vol.size() * 4);

  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("nifti: cannot write " + path);
    const int n = gzwrite(f, out.data(), unsigned(out.size()));
    gzclose(f);
    if (n != int(out.size()))
      throw std::runtime_error("nifti: write failed " + path);
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("nifti: cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            std::streamsize(out.size()));
    if (!f) throw std::runtime_error("nifti: write failed " + path);
  }
}

}  // namespace ascnet
