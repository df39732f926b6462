#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ascnet {

// Single-file archive: magic, JSON header (spec echo, progress, array
// directory), then raw little-endian payload in directory order. Assumes a
// little-endian host.
inline constexpr char kCheckpointMagic[] = "ASCNETCKPT1\n";

template <class T>
struct Archive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<T>>> arrays;

  std::vector<T>* find(const std::string& name) {
    for (auto& [n, a] : arrays)
      if (n == name) return &a;
    return nullptr;
  }

  const std::vector<T>& require(const std::string& name) {
    auto* a = find(name);
    if (!a) throw std::runtime_error("checkpoint: missing array " + name);
    return *a;
  }
};

template <class T>
void write_archive(const std::string& path, const Archive<T>& ar) {
  nlohmann::json meta = ar.meta;
  meta["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, data] : ar.arrays)
    dir.push_back({{"name", name}, {"count", data.size()}});
  meta["arrays"] = dir;
  const std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(header.data(), std::streamsize(header.size()));
  for (const auto& [name, data] : ar.arrays)
    out.write(reinterpret_cast<const char*>(data.data()),
              std::streamsize(data.size() * sizeof(T)));
  if (!out) throw std::runtime_error("checkpoint: write failed " + path);
}

template <class T>
Archive<T> read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string header(hlen, '\0');
  in.read(header.data(), std::streamsize(hlen));
  Archive<T> ar;
  ar.meta = nlohmann::json::parse(header);
  const std::string want = sizeof(T) == 4 ? "f32" : "f64";
  if (ar.meta.value("dtype", want) != want)
    throw std::runtime_error("checkpoint: dtype mismatch in " + path);
  for (const auto& entry : ar.meta.at("arrays")) {
    std::vector<T> data(entry.at("count").template get<std::size_t>());
    in.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(data.size() * sizeof(T)));
    ar.arrays.emplace_back(entry.at("name").template get<std::string>(),
                           std::move(data));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated " + path);
  ar.meta.erase("arrays");
  ar.meta.erase("dtype");
  return ar;
}

}  // namespace ascnet
