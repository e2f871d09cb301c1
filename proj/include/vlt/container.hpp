#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/tensor.hpp"

namespace vlt {

static_assert(std::endian::native == std::endian::little,
              "tensor container IO assumes a little-endian host");

// Binary tensor container:
//   magic "HSVT" | version u16 LE | rank u16 LE | dims u32 LE each | payload LE row-major
// version 1 carries an f32 payload (datasets, attention dumps); version 2
// carries f64 and exists so checkpoints round-trip 64-bit values bit-exactly.
inline constexpr uint16_t kContainerF32 = 1;
inline constexpr uint16_t kContainerF64 = 2;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(static_cast<bool>(is), "container: truncated stream");
  return v;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t, uint16_t version = kContainerF32) {
  check(version == kContainerF32 || version == kContainerF64,
        "container: unsupported version " + std::to_string(version));
  os.write("HSVT", 4);
  detail::write_le<uint16_t>(os, version);
  detail::write_le<uint16_t>(os, static_cast<uint16_t>(t.dim()));
  for (int i = 0; i < t.dim(); ++i) detail::write_le<uint32_t>(os, static_cast<uint32_t>(t.size(i)));
  if (version == kContainerF32) {
    for (double v : t.vec()) detail::write_le<float>(os, static_cast<float>(v));
  } else {
    for (double v : t.vec()) detail::write_le<double>(os, v);
  }
}

inline Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  check(static_cast<bool>(is) && std::memcmp(magic, "HSVT", 4) == 0,
        "container: bad magic, expected HSVT");
  uint16_t version = detail::read_le<uint16_t>(is);
  check(version == kContainerF32 || version == kContainerF64,
        "container: unsupported version " + std::to_string(version));
  uint16_t rank = detail::read_le<uint16_t>(is);
  Shape shape(rank);
  for (uint16_t i = 0; i < rank; ++i) shape[i] = detail::read_le<uint32_t>(is);
  int64_t n = numel_of(shape);
  std::vector<double> data(static_cast<size_t>(n));
  if (version == kContainerF32) {
    for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = detail::read_le<float>(is);
  } else {
    for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = detail::read_le<double>(is);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::string& path, const Tensor& t,
                        uint16_t version = kContainerF32) {
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), "container: cannot open " + path + " for writing");
  write_tensor(os, t, version);
  check(static_cast<bool>(os), "container: write failed for " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), "container: cannot open " + path);
  return read_tensor(is);
}

// ---------------------------------------------------------------------------
// archive: a text manifest followed by a blob section of tensor containers.
// Offsets are relative to the end of the "end" line.
//
//   VLTARCH1
//   meta <key> <value...>
//   entry <name> <offset> <nbytes>
//   ...
//   end
//   <blobs>
// ---------------------------------------------------------------------------

struct Archive {
  std::vector<std::pair<std::string, Tensor>> entries;
  std::map<std::string, std::string> meta;

  void put(const std::string& name, const Tensor& t) { entries.emplace_back(name, t); }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

inline void save_archive(const std::string& path, const Archive& ar,
                         uint16_t version = kContainerF64) {
  std::vector<std::string> blobs;
  blobs.reserve(ar.entries.size());
  for (const auto& [name, t] : ar.entries) {
    std::ostringstream os(std::ios::binary);
    write_tensor(os, t, version);
    blobs.push_back(os.str());
  }
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), "archive: cannot open " + path + " for writing");
  os << "VLTARCH1\n";
  for (const auto& [k, v] : ar.meta) os << "meta " << k << ' ' << v << '\n';
  uint64_t off = 0;
  for (size_t i = 0; i < ar.entries.size(); ++i) {
    os << "entry " << ar.entries[i].first << ' ' << off << ' ' << blobs[i].size() << '\n';
    off += blobs[i].size();
  }
  os << "end\n";
  for (const std::string& b : blobs) os.write(b.data(), static_cast<std::streamsize>(b.size()));
  check(static_cast<bool>(os), "archive: write failed for " + path);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), "archive: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)) && line == "VLTARCH1",
        "archive: bad header in " + path);
  Archive ar;
  std::vector<std::pair<std::string, uint64_t>> manifest;
  while (std::getline(is, line)) {
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      ar.meta[key] = rest;
    } else if (kind == "entry") {
      std::string name;
      uint64_t off = 0, nbytes = 0;
      ls >> name >> off >> nbytes;
      manifest.emplace_back(name, off);
    } else {
      fail("archive: unknown manifest line '" + line + "'");
    }
  }
  std::streampos blob_start = is.tellg();
  for (const auto& [name, off] : manifest) {
    is.seekg(blob_start + static_cast<std::streamoff>(off));
    ar.entries.emplace_back(name, read_tensor(is));
  }
  return ar;
}

}  // namespace vlt
