#pragma once

// Versioned binary parameter files. Layout: magic "MCCF", format version u32,
// then tensors sorted by name, each as u32 name length, UTF-8 name, u32 rank,
// u64 dims, row-major f64 values. All integers and floats little-endian.
// Decay flags are not stored; they follow from the canonical name scheme.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mccf/common.hpp"
#include "mccf/optim.hpp"

namespace mccf {

inline bool decay_for_name(const std::string& name) {
  if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) return false;
  if (name.find(".ln1.") != std::string::npos || name.find(".ln2.") != std::string::npos) return false;
  return true;
}

namespace io_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw DataError("model file: truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace io_detail

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::string serialize_params(const ParamSet& params) {
  std::vector<std::string> names = params.names;
  std::sort(names.begin(), names.end());
  std::string out = "MCCF";
  io_detail::put_u32(out, kModelFormatVersion);
  for (const std::string& name : names) {
    const Tensor& t = params.at(name);
    io_detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io_detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::int64_t d : t.shape) io_detail::put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) io_detail::put_f64(out, v);
  }
  return out;
}

inline ParamSet deserialize_params(const std::string& bytes) {
  io_detail::Reader r{bytes};
  if (r.str(4) != "MCCF") throw DataError("model file: bad magic");
  std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw DataError("model file: unsupported version " + std::to_string(version));
  ParamSet params;
  while (r.pos < bytes.size()) {
    std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096) throw DataError("model file: implausible name length");
    std::string name = r.str(name_len);
    std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("model file: tensor " + name + " has implausible rank");
    std::vector<std::int64_t> shape;
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t d = r.u64();
      if (d == 0 || d > (1ull << 32)) throw DataError("model file: tensor " + name + " has implausible dim");
      shape.push_back(static_cast<std::int64_t>(d));
      numel *= static_cast<std::int64_t>(d);
    }
    Tensor t(shape);
    for (std::int64_t i = 0; i < numel; ++i) t.at(i) = r.f64();
    params.add(name, std::move(t), decay_for_name(name));
  }
  return params;
}

inline void save_params(const std::string& path, const ParamSet& params) {
  atomic_write_file(path, serialize_params(params));
}

inline ParamSet load_params(const std::string& path) { return deserialize_params(read_file(path)); }

}  // namespace mccf
