#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gcav/optim.hpp"
#include "gcav/tensor.hpp"

namespace gcav {

// Versioned binary parameter container.
// Layout (little-endian):
//   magic "GCAVCKPT" | u32 version | str algorithm_id | str encoder_id |
//   u32 param_count | records { str name | u32 ndim | u64 dims[] | f64 values[] }
// Strings are u32 length + bytes.

constexpr char kCheckpointMagic[8] = {'G', 'C', 'A', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string algorithm_id;
  std::string encoder_id;
  ParamList params;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  os.write(b, 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  os.write(b, 8);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
  char b[4];
  is.read(b, 4);
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  char b[8];
  is.read(b, 8);
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}
inline std::string read_str(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, ckpt.version);
  detail::write_str(os, ckpt.algorithm_id);
  detail::write_str(os, ckpt.encoder_id);
  detail::write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    detail::write_str(os, p.name);
    const auto& shape = p.value.shape();
    detail::write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::write_u64(os, d);
    const auto& data = p.value.data();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  Checkpoint ckpt;
  ckpt.version = detail::read_u32(is);
  if (ckpt.version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.algorithm_id = detail::read_str(is);
  ckpt.encoder_id = detail::read_str(is);
  const std::uint32_t count = detail::read_u32(is);
  ckpt.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::read_str(is);
    const std::uint32_t ndim = detail::read_u32(is);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::read_u64(is);
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    ckpt.params.push_back({name, Tensor::from(std::move(data), std::move(shape))});
  }
  if (!is) throw std::runtime_error("checkpoint truncated: " + path);
  return ckpt;
}

}  // namespace gcav
