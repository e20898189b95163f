#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/param_store.hpp"

// Named-tensor container used for model checkpoints and attention dumps.
// Byte layout (little endian throughout, documented in docs/checkpoint-format.md):
//
//   magic            8 bytes   "ANMTCKP\0"
//   version          u32       currently 1
//   precision        u8        4 = float32 values, 8 = float64 values
//   meta_len         u32       length of the UTF-8 metadata string (JSON)
//   meta             bytes
//   record_count     u64
//   record*          sorted by name:
//     name_len       u32
//     name           bytes
//     rank           u32
//     extents        u64 * rank
//     values         precision * product(extents) bytes, IEEE 754

namespace anmt {

inline constexpr char kCheckpointMagic[8] = {'A', 'N', 'M', 'T', 'C', 'K', 'P', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version{};
  int precision{};  // bytes per value
  std::string meta;
};

namespace detail {

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return v;
}

inline CheckpointInfo read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint container: " + path);
  }
  CheckpointInfo info;
  info.version = read_pod<std::uint32_t>(is);
  if (info.version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(info.version) +
                             " in " + path);
  }
  info.precision = read_pod<std::uint8_t>(is);
  if (info.precision != 4 && info.precision != 8) {
    throw std::runtime_error("unsupported precision tag in " + path);
  }
  const auto meta_len = read_pod<std::uint32_t>(is);
  info.meta.resize(meta_len);
  is.read(info.meta.data(), meta_len);
  if (!is) {
    throw std::runtime_error("checkpoint: truncated metadata in " + path);
  }
  return info;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const ParameterStore<S>& store,
                     const std::string& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write checkpoint: " + path);
  }
  os.write(kCheckpointMagic, 8);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(S)));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(store.count()));
  for (const auto& [name, t] : store) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) {
      detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    }
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(S)));
  }
  if (!os) {
    throw std::runtime_error("checkpoint write failed: " + path);
  }
}

inline CheckpointInfo read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  return detail::read_header(is, path);
}

template <class S>
std::pair<ParameterStore<S>, CheckpointInfo> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open checkpoint: " + path);
  }
  CheckpointInfo info = detail::read_header(is, path);
  if (info.precision != static_cast<int>(sizeof(S))) {
    throw std::runtime_error("checkpoint " + path + " stores " +
                             std::to_string(info.precision * 8) +
                             "-bit values; refusing to load at a different precision");
  }
  ParameterStore<S> store;
  const auto count = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = detail::read_pod<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
      total *= e;
    }
    std::vector<S> values(total);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(total * sizeof(S)));
    if (!is) {
      throw std::runtime_error("checkpoint: truncated record '" + name + "' in " + path);
    }
    store.put(name, Tensor<S>::from(std::move(shape), std::move(values), true));
  }
  return {std::move(store), std::move(info)};
}

}  // namespace anmt
