#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fuseformer/transformer.hpp"

namespace ff {

// Flat binary checkpoint: magic "FFTENSORS\0", then per named parameter
//   u32 name length (little-endian), UTF-8 name,
//   u32 rank, u32 extents,
//   raw little-endian f32 data.
// Data is stored as f32 regardless of the in-memory scalar type.

namespace detail {

constexpr char kCheckpointMagic[10] = {'F', 'F', 'T', 'E', 'N',
                                       'S', 'O', 'R', 'S', '\0'};

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline void put_f32_le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32_le(out, bits);
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  bool done() const { return pos == buf.size(); }

  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw CheckpointError(std::string("truncated checkpoint while reading ") +
                            what);
  }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(uint8_t(buf[pos])) |
                 uint32_t(uint8_t(buf[pos + 1])) << 8 |
                 uint32_t(uint8_t(buf[pos + 2])) << 16 |
                 uint32_t(uint8_t(buf[pos + 3])) << 24;
    pos += 4;
    return v;
  }

  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

template <typename T>
void save_checkpoint(const ParamMap<T>& params, const std::string& path) {
  std::string out(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  for (const auto& [name, t] : params.entries) {
    detail::put_u32_le(out, uint32_t(name.size()));
    out += name;
    detail::put_u32_le(out, uint32_t(t.shape().size()));
    for (size_t e : t.shape()) detail::put_u32_le(out, uint32_t(e));
    for (T v : t.data()) detail::put_f32_le(out, float(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "' for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError("short write to checkpoint '" + path + "'");
}

inline std::map<std::string, CheckpointEntry> read_checkpoint_file(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  detail::ByteReader r(buf);
  std::string magic = r.bytes(sizeof(detail::kCheckpointMagic), "magic");
  if (std::memcmp(magic.data(), detail::kCheckpointMagic,
                  sizeof(detail::kCheckpointMagic)) != 0)
    throw CheckpointError("bad magic in '" + path + "'");

  std::map<std::string, CheckpointEntry> entries;
  while (!r.done()) {
    uint32_t name_len = r.u32("name length");
    std::string name = r.bytes(name_len, "name");
    uint32_t rank = r.u32("rank");
    CheckpointEntry e;
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint32_t ext = r.u32("extent");
      e.shape.push_back(ext);
      n *= ext;
    }
    e.data.resize(n);
    for (size_t i = 0; i < n; ++i)
      e.data[i] = r.f32(("data of " + name).c_str());
    if (!entries.emplace(std::move(name), std::move(e)).second)
      throw CheckpointError("duplicate tensor name in '" + path + "'");
  }
  return entries;
}

// Assigns every registered parameter from the file; a missing, extra, or
// differently shaped tensor is an error naming it.
template <typename T>
void load_checkpoint(ParamMap<T>& params, const std::string& path) {
  auto entries = read_checkpoint_file(path);
  for (auto& [name, t] : params.entries) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw CheckpointError("checkpoint '" + path + "' is missing tensor '" +
                            name + "'");
    if (it->second.shape != t.shape())
      throw CheckpointError("tensor '" + name + "' has shape " +
                            shape_str(it->second.shape) + " in checkpoint, " +
                            shape_str(t.shape()) + " in model");
    auto& dst = t.mutable_data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = T(it->second.data[i]);
    t.zero_grad();
    entries.erase(it);
  }
  if (!entries.empty())
    throw CheckpointError("checkpoint '" + path + "' has unexpected tensor '" +
                          entries.begin()->first + "'");
}

}  // namespace ff
