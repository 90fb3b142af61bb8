#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ovc/autodiff.hpp"
#include "ovc/tensor.hpp"

// Binary checkpoint container, all integers and floats little-endian:
//
//   "OVCCKPT\0"  u32 version
//   u32 n_meta   { u32 len, key bytes, u32 len, value bytes } * n_meta
//   u32 n_tensor { u8 kind (0 parameter, 1 buffer), u32 len, name bytes,
//                  u32 rank, u64 dims[rank], f64 values[prod(dims)] } * n_tensor
//
// Tensors are written in name order (parameters, then buffers).

namespace ovc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::map<std::string, Tensor> parameters;
  std::map<std::string, Tensor> buffers;

  const std::string* find_meta(std::string_view key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return &v;
    return nullptr;
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::string_view kCheckpointMagic{"OVCCKPT\0", 8};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    return std::string(take(n));
  }
  std::string_view take(std::size_t n) {
    if (n > in_.size() - pos_) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " (needed " + std::to_string(n) +
                            " more bytes)");
    }
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.parameters.size() + ckpt.buffers.size()));
  auto put = [&](std::uint8_t kind, const std::string& name, const Tensor& t) {
    w.u8(kind);
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  };
  for (const auto& [name, t] : ckpt.parameters) put(0, name, t);
  for (const auto& [name, t] : ckpt.buffers) put(1, name, t);
  return w.take();
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    auto v = r.str();
    ckpt.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto n_tensor = r.u32();
  for (std::uint32_t i = 0; i < n_tensor; ++i) {
    const auto kind = r.u8();
    if (kind > 1) throw CheckpointError("unknown tensor kind " + std::to_string(kind));
    std::string name = r.str();
    Shape shape(r.u32());
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    std::vector<double> data(numel(shape));
    for (double& v : data) v = r.f64();
    auto& dst = kind == 0 ? ckpt.parameters : ckpt.buffers;
    if (!dst.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw CheckpointError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace ovc
