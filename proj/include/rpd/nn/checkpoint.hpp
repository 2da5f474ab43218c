#pragma once

// Binary checkpoint layout (all integers little-endian u32, all reals
// little-endian f64):
//   "RPDNN1" | obs_dim | act_dim | hidden_count | hidden[0..hidden_count) |
//   parameters in declaration order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rpd/nn/policy.hpp"

namespace rpd {

inline constexpr char kCheckpointMagic[] = "RPDNN1";

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  void expect_magic() {
    need(6);
    if (std::memcmp(bytes_.data() + pos_, kCheckpointMagic, 6) != 0) throw ConfigError("checkpoint: bad magic");
    pos_ += 6;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ConfigError("checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_policy(const GaussianPolicy& policy) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 6);
  const auto& arch = policy.arch();
  detail::put_u32(out, static_cast<std::uint32_t>(arch.obs_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(arch.act_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(arch.hidden.size()));
  for (auto h : arch.hidden) detail::put_u32(out, static_cast<std::uint32_t>(h));
  for (const auto& p : policy.params())
    for (double v : p.value.values()) detail::put_f64(out, v);
  return out;
}

inline GaussianPolicy deserialize_policy(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes);
  in.expect_magic();
  PolicyArch arch;
  arch.obs_dim = in.u32();
  arch.act_dim = in.u32();
  const auto layers = in.u32();
  if (layers > 64) throw ConfigError("checkpoint: implausible layer count");
  arch.hidden.clear();
  for (std::uint32_t i = 0; i < layers; ++i) arch.hidden.push_back(in.u32());
  GaussianPolicy policy(arch);
  for (auto& p : policy.params())
    for (auto& v : p.value.values()) v = in.f64();
  if (!in.at_end()) throw ConfigError("checkpoint: trailing bytes");
  return policy;
}

inline void save_checkpoint(const GaussianPolicy& policy, const std::filesystem::path& path) {
  const auto bytes = serialize_policy(policy);
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline GaussianPolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_policy(bytes);
}

}  // namespace rpd
