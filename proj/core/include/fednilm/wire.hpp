#pragma once

// Little-endian primitive encode/decode helpers shared by the checkpoint
// format, the dataset cache format and the network frame codec.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

namespace fednilm::wire {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) {
  out.push_back(v);
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t get_u8(std::span<const std::uint8_t> in, std::size_t& pos) {
  return in[pos++];
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

inline float get_f32(std::span<const std::uint8_t> in, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(in, pos));
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t& pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

}  // namespace fednilm::wire
