#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "apop/network.hpp"

namespace apop {

// Model stream: "APNW", version 0x01, then little-endian u32 layer count and,
// per layer, u32 in, u32 out, u8 activation code, out*(in+1) f64 row-major
// (bias last column). Doubles travel as u64 bit patterns, so a roundtrip is
// bit-exact including negative zero and subnormals.

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

// Cursor over an input stream that reports the byte offset of any shortfall.
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > size)
      throw FormatError("truncated model stream: need " + std::to_string(n) + " bytes for " + what +
                        " at offset " + std::to_string(pos) + ", have " + std::to_string(size - pos));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data[pos++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Network& net) {
  net.check_shape();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'A', 'P', 'N', 'W'});
  out.push_back(0x01);
  detail::put_u32(out, static_cast<std::uint32_t>(net.depth()));
  for (const Layer& lay : net.layers) {
    detail::put_u32(out, static_cast<std::uint32_t>(lay.in()));
    detail::put_u32(out, static_cast<std::uint32_t>(lay.out()));
    out.push_back(static_cast<std::uint8_t>(lay.activation));
    for (Index i = 0; i < lay.out(); ++i)
      for (Index j = 0; j < lay.in() + 1; ++j) detail::put_f64(out, lay.weights(i, j));
  }
  return out;
}

inline Network deserialize(const std::vector<std::uint8_t>& bytes) {
  detail::Reader r{bytes.data(), bytes.size()};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "APNW", 4) != 0)
    throw FormatError("bad magic at offset 0 (expected \"APNW\")");
  r.pos = 4;
  const std::uint8_t version = r.u8("version");
  if (version != 0x01)
    throw FormatError("unsupported model version " + std::to_string(version) + " at offset 4");

  const std::uint32_t count = r.u32("layer count");
  if (count < 2)
    throw FormatError("layer count " + std::to_string(count) + " at offset 5 (need at least 2)");

  Network net;
  net.layers.reserve(count);
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t header_at = r.pos;
    const std::uint32_t in = r.u32("layer in");
    const std::uint32_t out = r.u32("layer out");
    const std::uint8_t code = r.u8("activation code");
    if (in < 1 || out < 1)
      throw FormatError("layer " + std::to_string(l) + " dimensions " + std::to_string(in) + "x" +
                        std::to_string(out) + " at offset " + std::to_string(header_at));
    if (code > 2)
      throw FormatError("unknown activation code " + std::to_string(code) + " at offset " +
                        std::to_string(header_at + 8));
    if (!net.layers.empty() && net.layers.back().out() != static_cast<Index>(in))
      throw FormatError("layer " + std::to_string(l - 1) + " out=" + std::to_string(net.layers.back().out()) +
                        " does not feed layer " + std::to_string(l) + " in=" + std::to_string(in) +
                        " (offset " + std::to_string(header_at) + ")");
    Layer lay;
    lay.activation = static_cast<ActivationKind>(code);
    lay.weights.resize(out, in + 1);
    for (std::uint32_t i = 0; i < out; ++i)
      for (std::uint32_t j = 0; j < in + 1; ++j) lay.weights(i, j) = r.f64("weights");
    net.layers.push_back(std::move(lay));
  }
  if (r.pos != r.size)
    throw FormatError("trailing bytes at offset " + std::to_string(r.pos));
  net.check_shape();
  return net;
}

inline void save_model(const Network& net, const std::string& path) {
  const auto bytes = serialize(net);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to '" + path + "'");
}

inline Network load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace apop
