// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/network.hpp"
#include "auxadapt/synthvid.hpp"

namespace auxadapt {

// ---------------------------------------------------------------------------
// AAXN network container: little-endian.
//   "AAXN" | u32 version | str name | u32 input_channels | u32 num_classes
//   u32 L | L * (u8 kind, u32 kernel, u32 c_in, u32 c_out, u32 factor)
//   u32 P | P * (str name, u8 trainable, u32 rank, rank * u32 dim, f32 data)
// where str is u32 length followed by the bytes.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t network_format_version = 1;

namespace detail {

inline void put_string(std::ostream& os, const std::string& s) {
  put(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) fail(Error::Kind::format, "AAXN: implausible string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) fail(Error::Kind::format, "unexpected end of container");
  return s;
}

}  // namespace detail

inline void write_network(std::ostream& os, const Network<float>& net) {
  const NetworkSpec& spec = net.spec();
  os.write("AAXN", 4);
  detail::put(os, network_format_version);
  detail::put_string(os, spec.name);
  detail::put(os, static_cast<std::uint32_t>(spec.input_channels));
  detail::put(os, static_cast<std::uint32_t>(spec.num_classes));
  detail::put(os, static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    detail::put(os, static_cast<std::uint8_t>(l.kind));
    for (std::size_t v : {l.kernel, l.in_channels, l.out_channels, l.factor}) detail::put(os, static_cast<std::uint32_t>(v));
  }
  detail::put(os, static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& p : net.parameters()) {
    detail::put_string(os, p.name);
    detail::put(os, static_cast<std::uint8_t>(p.trainable ? 1 : 0));
    detail::put(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) detail::put(os, static_cast<std::uint32_t>(d));
    for (float v : p.value.data()) detail::put(os, v);
  }
  if (!os) fail(Error::Kind::io, "failed writing network container");
}

inline Network<float> read_network(std::istream& is) {
  char magic[4]{};
  if (!is.read(magic, 4) || std::memcmp(magic, "AAXN", 4) != 0) fail(Error::Kind::format, "not an AAXN container");
  if (detail::get<std::uint32_t>(is) != network_format_version) fail(Error::Kind::format, "unsupported AAXN version");
  NetworkSpec spec;
  spec.name = detail::get_string(is);
  spec.input_channels = detail::get<std::uint32_t>(is);
  spec.num_classes = detail::get<std::uint32_t>(is);
  const auto nl = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nl; ++i) {
    const auto kind = detail::get<std::uint8_t>(is);
    if (kind < 1 || kind > 5) fail(Error::Kind::format, "AAXN: unknown layer kind " + std::to_string(kind));
    LayerSpec l;
    l.kind = static_cast<LayerKind>(kind);
    l.kernel = detail::get<std::uint32_t>(is);
    l.in_channels = detail::get<std::uint32_t>(is);
    l.out_channels = detail::get<std::uint32_t>(is);
    l.factor = detail::get<std::uint32_t>(is);
    spec.layers.push_back(l);
  }
  const auto np = detail::get<std::uint32_t>(is);
  std::vector<Parameter<float>> params;
  for (std::uint32_t i = 0; i < np; ++i) {
    Parameter<float> p;
    p.name = detail::get_string(is);
    p.trainable = detail::get<std::uint8_t>(is) != 0;
    const auto rank = detail::get<std::uint32_t>(is);
    if (rank == 0 || rank > 4) fail(Error::Kind::format, "AAXN: bad rank for " + p.name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::get<std::uint32_t>(is));
    p.value = Tensor<float>(shape);
    for (auto& v : p.value.data()) v = detail::get<float>(is);
    params.push_back(std::move(p));
  }
  return Network<float>(std::move(spec), std::move(params));
}

/// Writes to a temporary sibling, then renames over `path`.
inline void save_network(const std::string& path, const Network<float>& net) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) fail(Error::Kind::io, "cannot open " + tmp + " for writing");
    write_network(os, net);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Error::Kind::io, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

inline Network<float> load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Error::Kind::missing_checkpoint, "checkpoint " + path + " not found; run the pretrain subcommand first");
  return read_network(is);
}

}  // namespace auxadapt
