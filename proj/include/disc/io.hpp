#pragma once

// File formats: latent dump, trajectory CSV, run manifest.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "disc/ctr.hpp"
#include "disc/denoise.hpp"
#include "disc/errors.hpp"

namespace disc {

inline constexpr std::string_view kToolVersion = "0.1.0";

// ---- latent dump ----------------------------------------------------------------------------
//
// 16-byte header of little-endian u32: magic, channels, height, width; then
// channels * height * width little-endian float32 in (c, y, x) order.

inline constexpr std::uint32_t kLatentMagic = 0x5441'4c44;  // "DLAT"

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_latent(const Latent& z) {
  std::string out;
  out.reserve(16 + 4 * z.data.size());
  detail::put_u32(out, kLatentMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(z.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(z.height));
  detail::put_u32(out, static_cast<std::uint32_t>(z.width));
  for (double x : z.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  return out;
}

inline Latent decode_latent(std::string_view bytes) {
  if (bytes.size() < 16) throw ShapeError("latent dump shorter than its header");
  if (detail::get_u32(bytes, 0) != kLatentMagic) throw ShapeError("latent dump has a bad magic number");
  const std::size_t c = detail::get_u32(bytes, 4), h = detail::get_u32(bytes, 8), w = detail::get_u32(bytes, 12);
  if (bytes.size() != 16 + 4 * c * h * w) throw ShapeError("latent dump size does not match its header");
  Latent z(c, h, w);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    z.data[i] = std::bit_cast<float>(detail::get_u32(bytes, 16 + 4 * i));
  return z;
}

// ---- CSV ------------------------------------------------------------------------------------

inline std::string trajectory_csv_header() { return "step,dense,computed_tokens,pruning_ratio,sparsity\n"; }

inline std::string trajectory_csv_rows(const std::vector<StepRecord>& t, const std::string& prefix = {}) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& r : t)
    os << prefix << r.step << ',' << (r.dense ? 1 : 0) << ',' << r.computed_tokens << ',' << r.pruning_ratio << ','
       << r.sparsity << '\n';
  return os.str();
}

// ---- manifest ---------------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::string timestamp;  // UTC, ISO 8601
  std::string tool_version = std::string(kToolVersion);
  std::vector<std::string> outputs;

  nlohmann::ordered_json to_json() const {
    return {{"command", command},   {"config_path", config_path}, {"output_dir", output_dir}, {"seed", seed},
            {"timestamp", timestamp}, {"tool_version", tool_version}, {"outputs", outputs}};
  }
};

/// Current UTC time, or SOURCE_DATE_EPOCH when set (reproducible manifests).
inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace disc
