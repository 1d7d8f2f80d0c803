#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcf/detector.hpp"
#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

/// Why a persisted artifact was rejected. Corrupt covers bad magic, version,
/// truncation and CRC failures; Geometry covers structurally valid files
/// whose layer chain is inconsistent.
enum class IoErrorKind { Corrupt, Geometry, Unreadable };

struct IoError : std::runtime_error {
  IoErrorKind kind;
  IoError(IoErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(const std::string& k, const std::string& msg) : std::runtime_error(msg), key(k) {}
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

/// Weight container: "DCFW" magic, u16 LE version 1, u32 LE layer count,
/// per-layer kind tag + u32 LE geometry + f32 LE parameters in
/// (out, row, column, in) order, and a trailing CRC-32 of everything before
/// it. Parameters quantize to 32-bit on write.
void save_network(const NetworkSpec& net, const std::string& path);
NetworkSpec load_network(const std::string& path);

/// The box regressor reuses the same container: two FC layers.
void save_regressor(const RegressorWeights& reg, const std::string& path);
RegressorWeights load_regressor(const std::string& path);

/// Binary PGM (P5, maxval 255). Pixels map to reals as p / 255 on read; the
/// writer rounds half up. Header comments are skipped.
Tensor read_pgm(const std::string& path);
void write_pgm(const Tensor& image, const std::string& path);

/// One detection per line: x y w h score scale, coordinates rounded to
/// integers, score with 6 decimals, scale with 4, sorted by score descending.
std::string format_detections(std::vector<Detection> dets);

/// Line-oriented key=value file, UTF-8, # comments. Unknown keys raise
/// ConfigError naming the key.
std::map<std::string, double> parse_config_file(const std::string& path,
                                                const std::set<std::string>& knownKeys);

}  // namespace dcf
