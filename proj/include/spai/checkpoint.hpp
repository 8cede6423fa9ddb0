#pragma once

// Single-file parameter archive shared by backbone and detector checkpoints.
//
// Layout:
//   <format tag>\n                      e.g. "spai.backbone.v1"
//   uint64 little-endian header length
//   header JSON {format, config, tensors:[{name, rows, cols, offset}],
//                payload_bytes, payload_fnv1a64}
//   payload: float64 little-endian values, column-major per tensor

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"
#include "spai/types.hpp"

namespace spai {

inline constexpr std::string_view kBackboneFormat = "spai.backbone.v1";
inline constexpr std::string_view kDetectorFormat = "spai.detector.v1";

struct Archive {
  std::string format;
  nlohmann::json config;
  std::map<std::string, Matrix<double>> tensors;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);

/// Throws NotFound for a missing file and CheckpointIncompatible for a wrong
/// format tag, truncated data or a payload checksum mismatch.
Archive read_archive(const std::filesystem::path& path, std::string_view expected_format);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace spai
