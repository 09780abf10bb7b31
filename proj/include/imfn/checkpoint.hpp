#pragma once

// Binary checkpoint container.
//
//   offset 0   8 bytes   magic "IMFNCKPT"
//   offset 8   u32 LE    format version (1)
//   offset 12  u64 LE    header length H
//   offset 20  H bytes   UTF-8 JSON header (keys sorted, no whitespace)
//   offset 20+H          payload: little-endian float32 tensors, manifest order
//
// Header keys: format_version, model_kind ("teacher" | "student"),
// memory_dim, horizon (0 for teachers), level_count, codec_hidden, seed,
// config (free-form echo), manifest [{name, shape [rows, cols], offset,
// count}], payload_bytes, payload_fnv1a64 (16 hex digits), and for
// students teacher_checksum.

#include "imfn/student.hpp"
#include "imfn/teacher.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace imfn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  /// Students: payload checksum of the teacher they were distilled from.
  std::string teacher_checksum;
};

struct CheckpointInfo {
  std::string model_kind;
  Eigen::Index memory_dim = 0;
  std::size_t horizon = 0;
  int level_count = 0;
  Eigen::Index codec_hidden = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string payload_checksum;
  std::string teacher_checksum;
  nlohmann::json header;
};

std::vector<unsigned char> serialize_teacher(const Teacher& teacher, const CheckpointMeta& meta);
std::vector<unsigned char> serialize_student(const Student& student, const CheckpointMeta& meta);

/// Both verify magic, version, manifest and payload checksum.
Teacher deserialize_teacher(std::span<const unsigned char> bytes, CheckpointInfo* info = nullptr);
Student deserialize_student(std::span<const unsigned char> bytes, CheckpointInfo* info = nullptr);

/// Header only (no payload verification beyond size).
CheckpointInfo read_checkpoint_info(std::span<const unsigned char> bytes);

/// Checksum string over the payload a teacher would serialize to.
std::string teacher_checksum(const Teacher& teacher);

void save_teacher(const Teacher& teacher, const CheckpointMeta& meta, const std::filesystem::path& path);
void save_student(const Student& student, const CheckpointMeta& meta, const std::filesystem::path& path);
Teacher load_teacher(const std::filesystem::path& path, CheckpointInfo* info = nullptr);
Student load_student(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace imfn
