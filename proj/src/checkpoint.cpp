#include "imfn/checkpoint.hpp"

#include "imfn/data.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace imfn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'I', 'M', 'F', 'N', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPrefix = 8 + 4 + 8;

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const unsigned char> bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[offset + i]) << (8 * i);
  return v;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void append_floats(std::vector<unsigned char>& out, std::span<const float> values) {
  for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
}

using NamedTensors = std::vector<ParamView<const float>>;
using MutableTensors = std::vector<ParamView<float>>;

NamedTensors teacher_tensors(const Teacher& t) {
  NamedTensors out = t.codec().encoder().parameters();
  for (auto& p : t.codec().decoder().parameters()) out.push_back(p);
  for (int l = 0; l < t.num_levels(); ++l) {
    for (auto& p : t.sweeper(l).merge_net().parameters()) out.push_back(p);
    for (auto& p : t.sweeper(l).invert_net().parameters()) out.push_back(p);
  }
  return out;
}

MutableTensors teacher_tensors(Teacher& t) {
  MutableTensors out = t.codec().encoder().parameters();
  for (auto& p : t.codec().decoder().parameters()) out.push_back(p);
  for (int l = 0; l < t.num_levels(); ++l) {
    for (auto& p : t.sweeper(l).merge_net().parameters()) out.push_back(p);
    for (auto& p : t.sweeper(l).invert_net().parameters()) out.push_back(p);
  }
  return out;
}

std::vector<unsigned char> payload_of(const NamedTensors& tensors) {
  std::vector<unsigned char> payload;
  for (const auto& p : tensors) append_floats(payload, p.values);
  return payload;
}

std::vector<unsigned char> assemble(json header, const NamedTensors& tensors) {
  const auto payload = payload_of(tensors);
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : tensors) {
    manifest.push_back({{"name", p.name},
                        {"shape", {p.rows, p.cols}},
                        {"offset", offset},
                        {"count", p.values.size()}});
    offset += p.values.size() * sizeof(float);
  }
  header["format_version"] = kCheckpointVersion;
  header["manifest"] = std::move(manifest);
  header["payload_bytes"] = payload.size();
  header["payload_fnv1a64"] = hex64(fnv1a64(payload));
  const std::string text = header.dump();

  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Parsed {
  CheckpointInfo info;
  std::size_t payload_offset = 0;
};

Parsed parse_header(std::span<const unsigned char> bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError("not an IMFN checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  if (kPrefix + header_len > bytes.size()) throw CheckpointError("checkpoint header truncated");
  Parsed parsed;
  try {
    parsed.info.header = json::parse(bytes.begin() + kPrefix,
                                     bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    const json& h = parsed.info.header;
    parsed.info.model_kind = h.at("model_kind").get<std::string>();
    parsed.info.memory_dim = h.at("memory_dim").get<Eigen::Index>();
    parsed.info.horizon = h.at("horizon").get<std::size_t>();
    parsed.info.level_count = h.at("level_count").get<int>();
    parsed.info.codec_hidden = h.at("codec_hidden").get<Eigen::Index>();
    parsed.info.seed = h.at("seed").get<std::uint64_t>();
    parsed.info.config = h.at("config");
    parsed.info.payload_checksum = h.at("payload_fnv1a64").get<std::string>();
    parsed.info.teacher_checksum = h.value("teacher_checksum", std::string());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  parsed.payload_offset = kPrefix + header_len;
  const auto expected = parsed.info.header.at("payload_bytes").get<std::size_t>();
  if (bytes.size() - parsed.payload_offset != expected) {
    throw CheckpointError("checkpoint payload is " + std::to_string(bytes.size() - parsed.payload_offset) +
                          " bytes, header says " + std::to_string(expected));
  }
  return parsed;
}

void fill_tensors(const Parsed& parsed, std::span<const unsigned char> bytes, const MutableTensors& tensors) {
  const auto payload = bytes.subspan(parsed.payload_offset);
  if (hex64(fnv1a64(payload)) != parsed.info.payload_checksum) {
    throw CheckpointError("checkpoint payload checksum mismatch");
  }
  const json& manifest = parsed.info.header.at("manifest");
  if (manifest.size() != tensors.size()) throw CheckpointError("checkpoint manifest has the wrong tensor count");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& entry = manifest[i];
    const auto& p = tensors[i];
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (entry.at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.rows ||
        shape[1] != p.cols || entry.at("count").get<std::size_t>() != p.values.size()) {
      throw CheckpointError("checkpoint manifest entry " + std::to_string(i) + " does not match " + p.name);
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + p.values.size() * sizeof(float) > payload.size()) {
      throw CheckpointError("checkpoint tensor " + p.name + " runs past the payload");
    }
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      p.values[k] = std::bit_cast<float>(get_le<std::uint32_t>(payload, offset + 4 * k));
    }
  }
}

json base_header(const std::string& kind, Eigen::Index d, std::size_t horizon, int levels,
                 Eigen::Index hidden, const CheckpointMeta& meta) {
  json h;
  h["model_kind"] = kind;
  h["memory_dim"] = d;
  h["horizon"] = horizon;
  h["level_count"] = levels;
  h["codec_hidden"] = hidden;
  h["seed"] = meta.seed;
  h["config"] = meta.config;
  if (!meta.teacher_checksum.empty()) h["teacher_checksum"] = meta.teacher_checksum;
  return h;
}

}  // namespace

std::vector<unsigned char> serialize_teacher(const Teacher& teacher, const CheckpointMeta& meta) {
  return assemble(base_header("teacher", teacher.memory_dim(), 0, teacher.num_levels(),
                              teacher.codec().hidden(), meta),
                  teacher_tensors(teacher));
}

std::vector<unsigned char> serialize_student(const Student& student, const CheckpointMeta& meta) {
  return assemble(base_header("student", student.memory_dim(), student.horizon(), 0, 0, meta),
                  student.delta_net().parameters());
}

CheckpointInfo read_checkpoint_info(std::span<const unsigned char> bytes) {
  return parse_header(bytes).info;
}

Teacher deserialize_teacher(std::span<const unsigned char> bytes, CheckpointInfo* info) {
  const Parsed parsed = parse_header(bytes);
  if (parsed.info.model_kind != "teacher") {
    throw CheckpointError("expected a teacher checkpoint, found '" + parsed.info.model_kind + "'");
  }
  if (parsed.info.level_count != kTeacherLevels || parsed.info.memory_dim <= 0 ||
      parsed.info.codec_hidden <= 0) {
    throw CheckpointError("teacher checkpoint has invalid dimensions");
  }
  Teacher teacher(parsed.info.memory_dim, parsed.info.codec_hidden);
  fill_tensors(parsed, bytes, teacher_tensors(teacher));
  if (info) *info = parsed.info;
  return teacher;
}

Student deserialize_student(std::span<const unsigned char> bytes, CheckpointInfo* info) {
  const Parsed parsed = parse_header(bytes);
  if (parsed.info.model_kind != "student") {
    throw CheckpointError("expected a student checkpoint, found '" + parsed.info.model_kind + "'");
  }
  if (parsed.info.memory_dim <= 0 || parsed.info.horizon == 0) {
    throw CheckpointError("student checkpoint has invalid dimensions");
  }
  Student student(parsed.info.memory_dim, parsed.info.horizon);
  fill_tensors(parsed, bytes, student.delta_net().parameters());
  if (info) *info = parsed.info;
  return student;
}

std::string teacher_checksum(const Teacher& teacher) {
  return hex64(fnv1a64(payload_of(teacher_tensors(teacher))));
}

void save_teacher(const Teacher& teacher, const CheckpointMeta& meta, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_teacher(teacher, meta));
}

void save_student(const Student& student, const CheckpointMeta& meta, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_student(student, meta));
}

Teacher load_teacher(const std::filesystem::path& path, CheckpointInfo* info) {
  return deserialize_teacher(read_file(path), info);
}

Student load_student(const std::filesystem::path& path, CheckpointInfo* info) {
  return deserialize_student(read_file(path), info);
}

}  // namespace imfn
