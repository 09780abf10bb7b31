#include "doctest.h"
#include "helpers.hpp"

#include "imfn/checkpoint.hpp"
#include "imfn/data.hpp"

using namespace imfn;

namespace {

CheckpointMeta meta_for(std::uint64_t seed) {
  CheckpointMeta m;
  m.seed = seed;
  m.config = {{"note", "unit"}};
  return m;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("teacher save, load, save is byte-identical") {
  Rng rng(1);
  const Teacher t(6, rng, 12);
  const auto bytes = serialize_teacher(t, meta_for(3));
  CheckpointInfo info;
  const Teacher back = deserialize_teacher(bytes, &info);
  CHECK(back.parameter_hash() == t.parameter_hash());
  CHECK(serialize_teacher(back, meta_for(3)) == bytes);
  CHECK(info.model_kind == "teacher");
  CHECK(info.memory_dim == 6);
  CHECK(info.codec_hidden == 12);
  CHECK(info.level_count == 9);
  CHECK(info.seed == 3);
  CHECK(info.payload_checksum == teacher_checksum(t));
  CHECK(info.header.at("manifest").size() == 6 + 6 + 9 * 8);
  CHECK(info.header.at("manifest")[0].at("name") == "codec.encoder.layer0.weight");
}

TEST_CASE("student round trip carries the teacher checksum") {
  Rng rng(2);
  const Student s(5, 8, rng);
  CheckpointMeta m = meta_for(4);
  m.teacher_checksum = "0123456789abcdef";
  const auto dir = testutil::scratch_dir("ckpt");
  save_student(s, m, dir / "s.ckpt");
  CheckpointInfo info;
  const Student back = load_student(dir / "s.ckpt", &info);
  CHECK(back.parameter_hash() == s.parameter_hash());
  CHECK(back.horizon() == 8);
  CHECK(info.teacher_checksum == "0123456789abcdef");
  save_student(back, m, dir / "s2.ckpt");
  CHECK(read_file(dir / "s.ckpt") == read_file(dir / "s2.ckpt"));
}

TEST_CASE("corruption is detected") {
  Rng rng(3);
  const Student s(4, 4, rng);
  auto bytes = serialize_student(s, meta_for(0));

  auto flipped = bytes;
  flipped.back() ^= 0x01;
  CHECK_THROWS_AS(deserialize_student(flipped, nullptr), CheckpointError);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_student(magic, nullptr), CheckpointError);

  auto version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(deserialize_student(version, nullptr), CheckpointError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  CHECK_THROWS_AS(deserialize_student(truncated, nullptr), CheckpointError);

  CHECK_THROWS_AS(deserialize_teacher(bytes, nullptr), CheckpointError);
}

TEST_CASE("header only read") {
  Rng rng(4);
  const Teacher t(4, rng, 8);
  const auto info = read_checkpoint_info(serialize_teacher(t, meta_for(9)));
  CHECK(info.model_kind == "teacher");
  CHECK(info.seed == 9);
  CHECK(info.config.at("note") == "unit");
  CHECK(info.header.at("format_version") == kCheckpointVersion);
}

}
