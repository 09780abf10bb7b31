#include "doctest.h"
#include "helpers.hpp"

#include "imfn/config.hpp"

#include <cstdlib>

using namespace imfn;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("paper profile pins the published training values") {
  const RunConfig c = profile_defaults(Profile::kPaper);
  CHECK(c.memory_dim == 1024);
  CHECK(c.horizon == 128);
  CHECK(c.grid.memory_dims == std::vector<Eigen::Index>{128, 256, 512, 1024, 2048});
  CHECK(c.grid.seeds == std::vector<std::uint64_t>{42, 123, 456, 789, 2024});
  CHECK(c.split_ratio == 0.9);
  CHECK(c.data.source == DataSource::kMnist);
  CHECK(c.data.count == 60000);
  const TeacherTrainConfig t = c.teacher_config();
  CHECK(t.learning_rate == 1e-4);
  CHECK(t.batch_size == 64);
  CHECK(t.epochs_per_level == 50);
  CHECK(t.lambda == 1e-3);
  CHECK(t.sigma == 1e-2);
  CHECK(t.zero_augment_count == 1000);
  CHECK(t.num_levels_to_train == 9);
  CHECK(t.codec_hidden == 1024);
  const DistillConfig s = c.student_config();
  CHECK(s.epochs == 1000);
  CHECK(s.trajectories_per_epoch == 100);
  CHECK(s.subset_fraction == 0.25);
  CHECK(s.learning_rate == 1e-4);
  CHECK(c.eval.num_sequences == 500);
  CHECK(std::find(c.eval.horizons.begin(), c.eval.horizons.end(), 128u) != c.eval.horizons.end());
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("desk profile") {
  const RunConfig c = profile_defaults(Profile::kDesk);
  CHECK(c.memory_dim == 32);
  CHECK(c.horizon == 8);
  CHECK(c.data.source == DataSource::kSynthetic);
  CHECK(c.data.count == 500);
  CHECK(c.data.intrinsic_dim == 4);
  CHECK(c.teacher.num_levels_to_train == 4);
  CHECK(c.teacher.epochs_per_level == 50);
  CHECK(c.student.epochs == 200);
  CHECK(c.student.trajectories_per_epoch == 20);
  CHECK(c.eval.horizons == std::vector<std::size_t>{2, 4, 8, 16});
  CHECK(c.teacher_config().memory_dim == 32);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("json round trip") {
  for (Profile p : {Profile::kDesk, Profile::kPaper}) {
    const json doc = config_to_json(profile_defaults(p));
    CHECK(config_to_json(config_from_json(doc)) == doc);
  }
  const RunConfig c = config_from_json(json{{"profile", "desk"}, {"seed", 7}, {"teacher", {{"lambda", 0.5}}}});
  CHECK(c.seed == 7);
  CHECK(c.teacher.lambda == 0.5);
  CHECK(c.teacher.batch_size == profile_defaults(Profile::kDesk).teacher.batch_size);
}

TEST_CASE("every problem is reported at once") {
  const json doc = {{"profile", "desk"},
                    {"memroy_dim", 4},
                    {"horizon", 6},
                    {"teacher", {{"batch_size", "big"}, {"colour", 1}}},
                    {"student", {{"zero_leaf_mode", "maybe"}}},
                    {"data", {{"source", "tape"}}}};
  try {
    config_from_json(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string all = e.what();
    CHECK(e.problems().size() >= 5);
    CHECK(all.find("memroy_dim") != std::string::npos);
    CHECK(all.find("teacher.colour") != std::string::npos);
    CHECK(all.find("teacher.batch_size") != std::string::npos);
    CHECK(all.find("zero_leaf_mode") != std::string::npos);
    CHECK(all.find("tape") != std::string::npos);
  }
}

TEST_CASE("validation") {
  RunConfig c = profile_defaults(Profile::kDesk);
  c.horizon = 32;  // needs five trained levels
  c.memory_dim = 0;
  c.split_ratio = 1.5;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() >= 3);
  }
  CHECK_THROWS_AS(config_from_json(json{{"seed", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
}

TEST_CASE("mnist path is required and resolved against the data directory") {
  RunConfig c = profile_defaults(Profile::kPaper);
  c.data.path.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ::setenv(kDataDirEnv, "/data/sets", 1);
  CHECK(resolve_data_path("mnist/train.idx") == std::filesystem::path("/data/sets/mnist/train.idx"));
  CHECK(resolve_data_path("/abs/file") == std::filesystem::path("/abs/file"));
  ::unsetenv(kDataDirEnv);
  CHECK(resolve_data_path("mnist/train.idx") == std::filesystem::path("mnist/train.idx"));
}

TEST_CASE("config files") {
  const auto dir = testutil::scratch_dir("config");
  write_file_atomic(dir / "c.json", std::string(R"({"profile": "desk", "horizon": 4})"));
  CHECK(load_config(dir / "c.json").horizon == 4);
  write_file_atomic(dir / "bad.json", std::string("{not json"));
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("names") {
  CHECK(profile_from_name("paper") == Profile::kPaper);
  CHECK(profile_name(Profile::kDesk) == "desk");
  CHECK(zero_leaf_mode_from_name("encoded_zero_image") == ZeroLeafMode::kEncodedZeroImage);
  CHECK(zero_leaf_mode_name(ZeroLeafMode::kZeroLatent) == "zero_latent");
  CHECK_THROWS(profile_from_name("huge"));
}

}
