#pragma once

// Run configuration. Files are JSON objects; unknown keys are rejected and
// every validation problem is reported at once.
//
// {
//   "profile": "desk" | "paper",          required, selects the defaults
//   "memory_dim": 32, "horizon": 8, "seed": 42,
//   "split_seed": 0, "split_ratio": 0.9,
//   "output_dir": "runs/desk",
//   "data": {"source": "synthetic" | "mnist", "path": "...",
//            "count": 500, "intrinsic_dim": 4, "synthetic_seed": 7},
//   "teacher": {"codec_hidden", "learning_rate", "batch_size",
//               "epochs_per_level", "lambda", "sigma",
//               "zero_augment_count", "num_levels_to_train"},
//   "student": {"epochs", "trajectories_per_epoch", "subset_fraction",
//               "learning_rate", "zero_leaf_mode": "zero_latent" | "encoded_zero_image"},
//   "eval": {"num_sequences", "horizons": [...]},
//   "grid": {"memory_dims": [...], "seeds": [...]}
// }
//
// Any omitted key takes the profile's value.

#include "imfn/data.hpp"
#include "imfn/student.hpp"
#include "imfn/teacher.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace imfn {

/// Carries every problem found, one per line in what().
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class Profile { kDesk, kPaper };

std::string profile_name(Profile p);
Profile profile_from_name(const std::string& name);

inline constexpr const char* kDataDirEnv = "IMFN_DATA_DIR";

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  std::string path;
  std::size_t count = 500;
  std::size_t intrinsic_dim = 4;
  std::uint64_t synthetic_seed = 7;
};

struct EvalConfig {
  std::size_t num_sequences = 100;
  std::vector<std::size_t> horizons;
};

struct GridConfig {
  std::vector<Eigen::Index> memory_dims;
  std::vector<std::uint64_t> seeds;
};

struct RunConfig {
  Profile profile = Profile::kDesk;
  Eigen::Index memory_dim = 32;
  std::size_t horizon = 8;
  std::uint64_t seed = 42;
  std::uint64_t split_seed = 0;
  double split_ratio = 0.9;
  std::string output_dir = "runs";
  DataConfig data;
  TeacherTrainConfig teacher;
  DistillConfig student;
  EvalConfig eval;
  GridConfig grid;

  /// Teacher / student sub-configs carry memory_dim and seeds too; these
  /// views keep them consistent with the top-level fields.
  TeacherTrainConfig teacher_config() const;
  DistillConfig student_config() const;

  /// Throws ConfigError listing every problem.
  void validate() const;
};

RunConfig profile_defaults(Profile p);

/// Profile defaults overlaid with the document. Unknown keys, wrong types
/// and invalid values are all collected before throwing.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Complete echo with every field explicit; config_from_json(to_json(c)) == c.
nlohmann::json config_to_json(const RunConfig& config);

/// Dataset path with the data directory override applied: a relative path
/// is resolved against $IMFN_DATA_DIR when that variable is set.
std::filesystem::path resolve_data_path(const std::string& path);

std::string zero_leaf_mode_name(ZeroLeafMode mode);
ZeroLeafMode zero_leaf_mode_from_name(const std::string& name);

}  // namespace imfn
