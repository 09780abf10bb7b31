#include "imfn/config.hpp"

#include "imfn/data.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

namespace imfn {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

// Walks one JSON object, collecting every problem rather than stopping at
// the first one.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& problems,
         std::set<std::string> allowed)
      : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {
    if (!obj_.is_object()) {
      problems_.push_back(where() + " must be an object");
      return;
    }
    for (const auto& [key, value] : obj_.items()) {
      if (!allowed.contains(key)) problems_.push_back("unknown key '" + qualified(key) + "'");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!obj_.is_object() || !obj_.contains(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
          throw std::invalid_argument("expected a non-negative integer");
        }
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(qualified(key) + ": " + e.what() + ", got " + v.dump());
    }
  }

  template <typename T>
  void read_list(const std::string& key, std::vector<T>& out) {
    if (!obj_.is_object() || !obj_.contains(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array()) {
      problems_.push_back(qualified(key) + ": expected a list, got " + v.dump());
      return;
    }
    std::vector<T> tmp;
    for (const auto& item : v) {
      const bool ok = std::is_unsigned_v<T> ? item.is_number_unsigned() : item.is_number_integer();
      if (!ok) {
        problems_.push_back(qualified(key) + ": bad list entry " + item.dump());
        return;
      }
      tmp.push_back(item.get<T>());
    }
    out = std::move(tmp);
  }

  const json* sub(const std::string& key) const {
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string qualified(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  std::string where() const { return prefix_.empty() ? "config" : prefix_; }

  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& problems_;
};

void collect(std::vector<std::string>& problems, const std::string& prefix, const auto& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    std::istringstream lines(e.what());
    std::string line;
    std::getline(lines, line);  // headline
    while (std::getline(lines, line)) {
      const auto start = line.find_first_not_of(' ');
      if (start != std::string::npos) problems.push_back(prefix + line.substr(start));
    }
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_lines(problems)), problems_(std::move(problems)) {}

std::string profile_name(Profile p) { return p == Profile::kPaper ? "paper" : "desk"; }

Profile profile_from_name(const std::string& name) {
  if (name == "paper") return Profile::kPaper;
  if (name == "desk") return Profile::kDesk;
  throw ConfigError({"profile must be 'paper' or 'desk', got '" + name + "'"});
}

std::string zero_leaf_mode_name(ZeroLeafMode mode) {
  return mode == ZeroLeafMode::kEncodedZeroImage ? "encoded_zero_image" : "zero_latent";
}

ZeroLeafMode zero_leaf_mode_from_name(const std::string& name) {
  if (name == "zero_latent") return ZeroLeafMode::kZeroLatent;
  if (name == "encoded_zero_image") return ZeroLeafMode::kEncodedZeroImage;
  throw ConfigError({"student.zero_leaf_mode must be 'zero_latent' or 'encoded_zero_image', got '" + name + "'"});
}

RunConfig profile_defaults(Profile p) {
  RunConfig c;
  c.profile = p;
  if (p == Profile::kPaper) {
    c.memory_dim = 1024;
    c.horizon = 128;
    c.output_dir = "runs/paper";
    c.data.source = DataSource::kMnist;
    c.data.path = "train-images-idx3-ubyte";
    c.data.count = 60000;
    // TeacherTrainConfig / DistillConfig defaults are the full-scale values.
    c.eval.num_sequences = 500;
    c.eval.horizons = {2, 4, 8, 16, 32, 64, 128, 256, 512};
    c.grid.memory_dims = {128, 256, 512, 1024, 2048};
    c.grid.seeds = {42, 123, 456, 789, 2024};
  } else {
    c.memory_dim = 32;
    c.horizon = 8;
    c.output_dir = "runs/desk";
    c.data.source = DataSource::kSynthetic;
    c.data.count = 500;
    c.data.intrinsic_dim = 4;
    c.teacher.codec_hidden = 256;
    c.teacher.learning_rate = 2e-3;
    c.teacher.zero_augment_count = 10;
    c.teacher.num_levels_to_train = 4;
    c.student.epochs = 200;
    c.student.trajectories_per_epoch = 20;
    c.student.learning_rate = 2e-3;
    c.eval.num_sequences = 100;
    c.eval.horizons = {2, 4, 8, 16};
    c.grid.memory_dims = {32};
    c.grid.seeds = {42, 123, 456};
  }
  c.teacher.memory_dim = c.memory_dim;
  c.teacher.seeds = c.grid.seeds;
  c.student.seeds = c.grid.seeds;
  return c;
}

TeacherTrainConfig RunConfig::teacher_config() const {
  TeacherTrainConfig t = teacher;
  t.memory_dim = memory_dim;
  t.seeds = grid.seeds;
  return t;
}

DistillConfig RunConfig::student_config() const {
  DistillConfig s = student;
  s.seeds = grid.seeds;
  return s;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  if (memory_dim <= 0) problems.emplace_back("memory_dim must be > 0");
  const auto levels_needed = [](std::size_t t) {
    int depth = 0;
    while ((std::size_t{1} << depth) < t) ++depth;
    return depth;
  };
  if (!is_power_of_two(horizon) || horizon > kMaxSequenceLength) {
    problems.emplace_back("horizon must be a power of two in [1, 512], got " + std::to_string(horizon));
  } else if (levels_needed(horizon) > teacher.num_levels_to_train) {
    problems.emplace_back("horizon " + std::to_string(horizon) + " needs " +
                          std::to_string(levels_needed(horizon)) + " trained levels, teacher.num_levels_to_train is " +
                          std::to_string(teacher.num_levels_to_train));
  }
  if (!(split_ratio > 0 && split_ratio < 1)) problems.emplace_back("split_ratio must be in (0, 1)");
  if (output_dir.empty()) problems.emplace_back("output_dir must not be empty");
  if (data.source == DataSource::kMnist) {
    if (data.path.empty()) problems.emplace_back("data.path is required when data.source is 'mnist'");
  } else {
    if (data.count < 2) problems.emplace_back("data.count must be >= 2");
    if (data.intrinsic_dim == 0 || data.intrinsic_dim >= static_cast<std::size_t>(kImagePixels)) {
      problems.emplace_back("data.intrinsic_dim must be in [1, 783]");
    }
  }
  if (eval.num_sequences == 0) problems.emplace_back("eval.num_sequences must be > 0");
  for (std::size_t t : eval.horizons) {
    if (!is_power_of_two(t) || t > kMaxSequenceLength) {
      problems.emplace_back("eval.horizons entry " + std::to_string(t) + " is not a power of two in [1, 512]");
    }
  }
  for (auto d : grid.memory_dims) {
    if (d <= 0) problems.emplace_back("grid.memory_dims entries must be > 0");
  }
  collect(problems, "teacher.", [&] { teacher_config().validate(); });
  collect(problems, "student.", [&] { student_config().validate(); });
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

RunConfig config_from_json(const json& doc) {
  std::vector<std::string> problems;
  if (!doc.is_object()) throw ConfigError({"config must be a JSON object"});
  if (!doc.contains("profile") || !doc.at("profile").is_string()) {
    throw ConfigError({"profile is required and must be 'paper' or 'desk'"});
  }
  RunConfig c = profile_defaults(profile_from_name(doc.at("profile").get<std::string>()));

  Reader top(doc, "", problems,
             {"profile", "memory_dim", "horizon", "seed", "split_seed", "split_ratio", "output_dir", "data",
              "teacher", "student", "eval", "grid"});
  top.read("memory_dim", c.memory_dim);
  top.read("horizon", c.horizon);
  top.read("seed", c.seed);
  top.read("split_seed", c.split_seed);
  top.read("split_ratio", c.split_ratio);
  top.read("output_dir", c.output_dir);

  if (auto d = top.sub("data")) {
    Reader r(*d, "data", problems, {"source", "path", "count", "intrinsic_dim", "synthetic_seed"});
    std::string source = c.data.source == DataSource::kMnist ? "mnist" : "synthetic";
    r.read("source", source);
    if (source == "mnist") {
      c.data.source = DataSource::kMnist;
    } else if (source == "synthetic") {
      c.data.source = DataSource::kSynthetic;
    } else {
      problems.push_back("data.source must be 'mnist' or 'synthetic', got '" + source + "'");
    }
    r.read("path", c.data.path);
    r.read("count", c.data.count);
    r.read("intrinsic_dim", c.data.intrinsic_dim);
    r.read("synthetic_seed", c.data.synthetic_seed);
  }
  if (auto t = top.sub("teacher")) {
    Reader r(*t, "teacher", problems,
             {"codec_hidden", "learning_rate", "batch_size", "epochs_per_level", "lambda", "sigma",
              "zero_augment_count", "num_levels_to_train"});
    r.read("codec_hidden", c.teacher.codec_hidden);
    r.read("learning_rate", c.teacher.learning_rate);
    r.read("batch_size", c.teacher.batch_size);
    r.read("epochs_per_level", c.teacher.epochs_per_level);
    r.read("lambda", c.teacher.lambda);
    r.read("sigma", c.teacher.sigma);
    r.read("zero_augment_count", c.teacher.zero_augment_count);
    r.read("num_levels_to_train", c.teacher.num_levels_to_train);
  }
  if (auto s = top.sub("student")) {
    Reader r(*s, "student", problems,
             {"epochs", "trajectories_per_epoch", "subset_fraction", "learning_rate", "zero_leaf_mode"});
    r.read("epochs", c.student.epochs);
    r.read("trajectories_per_epoch", c.student.trajectories_per_epoch);
    r.read("subset_fraction", c.student.subset_fraction);
    r.read("learning_rate", c.student.learning_rate);
    std::string mode = zero_leaf_mode_name(c.student.zero_leaf_mode);
    r.read("zero_leaf_mode", mode);
    try {
      c.student.zero_leaf_mode = zero_leaf_mode_from_name(mode);
    } catch (const ConfigError& e) {
      problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    }
  }
  if (auto e = top.sub("eval")) {
    Reader r(*e, "eval", problems, {"num_sequences", "horizons"});
    r.read("num_sequences", c.eval.num_sequences);
    r.read_list("horizons", c.eval.horizons);
  }
  if (auto g = top.sub("grid")) {
    Reader r(*g, "grid", problems, {"memory_dims", "seeds"});
    r.read_list("memory_dims", c.grid.memory_dims);
    r.read_list("seeds", c.grid.seeds);
  }
  c.teacher.memory_dim = c.memory_dim;
  c.teacher.seeds = c.grid.seeds;
  c.student.seeds = c.grid.seeds;

  try {
    c.validate();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError({"config file not found: " + path.string()});
  const auto bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + " is not valid JSON (byte " + std::to_string(e.byte) + ")"});
  }
  return config_from_json(doc);
}

json config_to_json(const RunConfig& c) {
  json j;
  j["profile"] = profile_name(c.profile);
  j["memory_dim"] = c.memory_dim;
  j["horizon"] = c.horizon;
  j["seed"] = c.seed;
  j["split_seed"] = c.split_seed;
  j["split_ratio"] = c.split_ratio;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"source", c.data.source == DataSource::kMnist ? "mnist" : "synthetic"},
               {"path", c.data.path},
               {"count", c.data.count},
               {"intrinsic_dim", c.data.intrinsic_dim},
               {"synthetic_seed", c.data.synthetic_seed}};
  j["teacher"] = {{"codec_hidden", c.teacher.codec_hidden},
                  {"learning_rate", c.teacher.learning_rate},
                  {"batch_size", c.teacher.batch_size},
                  {"epochs_per_level", c.teacher.epochs_per_level},
                  {"lambda", c.teacher.lambda},
                  {"sigma", c.teacher.sigma},
                  {"zero_augment_count", c.teacher.zero_augment_count},
                  {"num_levels_to_train", c.teacher.num_levels_to_train}};
  j["student"] = {{"epochs", c.student.epochs},
                  {"trajectories_per_epoch", c.student.trajectories_per_epoch},
                  {"subset_fraction", c.student.subset_fraction},
                  {"learning_rate", c.student.learning_rate},
                  {"zero_leaf_mode", zero_leaf_mode_name(c.student.zero_leaf_mode)}};
  j["eval"] = {{"num_sequences", c.eval.num_sequences}, {"horizons", c.eval.horizons}};
  j["grid"] = {{"memory_dims", c.grid.memory_dims}, {"seeds", c.grid.seeds}};
  return j;
}

std::filesystem::path resolve_data_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') {
      return std::filesystem::path(dir) / p;
    }
  }
  return p;
}

}  // namespace imfn
