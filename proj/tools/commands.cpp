#include "commands.hpp"

#include "imfn/memtree.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace imfn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string now_utc() { return iso_utc(std::time(nullptr)); }

json report_timestamp() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    return iso_utc(static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10)));
  }
  return nullptr;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Streams records to <path>.tmp and renames on finish().
class JsonlWriter {
 public:
  explicit JsonlWriter(fs::path path) : path_(std::move(path)), tmp_(path_) {
    tmp_ += ".tmp";
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + tmp_.string() + " for writing");
  }

  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

  void finish() {
    out_.close();
    fs::rename(tmp_, path_);
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

void write_meta(const fs::path& path, const std::string& command, double wall_seconds,
                const std::vector<std::string>& outputs) {
  json meta = {{"command", command},
               {"timestamp", now_utc()},
               {"wall_seconds", wall_seconds},
               {"outputs", outputs}};
  write_file_atomic(path, meta.dump(2) + "\n");
}

int trained_levels(const CheckpointInfo& info) {
  const json& cfg = info.config;
  if (cfg.contains("teacher") && cfg.at("teacher").contains("num_levels_to_train")) {
    return cfg.at("teacher").at("num_levels_to_train").get<int>();
  }
  return info.level_count;
}

std::string fmt(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

LoadedData load_data(const RunConfig& config) {
  LoadedData d;
  if (config.data.source == DataSource::kMnist) {
    const fs::path path = resolve_data_path(config.data.path);
    if (!fs::exists(path)) {
      throw ConfigError({"dataset not found at '" + path.string() + "'; set data.path in the config or point " +
                         std::string(kDataDirEnv) + " at the directory holding it"});
    }
    d.dataset = load_idx_file(path);
  } else {
    d.dataset = synthetic_manifold(config.data.count, config.data.intrinsic_dim, config.data.synthetic_seed);
  }
  d.split = make_split(d.dataset.size(), config.split_ratio, config.split_seed);
  if (d.split.train.empty() || d.split.test.empty()) {
    throw ConfigError({"split of " + std::to_string(d.dataset.size()) + " images leaves an empty train or test set"});
  }
  return d;
}

std::string cmd_train_teacher(const RunConfig& config, const fs::path& out, std::ostream* progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const LoadedData data = load_data(config);
  fs::create_directories(out);
  save_split(data.split, out / "split.json");

  JsonlWriter log(out / "teacher_log.jsonl");
  log.write({{"record", "header"},
             {"command", "train-teacher"},
             {"config", config_to_json(config)},
             {"train_count", data.split.train.size()},
             {"test_count", data.split.test.size()}});

  const MatrixXf train_images = data.dataset.subset(data.split.train);
  TrainObserver observer;
  observer.on_epoch = [&](const EpochLog& e) {
    const json r = {{"record", "epoch"}, {"level", e.level}, {"epoch", e.epoch}, {"mean_loss", e.mean_loss},
                    {"steps", e.steps}};
    log.write(r);
    if (progress) *progress << r.dump() << '\n';
  };
  // Roundtrip checkpoint on held-out data at the deepest horizon this level completes.
  observer.on_level_done = [&](int level, const Teacher& teacher) {
    const std::size_t horizon = std::size_t{1} << (level + 1);
    if (horizon > data.split.test.size()) return;
    Rng eval_rng = Rng(config.seed).derive("train/checkpoint-eval");
    const EvalReport r =
        eval_teacher_roundtrip(teacher, data.dataset, data.split.test, horizon, 20, eval_rng);
    log.write({{"record", "level_done"}, {"level", level}, {"horizon", horizon}, {"roundtrip_mse", r.mean_mse}});
  };

  Rng rng(config.seed);
  const Teacher teacher = train_teacher(train_images, config.teacher_config(), rng, &observer);
  const CheckpointMeta meta{config.seed, config_to_json(config), ""};
  save_teacher(teacher, meta, out / "teacher.ckpt");
  const std::string checksum = teacher_checksum(teacher);
  log.write({{"record", "done"}, {"teacher_checksum", checksum}});
  log.finish();
  write_meta(out / "teacher_meta.json", "train-teacher", seconds_since(start),
             {"teacher.ckpt", "teacher_log.jsonl", "split.json"});
  return checksum;
}

void cmd_train_student(const RunConfig& config, const fs::path& teacher_checkpoint, const fs::path& out,
                       std::ostream* progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  CheckpointInfo tinfo;
  const Teacher teacher = load_teacher(teacher_checkpoint, &tinfo);
  std::vector<std::string> problems;
  if (teacher.memory_dim() != config.memory_dim) {
    problems.push_back("teacher checkpoint has memory_dim " + std::to_string(teacher.memory_dim()) +
                       " but the config asks for " + std::to_string(config.memory_dim));
  }
  const int needed = tree_depth(config.horizon);
  if (needed > trained_levels(tinfo)) {
    problems.push_back("horizon " + std::to_string(config.horizon) + " needs " + std::to_string(needed) +
                       " trained teacher levels; the checkpoint has " + std::to_string(trained_levels(tinfo)));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));

  const LoadedData data = load_data(config);
  fs::create_directories(out);
  JsonlWriter log(out / "student_log.jsonl");
  log.write({{"record", "header"},
             {"command", "train-student"},
             {"config", config_to_json(config)},
             {"teacher_checksum", tinfo.payload_checksum}});

  DistillObserver observer;
  observer.on_epoch = [&](const DistillEpochLog& e) {
    const json r = {{"record", "epoch"},     {"epoch", e.epoch},     {"mean_loss", e.mean_loss},
                    {"trajectories", e.trajectories}, {"skipped", e.skipped}, {"wall_seconds", e.wall_seconds}};
    log.write(r);
    if (progress) *progress << r.dump() << '\n';
  };
  observer.on_error = [&](const std::string& msg) { log.write({{"record", "error"}, {"message", msg}}); };

  Rng rng(config.seed);
  const MatrixXf train_images = data.dataset.subset(data.split.train);
  const Student student =
      train_student(teacher, train_images, config.horizon, config.student_config(), rng, &observer);
  const std::string after = teacher_checksum(teacher);
  if (after != tinfo.payload_checksum) {
    throw std::runtime_error("teacher parameters changed during distillation");
  }
  const CheckpointMeta meta{config.seed, config_to_json(config), tinfo.payload_checksum};
  save_student(student, meta, out / "student.ckpt");
  log.write({{"record", "done"}, {"teacher_checksum_before", tinfo.payload_checksum},
             {"teacher_checksum_after", after}});
  log.finish();
  write_meta(out / "student_meta.json", "train-student", seconds_since(start), {"student.ckpt", "student_log.jsonl"});
}

json report_to_json(const EvalReport& report, const json& config_echo) {
  return {{"protocol", report.protocol},
          {"config", config_echo},
          {"mean_mse", report.mean_mse},
          {"per_frame_mse", report.per_frame_mse},
          {"psnr_db", report.psnr_db},
          {"ssim", report.ssim},
          {"timestamp", report_timestamp()}};
}

json cmd_eval(const RunConfig& config, const EvalRequest& request, const fs::path& out) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::string& protocol = request.protocol;
  const bool needs_student = protocol == "student-prefix" || protocol == "end-of-sequence";
  if (!needs_student && protocol != "teacher-roundtrip") {
    throw ConfigError({"protocol must be teacher-roundtrip, student-prefix or end-of-sequence, got '" + protocol + "'"});
  }
  if (request.teacher.empty()) throw ConfigError({"--teacher checkpoint is required"});
  if (needs_student && request.student.empty()) throw ConfigError({"--student checkpoint is required for " + protocol});

  CheckpointInfo tinfo;
  const Teacher teacher = load_teacher(request.teacher, &tinfo);
  std::optional<Student> student;
  CheckpointInfo sinfo;
  if (needs_student) {
    student = load_student(request.student, &sinfo);
    std::vector<std::string> problems;
    if (student->memory_dim() != teacher.memory_dim()) {
      problems.emplace_back("student and teacher checkpoints have different memory_dim");
    }
    if (!sinfo.teacher_checksum.empty() && sinfo.teacher_checksum != tinfo.payload_checksum) {
      problems.emplace_back("student was distilled from teacher " + sinfo.teacher_checksum + ", not " +
                            tinfo.payload_checksum);
    }
    if (request.horizon != 0 && request.horizon != student->horizon()) {
      problems.push_back("student horizon is " + std::to_string(student->horizon()) + ", --horizon asks for " +
                         std::to_string(request.horizon));
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
  }
  const std::size_t horizon =
      needs_student ? student->horizon() : (request.horizon != 0 ? request.horizon : config.horizon);
  tree_depth(horizon);
  const std::size_t num_sequences = request.num_sequences != 0 ? request.num_sequences : config.eval.num_sequences;

  const LoadedData data = load_data(config);
  Rng rng = Rng(config.seed).derive("eval/" + protocol);
  json echo = {{"memory_dim", teacher.memory_dim()},
               {"horizon", horizon},
               {"seed", config.seed},
               {"split_seed", config.split_seed},
               {"num_sequences", num_sequences},
               {"zero_leaf_mode", zero_leaf_mode_name(config.student.zero_leaf_mode)},
               {"teacher_checksum", tinfo.payload_checksum},
               {"run", config_to_json(config)}};
  if (needs_student) echo["student_checksum"] = sinfo.payload_checksum;

  json doc;
  std::ostringstream csv;
  if (protocol == "teacher-roundtrip") {
    EvalReport r = eval_teacher_roundtrip(teacher, data.dataset, data.split.test, horizon, num_sequences, rng);
    doc = report_to_json(r, echo);
    csv << "frame_index,mse\n";
    for (std::size_t j = 0; j < r.per_frame_mse.size(); ++j) csv << j + 1 << ',' << csv_number(r.per_frame_mse[j]) << '\n';
  } else if (protocol == "student-prefix") {
    const PrefixCurve c = eval_student_prefix(*student, teacher, data.dataset, data.split.test, num_sequences, rng,
                                              config.student.zero_leaf_mode);
    doc = {{"protocol", protocol},
           {"config", echo},
           {"student_prefix_mse", c.student},
           {"teacher_prefix_mse", c.teacher},
           {"timestamp", report_timestamp()}};
    csv << "t,student_mse,teacher_mse\n";
    for (std::size_t t = 0; t < c.student.size(); ++t) {
      csv << t + 1 << ',' << csv_number(c.student[t]) << ',' << csv_number(c.teacher[t]) << '\n';
    }
  } else {
    const EndOfSequence e = eval_end_of_sequence(*student, teacher, data.dataset, data.split.test, num_sequences,
                                                 rng, config.student.zero_leaf_mode);
    doc = {{"protocol", protocol},
           {"config", echo},
           {"teacher_mse", e.teacher_mse},
           {"student_mse", e.student_mse},
           {"teacher_psnr_db", psnr(e.teacher_mse)},
           {"student_psnr_db", psnr(e.student_mse)},
           {"timestamp", report_timestamp()}};
    csv << "model,mse\nteacher," << csv_number(e.teacher_mse) << "\nstudent," << csv_number(e.student_mse) << '\n';
  }

  const std::string base = "eval_" + protocol + "_T" + std::to_string(horizon);
  fs::create_directories(out);
  write_file_atomic(out / (base + ".json"), doc.dump(2) + "\n");
  write_file_atomic(out / (base + ".csv"), csv.str());
  write_meta(out / (base + ".meta.json"), "eval", seconds_since(start), {base + ".json", base + ".csv"});
  return doc;
}

std::string cmd_bench_trajectory(const fs::path& teacher_checkpoint, const std::vector<std::size_t>& ns,
                                 const fs::path& out, ZeroLeafMode mode) {
  std::vector<std::string> problems;
  for (std::size_t n : ns) {
    if (!is_power_of_two(n) || n > kMaxSequenceLength) {
      problems.push_back("n = " + std::to_string(n) + " is not a power of two in [1, 512]");
    }
  }
  if (ns.empty()) problems.emplace_back("at least one n is required");
  if (!problems.empty()) throw ConfigError(std::move(problems));
  const Teacher teacher = load_teacher(teacher_checkpoint);

  std::ostringstream csv;
  csv << kBenchHeader << '\n';
  for (std::size_t n : ns) {
    Rng rng = Rng(n).derive("bench");
    std::vector<MemoryVector> latents;
    for (std::size_t i = 0; i < n; ++i) latents.push_back(gaussian_noise(teacher.memory_dim(), 1.0, rng));
    auto t0 = std::chrono::steady_clock::now();
    const Trajectory inc = generate_trajectory(teacher, latents, mode);
    const double inc_ms = seconds_since(t0) * 1e3;
    t0 = std::chrono::steady_clock::now();
    const Trajectory naive = naive_trajectory(teacher, latents, mode);
    const double naive_ms = seconds_since(t0) * 1e3;
    csv << n << ',' << inc.merges << ',' << naive.merges << ',' << fmt(inc_ms, 3) << ',' << fmt(naive_ms, 3) << '\n';
  }
  fs::create_directories(out);
  write_file_atomic(out / "bench_trajectory.csv", csv.str());
  return csv.str();
}

Summary summarize_reports(const std::vector<json>& reports) {
  if (reports.empty()) throw ConfigError({"no reports to summarize"});
  std::vector<std::string> problems;
  const json& first = reports.front();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& r = reports[i];
    for (const char* key : {"protocol", "config", "mean_mse", "per_frame_mse", "psnr_db", "ssim"}) {
      if (!r.contains(key)) problems.push_back("report " + std::to_string(i) + " lacks '" + key + "'");
    }
    if (!problems.empty()) continue;
    if (r.at("protocol") != "teacher-roundtrip") problems.push_back("report " + std::to_string(i) + " is not teacher-roundtrip");
    for (const char* key : {"memory_dim", "horizon"}) {
      if (r.at("config").at(key) != first.at("config").at(key)) {
        problems.push_back("report " + std::to_string(i) + " has a different " + key);
      }
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));

  const auto stats = [&](const char* key) {
    double sum = 0;
    for (const auto& r : reports) sum += r.at(key).get<double>();
    const double mean = sum / static_cast<double>(reports.size());
    double sq = 0;
    for (const auto& r : reports) sq += std::pow(r.at(key).get<double>() - mean, 2);
    const double sd = reports.size() > 1 ? std::sqrt(sq / static_cast<double>(reports.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  const auto [mse_m, mse_s] = stats("mean_mse");
  const auto [psnr_m, psnr_s] = stats("psnr_db");
  const auto [ssim_m, ssim_s] = stats("ssim");
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.push_back(r.at("config").at("seed").get<std::uint64_t>());

  Summary s;
  s.json = {{"model", "IMFN"},
            {"memory_dim", first.at("config").at("memory_dim")},
            {"horizon", first.at("config").at("horizon")},
            {"seeds", seeds},
            {"mse", {{"mean", mse_m}, {"std", mse_s}}},
            {"psnr_db", {{"mean", psnr_m}, {"std", psnr_s}}},
            {"ssim", {{"mean", ssim_m}, {"std", ssim_s}}}};
  std::ostringstream md;
  md << "| Model | MSE | PSNR (dB) | SSIM |\n|---|---|---|---|\n";
  md << "| IMFN | " << fmt(mse_m, 6) << " ± " << fmt(mse_s, 6) << " | " << fmt(psnr_m, 2) << " ± " << fmt(psnr_s, 2)
     << " | " << fmt(ssim_m, 4) << " ± " << fmt(ssim_s, 4) << " |\n";
  s.markdown = md.str();
  return s;
}

std::string images_to_csv(const ImageDataset& dataset) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const ImageVector img = dataset.image(i);
    for (Eigen::Index j = 0; j < img.size(); ++j) os << (j ? "," : "") << img[j];
    os << '\n';
  }
  return os.str();
}

ImageDataset images_from_csv(const std::string& text) {
  std::vector<float> values;
  std::size_t rows = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      try {
        values.push_back(std::stof(field));
      } catch (const std::exception&) {
        throw ParseError("CSV row " + std::to_string(rows + 1) + ": bad number '" + field + "'", 0);
      }
      ++count;
    }
    if (count != static_cast<std::size_t>(kImagePixels)) {
      throw ParseError("CSV row " + std::to_string(rows + 1) + " has " + std::to_string(count) + " values, expected 784", 0);
    }
    ++rows;
  }
  ImageDataset ds;
  ds.images = Eigen::Map<MatrixXf>(values.data(), kImagePixels, static_cast<Eigen::Index>(rows));
  for (Eigen::Index i = 0; i < ds.images.cols(); ++i) check_image(ds.images.col(i));
  return ds;
}

namespace {

struct CommonFlags {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--profile", f.profile, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_option("--out", f.out, "Output directory (overrides output_dir)");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    c = load_config(f.config);
    if (!f.profile.empty() && profile_from_name(f.profile) != c.profile) {
      throw ConfigError({"--profile " + f.profile + " conflicts with profile '" + profile_name(c.profile) + "' in " +
                         f.config});
    }
  } else {
    c = profile_defaults(f.profile.empty() ? Profile::kDesk : profile_from_name(f.profile));
  }
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  c.validate();
  return c;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invertible memory flow networks: training, evaluation and data tools", "imfn"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Do not echo training records");

  CommonFlags teacher_flags, student_flags, eval_flags, show_flags, split_flags;
  auto* train_teacher_cmd = app.add_subcommand("train-teacher", "Train the codec and sweeper stack level by level");
  add_common(train_teacher_cmd, teacher_flags);

  std::string teacher_path, student_path;
  auto* train_student_cmd = app.add_subcommand("train-student", "Distill a recurrent student from a frozen teacher");
  add_common(train_student_cmd, student_flags);
  train_student_cmd->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();

  EvalRequest req;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints and write a report");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--teacher", req.teacher, "Teacher checkpoint")->required();
  eval_cmd->add_option("--student", req.student, "Student checkpoint");
  eval_cmd->add_option("--protocol", req.protocol, "teacher-roundtrip | student-prefix | end-of-sequence")
      ->check(CLI::IsMember({"teacher-roundtrip", "student-prefix", "end-of-sequence"}));
  eval_cmd->add_option("--horizon,-T", req.horizon, "Sequence length");
  eval_cmd->add_option("--num-sequences", req.num_sequences, "Number of test sequences");

  std::vector<std::size_t> bench_ns = {2, 4, 8, 16, 32, 64, 128, 256};
  std::string bench_teacher, bench_out = ".", bench_mode = "zero_latent";
  auto* bench_cmd = app.add_subcommand("bench-trajectory", "Count and time incremental vs naive trajectories");
  bench_cmd->add_option("--teacher", bench_teacher, "Teacher checkpoint")->required();
  bench_cmd->add_option("--n", bench_ns, "Sequence lengths (powers of two)");
  bench_cmd->add_option("--out", bench_out, "Output directory");
  bench_cmd->add_option("--zero-leaf-mode", bench_mode)->check(CLI::IsMember({"zero_latent", "encoded_zero_image"}));

  auto* data_cmd = app.add_subcommand("data", "Dataset preparation");
  data_cmd->require_subcommand(1);
  std::string convert_in, convert_out;
  auto* convert_cmd = data_cmd->add_subcommand("convert", "Convert between IDX image files and CSV (784 values per row)");
  convert_cmd->add_option("--input", convert_in, "Source file (.csv or IDX)")->required();
  convert_cmd->add_option("--out", convert_out, "Destination file (.csv or IDX)")->required();
  std::size_t split_count = 0;
  std::optional<double> split_ratio;
  std::optional<std::uint64_t> split_seed;
  std::string split_input;
  auto* split_cmd = data_cmd->add_subcommand("split", "Write a seeded train/test split file");
  add_common(split_cmd, split_flags);
  split_cmd->add_option("--count", split_count, "Number of items (default: the config dataset size)");
  split_cmd->add_option("--input", split_input, "IDX file whose header gives the count");
  split_cmd->add_option("--ratio", split_ratio, "Train fraction");
  split_cmd->add_option("--split-seed", split_seed, "Split seed");
  std::size_t synth_count = 500, synth_k = 4;
  std::uint64_t synth_seed = 7;
  std::string synth_out;
  auto* synth_cmd = data_cmd->add_subcommand("synth", "Write a synthetic-manifold dataset as IDX");
  synth_cmd->add_option("--count", synth_count, "Number of images");
  synth_cmd->add_option("--intrinsic-dim", synth_k, "Manifold dimension");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--out", synth_out, "Destination IDX file")->required();

  std::vector<std::string> summary_inputs;
  std::string summary_out;
  auto* summarize_cmd = app.add_subcommand("summarize", "Mean and std across per-seed teacher-roundtrip reports");
  summarize_cmd->add_option("reports", summary_inputs, "Report JSON files")->required();
  summarize_cmd->add_option("--out", summary_out, "Output directory for summary.json / summary.md");

  auto* show_cmd = app.add_subcommand("show-config", "Print the fully resolved configuration");
  add_common(show_cmd, show_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    std::ostream* progress = quiet ? nullptr : &out;
    if (*train_teacher_cmd) {
      const RunConfig c = resolve_config(teacher_flags);
      const auto checksum = cmd_train_teacher(c, c.output_dir, progress);
      out << "teacher checkpoint: " << (fs::path(c.output_dir) / "teacher.ckpt").string() << " (" << checksum << ")\n";
    } else if (*train_student_cmd) {
      const RunConfig c = resolve_config(student_flags);
      cmd_train_student(c, teacher_path, c.output_dir, progress);
      out << "student checkpoint: " << (fs::path(c.output_dir) / "student.ckpt").string() << '\n';
    } else if (*eval_cmd) {
      const RunConfig c = resolve_config(eval_flags);
      const json doc = cmd_eval(c, req, c.output_dir);
      out << doc.dump(2) << '\n';
    } else if (*bench_cmd) {
      out << cmd_bench_trajectory(bench_teacher, bench_ns, bench_out, zero_leaf_mode_from_name(bench_mode));
    } else if (*convert_cmd) {
      const bool from_csv = fs::path(convert_in).extension() == ".csv";
      const bool to_csv = fs::path(convert_out).extension() == ".csv";
      ImageDataset ds;
      if (from_csv) {
        const auto bytes = read_file(convert_in);
        ds = images_from_csv(std::string(bytes.begin(), bytes.end()));
      } else {
        const auto bytes = read_file(convert_in);
        const auto declared = idx_header_count(bytes);
        ds = load_idx_images(bytes);
        if (ds.size() != declared) throw std::runtime_error("IDX image count does not match its header");
      }
      if (to_csv) {
        write_file_atomic(convert_out, images_to_csv(ds));
      } else {
        write_file_atomic(convert_out, save_idx_images(ds));
      }
      out << "converted " << ds.size() << " images to " << convert_out << '\n';
    } else if (*split_cmd) {
      const RunConfig c = resolve_config(split_flags);
      std::size_t n = split_count;
      if (n == 0 && !split_input.empty()) n = idx_header_count(read_file(split_input));
      if (n == 0) n = load_data(c).dataset.size();
      const SplitIndices s = make_split(n, split_ratio.value_or(c.split_ratio), split_seed.value_or(c.split_seed));
      const fs::path path = fs::path(c.output_dir) / "split.json";
      save_split(s, path);
      out << "split " << s.train.size() << " train / " << s.test.size() << " test -> " << path.string() << '\n';
    } else if (*synth_cmd) {
      const ImageDataset ds = synthetic_manifold(synth_count, synth_k, synth_seed);
      write_file_atomic(synth_out, save_idx_images(ds));
      out << "wrote " << ds.size() << " synthetic images to " << synth_out << '\n';
    } else if (*summarize_cmd) {
      std::vector<json> reports;
      for (const auto& p : summary_inputs) {
        const auto bytes = read_file(p);
        try {
          reports.push_back(json::parse(bytes.begin(), bytes.end()));
        } catch (const json::parse_error&) {
          throw ConfigError({p + " is not valid JSON"});
        }
      }
      const Summary s = summarize_reports(reports);
      if (!summary_out.empty()) {
        write_file_atomic(fs::path(summary_out) / "summary.json", s.json.dump(2) + "\n");
        write_file_atomic(fs::path(summary_out) / "summary.md", s.markdown);
      }
      out << s.markdown;
    } else if (*show_cmd) {
      out << config_to_json(resolve_config(show_flags)).dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace imfn::cli
