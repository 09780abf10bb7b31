#pragma once

#include "imfn/checkpoint.hpp"
#include "imfn/config.hpp"
#include "imfn/data.hpp"
#include "imfn/eval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace imfn::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

struct LoadedData {
  ImageDataset dataset;
  SplitIndices split;
};

/// Dataset and train/test split described by the config. A missing MNIST
/// file is a ConfigError naming the resolved path and the override variable.
LoadedData load_data(const RunConfig& config);

/// Writes teacher.ckpt, teacher_log.jsonl, split.json and teacher_meta.json
/// under `out`. Returns the teacher payload checksum.
std::string cmd_train_teacher(const RunConfig& config, const std::filesystem::path& out,
                              std::ostream* progress = nullptr);

/// Writes student.ckpt, student_log.jsonl and student_meta.json.
void cmd_train_student(const RunConfig& config, const std::filesystem::path& teacher_checkpoint,
                       const std::filesystem::path& out, std::ostream* progress = nullptr);

struct EvalRequest {
  std::string protocol = "teacher-roundtrip";  // | student-prefix | end-of-sequence
  std::size_t horizon = 0;                     // 0: config horizon (student horizon for student protocols)
  std::size_t num_sequences = 0;               // 0: config value
  std::filesystem::path teacher;
  std::filesystem::path student;
};

/// Writes eval_<protocol>_T<T>.json, the matching .csv curve and a
/// .meta.json sidecar. Returns the report document.
nlohmann::json cmd_eval(const RunConfig& config, const EvalRequest& request,
                        const std::filesystem::path& out);

inline constexpr const char* kBenchHeader = "n,incremental_merges,naive_merges,incremental_ms,naive_ms";

/// One CSV row per n (powers of two); writes bench_trajectory.csv.
std::string cmd_bench_trajectory(const std::filesystem::path& teacher_checkpoint,
                                 const std::vector<std::size_t>& ns, const std::filesystem::path& out,
                                 ZeroLeafMode mode = ZeroLeafMode::kZeroLatent);

/// Mean and sample std of mean_mse / psnr_db / ssim across per-seed
/// teacher-roundtrip reports, as JSON and as a Markdown table.
struct Summary {
  nlohmann::json json;
  std::string markdown;
};
Summary summarize_reports(const std::vector<nlohmann::json>& reports);

/// Report document for an EvalReport (timestamp left null unless
/// SOURCE_DATE_EPOCH is set).
nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config_echo);

std::string images_to_csv(const ImageDataset& dataset);
ImageDataset images_from_csv(const std::string& text);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace imfn::cli
