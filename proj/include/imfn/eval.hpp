#pragma once

#include "imfn/data.hpp"
#include "imfn/memtree.hpp"
#include "imfn/student.hpp"
#include "imfn/teacher.hpp"

#include <span>
#include <string>
#include <vector>

namespace imfn {

/// Mean over pixels of the squared difference.
double mse(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b);

/// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr(double mse_value, double peak = 1.0);

/// SSIM parameters. Defaults are the usual Gaussian-window variant:
/// 11x11 window, sigma 1.5, K1 = 0.01, K2 = 0.03, only fully-covered
/// window positions (an 18x18 map for 28x28 images), averaged.
struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean SSIM of two 784-vectors read as row-major 28x28 images.
double ssim(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b,
            const SsimOptions& options = {});

/// Normalized 1-D Gaussian taps (the 2-D window is their outer product).
std::vector<double> gaussian_taps(int window, double sigma);

struct EvalReport {
  std::string protocol = "teacher-roundtrip";
  Eigen::Index memory_dim = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  std::size_t num_sequences = 0;
  double mean_mse = 0;
  std::vector<double> per_frame_mse;
  double psnr_db = 0;
  double ssim = 0;
  std::string timestamp;
};

/// `count` index sequences of length T drawn with replacement from `pool`.
std::vector<std::vector<std::size_t>> sample_eval_sequences(std::span<const std::size_t> pool,
                                                            std::size_t length, std::size_t count,
                                                            Rng& rng);

/// Decoded leaves of invert_down(root, T), one frame per column.
MatrixXf decode_from_root(const Teacher& teacher, const MemoryVector& root, std::size_t length);

/// Roundtrip MSE averaged over frames and broken down by frame index.
EvalReport eval_teacher_roundtrip(const Teacher& teacher, const ImageDataset& dataset,
                                  std::span<const std::size_t> test_indices, std::size_t length,
                                  std::size_t num_sequences, Rng& rng);

struct PrefixCurve {
  std::vector<double> student;  // index t-1 holds the prefix MSE after t updates
  std::vector<double> teacher;  // same protocol on the teacher targets y_t
  std::size_t num_sequences = 0;
};

/// After t online updates, decode the state through the teacher inversion
/// stack and average MSE over frames 1..t. Per-sequence prefix means are
/// averaged across sequences.
PrefixCurve eval_student_prefix(const Student& student, const Teacher& teacher,
                                const ImageDataset& dataset,
                                std::span<const std::size_t> test_indices,
                                std::size_t num_sequences, Rng& rng,
                                ZeroLeafMode mode = ZeroLeafMode::kZeroLatent);

/// Prefix curve for explicit memory states m_1..m_T against `frames`.
std::vector<double> prefix_mse(const Teacher& teacher, const std::vector<MemoryVector>& states,
                               const MatrixXf& frames);

struct EndOfSequence {
  double teacher_mse = 0;
  double student_mse = 0;
  std::size_t num_sequences = 0;
};

/// Full-sequence decode of the teacher root and of the student's final
/// memory through the same inversion stack, MSE against the originals.
EndOfSequence eval_end_of_sequence(const Student& student, const Teacher& teacher,
                                   const ImageDataset& dataset,
                                   std::span<const std::size_t> test_indices,
                                   std::size_t num_sequences, Rng& rng,
                                   ZeroLeafMode mode = ZeroLeafMode::kZeroLatent);

}  // namespace imfn
