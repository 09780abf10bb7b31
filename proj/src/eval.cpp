#include "imfn/eval.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace imfn {

double mse(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("mse: length mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() == 0) return 0.0;
  double sum = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double psnr(double mse_value, double peak) {
  if (mse_value < 0) throw std::invalid_argument("psnr: mse must be >= 0");
  if (mse_value == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

std::vector<double> gaussian_taps(int window, double sigma) {
  if (window <= 0 || window % 2 == 0) throw std::invalid_argument("gaussian_taps: window must be odd");
  std::vector<double> taps(static_cast<std::size_t>(window));
  const int half = window / 2;
  double total = 0;
  for (int i = 0; i < window; ++i) {
    const double x = i - half;
    taps[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(const Eigen::Ref<const Eigen::VectorXf>& a, const Eigen::Ref<const Eigen::VectorXf>& b,
            const SsimOptions& options) {
  if (a.size() != kImagePixels || b.size() != kImagePixels) {
    throw ShapeError("ssim: both images must have 784 pixels");
  }
  const int side = static_cast<int>(kImageSide);
  const int w = options.window;
  if (w > side) throw std::invalid_argument("ssim: window larger than image");
  const auto taps = gaussian_taps(w, options.sigma);
  const int out = side - w + 1;

  // Five moment images, filtered separably: rows first, then columns.
  using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Grid x(side, side);
  Grid y(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      x(r, c) = a[r * side + c];
      y(r, c) = b[r * side + c];
    }
  }
  const Grid xx = x.cwiseProduct(x);
  const Grid yy = y.cwiseProduct(y);
  const Grid xy = x.cwiseProduct(y);

  const auto filter = [&](const Grid& img) {
    Grid horiz = Grid::Zero(side, out);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < out; ++c) {
        double s = 0;
        for (int k = 0; k < w; ++k) s += taps[static_cast<std::size_t>(k)] * img(r, c + k);
        horiz(r, c) = s;
      }
    }
    Grid both = Grid::Zero(out, out);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < out; ++c) {
        double s = 0;
        for (int k = 0; k < w; ++k) s += taps[static_cast<std::size_t>(k)] * horiz(r + k, c);
        both(r, c) = s;
      }
    }
    return both;
  };

  const Grid mu_x = filter(x);
  const Grid mu_y = filter(y);
  const Grid e_xx = filter(xx);
  const Grid e_yy = filter(yy);
  const Grid e_xy = filter(xy);
  const double c1 = (options.k1 * options.peak) * (options.k1 * options.peak);
  const double c2 = (options.k2 * options.peak) * (options.k2 * options.peak);

  double total = 0;
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < out; ++c) {
      const double mx = mu_x(r, c);
      const double my = mu_y(r, c);
      const double vx = e_xx(r, c) - mx * mx;
      const double vy = e_yy(r, c) - my * my;
      const double cov = e_xy(r, c) - mx * my;
      const double num = (2 * mx * my + c1) * (2 * cov + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(out * out);
}

std::vector<std::vector<std::size_t>> sample_eval_sequences(std::span<const std::size_t> pool,
                                                            std::size_t length, std::size_t count,
                                                            Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_eval_sequences: empty index pool");
  std::vector<std::vector<std::size_t>> seqs(count);
  for (auto& s : seqs) {
    s.resize(length);
    for (auto& i : s) i = pool[rng.index(pool.size())];
  }
  return seqs;
}

MatrixXf decode_from_root(const Teacher& teacher, const MemoryVector& root, std::size_t length) {
  const auto leaves = teacher.invert_down(root, length);
  MatrixXf latents(teacher.memory_dim(), static_cast<Eigen::Index>(length));
  for (std::size_t i = 0; i < length; ++i) latents.col(static_cast<Eigen::Index>(i)) = leaves[i];
  return teacher.codec().decode_batch(latents);
}

namespace {

std::vector<MemoryVector> columns(const MatrixXf& m) {
  std::vector<MemoryVector> out;
  out.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m.col(j));
  return out;
}

void check_eval_pool(std::span<const std::size_t> test_indices, std::size_t length) {
  tree_depth(length);
  if (test_indices.size() < length) {
    throw std::invalid_argument("evaluation split has " + std::to_string(test_indices.size()) +
                                " images, fewer than T = " + std::to_string(length));
  }
}

}  // namespace

EvalReport eval_teacher_roundtrip(const Teacher& teacher, const ImageDataset& dataset,
                                  std::span<const std::size_t> test_indices, std::size_t length,
                                  std::size_t num_sequences, Rng& rng) {
  check_eval_pool(test_indices, length);
  if (num_sequences == 0) throw std::invalid_argument("eval_teacher_roundtrip: num_sequences must be > 0");
  EvalReport report;
  report.protocol = "teacher-roundtrip";
  report.memory_dim = teacher.memory_dim();
  report.horizon = length;
  report.seed = rng.seed();
  report.num_sequences = num_sequences;
  report.per_frame_mse.assign(length, 0.0);

  const auto seqs = sample_eval_sequences(test_indices, length, num_sequences, rng);
  double ssim_sum = 0;
  for (const auto& seq : seqs) {
    const MatrixXf frames = dataset.subset(seq);
    const auto latents = columns(teacher.codec().encode_batch(frames));
    const MatrixXf recon = decode_from_root(teacher, teacher.merge_up(latents), length);
    for (std::size_t j = 0; j < length; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      report.per_frame_mse[j] += mse(frames.col(col), recon.col(col));
      ssim_sum += ssim(frames.col(col), recon.col(col));
    }
  }
  double total = 0;
  for (auto& v : report.per_frame_mse) {
    v /= static_cast<double>(num_sequences);
    total += v;
  }
  report.mean_mse = total / static_cast<double>(length);
  report.psnr_db = psnr(report.mean_mse);
  report.ssim = ssim_sum / static_cast<double>(num_sequences * length);
  return report;
}

std::vector<double> prefix_mse(const Teacher& teacher, const std::vector<MemoryVector>& states,
                               const MatrixXf& frames) {
  const auto length = static_cast<std::size_t>(frames.cols());
  if (states.size() != length) throw std::invalid_argument("prefix_mse: need one state per frame");
  std::vector<double> curve(length);
  for (std::size_t t = 1; t <= length; ++t) {
    const MatrixXf recon = decode_from_root(teacher, states[t - 1], length);
    double sum = 0;
    for (std::size_t j = 0; j < t; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      sum += mse(frames.col(col), recon.col(col));
    }
    curve[t - 1] = sum / static_cast<double>(t);
  }
  return curve;
}

PrefixCurve eval_student_prefix(const Student& student, const Teacher& teacher,
                                const ImageDataset& dataset,
                                std::span<const std::size_t> test_indices,
                                std::size_t num_sequences, Rng& rng, ZeroLeafMode mode) {
  const std::size_t length = student.horizon();
  check_eval_pool(test_indices, length);
  if (student.memory_dim() != teacher.memory_dim()) {
    throw std::invalid_argument("eval_student_prefix: student/teacher memory_dim differ");
  }
  PrefixCurve curve;
  curve.num_sequences = num_sequences;
  curve.student.assign(length, 0.0);
  curve.teacher.assign(length, 0.0);
  const auto seqs = sample_eval_sequences(test_indices, length, num_sequences, rng);
  for (const auto& seq : seqs) {
    const MatrixXf frames = dataset.subset(seq);
    const auto latents = columns(teacher.codec().encode_batch(frames));
    const Trajectory traj = generate_trajectory(teacher, latents, mode);
    const auto states = student.rollout(traj.targets.front(), latents);
    const std::vector<MemoryVector> targets(traj.targets.begin() + 1, traj.targets.end());
    const auto s_curve = prefix_mse(teacher, states, frames);
    const auto t_curve = prefix_mse(teacher, targets, frames);
    for (std::size_t t = 0; t < length; ++t) {
      curve.student[t] += s_curve[t];
      curve.teacher[t] += t_curve[t];
    }
  }
  for (std::size_t t = 0; t < length; ++t) {
    curve.student[t] /= static_cast<double>(num_sequences);
    curve.teacher[t] /= static_cast<double>(num_sequences);
  }
  return curve;
}

EndOfSequence eval_end_of_sequence(const Student& student, const Teacher& teacher,
                                   const ImageDataset& dataset,
                                   std::span<const std::size_t> test_indices,
                                   std::size_t num_sequences, Rng& rng, ZeroLeafMode mode) {
  const std::size_t length = student.horizon();
  check_eval_pool(test_indices, length);
  EndOfSequence out;
  out.num_sequences = num_sequences;
  const auto seqs = sample_eval_sequences(test_indices, length, num_sequences, rng);
  std::vector<double> teacher_frame(length, 0.0);
  std::vector<double> student_frame(length, 0.0);
  // y_0 depends only on the teacher.
  const MemoryVector m0 =
      teacher.merge_up(std::vector<MemoryVector>(length, blank_leaf(teacher, mode)));
  for (const auto& seq : seqs) {
    const MatrixXf frames = dataset.subset(seq);
    const auto latents = columns(teacher.codec().encode_batch(frames));
    const MemoryVector root = teacher.merge_up(latents);
    const auto states = student.rollout(m0, latents);
    const MatrixXf t_recon = decode_from_root(teacher, root, length);
    const MatrixXf s_recon = decode_from_root(teacher, states.back(), length);
    for (std::size_t j = 0; j < length; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      teacher_frame[j] += mse(frames.col(col), t_recon.col(col));
      student_frame[j] += mse(frames.col(col), s_recon.col(col));
    }
  }
  // Same accumulation order as eval_teacher_roundtrip.
  for (std::size_t j = 0; j < length; ++j) {
    out.teacher_mse += teacher_frame[j] / static_cast<double>(num_sequences);
    out.student_mse += student_frame[j] / static_cast<double>(num_sequences);
  }
  out.teacher_mse /= static_cast<double>(length);
  out.student_mse /= static_cast<double>(length);
  return out;
}

}  // namespace imfn
