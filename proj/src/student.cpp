#include "imfn/student.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace imfn {

void DistillConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 0) problems.emplace_back("epochs must be >= 0");
  if (trajectories_per_epoch == 0) problems.emplace_back("trajectories_per_epoch must be > 0");
  if (!(subset_fraction > 0 && subset_fraction <= 1)) {
    problems.emplace_back("subset_fraction must be in (0, 1]");
  }
  if (!(learning_rate > 0)) problems.emplace_back("learning_rate must be > 0");
  if (!problems.empty()) {
    std::string msg = "invalid distillation config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

Eigen::VectorXf one_hot(std::size_t t, std::size_t horizon) {
  if (t < 1 || t > horizon) {
    throw std::out_of_range("one_hot: t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(horizon) + "]");
  }
  Eigen::VectorXf e = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(horizon));
  e[static_cast<Eigen::Index>(t - 1)] = 1.0f;
  return e;
}

std::size_t subset_size(double fraction, std::size_t horizon) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(horizon) - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(horizon, 1));
}

Student::Student(Eigen::Index memory_dim, std::size_t horizon)
    : dim_(memory_dim),
      horizon_(horizon),
      delta_net_({2 * memory_dim + static_cast<Eigen::Index>(horizon), 2 * memory_dim,
                  2 * memory_dim, 2 * memory_dim, memory_dim},
                 {Activation::kRelu, Activation::kRelu, Activation::kRelu, Activation::kIdentity},
                 "student.delta") {
  if (horizon == 0) throw std::invalid_argument("Student: horizon must be >= 1");
}

Student::Student(Eigen::Index memory_dim, std::size_t horizon, Rng& rng)
    : Student(memory_dim, horizon) {
  delta_net_.init(rng);
}

void Student::check_step_args(const MemoryVector& memory, const MemoryVector& latent,
                              std::size_t t) const {
  if (memory.size() != dim_ || latent.size() != dim_) {
    throw ShapeError("student step: memory and latent must have dimension " + std::to_string(dim_));
  }
  if (t < 1 || t > horizon_) {
    throw std::out_of_range("student step: t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(horizon_) + "]");
  }
}

MemoryVector Student::step(const MemoryVector& memory, const MemoryVector& latent,
                           std::size_t t) const {
  check_step_args(memory, latent, t);
  const auto& first = delta_net_.layers().front();
  Eigen::VectorXf z = first.weight.leftCols(dim_) * memory;
  z.noalias() += first.weight.middleCols(dim_, dim_) * latent;
  z += first.weight.col(2 * dim_ + static_cast<Eigen::Index>(t) - 1);
  z += first.bias;
  const MatrixXf hidden = z.unaryExpr([a = first.activation](float v) { return apply_activation(a, v); });
  const MatrixXf delta = delta_net_.forward_from(1, hidden);
  return memory + delta.col(0);
}

MemoryVector Student::step_dense(const MemoryVector& memory, const MemoryVector& latent,
                                 std::size_t t) const {
  check_step_args(memory, latent, t);
  Eigen::VectorXf input(2 * dim_ + static_cast<Eigen::Index>(horizon_));
  input << memory, latent, one_hot(t, horizon_);
  return memory + delta_net_.forward_vec(input);
}

std::vector<MemoryVector> Student::rollout(const MemoryVector& initial,
                                           const std::vector<MemoryVector>& latents) const {
  if (latents.size() > horizon_) throw std::invalid_argument("rollout: more latents than horizon");
  std::vector<MemoryVector> states;
  states.reserve(latents.size());
  MemoryVector m = initial;
  for (std::size_t t = 0; t < latents.size(); ++t) {
    m = step(m, latents[t], t + 1);
    states.push_back(m);
  }
  return states;
}

MatrixXf Student::build_inputs(const MatrixXf& memories, const MatrixXf& latents,
                               const std::vector<std::size_t>& timesteps) const {
  const auto k = static_cast<Eigen::Index>(timesteps.size());
  if (memories.rows() != dim_ || latents.rows() != dim_ || memories.cols() != k ||
      latents.cols() != k) {
    throw ShapeError("build_inputs: expected d x |S| memory and latent batches");
  }
  const Eigen::Index width = 2 * dim_ + static_cast<Eigen::Index>(horizon_);
  MatrixXf inputs = MatrixXf::Zero(width, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    inputs.col(j).head(dim_) = memories.col(j);
    inputs.col(j).segment(dim_, dim_) = latents.col(j);
    inputs.col(j).tail(static_cast<Eigen::Index>(horizon_)) =
        one_hot(timesteps[static_cast<std::size_t>(j)], horizon_);
  }
  return inputs;
}

template <typename Scalar>
DistillLoss<Scalar> distill_loss(const BasicMlp<Scalar>& delta_net,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& prev_memory,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& targets,
                                 bool with_grads) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index k = inputs.cols();
  if (k == 0 || prev_memory.cols() != k || targets.cols() != k ||
      prev_memory.rows() != delta_net.out_dim() || targets.rows() != delta_net.out_dim()) {
    throw ShapeError("distill_loss: inconsistent batch shapes");
  }
  typename BasicMlp<Scalar>::Cache cache;
  const Matrix delta = delta_net.forward(inputs, &cache);
  const Matrix residual = prev_memory + delta - targets;
  double sum = 0;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    sum += static_cast<double>(residual.data()[i]) * residual.data()[i];
  }
  DistillLoss<Scalar> out;
  out.loss = sum / static_cast<double>(k);
  out.pattern = relu_pattern_hash(delta_net, cache);
  if (with_grads) {
    const Matrix grad = static_cast<Scalar>(2.0 / static_cast<double>(k)) * residual;
    out.grads = delta_net.backward(cache, grad).grads;
  }
  return out;
}

template DistillLoss<float> distill_loss<float>(const BasicMlp<float>&, const Eigen::MatrixXf&,
                                                const Eigen::MatrixXf&, const Eigen::MatrixXf&, bool);
template DistillLoss<double> distill_loss<double>(const BasicMlp<double>&, const Eigen::MatrixXd&,
                                                  const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                                                  bool);

DistillEpochLog distill_epoch(Student& student, const Teacher& teacher, const MatrixXf& images,
                              const DistillConfig& cfg, AdamState& opt, Rng& rng, int epoch,
                              const DistillObserver* observer) {
  cfg.validate();
  if (student.memory_dim() != teacher.memory_dim()) {
    throw std::invalid_argument("distill_epoch: student and teacher memory_dim differ");
  }
  if (images.cols() == 0 || images.rows() != kImagePixels) {
    throw std::invalid_argument("distill_epoch: need a non-empty 784 x N image pool");
  }
  const std::size_t horizon = student.horizon();
  tree_depth(horizon);
  const auto start_time = std::chrono::steady_clock::now();
  const std::size_t k = subset_size(cfg.subset_fraction, horizon);
  const Eigen::Index d = student.memory_dim();

  DistillEpochLog log;
  log.epoch = epoch;
  double loss_sum = 0;
  for (std::size_t traj = 0; traj < cfg.trajectories_per_epoch; ++traj) {
    TrajectorySample sample;
    MatrixXf frames(kImagePixels, static_cast<Eigen::Index>(horizon));
    for (std::size_t t = 0; t < horizon; ++t) {
      const std::size_t idx = rng.index(static_cast<std::size_t>(images.cols()));
      sample.image_indices.push_back(idx);
      frames.col(static_cast<Eigen::Index>(t)) = images.col(static_cast<Eigen::Index>(idx));
    }
    const MatrixXf latents = teacher.codec().encode_batch(frames);
    for (std::size_t t = 0; t < horizon; ++t) sample.latents.push_back(latents.col(static_cast<Eigen::Index>(t)));
    sample.teacher = generate_trajectory(teacher, sample.latents, cfg.zero_leaf_mode);

    // Rollout states are plain values: no gradient reaches earlier steps.
    sample.states.push_back(sample.teacher.targets.front());
    for (auto& m : student.rollout(sample.states.front(), sample.latents)) sample.states.push_back(std::move(m));

    std::vector<std::size_t> steps(horizon);
    std::iota(steps.begin(), steps.end(), std::size_t{1});
    rng.shuffle(steps);
    steps.resize(k);
    std::sort(steps.begin(), steps.end());
    sample.subset = steps;

    MatrixXf prev(d, static_cast<Eigen::Index>(k));
    MatrixXf xs(d, static_cast<Eigen::Index>(k));
    MatrixXf ys(d, static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t t = steps[j];
      prev.col(static_cast<Eigen::Index>(j)) = sample.states[t - 1];
      xs.col(static_cast<Eigen::Index>(j)) = sample.latents[t - 1];
      ys.col(static_cast<Eigen::Index>(j)) = sample.teacher.targets[t];
    }
    const MatrixXf inputs = student.build_inputs(prev, xs, steps);
    auto result = distill_loss<float>(student.delta_net(), inputs, prev, ys);
    sample.loss = result.loss;
    if (!std::isfinite(result.loss) || !result.grads.all_finite()) {
      ++log.skipped;
      if (observer && observer->on_error) {
        observer->on_error("epoch " + std::to_string(epoch) + " trajectory " +
                           std::to_string(traj) + ": non-finite distillation loss, skipped");
      }
      continue;
    }
    adam_step(student.delta_net(), result.grads, opt);
    loss_sum += result.loss;
    ++log.trajectories;
    if (observer && observer->on_trajectory) observer->on_trajectory(sample);
  }
  log.mean_loss = log.trajectories ? loss_sum / static_cast<double>(log.trajectories)
                                   : std::numeric_limits<double>::quiet_NaN();
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return log;
}

Student train_student(const Teacher& teacher, const MatrixXf& images, std::size_t horizon,
                      const DistillConfig& cfg, Rng& rng, const DistillObserver* observer) {
  cfg.validate();
  tree_depth(horizon);
  Rng init_rng = rng.derive("student/init");
  Student student(teacher.memory_dim(), horizon, init_rng);
  AdamState opt(student.delta_net(), AdamConfig{cfg.learning_rate});
  Rng data_rng = rng.derive("student/data");
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto log = distill_epoch(student, teacher, images, cfg, opt, data_rng, epoch, observer);
    if (observer && observer->on_epoch) observer->on_epoch(log);
  }
  return student;
}

}  // namespace imfn
