#pragma once

#include "imfn/memtree.hpp"
#include "imfn/nn.hpp"
#include "imfn/teacher.hpp"

#include <functional>
#include <vector>

namespace imfn {

struct DistillConfig {
  int epochs = 1000;
  std::size_t trajectories_per_epoch = 100;
  double subset_fraction = 0.25;
  double learning_rate = 1e-4;
  std::vector<std::uint64_t> seeds = {42, 123, 456, 789, 2024};
  ZeroLeafMode zero_leaf_mode = ZeroLeafMode::kZeroLatent;

  void validate() const;
};

/// e_t in R^T with a 1 at index t-1, for 1 <= t <= T.
Eigen::VectorXf one_hot(std::size_t t, std::size_t horizon);

/// Size of the sampled timestep subset: max(1, ceil(fraction * T)).
std::size_t subset_size(double fraction, std::size_t horizon);

/// Residual recurrent memory m_t = m_{t-1} + g(m_{t-1}, x_t, e_t) with
/// g = [2d+T -> 2d -> 2d -> 2d -> d], relu hidden, identity output.
class Student {
 public:
  Student() = default;
  /// Zero parameters (so step() is the identity).
  Student(Eigen::Index memory_dim, std::size_t horizon);
  Student(Eigen::Index memory_dim, std::size_t horizon, Rng& rng);

  Eigen::Index memory_dim() const { return dim_; }
  std::size_t horizon() const { return horizon_; }

  /// One online update for timestep t (1-based). The one-hot block of the
  /// first layer is applied as a single column lookup, so the cost does not
  /// grow with T.
  MemoryVector step(const MemoryVector& memory, const MemoryVector& latent, std::size_t t) const;

  /// Same result via the explicit concatenated input; reference path.
  MemoryVector step_dense(const MemoryVector& memory, const MemoryVector& latent,
                          std::size_t t) const;

  /// m_1..m_n from m_0 with latents x_1..x_n (n <= T).
  std::vector<MemoryVector> rollout(const MemoryVector& initial,
                                    const std::vector<MemoryVector>& latents) const;

  /// Column-batched network input [m; x; e_t] for the given 1-based timesteps.
  MatrixXf build_inputs(const MatrixXf& memories, const MatrixXf& latents,
                        const std::vector<std::size_t>& timesteps) const;

  Mlp& delta_net() { return delta_net_; }
  const Mlp& delta_net() const { return delta_net_; }

  std::uint64_t parameter_hash() const { return delta_net_.parameter_hash(); }

 private:
  void check_step_args(const MemoryVector& memory, const MemoryVector& latent, std::size_t t) const;

  Eigen::Index dim_ = 0;
  std::size_t horizon_ = 0;
  Mlp delta_net_;
};

template <typename Scalar>
struct DistillLoss {
  double loss = 0;  // (1/|S|) sum_t ||m_{t-1} + g(.) - y_t||^2
  BasicMlpGrads<Scalar> grads;
  std::uint64_t pattern = 0;
};

/// Subset loss with the previous states treated as constants. inputs are
/// [m_{t-1}; x_t; e_t] columns, prev_memory the m_{t-1} columns, targets y_t.
template <typename Scalar>
DistillLoss<Scalar> distill_loss(const BasicMlp<Scalar>& delta_net,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& prev_memory,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& targets,
                                 bool with_grads = true);

/// Everything one distillation trajectory touched; handy for tests.
struct TrajectorySample {
  std::vector<std::size_t> image_indices;
  std::vector<MemoryVector> latents;  // x_1..x_T
  Trajectory teacher;                 // y_0..y_T
  std::vector<MemoryVector> states;   // m_0..m_T (m_0 = y_0)
  std::vector<std::size_t> subset;    // sorted, 1-based
  double loss = 0;
};

struct DistillEpochLog {
  int epoch = 0;
  double mean_loss = 0;
  std::size_t trajectories = 0;
  std::size_t skipped = 0;  // non-finite losses
  double wall_seconds = 0;
};

struct DistillObserver {
  std::function<void(const DistillEpochLog&)> on_epoch;
  std::function<void(const TrajectorySample&)> on_trajectory;
  std::function<void(const std::string&)> on_error;
};

/// cfg.trajectories_per_epoch trajectories, one Adam step each. `images` is
/// the training pool (784 x N); frames are drawn with replacement.
DistillEpochLog distill_epoch(Student& student, const Teacher& teacher, const MatrixXf& images,
                              const DistillConfig& cfg, AdamState& opt, Rng& rng, int epoch = 1,
                              const DistillObserver* observer = nullptr);

/// Fresh student of the given horizon, cfg.epochs distillation epochs against
/// the frozen teacher.
Student train_student(const Teacher& teacher, const MatrixXf& images, std::size_t horizon,
                      const DistillConfig& cfg, Rng& rng, const DistillObserver* observer = nullptr);

}  // namespace imfn
