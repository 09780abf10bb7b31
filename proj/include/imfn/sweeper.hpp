#pragma once

#include "imfn/nn.hpp"

#include <functional>
#include <utility>

namespace imfn {

/// One tree level: a 2->1 merge net and a 1->2 inverter.
///
/// merge_net  : [2d -> 2d -> d], relu hidden, identity output
/// invert_net : [d -> 2d -> 2d], relu hidden, identity output
///
/// The inverter output splits as (left = rows [0, d), right = rows [d, 2d)).
class Sweeper {
 public:
  Sweeper() = default;
  Sweeper(int level, Eigen::Index memory_dim);
  Sweeper(int level, Eigen::Index memory_dim, Rng& rng);

  int level() const { return level_; }
  Eigen::Index memory_dim() const { return dim_; }

  MemoryVector merge(const MemoryVector& left, const MemoryVector& right) const;
  std::pair<MemoryVector, MemoryVector> invert(const MemoryVector& merged) const;

  /// Column-batched forms. merge_batch(L, R).col(i) == merge(L.col(i), R.col(i))
  /// up to GEMM rounding.
  MatrixXf merge_batch(const MatrixXf& left, const MatrixXf& right) const;
  std::pair<MatrixXf, MatrixXf> invert_batch(const MatrixXf& merged) const;

  Mlp& merge_net() { return merge_net_; }
  Mlp& invert_net() { return invert_net_; }
  const Mlp& merge_net() const { return merge_net_; }
  const Mlp& invert_net() const { return invert_net_; }

  std::uint64_t parameter_hash() const;

 private:
  int level_ = 0;
  Eigen::Index dim_ = 0;
  Mlp merge_net_;
  Mlp invert_net_;
};

/// ||ztL - zL||^2 + ||ztR - zR||^2, summed over dimensions.
double latent_recon_loss(const MemoryVector& z_left, const MemoryVector& z_right,
                         const MemoryVector& recon_left, const MemoryVector& recon_right);

/// lambda * ||merged||^2.
double norm_penalty(const MemoryVector& merged, double lambda);

/// Reconstruction term of a pair pass. Receives the inverter halves
/// (d x B each), returns the batch *sum* of the reconstruction loss and
/// writes d(sum)/d(recon_left), d(sum)/d(recon_right).
template <typename Scalar>
using ReconTerm = std::function<double(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& recon_left,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& recon_right,
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& grad_left,
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& grad_right, std::uint64_t* pattern)>;

template <typename Scalar>
struct PairPass {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  double loss = 0;     // batch mean of recon + penalty
  double recon = 0;    // batch mean
  double penalty = 0;  // batch mean
  Matrix merged;       // clean merged codes, d x B
  BasicMlpGrads<Scalar> merge_grads;
  BasicMlpGrads<Scalar> invert_grads;
  Matrix grad_left;   // d(loss)/d(left) through the merge net
  Matrix grad_right;
  std::uint64_t pattern = 0;
};

/// merge -> (+noise) -> invert -> recon, loss = mean_b[recon_b + lambda ||zhat_b||^2].
/// The penalty uses the clean merged code; noise only enters the inverter input.
template <typename Scalar>
PairPass<Scalar> pair_pass(const BasicMlp<Scalar>& merge_net, const BasicMlp<Scalar>& invert_net,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& left,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& right,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                           double lambda, const ReconTerm<Scalar>& recon, bool with_grads = true);

/// Latent-space reconstruction against the inputs themselves (levels > 0).
template <typename Scalar>
PairPass<Scalar> latent_pair_pass(const BasicMlp<Scalar>& merge_net,
                                  const BasicMlp<Scalar>& invert_net,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& left,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& right,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                                  double lambda, bool with_grads = true);

struct SweeperOptimizer {
  AdamState merge;
  AdamState invert;

  SweeperOptimizer() = default;
  SweeperOptimizer(const Sweeper& s, const AdamConfig& cfg)
      : merge(s.merge_net(), cfg), invert(s.invert_net(), cfg) {}
};

struct PairStepRecord {
  MatrixXf noise;
  MatrixXf merged;
  double recon = 0;
  double penalty = 0;
};

/// One merge -> noise -> invert -> loss -> backward -> Adam cycle on a
/// latent-space sweeper (level > 0). left/right are d x B. Returns the
/// pre-step loss. Throws NumericError (and skips the update) if the loss
/// is not finite.
double train_pair_step(Sweeper& sweeper, const MatrixXf& left, const MatrixXf& right,
                       double lambda, double sigma, SweeperOptimizer& opt, Rng& rng,
                       PairStepRecord* record = nullptr);

}  // namespace imfn
