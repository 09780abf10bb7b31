#include "imfn/sweeper.hpp"

#include <cmath>
#include <stdexcept>

namespace imfn {

Sweeper::Sweeper(int level, Eigen::Index memory_dim)
    : level_(level),
      dim_(memory_dim),
      merge_net_({2 * memory_dim, 2 * memory_dim, memory_dim},
                 {Activation::kRelu, Activation::kIdentity},
                 "sweeper" + std::to_string(level) + ".merge"),
      invert_net_({memory_dim, 2 * memory_dim, 2 * memory_dim},
                  {Activation::kRelu, Activation::kIdentity},
                  "sweeper" + std::to_string(level) + ".invert") {
  if (level < 0) throw std::invalid_argument("Sweeper: level must be >= 0");
}

Sweeper::Sweeper(int level, Eigen::Index memory_dim, Rng& rng) : Sweeper(level, memory_dim) {
  merge_net_.init(rng);
  invert_net_.init(rng);
}

MemoryVector Sweeper::merge(const MemoryVector& left, const MemoryVector& right) const {
  if (left.size() != dim_ || right.size() != dim_) {
    throw ShapeError("merge: inputs must both have dimension " + std::to_string(dim_));
  }
  VectorXf joint(2 * dim_);
  joint << left, right;
  return merge_net_.forward_vec(joint);
}

std::pair<MemoryVector, MemoryVector> Sweeper::invert(const MemoryVector& merged) const {
  if (merged.size() != dim_) {
    throw ShapeError("invert: input must have dimension " + std::to_string(dim_));
  }
  const VectorXf both = invert_net_.forward_vec(merged);
  return {both.head(dim_), both.tail(dim_)};
}

MatrixXf Sweeper::merge_batch(const MatrixXf& left, const MatrixXf& right) const {
  if (left.rows() != dim_ || right.rows() != dim_ || left.cols() != right.cols()) {
    throw ShapeError("merge_batch: expected two d x B matrices");
  }
  MatrixXf joint(2 * dim_, left.cols());
  joint << left, right;
  return merge_net_.forward(joint);
}

std::pair<MatrixXf, MatrixXf> Sweeper::invert_batch(const MatrixXf& merged) const {
  if (merged.rows() != dim_) throw ShapeError("invert_batch: expected d x B input");
  const MatrixXf both = invert_net_.forward(merged);
  return {both.topRows(dim_), both.bottomRows(dim_)};
}

std::uint64_t Sweeper::parameter_hash() const {
  return merge_net_.parameter_hash() ^ splitmix64(invert_net_.parameter_hash());
}

double latent_recon_loss(const MemoryVector& z_left, const MemoryVector& z_right,
                         const MemoryVector& recon_left, const MemoryVector& recon_right) {
  if (z_left.size() != recon_left.size() || z_right.size() != recon_right.size() ||
      z_left.size() != z_right.size()) {
    throw ShapeError("latent_recon_loss: dimension mismatch");
  }
  double sum = 0;
  for (Eigen::Index i = 0; i < z_left.size(); ++i) {
    const double dl = static_cast<double>(recon_left[i]) - z_left[i];
    const double dr = static_cast<double>(recon_right[i]) - z_right[i];
    sum += dl * dl + dr * dr;
  }
  return sum;
}

double norm_penalty(const MemoryVector& merged, double lambda) {
  if (lambda < 0) throw std::invalid_argument("norm_penalty: lambda must be >= 0");
  double sq = 0;
  for (Eigen::Index i = 0; i < merged.size(); ++i) sq += static_cast<double>(merged[i]) * merged[i];
  return lambda * sq;
}

template <typename Scalar>
PairPass<Scalar> pair_pass(const BasicMlp<Scalar>& merge_net, const BasicMlp<Scalar>& invert_net,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& left,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& right,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                           double lambda, const ReconTerm<Scalar>& recon, bool with_grads) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index d = merge_net.out_dim();
  const Eigen::Index batch = left.cols();
  if (left.rows() != d || right.rows() != d || right.cols() != batch || noise.rows() != d ||
      noise.cols() != batch || batch == 0) {
    throw ShapeError("pair_pass: left/right/noise must all be d x B with B > 0");
  }

  Matrix joint(2 * d, batch);
  joint << left, right;
  typename BasicMlp<Scalar>::Cache merge_cache;
  typename BasicMlp<Scalar>::Cache invert_cache;

  PairPass<Scalar> pass;
  pass.merged = merge_net.forward(joint, &merge_cache);
  const Matrix noisy = pass.merged + noise;
  const Matrix both = invert_net.forward(noisy, &invert_cache);

  Matrix grad_rl;
  Matrix grad_rr;
  std::uint64_t recon_pattern = 0;
  const double recon_sum = recon(both.topRows(d), both.bottomRows(d), grad_rl, grad_rr, &recon_pattern);

  double sq = 0;
  for (Eigen::Index i = 0; i < pass.merged.size(); ++i) {
    sq += static_cast<double>(pass.merged.data()[i]) * static_cast<double>(pass.merged.data()[i]);
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  pass.recon = recon_sum * inv_b;
  pass.penalty = lambda * sq * inv_b;
  pass.loss = pass.recon + pass.penalty;
  pass.pattern = relu_pattern_hash(merge_net, merge_cache, relu_pattern_hash(invert_net, invert_cache, recon_pattern));
  if (!with_grads) return pass;

  Matrix grad_both(2 * d, batch);
  grad_both << grad_rl, grad_rr;
  grad_both *= static_cast<Scalar>(inv_b);
  auto inv_back = invert_net.backward(invert_cache, grad_both);
  // noise is additive: d(noisy)/d(merged) = I
  Matrix grad_merged = inv_back.grad_input + static_cast<Scalar>(2.0 * lambda * inv_b) * pass.merged;
  auto merge_back = merge_net.backward(merge_cache, grad_merged);

  pass.invert_grads = std::move(inv_back.grads);
  pass.merge_grads = std::move(merge_back.grads);
  pass.grad_left = merge_back.grad_input.topRows(d);
  pass.grad_right = merge_back.grad_input.bottomRows(d);
  return pass;
}

template <typename Scalar>
PairPass<Scalar> latent_pair_pass(const BasicMlp<Scalar>& merge_net,
                                  const BasicMlp<Scalar>& invert_net,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& left,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& right,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                                  double lambda, bool with_grads) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const ReconTerm<Scalar> recon = [&](const Matrix& rl, const Matrix& rr, Matrix& gl, Matrix& gr,
                                      std::uint64_t* pattern) {
    const Matrix dl = rl - left;
    const Matrix dr = rr - right;
    double sum = 0;
    for (Eigen::Index i = 0; i < dl.size(); ++i) {
      sum += static_cast<double>(dl.data()[i]) * dl.data()[i] +
             static_cast<double>(dr.data()[i]) * dr.data()[i];
    }
    gl = Scalar(2) * dl;
    gr = Scalar(2) * dr;
    if (pattern) *pattern = 0;
    return sum;
  };
  return pair_pass<Scalar>(merge_net, invert_net, left, right, noise, lambda, recon, with_grads);
}

template PairPass<float> pair_pass<float>(const BasicMlp<float>&, const BasicMlp<float>&,
                                          const Eigen::MatrixXf&, const Eigen::MatrixXf&,
                                          const Eigen::MatrixXf&, double, const ReconTerm<float>&,
                                          bool);
template PairPass<double> pair_pass<double>(const BasicMlp<double>&, const BasicMlp<double>&,
                                            const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                                            const Eigen::MatrixXd&, double,
                                            const ReconTerm<double>&, bool);
template PairPass<float> latent_pair_pass<float>(const BasicMlp<float>&, const BasicMlp<float>&,
                                                 const Eigen::MatrixXf&, const Eigen::MatrixXf&,
                                                 const Eigen::MatrixXf&, double, bool);
template PairPass<double> latent_pair_pass<double>(const BasicMlp<double>&,
                                                   const BasicMlp<double>&,
                                                   const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                                                   const Eigen::MatrixXd&, double, bool);

double train_pair_step(Sweeper& sweeper, const MatrixXf& left, const MatrixXf& right,
                       double lambda, double sigma, SweeperOptimizer& opt, Rng& rng,
                       PairStepRecord* record) {
  if (sweeper.level() == 0) {
    throw std::logic_error("train_pair_step: level 0 trains through pixel space (see train_level)");
  }
  const MatrixXf noise = gaussian_noise(sweeper.memory_dim(), left.cols(), sigma, rng);
  auto pass = latent_pair_pass<float>(sweeper.merge_net(), sweeper.invert_net(), left, right, noise, lambda);
  if (record) {
    record->noise = noise;
    record->merged = pass.merged;
    record->recon = pass.recon;
    record->penalty = pass.penalty;
  }
  if (!std::isfinite(pass.loss)) {
    throw NumericError("train_pair_step: non-finite loss at level " + std::to_string(sweeper.level()));
  }
  if (!pass.invert_grads.all_finite()) {
    throw NumericError("train_pair_step: non-finite inverter gradient at level " +
                       std::to_string(sweeper.level()));
  }
  adam_step(sweeper.merge_net(), pass.merge_grads, opt.merge);
  adam_step(sweeper.invert_net(), pass.invert_grads, opt.invert);
  return pass.loss;
}

}  // namespace imfn
