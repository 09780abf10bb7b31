#pragma once

#include "imfn/nn.hpp"
#include "imfn/sweeper.hpp"

namespace imfn {

inline constexpr Eigen::Index kImageSide = 28;
inline constexpr Eigen::Index kImagePixels = kImageSide * kImageSide;
inline constexpr Eigen::Index kDefaultCodecHidden = 1024;

/// Flattened row-major 28x28 image with pixels in [0, 1].
using ImageVector = Eigen::VectorXf;

/// Throws ShapeError unless `img` is 784 long with every value in [0, 1].
void check_image(const Eigen::Ref<const Eigen::VectorXf>& img);

/// Pixel <-> memory bridge used at level 0.
///
/// encoder: [784 -> H -> H -> d], relu, relu, identity
/// decoder: [d -> H -> H -> 784], relu, relu, sigmoid
class Codec {
 public:
  Codec() = default;
  Codec(Eigen::Index memory_dim, Eigen::Index hidden = kDefaultCodecHidden);
  Codec(Eigen::Index memory_dim, Rng& rng, Eigen::Index hidden = kDefaultCodecHidden);

  Eigen::Index memory_dim() const { return encoder_.out_dim(); }
  Eigen::Index hidden() const { return encoder_.layers().front().out_dim(); }

  MemoryVector encode_image(const ImageVector& img) const;
  ImageVector decode_image(const MemoryVector& z) const;

  /// Column-batched: 784 x B -> d x B and back. No range validation.
  MatrixXf encode_batch(const MatrixXf& images) const;
  MatrixXf decode_batch(const MatrixXf& latents) const;

  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  std::uint64_t parameter_hash() const;

 private:
  Mlp encoder_;
  Mlp decoder_;
};

/// ||D(ztL) - xL||^2 + ||D(ztR) - xR||^2, summed over pixels.
double pixel_recon_loss(const Codec& codec, const MemoryVector& recon_left,
                        const MemoryVector& recon_right, const ImageVector& x_left,
                        const ImageVector& x_right);

template <typename Scalar>
struct Level0Pass {
  double loss = 0;
  double recon = 0;
  double penalty = 0;
  BasicMlpGrads<Scalar> encoder_grads;
  BasicMlpGrads<Scalar> decoder_grads;
  BasicMlpGrads<Scalar> merge_grads;
  BasicMlpGrads<Scalar> invert_grads;
  std::uint64_t pattern = 0;
};

/// Level-0 pair objective: images -> E -> merge -> (+noise) -> invert -> D,
/// loss = mean_b[ pixel recon + lambda ||zhat||^2 ], gradients for all four nets.
template <typename Scalar>
Level0Pass<Scalar> level0_pair_pass(const BasicMlp<Scalar>& encoder, const BasicMlp<Scalar>& decoder,
                                    const BasicMlp<Scalar>& merge_net,
                                    const BasicMlp<Scalar>& invert_net,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x_left,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x_right,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                                    double lambda, bool with_grads = true);

}  // namespace imfn
