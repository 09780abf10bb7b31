#include "imfn/codec.hpp"

#include <cmath>
#include <sstream>

namespace imfn {

void check_image(const Eigen::Ref<const Eigen::VectorXf>& img) {
  if (img.size() != kImagePixels) {
    throw ShapeError("image must have " + std::to_string(kImagePixels) + " pixels, got " +
                     std::to_string(img.size()));
  }
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    if (!(img[i] >= 0.0f && img[i] <= 1.0f)) {
      std::ostringstream os;
      os << "image pixel " << i << " = " << img[i] << " outside [0, 1]";
      throw ShapeError(os.str());
    }
  }
}

Codec::Codec(Eigen::Index memory_dim, Eigen::Index hidden)
    : encoder_({kImagePixels, hidden, hidden, memory_dim},
               {Activation::kRelu, Activation::kRelu, Activation::kIdentity}, "codec.encoder"),
      decoder_({memory_dim, hidden, hidden, kImagePixels},
               {Activation::kRelu, Activation::kRelu, Activation::kSigmoid}, "codec.decoder") {}

Codec::Codec(Eigen::Index memory_dim, Rng& rng, Eigen::Index hidden) : Codec(memory_dim, hidden) {
  encoder_.init(rng);
  decoder_.init(rng);
}

MemoryVector Codec::encode_image(const ImageVector& img) const {
  check_image(img);
  return encoder_.forward_vec(img);
}

ImageVector Codec::decode_image(const MemoryVector& z) const {
  if (z.size() != memory_dim()) {
    throw ShapeError("decode_image: latent must have dimension " + std::to_string(memory_dim()));
  }
  return decoder_.forward_vec(z);
}

MatrixXf Codec::encode_batch(const MatrixXf& images) const { return encoder_.forward(images); }

MatrixXf Codec::decode_batch(const MatrixXf& latents) const { return decoder_.forward(latents); }

std::uint64_t Codec::parameter_hash() const {
  return encoder_.parameter_hash() ^ splitmix64(decoder_.parameter_hash());
}

double pixel_recon_loss(const Codec& codec, const MemoryVector& recon_left,
                        const MemoryVector& recon_right, const ImageVector& x_left,
                        const ImageVector& x_right) {
  const ImageVector dl = codec.decode_image(recon_left);
  const ImageVector dr = codec.decode_image(recon_right);
  if (x_left.size() != kImagePixels || x_right.size() != kImagePixels) {
    throw ShapeError("pixel_recon_loss: targets must be 784-pixel images");
  }
  double sum = 0;
  for (Eigen::Index i = 0; i < kImagePixels; ++i) {
    const double a = static_cast<double>(dl[i]) - x_left[i];
    const double b = static_cast<double>(dr[i]) - x_right[i];
    sum += a * a + b * b;
  }
  return sum;
}

template <typename Scalar>
Level0Pass<Scalar> level0_pair_pass(const BasicMlp<Scalar>& encoder, const BasicMlp<Scalar>& decoder,
                                    const BasicMlp<Scalar>& merge_net,
                                    const BasicMlp<Scalar>& invert_net,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x_left,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x_right,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& noise,
                                    double lambda, bool with_grads) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index batch = x_left.cols();
  if (x_right.cols() != batch || x_left.rows() != kImagePixels || x_right.rows() != kImagePixels) {
    throw ShapeError("level0_pair_pass: expected two 784 x B image batches");
  }

  // Both sides share one encoder pass and one decoder pass.
  Matrix images(kImagePixels, 2 * batch);
  images << x_left, x_right;
  typename BasicMlp<Scalar>::Cache enc_cache;
  const Matrix latents = encoder.forward(images, &enc_cache);

  typename BasicMlp<Scalar>::Cache dec_cache;
  BasicMlpGrads<Scalar> decoder_grads;
  const ReconTerm<Scalar> recon = [&](const Matrix& rl, const Matrix& rr, Matrix& gl, Matrix& gr,
                                      std::uint64_t* pattern) {
    Matrix joint(rl.rows(), 2 * batch);
    joint << rl, rr;
    const Matrix decoded = decoder.forward(joint, &dec_cache);
    const Matrix diff = decoded - images;
    double sum = 0;
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
      sum += static_cast<double>(diff.data()[i]) * diff.data()[i];
    }
    if (pattern) *pattern = relu_pattern_hash(decoder, dec_cache);
    if (with_grads) {
      // Caller rescales by 1/B after we return, so fold that into the decoder
      // gradients here and hand back unscaled latent gradients.
      const Scalar inv_b = static_cast<Scalar>(1.0 / static_cast<double>(batch));
      auto back = decoder.backward(dec_cache, Scalar(2) * diff);
      for (auto& w : back.grads.weight) w *= inv_b;
      for (auto& b : back.grads.bias) b *= inv_b;
      decoder_grads = std::move(back.grads);
      gl = back.grad_input.leftCols(batch);
      gr = back.grad_input.rightCols(batch);
    }
    return sum;
  };

  const Eigen::Index d = encoder.out_dim();
  auto pass = pair_pass<Scalar>(merge_net, invert_net, latents.leftCols(batch),
                                latents.rightCols(batch), noise, lambda, recon, with_grads);

  Level0Pass<Scalar> out;
  out.loss = pass.loss;
  out.recon = pass.recon;
  out.penalty = pass.penalty;
  out.pattern = relu_pattern_hash(encoder, enc_cache, pass.pattern);
  if (!with_grads) return out;

  Matrix grad_latents(d, 2 * batch);
  grad_latents << pass.grad_left, pass.grad_right;
  auto enc_back = encoder.backward(enc_cache, grad_latents);
  out.encoder_grads = std::move(enc_back.grads);
  out.decoder_grads = std::move(decoder_grads);
  out.merge_grads = std::move(pass.merge_grads);
  out.invert_grads = std::move(pass.invert_grads);
  return out;
}

template Level0Pass<float> level0_pair_pass<float>(const BasicMlp<float>&, const BasicMlp<float>&,
                                                   const BasicMlp<float>&, const BasicMlp<float>&,
                                                   const Eigen::MatrixXf&, const Eigen::MatrixXf&,
                                                   const Eigen::MatrixXf&, double, bool);
template Level0Pass<double> level0_pair_pass<double>(
    const BasicMlp<double>&, const BasicMlp<double>&, const BasicMlp<double>&,
    const BasicMlp<double>&, const Eigen::MatrixXd&, const Eigen::MatrixXd&,
    const Eigen::MatrixXd&, double, bool);

}  // namespace imfn
