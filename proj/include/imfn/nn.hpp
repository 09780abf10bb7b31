#pragma once

// Dense-network substrate: layers, manual backprop, Adam, seeded randomness
// and a central-difference gradient oracle.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imfn {

using VectorXf = Eigen::VectorXf;
using MatrixXf = Eigen::MatrixXf;

/// A point in the shared d-dimensional memory space.
using MemoryVector = Eigen::VectorXf;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded generator. Streams for different purposes are derived by label so
/// that, e.g., the shuffle stream and the noise stream never interleave.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream keyed by (seed, label).
  Rng derive(std::string_view label) const;

  std::uint64_t next_u64() { return engine_(); }
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

enum class Activation { kRelu, kGelu, kSigmoid, kIdentity };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

template <typename Scalar>
struct BasicDenseLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim
  Activation activation = Activation::kIdentity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Non-owning view of one parameter tensor, flattened column-major.
template <typename Scalar>
struct ParamView {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  std::span<Scalar> values;
};

template <typename Scalar>
struct BasicMlpGrads {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  /// Same flattening order as BasicMlp::parameters().
  std::vector<std::span<const Scalar>> flat() const;
  Scalar max_abs() const;
  bool all_finite() const;
};

/// Feed-forward stack of dense layers. Inputs are column-batched: a matrix
/// with in_dim rows and one column per sample.
template <typename Scalar>
class BasicMlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Layer = BasicDenseLayer<Scalar>;
  using Grads = BasicMlpGrads<Scalar>;

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> preact;  // W x + b for each layer
    std::uint64_t signature = 0;
  };

  BasicMlp() = default;
  /// dims = {in, h1, ..., out}; activations.size() == dims.size() - 1.
  /// Weights are zero until init() is called.
  BasicMlp(std::vector<Eigen::Index> dims, std::vector<Activation> activations,
           std::string name = "mlp");

  /// Kaiming-uniform for relu/gelu layers, Glorot-uniform otherwise; zero bias.
  void init(Rng& rng);

  Matrix forward(const Matrix& input, Cache* cache = nullptr) const;
  Vector forward_vec(const Vector& input) const;
  /// Runs layers [first, end) on an input already sized for layer `first`.
  Matrix forward_from(std::size_t first, const Matrix& input) const;

  struct Backward {
    Grads grads;
    Matrix grad_input;
  };
  /// Exact gradients of any scalar whose output gradient is grad_output.
  Backward backward(const Cache& cache, const Matrix& grad_output) const;

  std::size_t num_layers() const { return layers_.size(); }
  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t num_parameters() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::string& name() const { return name_; }

  /// Stable "name.layerK.weight" / "name.layerK.bias" views in layer order.
  std::vector<ParamView<Scalar>> parameters();
  std::vector<ParamView<const Scalar>> parameters() const;

  Grads zero_grads() const;
  std::uint64_t shape_signature() const;
  std::uint64_t parameter_hash() const;

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out;
    out.name_ = name_;
    for (const auto& l : layers_) {
      typename BasicMlp<Other>::Layer o;
      o.weight = l.weight.template cast<Other>();
      o.bias = l.bias.template cast<Other>();
      o.activation = l.activation;
      out.layers_.push_back(std::move(o));
    }
    return out;
  }

 private:
  template <typename>
  friend class BasicMlp;

  std::vector<Layer> layers_;
  std::string name_ = "mlp";
};

using DenseLayer = BasicDenseLayer<float>;
using Mlp = BasicMlp<float>;
using MlpGrads = BasicMlpGrads<float>;

template <typename Scalar>
Scalar apply_activation(Activation a, Scalar x);
template <typename Scalar>
Scalar activation_derivative(Activation a, Scalar x);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;

  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg);
};

/// One bias-corrected Adam update. Throws NumericError naming the first
/// non-finite gradient entry; in that case nothing is modified.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

Eigen::VectorXf gaussian_noise(Eigen::Index dim, double sigma, Rng& rng);
Eigen::MatrixXf gaussian_noise(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng);

/// Central-difference oracle over arbitrary parameter tensors.
struct FiniteDiffResult {
  std::vector<std::vector<double>> grads;  // one vector per tensor
  std::vector<std::string> nonfinite;      // "name[index]" where L(θ±h) was not finite
  /// Entries whose ±h perturbation flipped a relu sign somewhere. Central
  /// differences straddle a kink there and are not a valid oracle.
  std::vector<std::vector<bool>> kink;
  std::size_t kink_count() const;
};

/// Loss callback. If `pattern` is non-null it receives a hash of every relu
/// sign pattern touched while evaluating the loss.
using PatternLoss = std::function<double(std::uint64_t* pattern)>;

struct FiniteDiffOptions {
  double step = 1e-4;
  /// Flat indices to probe per tensor; an empty outer vector probes all.
  std::vector<std::vector<std::size_t>> subset;
};

FiniteDiffResult finite_diff(const std::vector<ParamView<double>>& params, const PatternLoss& loss,
                             const FiniteDiffOptions& options);

using ScalarLoss = std::function<double(const Eigen::MatrixXd& output)>;

/// dL/dθ for `net` evaluated on `input`, L = loss(net(input)).
FiniteDiffResult finite_diff_grad(const BasicMlp<double>& net, const Eigen::MatrixXd& input,
                                  const ScalarLoss& loss, double step,
                                  std::vector<std::vector<std::size_t>> subset = {});

/// Hash of the relu sign pattern stored in a forward cache.
template <typename Scalar>
std::uint64_t relu_pattern_hash(const BasicMlp<Scalar>& net,
                                const typename BasicMlp<Scalar>::Cache& cache,
                                std::uint64_t seed = 0);

/// |a-b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-6);

}  // namespace imfn
