#include "imfn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace imfn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t hash_string(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, basis);
}

template <typename T>
std::uint64_t hash_pod(const T& value, std::uint64_t basis) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(&value), sizeof(T)}, basis);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::derive(std::string_view label) const {
  return Rng(splitmix64(seed_ ^ hash_string(label)));
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

template <typename Scalar>
static Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename Scalar>
static constexpr Scalar kGeluC = Scalar(0.7978845608028654);  // sqrt(2/pi)
template <typename Scalar>
static constexpr Scalar kGeluA = Scalar(0.044715);

template <typename Scalar>
Scalar apply_activation(Activation a, Scalar x) {
  switch (a) {
    case Activation::kRelu: return x > Scalar(0) ? x : Scalar(0);
    case Activation::kGelu:
      return Scalar(0.5) * x *
             (Scalar(1) + std::tanh(kGeluC<Scalar> * (x + kGeluA<Scalar> * x * x * x)));
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

template <typename Scalar>
Scalar activation_derivative(Activation a, Scalar x) {
  switch (a) {
    case Activation::kRelu: return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::kGelu: {
      const Scalar u = kGeluC<Scalar> * (x + kGeluA<Scalar> * x * x * x);
      const Scalar t = std::tanh(u);
      const Scalar du = kGeluC<Scalar> * (Scalar(1) + Scalar(3) * kGeluA<Scalar> * x * x);
      return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * du;
    }
    case Activation::kSigmoid: {
      const Scalar s = sigmoid(x);
      return s * (Scalar(1) - s);
    }
    case Activation::kIdentity: return Scalar(1);
  }
  return Scalar(1);
}

template float apply_activation<float>(Activation, float);
template double apply_activation<double>(Activation, double);
template float activation_derivative<float>(Activation, float);
template double activation_derivative<double>(Activation, double);

namespace {

template <typename Derived>
auto activate(Activation a, const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  switch (a) {
    case Activation::kRelu: return Matrix(z.cwiseMax(Scalar(0)));
    case Activation::kIdentity: return Matrix(z);
    default: return Matrix(z.unaryExpr([a](Scalar x) { return apply_activation(a, x); }));
  }
}

template <typename Derived>
auto activate_derivative(Activation a, const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  return Matrix(z.unaryExpr([a](Scalar x) { return activation_derivative(a, x); }));
}

}  // namespace

// --- BasicMlpGrads ---------------------------------------------------------

template <typename Scalar>
std::vector<std::span<const Scalar>> BasicMlpGrads<Scalar>::flat() const {
  std::vector<std::span<const Scalar>> out;
  for (std::size_t k = 0; k < weight.size(); ++k) {
    out.emplace_back(weight[k].data(), static_cast<std::size_t>(weight[k].size()));
    out.emplace_back(bias[k].data(), static_cast<std::size_t>(bias[k].size()));
  }
  return out;
}

template <typename Scalar>
Scalar BasicMlpGrads<Scalar>::max_abs() const {
  Scalar m = 0;
  for (const auto& s : flat()) {
    for (Scalar v : s) m = std::max(m, std::abs(v));
  }
  return m;
}

template <typename Scalar>
bool BasicMlpGrads<Scalar>::all_finite() const {
  for (const auto& w : weight) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : bias) {
    if (!b.allFinite()) return false;
  }
  return true;
}

// --- BasicMlp --------------------------------------------------------------

template <typename Scalar>
BasicMlp<Scalar>::BasicMlp(std::vector<Eigen::Index> dims, std::vector<Activation> activations,
                           std::string name)
    : name_(std::move(name)) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw ShapeError("Mlp: need dims.size() == activations.size() + 1 >= 2");
  }
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    if (dims[k] <= 0 || dims[k + 1] <= 0) throw ShapeError("Mlp: dimensions must be positive");
    Layer l;
    l.weight = Matrix::Zero(dims[k + 1], dims[k]);
    l.bias = Vector::Zero(dims[k + 1]);
    l.activation = activations[k];
    layers_.push_back(std::move(l));
  }
}

template <typename Scalar>
void BasicMlp<Scalar>::init(Rng& rng) {
  for (auto& l : layers_) {
    const double fan_in = static_cast<double>(l.in_dim());
    const double fan_out = static_cast<double>(l.out_dim());
    const bool rectifier = l.activation == Activation::kRelu || l.activation == Activation::kGelu;
    const double bound = rectifier ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
        l.weight(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
      }
    }
    l.bias.setZero();
  }
}

template <typename Scalar>
Eigen::Index BasicMlp<Scalar>::in_dim() const {
  return layers_.empty() ? 0 : layers_.front().in_dim();
}

template <typename Scalar>
Eigen::Index BasicMlp<Scalar>::out_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

template <typename Scalar>
std::size_t BasicMlp<Scalar>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <typename Scalar>
std::uint64_t BasicMlp<Scalar>::shape_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers_) {
    h = hash_pod(l.weight.rows(), h);
    h = hash_pod(l.weight.cols(), h);
    h = hash_pod(static_cast<int>(l.activation), h);
  }
  return h;
}

template <typename Scalar>
std::uint64_t BasicMlp<Scalar>::parameter_hash() const {
  std::uint64_t h = shape_signature();
  for (const auto& p : parameters()) {
    h = fnv1a64({reinterpret_cast<const unsigned char*>(p.values.data()), p.values.size_bytes()}, h);
  }
  return h;
}

template <typename Scalar>
auto BasicMlp<Scalar>::forward(const Matrix& input, Cache* cache) const -> Matrix {
  if (layers_.empty()) throw ShapeError(name_ + ": empty network");
  if (input.rows() != in_dim()) {
    std::ostringstream os;
    os << name_ << ": input has " << input.rows() << " rows, expected " << in_dim();
    throw ShapeError(os.str());
  }
  if (cache) {
    cache->inputs.clear();
    cache->preact.clear();
    cache->signature = shape_signature();
  }
  Matrix x = input;
  for (const auto& l : layers_) {
    Matrix z = l.weight * x;
    z.colwise() += l.bias;
    Matrix a = activate(l.activation, z);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->preact.push_back(std::move(z));
    }
    x = std::move(a);
  }
  return x;
}

template <typename Scalar>
auto BasicMlp<Scalar>::forward_vec(const Vector& input) const -> Vector {
  Matrix m = forward(Matrix(input));
  return m.col(0);
}

template <typename Scalar>
auto BasicMlp<Scalar>::forward_from(std::size_t first, const Matrix& input) const -> Matrix {
  if (first > layers_.size()) throw ShapeError(name_ + ": forward_from past the last layer");
  if (first < layers_.size() && input.rows() != layers_[first].in_dim()) {
    throw ShapeError(name_ + ": forward_from input has the wrong number of rows");
  }
  Matrix x = input;
  for (std::size_t k = first; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Matrix z = l.weight * x;
    z.colwise() += l.bias;
    x = activate(l.activation, z);
  }
  return x;
}

template <typename Scalar>
auto BasicMlp<Scalar>::backward(const Cache& cache, const Matrix& grad_output) const -> Backward {
  if (cache.signature != shape_signature() || cache.inputs.size() != layers_.size()) {
    throw ShapeError(name_ + ": stale forward cache (parameter shapes changed)");
  }
  const Eigen::Index batch = cache.inputs.front().cols();
  if (grad_output.rows() != out_dim() || grad_output.cols() != batch) {
    throw ShapeError(name_ + ": grad_output shape does not match forward output");
  }
  Backward out;
  out.grads.weight.resize(layers_.size());
  out.grads.bias.resize(layers_.size());
  Matrix delta = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Matrix& z = cache.preact[k];
    switch (l.activation) {
      case Activation::kIdentity: break;
      case Activation::kRelu:
        delta = (z.array() > Scalar(0)).select(delta, Scalar(0));
        break;
      default: delta = delta.cwiseProduct(activate_derivative(l.activation, z)); break;
    }
    out.grads.weight[k] = delta * cache.inputs[k].transpose();
    out.grads.bias[k] = delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  out.grad_input = std::move(delta);
  return out;
}

template <typename Scalar>
std::vector<ParamView<Scalar>> BasicMlp<Scalar>::parameters() {
  std::vector<ParamView<Scalar>> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    auto& l = layers_[k];
    const std::string prefix = name_ + ".layer" + std::to_string(k);
    out.push_back({prefix + ".weight", l.weight.rows(), l.weight.cols(),
                   {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
    out.push_back({prefix + ".bias", l.bias.rows(), 1,
                   {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
  }
  return out;
}

template <typename Scalar>
std::vector<ParamView<const Scalar>> BasicMlp<Scalar>::parameters() const {
  std::vector<ParamView<const Scalar>> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    const std::string prefix = name_ + ".layer" + std::to_string(k);
    out.push_back({prefix + ".weight", l.weight.rows(), l.weight.cols(),
                   {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
    out.push_back({prefix + ".bias", l.bias.rows(), 1,
                   {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
  }
  return out;
}

template <typename Scalar>
auto BasicMlp<Scalar>::zero_grads() const -> Grads {
  Grads g;
  for (const auto& l : layers_) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

template <typename Scalar>
std::uint64_t relu_pattern_hash(const BasicMlp<Scalar>& net,
                                const typename BasicMlp<Scalar>::Cache& cache, std::uint64_t seed) {
  std::uint64_t h = seed ^ 0x84222325cbf29ce4ULL;
  for (std::size_t k = 0; k < cache.preact.size(); ++k) {
    if (net.layers()[k].activation != Activation::kRelu) continue;
    const auto& z = cache.preact[k];
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      h = (h ^ static_cast<std::uint64_t>(z.data()[i] > Scalar(0))) * 0x100000001b3ULL;
    }
  }
  return h;
}

template struct BasicMlpGrads<float>;
template struct BasicMlpGrads<double>;
template class BasicMlp<float>;
template class BasicMlp<double>;
template std::uint64_t relu_pattern_hash<float>(const BasicMlp<float>&,
                                                const BasicMlp<float>::Cache&, std::uint64_t);
template std::uint64_t relu_pattern_hash<double>(const BasicMlp<double>&,
                                                 const BasicMlp<double>::Cache&, std::uint64_t);

// --- Adam ------------------------------------------------------------------

AdamState::AdamState(const Mlp& net, AdamConfig cfg) : config(cfg) {
  for (const auto& p : net.parameters()) {
    first_moment.emplace_back(p.values.size(), 0.0);
    second_moment.emplace_back(p.values.size(), 0.0);
  }
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  auto params = net.parameters();
  const auto flat = grads.flat();
  if (flat.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError(net.name() + ": adam_step tensor count mismatch");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (flat[p].size() != params[p].values.size() ||
        state.first_moment[p].size() != params[p].values.size() ||
        state.second_moment[p].size() != params[p].values.size()) {
      throw ShapeError(params[p].name + ": adam_step shape mismatch");
    }
    for (std::size_t i = 0; i < flat[p].size(); ++i) {
      if (!std::isfinite(flat[p][i])) {
        throw NumericError("adam_step: non-finite gradient in " + params[p].name + "[" +
                           std::to_string(i) + "]");
      }
    }
  }

  const auto& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    auto values = params[p].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = flat[p][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / correction1;
      const double vhat = v[i] / correction2;
      values[i] = static_cast<float>(values[i] - c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
    }
  }
}

// --- noise -----------------------------------------------------------------

Eigen::VectorXf gaussian_noise(Eigen::Index dim, double sigma, Rng& rng) {
  return gaussian_noise(dim, 1, sigma, rng).col(0);
}

Eigen::MatrixXf gaussian_noise(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
  if (sigma < 0) throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  Eigen::MatrixXf out = Eigen::MatrixXf::Zero(rows, cols);
  if (sigma == 0) return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<float>(dist(rng.engine()));
  return out;
}

// --- finite differences ----------------------------------------------------

std::size_t FiniteDiffResult::kink_count() const {
  std::size_t n = 0;
  for (const auto& k : kink) n += static_cast<std::size_t>(std::count(k.begin(), k.end(), true));
  return n;
}

FiniteDiffResult finite_diff(const std::vector<ParamView<double>>& params, const PatternLoss& loss,
                             const FiniteDiffOptions& options) {
  if (!(options.step > 0)) throw std::invalid_argument("finite_diff: step must be > 0");
  if (!options.subset.empty() && options.subset.size() != params.size()) {
    throw std::invalid_argument("finite_diff: subset must list one index set per tensor");
  }
  const double h = options.step;
  FiniteDiffResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values;
    result.grads.emplace_back(values.size(), 0.0);
    result.kink.emplace_back(values.size(), false);

    std::vector<std::size_t> probe;
    if (options.subset.empty()) {
      probe.resize(values.size());
      for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
    } else {
      probe = options.subset[p];
    }
    for (std::size_t i : probe) {
      if (i >= values.size()) throw std::out_of_range("finite_diff: subset index out of range");
      const double saved = values[i];
      std::uint64_t pattern_plus = 0;
      std::uint64_t pattern_minus = 0;
      values[i] = saved + h;
      const double lp = loss(&pattern_plus);
      values[i] = saved - h;
      const double lm = loss(&pattern_minus);
      values[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        result.nonfinite.push_back(params[p].name + "[" + std::to_string(i) + "]");
        result.grads[p][i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      result.grads[p][i] = (lp - lm) / (2.0 * h);
      result.kink[p][i] = pattern_plus != pattern_minus;
    }
  }
  return result;
}

FiniteDiffResult finite_diff_grad(const BasicMlp<double>& net, const Eigen::MatrixXd& input,
                                  const ScalarLoss& loss, double step,
                                  std::vector<std::vector<std::size_t>> subset) {
  BasicMlp<double> probe = net;
  const auto evaluate = [&](std::uint64_t* pattern) {
    BasicMlp<double>::Cache cache;
    const Eigen::MatrixXd out = probe.forward(input, &cache);
    if (pattern) *pattern = relu_pattern_hash(probe, cache);
    return loss(out);
  };
  return finite_diff(probe.parameters(), evaluate, {step, std::move(subset)});
}

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace imfn
