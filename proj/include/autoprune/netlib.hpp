#pragma once

// Small dense feed-forward networks with hand-written reverse-mode gradients,
// Adam, target-network tracking and a versioned binary parameter format.

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autoprune/errors.hpp"
#include "autoprune/rng.hpp"

namespace autoprune {

enum class Activation : std::uint32_t { relu = 0, sigmoid = 1, identity = 2 };

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }
};

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  // weights[i]: layer_sizes[i+1] x layer_sizes[i]
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t depth() const { return weights.size(); }

  static MlpParams zeros(std::vector<int> sizes, Activation output) {
    if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    MlpParams p;
    p.layer_sizes = std::move(sizes);
    p.output_activation = output;
    for (std::size_t i = 0; i + 1 < p.layer_sizes.size(); ++i) {
      if (p.layer_sizes[i] < 1 || p.layer_sizes[i + 1] < 1) throw ShapeError("layer sizes must be >= 1");
      p.weights.push_back(Eigen::MatrixXd::Zero(p.layer_sizes[i + 1], p.layer_sizes[i]));
      p.biases.push_back(Eigen::VectorXd::Zero(p.layer_sizes[i + 1]));
    }
    return p;
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static MlpParams random(std::vector<int> sizes, Activation output, Rng& rng) {
    MlpParams p = zeros(std::move(sizes), output);
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      const double bound = 1.0 / std::sqrt(double(p.layer_sizes[i]));
      auto& w = p.weights[i];
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
      for (Eigen::Index r = 0; r < p.biases[i].size(); ++r) p.biases[i](r) = rng.uniform(-bound, bound);
    }
    return p;
  }

  MlpGradients zero_gradients() const {
    MlpGradients g;
    for (const auto& w : weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    return g;
  }

  bool same_architecture(const MlpParams& other) const {
    return layer_sizes == other.layer_sizes && hidden_activation == other.hidden_activation &&
           output_activation == other.output_activation;
  }

  void validate() const {
    if (layer_sizes.size() < 2 || weights.size() != layer_sizes.size() - 1 ||
        biases.size() != weights.size()) {
      throw ShapeError("MlpParams: layer count mismatch");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i].rows() != layer_sizes[i + 1] || weights[i].cols() != layer_sizes[i] ||
          biases[i].size() != layer_sizes[i + 1]) {
        throw ShapeError("MlpParams: layer " + std::to_string(i) + " has the wrong shape");
      }
      if (!weights[i].allFinite() || !biases[i].allFinite()) {
        throw NumericError("MlpParams: non-finite parameter", std::ptrdiff_t(i));
      }
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (!a.same_architecture(b)) return false;
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
      if (a.weights[i] != b.weights[i] || a.biases[i] != b.biases[i]) return false;
    }
    return true;
  }
};

namespace detail {

inline void activate(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); break;
    case Activation::identity: break;
  }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the pre-activation `z` and the activation output `a`.
inline void activation_backward(Activation act, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                                Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::relu: grad = grad.cwiseProduct((z.array() > 0.0).cast<double>().matrix()); break;
    case Activation::sigmoid: grad = grad.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix())); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Activations retained by a batched forward pass; columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;          // pre[i]: affine output of layer i
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input, back() = output

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

inline ForwardCache mlp_forward_cached(const MlpParams& params, const Eigen::MatrixXd& x) {
  if (x.rows() != params.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(params.input_dim()));
  }
  ForwardCache cache;
  cache.activations.push_back(x);
  for (std::size_t i = 0; i < params.depth(); ++i) {
    Eigen::MatrixXd z = params.weights[i] * cache.activations.back();
    z.colwise() += params.biases[i];
    Eigen::MatrixXd a = z;
    detail::activate(i + 1 == params.depth() ? params.output_activation : params.hidden_activation, a);
    cache.pre.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  return cache;
}

inline Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::MatrixXd& x) {
  return mlp_forward_cached(params, x).activations.back();
}

inline Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& x) {
  return mlp_forward_cached(params, Eigen::MatrixXd(x)).activations.back().col(0);
}

struct BackwardResult {
  MlpGradients param_grads;    // summed over the batch
  Eigen::MatrixXd input_grad;  // one column per sample
};

/// Reverse pass for a cached forward. `upstream` is dL/d(output), one column
/// per sample.
inline BackwardResult mlp_backward(const MlpParams& params, const ForwardCache& cache,
                                   const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != params.output_dim() || upstream.cols() != cache.output().cols()) {
    throw ShapeError("mlp_backward: upstream gradient shape does not match the output");
  }
  BackwardResult out;
  out.param_grads.weights.resize(params.depth());
  out.param_grads.biases.resize(params.depth());
  Eigen::MatrixXd grad = upstream;
  for (std::size_t i = params.depth(); i-- > 0;) {
    const Activation act = i + 1 == params.depth() ? params.output_activation : params.hidden_activation;
    detail::activation_backward(act, cache.pre[i], cache.activations[i + 1], grad);
    out.param_grads.weights[i] = grad * cache.activations[i].transpose();
    out.param_grads.biases[i] = grad.rowwise().sum();
    grad = params.weights[i].transpose() * grad;
  }
  out.input_grad = std::move(grad);
  return out;
}

inline BackwardResult mlp_backward(const MlpParams& params, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& upstream) {
  const auto cache = mlp_forward_cached(params, Eigen::MatrixXd(x));
  return mlp_backward(params, cache, Eigen::MatrixXd(upstream));
}

struct AdamState {
  MlpGradients first_moment;
  MlpGradients second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& params, double learning_rate) {
    AdamState s;
    s.first_moment = params.zero_gradients();
    s.second_moment = params.zero_gradients();
    s.learning_rate = learning_rate;
    return s;
  }

  void reset() {
    first_moment.set_zero();
    second_moment.set_zero();
    step_count = 0;
  }
};

inline void check_finite(const MlpGradients& grads) {
  for (std::size_t i = 0; i < grads.weights.size(); ++i) {
    if (!grads.weights[i].allFinite() || !grads.biases[i].allFinite()) {
      throw NumericError("non-finite gradient in layer " + std::to_string(i), std::ptrdiff_t(i));
    }
  }
}

/// One bias-corrected Adam step, minimizing. Nothing is modified if any
/// gradient is non-finite.
inline void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state) {
  if (grads.weights.size() != params.depth() || grads.biases.size() != params.depth()) {
    throw ShapeError("adam_step: gradient layer count mismatch");
  }
  for (std::size_t i = 0; i < params.depth(); ++i) {
    if (grads.weights[i].rows() != params.weights[i].rows() ||
        grads.weights[i].cols() != params.weights[i].cols() ||
        grads.biases[i].size() != params.biases[i].size()) {
      throw ShapeError("adam_step: gradient shape mismatch in layer " + std::to_string(i));
    }
  }
  check_finite(grads);

  state.step_count += 1;
  const double t = double(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double lr = state.learning_rate, b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;

  auto apply = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < params.depth(); ++i) {
    apply(params.weights[i], grads.weights[i], state.first_moment.weights[i], state.second_moment.weights[i]);
    apply(params.biases[i], grads.biases[i], state.first_moment.biases[i], state.second_moment.biases[i]);
  }
}

/// tau * online + (1 - tau) * target, elementwise.
inline MlpParams soft_update(const MlpParams& target, const MlpParams& online, double tau) {
  if (!target.same_architecture(online)) throw ShapeError("soft_update: architecture mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("soft_update: tau must lie in [0, 1]");
  if (tau == 1.0) return online;
  if (tau == 0.0) return target;
  MlpParams out = target;
  for (std::size_t i = 0; i < out.depth(); ++i) {
    out.weights[i] = tau * online.weights[i] + (1.0 - tau) * target.weights[i];
    out.biases[i] = tau * online.biases[i] + (1.0 - tau) * target.biases[i];
  }
  return out;
}

// Binary layout, all fields little-endian:
//   "MLPW" | u32 version | u32 n | u32 layer_sizes[n] | u32 hidden | u32 output
//   | f64 weights (row-major, layer by layer) | f64 biases (layer by layer)
inline constexpr std::uint32_t kMlpFormatVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_++]) << (8 * i);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw LibraryError("parameter file truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const MlpParams& params) {
  params.validate();
  std::vector<std::uint8_t> out{'M', 'L', 'P', 'W'};
  detail::put_u32(out, kMlpFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.layer_sizes.size()));
  for (int s : params.layer_sizes) detail::put_u32(out, static_cast<std::uint32_t>(s));
  detail::put_u32(out, static_cast<std::uint32_t>(params.hidden_activation));
  detail::put_u32(out, static_cast<std::uint32_t>(params.output_activation));
  for (const auto& w : params.weights)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_f64(out, w(r, c));
  for (const auto& b : params.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r) detail::put_f64(out, b(r));
  return out;
}

inline MlpParams deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || bytes[0] != 'M' || bytes[1] != 'L' || bytes[2] != 'P' || bytes[3] != 'W') {
    throw LibraryError("not an MLP parameter file");
  }
  const std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  detail::ByteReader in(body);
  const auto version = in.u32();
  if (version != kMlpFormatVersion) {
    throw LibraryError("unsupported parameter format version " + std::to_string(version));
  }
  const auto n = in.u32();
  if (n < 2 || n > 1024) throw LibraryError("implausible layer count in parameter file");
  std::vector<int> sizes(n);
  for (auto& s : sizes) s = static_cast<int>(in.u32());
  const auto hidden = in.u32();
  const auto output = in.u32();
  if (hidden > 2 || output > 2) throw LibraryError("unknown activation code in parameter file");
  MlpParams p = MlpParams::zeros(std::move(sizes), static_cast<Activation>(output));
  p.hidden_activation = static_cast<Activation>(hidden);
  for (auto& w : p.weights)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = in.f64();
  for (auto& b : p.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = in.f64();
  if (!in.at_end()) throw LibraryError("trailing bytes in parameter file");
  p.validate();
  return p;
}

inline void save_params(const MlpParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LibraryError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw LibraryError("failed writing " + path.string());
}

inline MlpParams load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LibraryError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace autoprune
