#pragma once

// Feed-forward networks with hand-written backpropagation and Adam.
//
// Activations are stored column-wise: a batch of B inputs of width n is an
// n x B matrix. Parameters live in one flat buffer per network so that the
// optimizer, target smoothing, checkpoints and gradient checks can treat
// every parameter as a coordinate.

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gas/io.hpp"
#include "gas/rng.hpp"

namespace gas::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline constexpr double kLayerNormEps = 1e-6;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr double kGeluK0 = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluK1 = 0.044715;

// tanh-approximated GELU and its derivative, element-wise.
template <typename Derived>
auto gelu(const Eigen::ArrayBase<Derived>& x) {
  using T = typename Derived::Scalar;
  const T k0 = T(kGeluK0), k1 = T(kGeluK1);
  return (T(0.5) * x * (T(1) + (k0 * (x + k1 * x.cube())).tanh())).eval();
}

template <typename Derived>
auto gelu_grad(const Eigen::ArrayBase<Derived>& x) {
  using T = typename Derived::Scalar;
  const T k0 = T(kGeluK0), k1 = T(kGeluK1);
  const auto t = (k0 * (x + k1 * x.cube())).tanh().eval();
  return (T(0.5) * (T(1) + t) +
          T(0.5) * x * (T(1) - t.square()) * k0 * (T(1) + T(3) * k1 * x.square()))
      .eval();
}

}  // namespace detail

/// Cached intermediate values of one forward pass, consumed by backward().
template <typename T>
struct Tape {
  struct Layer {
    Matrix<T> input;
    Matrix<T> normed;
    Eigen::Array<T, 1, Eigen::Dynamic> inv_std;
    Matrix<T> pre_activation;
  };
  std::vector<Layer> layers;
};

/// Multi-layer perceptron. Hidden layers: affine -> layer norm (optional) ->
/// GELU. The output layer is affine only.
template <typename T>
class BasicMlp {
 public:
  using Scalar = T;

  BasicMlp() = default;

  /// widths = {input, hidden..., output}; at least two entries.
  BasicMlp(std::vector<int> widths, bool layer_norm)
      : widths_(std::move(widths)), layer_norm_(layer_norm) {
    if (widths_.size() < 2) throw std::invalid_argument("mlp needs input and output widths");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      if (widths_[l] <= 0 || widths_[l + 1] <= 0) throw std::invalid_argument("mlp widths must be positive");
      Offsets o;
      o.in = widths_[l];
      o.out = widths_[l + 1];
      o.weight = offset;
      offset += static_cast<std::size_t>(o.in) * o.out;
      o.bias = offset;
      offset += o.out;
      if (layer_norm_ && !is_output(l)) {
        o.gain = offset;
        offset += o.out;
        o.shift = offset;
        offset += o.out;
      }
      layers_.push_back(o);
    }
    params_.assign(offset, T(0));
    for (const auto& o : layers_) {
      if (o.gain) std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(*o.gain), o.out, T(1));
    }
  }

  /// LeCun-uniform weights, zero biases, unit gains.
  void initialize(Rng& rng) {
    for (const auto& o : layers_) {
      const double limit = std::sqrt(3.0 / o.in);
      for (std::size_t i = 0; i < static_cast<std::size_t>(o.in) * o.out; ++i) {
        params_[o.weight + i] = static_cast<T>(rng.uniform(-limit, limit));
      }
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(o.bias), o.out, T(0));
      if (o.gain) {
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(*o.gain), o.out, T(1));
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(*o.shift), o.out, T(0));
      }
    }
  }

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  bool layer_norm() const { return layer_norm_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  bool same_shape(const BasicMlp& other) const {
    return widths_ == other.widths_ && layer_norm_ == other.layer_norm_;
  }

  Matrix<T> forward(const Matrix<T>& x) const { return run(x, nullptr); }
  Matrix<T> forward(const Matrix<T>& x, Tape<T>& tape) const { return run(x, &tape); }

  /// Accumulates parameter gradients of <upstream, output> into `grad` and
  /// returns the gradient with respect to the input batch.
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& upstream, std::span<T> grad) const {
    assert(tape.layers.size() == layers_.size() && "backward() requires a forward tape");
    assert(grad.size() == params_.size());
    Matrix<T> delta = upstream;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& o = layers_[li];
      const auto& cache = tape.layers[li];
      Matrix<T> dz;
      if (!is_output(li)) {
        Matrix<T> dy = (delta.array() * detail::gelu_grad(cache.pre_activation.array())).matrix();
        if (o.gain) {
          auto gain = vec(*o.gain, o.out);
          vec_mut(grad, *o.gain, o.out) += (dy.array() * cache.normed.array()).rowwise().sum().matrix();
          vec_mut(grad, *o.shift, o.out) += dy.rowwise().sum();
          Matrix<T> dxhat = dy.array().colwise() * gain.array();
          const auto mean_d = dxhat.colwise().mean().array().eval();
          const auto mean_dx = (dxhat.array() * cache.normed.array()).colwise().mean().eval();
          dz = ((dxhat.array().rowwise() - mean_d) - cache.normed.array().rowwise() * mean_dx).rowwise() *
               cache.inv_std;
        } else {
          dz = std::move(dy);
        }
      } else {
        dz = std::move(delta);
      }
      Eigen::Map<RowMatrix<T>> dw(grad.data() + o.weight, o.out, o.in);
      dw.noalias() += dz * cache.input.transpose();
      vec_mut(grad, o.bias, o.out) += dz.rowwise().sum();
      delta.noalias() = weight(o).transpose() * dz;
    }
    return delta;
  }

  template <typename U>
  BasicMlp<U> cast() const {
    BasicMlp<U> out(widths_, layer_norm_);
    auto dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  struct Offsets {
    int in = 0;
    int out = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::optional<std::size_t> gain;
    std::optional<std::size_t> shift;
  };

  bool is_output(std::size_t layer) const { return layer + 2 == widths_.size(); }

  Eigen::Map<const RowMatrix<T>> weight(const Offsets& o) const {
    return Eigen::Map<const RowMatrix<T>>(params_.data() + o.weight, o.out, o.in);
  }
  Eigen::Map<const Vector<T>> vec(std::size_t offset, int n) const {
    return Eigen::Map<const Vector<T>>(params_.data() + offset, n);
  }
  static Eigen::Map<Vector<T>> vec_mut(std::span<T> buffer, std::size_t offset, int n) {
    return Eigen::Map<Vector<T>>(buffer.data() + offset, n);
  }

  Matrix<T> run(const Matrix<T>& x, Tape<T>* tape) const {
    assert(x.rows() == input_dim() && "mlp input dimension mismatch");
    if (tape) tape->layers.resize(layers_.size());
    Matrix<T> a = x;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& o = layers_[li];
      Matrix<T> z = weight(o) * a;
      z.colwise() += vec(o.bias, o.out);
      if (tape) tape->layers[li].input = std::move(a);
      if (is_output(li)) {
        a = std::move(z);
        continue;
      }
      if (o.gain) {
        const auto mean = z.colwise().mean().eval();
        Matrix<T> centered = z.rowwise() - mean;
        const Eigen::Array<T, 1, Eigen::Dynamic> inv_std =
            (centered.array().square().colwise().mean() + T(kLayerNormEps)).rsqrt();
        Matrix<T> normed = (centered.array().rowwise() * inv_std).matrix();
        z = ((normed.array().colwise() * vec(*o.gain, o.out).array()).colwise() +
             vec(*o.shift, o.out).array())
                .matrix();
        if (tape) {
          tape->layers[li].normed = std::move(normed);
          tape->layers[li].inv_std = inv_std;
        }
      }
      a = detail::gelu(z.array()).matrix();
      if (tape) tape->layers[li].pre_activation = std::move(z);
    }
    return a;
  }

  std::vector<int> widths_;
  bool layer_norm_ = true;
  std::vector<T> params_;
  std::vector<Offsets> layers_;
};

using Mlp = BasicMlp<float>;

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<T> first_moment;
  std::vector<T> second_moment;

  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamConfig cfg)
      : config(cfg), first_moment(parameter_count, T(0)), second_moment(parameter_count, T(0)) {}
};

/// Bias-corrected Adam update. Throws NonFiniteError on NaN/Inf gradients.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      throw NonFiniteError("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                           std::to_string(state.step) + ")");
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = T(c.beta1), b2 = T(c.beta2);
  const T step_size = T(c.learning_rate / correction1);
  const T inv_sqrt_c2 = T(1.0 / std::sqrt(correction2));
  const T eps = T(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    T& m = state.first_moment[i];
    T& v = state.second_moment[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    params[i] -= step_size * m / (std::sqrt(v) * inv_sqrt_c2 + eps);
  }
}

/// target <- (1 - tau) * target + tau * online, element-wise.
template <typename T>
void polyak_update(BasicMlp<T>& target, const BasicMlp<T>& online, double tau) {
  assert(target.same_shape(online) && "polyak_update: architecture mismatch");
  auto dst = target.params();
  auto src = online.params();
  const T keep = T(1.0 - tau), take = T(tau);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + take * src[i];
}

inline constexpr std::uint32_t kMlpMagic = 0x4e534147;  // "GASN"
inline constexpr std::uint32_t kMlpVersion = 1;

/// Layer count, widths, then the row-major float parameter blocks.
inline void write_mlp(std::ostream& os, const Mlp& net) {
  io::write_pod(os, kMlpMagic);
  io::write_pod(os, kMlpVersion);
  io::write_pod(os, static_cast<std::uint32_t>(net.widths().size() - 1));
  for (int w : net.widths()) io::write_pod(os, static_cast<std::int32_t>(w));
  io::write_pod(os, static_cast<std::uint8_t>(net.layer_norm() ? 1 : 0));
  io::write_pod(os, static_cast<std::uint64_t>(net.parameter_count()));
  io::write_array(os, net.params());
}

inline Mlp read_mlp(std::istream& is) {
  if (io::read_pod<std::uint32_t>(is) != kMlpMagic) throw io::FormatError("not a network block");
  if (io::read_pod<std::uint32_t>(is) != kMlpVersion) throw io::FormatError("unsupported network version");
  const auto layers = io::read_pod<std::uint32_t>(is);
  if (layers == 0 || layers > 64) throw io::FormatError("bad layer count");
  std::vector<int> widths(layers + 1);
  for (auto& w : widths) w = io::read_pod<std::int32_t>(is);
  const bool layer_norm = io::read_pod<std::uint8_t>(is) != 0;
  Mlp net(widths, layer_norm);
  if (io::read_pod<std::uint64_t>(is) != net.parameter_count()) throw io::FormatError("parameter count mismatch");
  io::read_array(is, net.params());
  return net;
}

inline void write_adam(std::ostream& os, const AdamState<float>& s) {
  io::write_pod(os, s.step);
  io::write_pod(os, s.config.learning_rate);
  io::write_pod(os, s.config.beta1);
  io::write_pod(os, s.config.beta2);
  io::write_pod(os, s.config.epsilon);
  io::write_pod(os, static_cast<std::uint64_t>(s.first_moment.size()));
  io::write_array(os, std::span<const float>(s.first_moment));
  io::write_array(os, std::span<const float>(s.second_moment));
}

inline AdamState<float> read_adam(std::istream& is) {
  AdamState<float> s;
  s.step = io::read_pod<std::int64_t>(is);
  s.config.learning_rate = io::read_pod<double>(is);
  s.config.beta1 = io::read_pod<double>(is);
  s.config.beta2 = io::read_pod<double>(is);
  s.config.epsilon = io::read_pod<double>(is);
  const auto n = io::read_pod<std::uint64_t>(is);
  s.first_moment.resize(n);
  s.second_moment.resize(n);
  io::read_array(is, std::span<float>(s.first_moment));
  io::read_array(is, std::span<float>(s.second_moment));
  return s;
}

/// Network plus its optimizer state; the unit trained by every module.
struct Trainable {
  Mlp net;
  AdamState<float> adam;
  std::vector<float> grad;

  Trainable() = default;
  Trainable(Mlp network, AdamConfig cfg)
      : net(std::move(network)), adam(net.parameter_count(), cfg), grad(net.parameter_count(), 0.0f) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
  void apply() { adam_step<float>(net.params(), grad, adam); }
};

}  // namespace gas::nn
