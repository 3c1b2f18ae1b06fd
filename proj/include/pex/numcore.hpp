#ifndef PEX_NUMCORE_HPP_
#define PEX_NUMCORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pex/errors.hpp"
#include "pex/rng.hpp"

namespace pex
{

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * @brief Dense feed-forward network: ReLU hidden layers, linear output.
 *
 * Batches are column-major: one sample per column, so a batch of n inputs is a
 * (layer_sizes.front() x n) matrix. Weight i has shape (layer_sizes[i+1], layer_sizes[i]).
 * The same type holds gradients and optimizer moments.
 */
struct Mlp
{
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }

  std::size_t num_params() const
  {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      n += static_cast<std::size_t>(weights[i].size() + biases[i].size());
    }
    return n;
  }

  static Mlp zeros(const std::vector<std::size_t> & sizes)
  {
    if (sizes.size() < 2) {
      throw ShapeError("mlp needs at least an input and an output size");
    }
    Mlp m;
    m.layer_sizes = sizes;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      if (sizes[i] == 0 || sizes[i + 1] == 0) {
        throw ShapeError("mlp layer sizes must be positive");
      }
      m.weights.push_back(Matrix::Zero(sizes[i + 1], sizes[i]));
      m.biases.push_back(Vector::Zero(sizes[i + 1]));
    }
    return m;
  }

  /// Zero-valued network with this one's shapes.
  Mlp zeros_like() const { return zeros(layer_sizes); }

  bool same_shape(const Mlp & o) const { return layer_sizes == o.layer_sizes; }

  bool operator==(const Mlp & o) const
  {
    if (!same_shape(o)) {
      return false;
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] != o.weights[i] || biases[i] != o.biases[i]) {
        return false;
      }
    }
    return true;
  }
};

/// Uniform init in +-1/sqrt(fan_in) for weights and biases.
inline Mlp mlp_init(const std::vector<std::size_t> & sizes, Rng & rng)
{
  Mlp m = Mlp::zeros(sizes);
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
    for (Eigen::Index c = 0; c < m.weights[i].cols(); ++c) {
      for (Eigen::Index r = 0; r < m.weights[i].rows(); ++r) {
        m.weights[i](r, c) = rng.uniform(-bound, bound);
      }
    }
    for (Eigen::Index r = 0; r < m.biases[i].size(); ++r) {
      m.biases[i](r) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

/// Layer-wise record of a forward pass. inputs[i] feeds layer i; pre[i] = W_i inputs[i] + b_i.
struct ActivationTape
{
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;

  std::size_t num_layers() const { return pre.size(); }
  Eigen::Index batch() const { return pre.empty() ? 0 : pre.front().cols(); }
};

struct ForwardResult
{
  Matrix output;
  ActivationTape tape;
};

struct BackwardResult
{
  Mlp grads;
  Matrix input_grad;
};

namespace detail
{

inline void check_input(const Mlp & params, const Matrix & input)
{
  if (params.num_layers() == 0) {
    throw ShapeError("mlp has no layers");
  }
  if (static_cast<std::size_t>(input.rows()) != params.input_dim()) {
    throw ShapeError(
            "mlp input has " + std::to_string(input.rows()) + " rows, expected " +
            std::to_string(params.input_dim()));
  }
}

}  // namespace detail

inline ForwardResult mlp_forward(const Mlp & params, const Matrix & input)
{
  detail::check_input(params, input);
  ForwardResult res;
  const std::size_t n_layers = params.num_layers();
  res.tape.inputs.reserve(n_layers);
  res.tape.pre.reserve(n_layers);
  res.tape.inputs.push_back(input);
  for (std::size_t i = 0; i < n_layers; ++i) {
    Matrix z(params.weights[i].rows(), input.cols());
    z.noalias() = params.weights[i] * res.tape.inputs[i];
    z.colwise() += params.biases[i];
    if (i + 1 < n_layers) {
      res.tape.inputs.push_back(z.cwiseMax(0.0));
    } else {
      res.output = z;
    }
    res.tape.pre.push_back(std::move(z));
  }
  return res;
}

/// Forward pass without recording a tape.
inline Matrix mlp_predict(const Mlp & params, const Matrix & input)
{
  detail::check_input(params, input);
  Matrix h = input;
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    Matrix z(params.weights[i].rows(), h.cols());
    z.noalias() = params.weights[i] * h;
    z.colwise() += params.biases[i];
    if (i + 1 < params.num_layers()) {
      h = z.cwiseMax(0.0);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

/**
 * @brief Reverse-mode gradients of sum(output .* output_grad).
 *
 * Returns gradients for every weight and bias, plus the gradient with respect
 * to the network input (used for dQ/da) unless `want_input_grad` is false.
 */
inline BackwardResult mlp_backward(
  const Mlp & params, const ActivationTape & tape,
  const Matrix & output_grad, bool want_input_grad = true)
{
  const std::size_t n_layers = params.num_layers();
  if (tape.num_layers() != n_layers || tape.inputs.size() != n_layers) {
    throw ShapeError("tape layer count does not match network");
  }
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (tape.pre[i].rows() != params.weights[i].rows() ||
      tape.inputs[i].rows() != params.weights[i].cols() ||
      tape.pre[i].cols() != tape.batch())
    {
      throw ShapeError("tape does not match network at layer " + std::to_string(i));
    }
  }
  if (static_cast<std::size_t>(output_grad.rows()) != params.output_dim() ||
    output_grad.cols() != tape.batch())
  {
    throw ShapeError("output gradient shape does not match forward output");
  }

  BackwardResult res;
  res.grads.layer_sizes = params.layer_sizes;
  res.grads.weights.resize(n_layers);
  res.grads.biases.resize(n_layers);
  Matrix g = output_grad;
  for (std::size_t k = n_layers; k-- > 0; ) {
    res.grads.weights[k].resize(g.rows(), tape.inputs[k].rows());
    res.grads.weights[k].noalias() = g * tape.inputs[k].transpose();
    res.grads.biases[k] = g.rowwise().sum();
    if (k == 0 && !want_input_grad) {
      break;
    }
    Matrix upstream(params.weights[k].cols(), g.cols());
    upstream.noalias() = params.weights[k].transpose() * g;
    if (k > 0) {
      upstream = (tape.pre[k - 1].array() > 0.0).select(upstream, 0.0);
    }
    g = std::move(upstream);
  }
  if (want_input_grad) {
    res.input_grad = std::move(g);
  }
  return res;
}

/// a += s * b, entrywise over matching networks.
inline void axpy(Mlp & a, double s, const Mlp & b)
{
  if (!a.same_shape(b)) {
    throw ShapeError("axpy on networks of different shapes");
  }
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    a.weights[i] += s * b.weights[i];
    a.biases[i] += s * b.biases[i];
  }
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConstants
{
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

/// Bias-corrected Adam update on one parameter block; `step` is the post-increment count.
template<typename P, typename G, typename M>
inline void adam_block(P && param, const G & grad, M && m, M && v, std::uint64_t step, double lr)
{
  using C = AdamConstants;
  m = C::beta1 * m + (1.0 - C::beta1) * grad;
  v = C::beta2 * v + (1.0 - C::beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(C::beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(C::beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + C::eps);
}

struct AdamState
{
  Mlp first_moment;
  Mlp second_moment;
  std::uint64_t step_count = 0;

  static AdamState for_params(const Mlp & params)
  {
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
  }
};

/// Adam for free-standing vector parameters (log-std, entropy coefficient).
struct VectorAdamState
{
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step_count = 0;

  static VectorAdamState for_size(Eigen::Index n)
  {
    return VectorAdamState{Vector::Zero(n), Vector::Zero(n), 0};
  }
};

inline void adam_step(Mlp & params, const Mlp & grads, AdamState & state, double lr)
{
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
    !params.same_shape(state.second_moment))
  {
    throw ShapeError("adam_step: params, grads and optimizer state differ in shape");
  }
  for (std::size_t i = 0; i < grads.num_layers(); ++i) {
    if (!grads.weights[i].allFinite() || !grads.biases[i].allFinite()) {
      throw NonFiniteError("adam_step: non-finite gradient", i);
    }
  }
  ++state.step_count;
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    adam_block(
      params.weights[i], grads.weights[i], state.first_moment.weights[i],
      state.second_moment.weights[i], state.step_count, lr);
    adam_block(
      params.biases[i], grads.biases[i], state.first_moment.biases[i],
      state.second_moment.biases[i], state.step_count, lr);
  }
}

inline void adam_step(Vector & params, const Vector & grads, VectorAdamState & state, double lr)
{
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: vector sizes differ");
  }
  if (!grads.allFinite()) {
    throw NonFiniteError("adam_step: non-finite gradient", 0);
  }
  ++state.step_count;
  adam_block(params, grads, state.first_moment, state.second_moment, state.step_count, lr);
}

/// target <- (1 - speed) * target + speed * online
inline void soft_update(Mlp & target, const Mlp & online, double speed)
{
  if (!target.same_shape(online)) {
    throw ShapeError("soft_update: target and online networks differ in shape");
  }
  if (!(speed > 0.0 && speed <= 1.0)) {
    throw std::invalid_argument("soft_update: speed must lie in (0, 1]");
  }
  if (speed == 1.0) {
    target = online;
    return;
  }
  for (std::size_t i = 0; i < target.num_layers(); ++i) {
    target.weights[i] += speed * (online.weights[i] - target.weights[i]);
    target.biases[i] += speed * (online.biases[i] - target.biases[i]);
  }
}

// ---------------------------------------------------------------------------
// Flattening and gradient checking

inline Vector flatten(const Mlp & m)
{
  Vector out(static_cast<Eigen::Index>(m.num_params()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    out.segment(k, m.weights[i].size()) = m.weights[i].reshaped();
    k += m.weights[i].size();
    out.segment(k, m.biases[i].size()) = m.biases[i];
    k += m.biases[i].size();
  }
  return out;
}

inline Mlp unflatten(const Vector & flat, const Mlp & like)
{
  if (static_cast<std::size_t>(flat.size()) != like.num_params()) {
    throw ShapeError("unflatten: size mismatch");
  }
  Mlp m = like.zeros_like();
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    m.weights[i].reshaped() = flat.segment(k, m.weights[i].size());
    k += m.weights[i].size();
    m.biases[i] = flat.segment(k, m.biases[i].size());
    k += m.biases[i].size();
  }
  return m;
}

constexpr double kGradCheckStep = 1e-5;

/**
 * @brief Worst relative error between analytic and central-difference gradients.
 *
 * `loss_fn` returns (loss, analytic gradient). The relative error of a coordinate is
 * |a - n| / max(|a|, |n|, 1e-6 * max(1, |loss|)); the floor keeps float roundoff of
 * the loss from dominating near-zero coordinates. Non-finite comparisons count as infinite.
 */
inline double grad_check_flat(
  const std::function<std::pair<double, Vector>(const Vector &)> & loss_fn,
  const Vector & x, double step = kGradCheckStep)
{
  const auto [loss0, analytic] = loss_fn(x);
  if (analytic.size() != x.size()) {
    throw ShapeError("grad_check: analytic gradient size differs from parameter count");
  }
  const double floor = 1e-6 * std::max(1.0, std::abs(loss0));
  double worst = 0.0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double up = loss_fn(probe).first;
    probe(i) = x(i) - step;
    const double down = loss_fn(probe).first;
    probe(i) = x(i);
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic(i);
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      return std::numeric_limits<double>::infinity();
    }
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

inline double grad_check(
  const std::function<std::pair<double, Mlp>(const Mlp &)> & loss_fn,
  const Mlp & params, double step = kGradCheckStep)
{
  return grad_check_flat(
    [&](const Vector & flat) {
      auto [loss, grad] = loss_fn(unflatten(flat, params));
      return std::make_pair(loss, flatten(grad));
    },
    flatten(params), step);
}

/// Max |entry| over all parameters.
inline double max_abs(const Mlp & m)
{
  double r = 0.0;
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    r = std::max({r, m.weights[i].cwiseAbs().maxCoeff(), m.biases[i].cwiseAbs().maxCoeff()});
  }
  return r;
}

inline bool all_finite(const Mlp & m)
{
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    if (!m.weights[i].allFinite() || !m.biases[i].allFinite()) {
      return false;
    }
  }
  return true;
}

}  // namespace pex

#endif  // PEX_NUMCORE_HPP_
