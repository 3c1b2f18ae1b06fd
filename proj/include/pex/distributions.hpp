#ifndef PEX_DISTRIBUTIONS_HPP_
#define PEX_DISTRIBUTIONS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pex/numcore.hpp"
#include "pex/rng.hpp"

namespace pex
{

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

inline void check_bounds(const Vector & low, const Vector & high)
{
  if (low.size() != high.size()) {
    throw ShapeError("action bounds differ in length");
  }
  for (Eigen::Index i = 0; i < low.size(); ++i) {
    if (!(low(i) < high(i))) {
      throw std::invalid_argument("action bound low must be below high in every dimension");
    }
  }
}

/// low + (high - low) * (tanh(raw) + 1) / 2, elementwise.
inline Vector squash_mean(const Vector & raw_mean, const Vector & low, const Vector & high)
{
  check_bounds(low, high);
  if (raw_mean.size() != low.size()) {
    throw ShapeError("raw mean and bounds differ in length");
  }
  return low.array() + (high - low).array() * (raw_mean.array().tanh() + 1.0) * 0.5;
}

inline Vector clamp_log_std(const Vector & log_std)
{
  return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

/**
 * Diagonal Gaussian with a range-squashed mean and state-independent std.
 *
 * The density is the plain (non-squashed) Gaussian; samples are clipped to the
 * action range afterwards and no Jacobian correction is applied.
 */
struct GaussianPolicyHead
{
  Vector raw_mean;
  Vector log_std;
  Vector action_low;
  Vector action_high;

  Vector mean() const { return squash_mean(raw_mean, action_low, action_high); }
  Vector std() const { return clamp_log_std(log_std).array().exp(); }
};

inline double gaussian_log_prob(const GaussianPolicyHead & head, const Vector & action)
{
  if (action.size() != head.raw_mean.size() || head.log_std.size() != head.raw_mean.size()) {
    throw ShapeError("gaussian_log_prob: action dimension mismatch");
  }
  const Vector mu = head.mean();
  const Vector ls = clamp_log_std(head.log_std);
  const Vector z = (action - mu).array() / ls.array().exp();
  return (-0.5 * z.array().square() - ls.array() - kHalfLog2Pi).sum();
}

inline Vector greedy(const GaussianPolicyHead & head) { return head.mean(); }

inline Vector gaussian_sample(const GaussianPolicyHead & head, Rng & rng)
{
  const Vector mu = head.mean();
  const Vector sd = head.std();
  Vector a(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    a(i) = std::clamp(mu(i) + sd(i) * rng.normal(), head.action_low(i), head.action_high(i));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Value-based selection over a policy set

struct SelectionDistribution
{
  Vector probabilities;
  double temperature = 1.0;
  Vector q_values;
};

/// p_i = exp(q_i / alpha) / sum_j exp(q_j / alpha), with max-subtraction.
inline SelectionDistribution softmax_temperature(const Vector & q_values, double alpha)
{
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("softmax temperature must be positive");
  }
  if (q_values.size() < 1) {
    throw ShapeError("softmax over an empty set");
  }
  if (!q_values.allFinite()) {
    throw std::invalid_argument("softmax over non-finite values");
  }
  const Vector e = ((q_values.array() - q_values.maxCoeff()) / alpha).exp();
  return SelectionDistribution{e / e.sum(), alpha, q_values};
}

/// Index drawn by inverse CDF from a uniform u in [0, 1).
inline std::size_t categorical_from_uniform(const Vector & probabilities, double u)
{
  double acc = 0.0;
  const auto k = static_cast<std::size_t>(probabilities.size());
  for (std::size_t i = 0; i + 1 < k; ++i) {
    acc += probabilities(static_cast<Eigen::Index>(i));
    if (u < acc) {
      return i;
    }
  }
  // Remaining mass (including roundoff) goes to the last index with positive probability.
  for (std::size_t i = k; i-- > 0; ) {
    if (probabilities(static_cast<Eigen::Index>(i)) > 0.0) {
      return i;
    }
  }
  return k - 1;
}

inline std::size_t categorical_sample(const SelectionDistribution & dist, Rng & rng)
{
  return categorical_from_uniform(dist.probabilities, rng.uniform());
}

// ---------------------------------------------------------------------------
// Zeta(a) sampler

/**
 * Inverse-CDF sampler for P(n) = n^-a / zeta(a), n >= 1, over a table truncated at
 * `kMaxValue`; the tail mass beyond it is assigned to the truncation point.
 */
class ZetaSampler
{
public:
  static constexpr std::size_t kMaxValue = 10000;

  explicit ZetaSampler(double a) : a_(a)
  {
    if (!(a > 1.0)) {
      throw std::invalid_argument("zeta parameter must exceed 1");
    }
    const double z = zeta(a);
    cdf_.resize(kMaxValue);
    double acc = 0.0;
    for (std::size_t n = 1; n < kMaxValue; ++n) {
      acc += std::pow(static_cast<double>(n), -a) / z;
      cdf_[n - 1] = acc;
    }
    cdf_[kMaxValue - 1] = 1.0;
  }

  double parameter() const { return a_; }

  /// P(value <= n) for the truncated distribution.
  double cdf(std::size_t n) const
  {
    if (n == 0) {
      return 0.0;
    }
    return cdf_[std::min(n, kMaxValue) - 1];
  }

  std::uint64_t sample(Rng & rng) const { return from_uniform(rng.uniform()); }

  std::uint64_t from_uniform(double u) const
  {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) {
      return kMaxValue;
    }
    return static_cast<std::uint64_t>(it - cdf_.begin()) + 1;
  }

  /// Riemann zeta via a direct partial sum plus an Euler-Maclaurin tail.
  static double zeta(double a)
  {
    constexpr std::size_t n_terms = 100000;
    double s = 0.0;
    for (std::size_t n = n_terms; n >= 1; --n) {
      s += std::pow(static_cast<double>(n), -a);
    }
    const double N = static_cast<double>(n_terms);
    s += std::pow(N, 1.0 - a) / (a - 1.0) - 0.5 * std::pow(N, -a) + a * std::pow(N, -a - 1.0) / 12.0;
    return s;
  }

private:
  double a_;
  std::vector<double> cdf_;
};

inline std::uint64_t zeta_sample(double a, Rng & rng)
{
  thread_local std::unique_ptr<ZetaSampler> cached;
  if (!cached || cached->parameter() != a) {
    cached = std::make_unique<ZetaSampler>(a);
  }
  return cached->sample(rng);
}

}  // namespace pex

#endif  // PEX_DISTRIBUTIONS_HPP_
