#ifndef PEX_ACTOR_HPP_
#define PEX_ACTOR_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "pex/distributions.hpp"
#include "pex/numcore.hpp"

namespace pex
{

/// Gaussian policy: an MLP producing the raw mean plus a trainable state-independent log-std.
struct Actor
{
  Mlp net;
  Vector log_std;
  Vector action_low;
  Vector action_high;

  static Actor init(
    std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t> & hidden,
    const Vector & low, const Vector & high, Rng & rng)
  {
    check_bounds(low, high);
    if (static_cast<std::size_t>(low.size()) != act_dim) {
      throw ShapeError("actor: bounds length differs from act_dim");
    }
    std::vector<std::size_t> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(act_dim);
    return Actor{mlp_init(sizes, rng), Vector::Zero(static_cast<Eigen::Index>(act_dim)), low, high};
  }

  std::size_t obs_dim() const { return net.input_dim(); }
  std::size_t act_dim() const { return net.output_dim(); }

  Vector half_range() const { return (action_high - action_low) * 0.5; }
  Vector std() const { return clamp_log_std(log_std).array().exp(); }

  /// Squashed means for a batch of observations (obs_dim x n -> act_dim x n).
  Matrix mean(const Matrix & obs) const { return squash(mlp_predict(net, obs)); }

  Matrix squash(const Matrix & raw) const
  {
    Matrix out = raw.array().tanh();
    out = ((out.array() + 1.0).colwise() * half_range().array()).colwise() + action_low.array();
    return out;
  }

  GaussianPolicyHead head(const Vector & obs) const
  {
    return GaussianPolicyHead{mlp_predict(net, obs), log_std, action_low, action_high};
  }

  Vector greedy(const Vector & obs) const { return mean(obs).col(0); }

  Vector sample(const Vector & obs, Rng & rng) const { return gaussian_sample(head(obs), rng); }

  /// mean + std * noise, clipped to the action range; noise is act_dim x n.
  Matrix sample_with_noise(const Matrix & means, const Matrix & noise) const
  {
    Matrix a = means + (noise.array().colwise() * std().array()).matrix();
    return a.cwiseMax(action_low.replicate(1, a.cols())).cwiseMin(action_high.replicate(1, a.cols()));
  }

  /// Log-density per column of `actions` (non-squashed Gaussian around the squashed mean).
  Vector log_prob(const Matrix & means, const Matrix & actions) const
  {
    const Vector ls = clamp_log_std(log_std);
    const Matrix z = ((actions - means).array().colwise() / ls.array().exp()).matrix();
    return (-0.5 * z.array().square()).colwise().sum().transpose() -
           Vector::Constant(actions.cols(), ls.sum() + kHalfLog2Pi * static_cast<double>(ls.size())).array();
  }

  bool operator==(const Actor & o) const
  {
    return net == o.net && log_std == o.log_std && action_low == o.action_low &&
           action_high == o.action_high;
  }
};

struct ActorGrad
{
  Mlp net;
  Vector log_std;

  static ActorGrad zeros_like(const Actor & a)
  {
    return ActorGrad{a.net.zeros_like(), Vector::Zero(a.log_std.size())};
  }
};

struct ActorOptim
{
  AdamState net;
  VectorAdamState log_std;

  static ActorOptim for_actor(const Actor & a)
  {
    return ActorOptim{AdamState::for_params(a.net), VectorAdamState::for_size(a.log_std.size())};
  }
};

/// Adam on both parts; log-std is projected back into its clamp range afterwards.
inline void adam_step(Actor & actor, const ActorGrad & grad, ActorOptim & optim, double lr)
{
  adam_step(actor.net, grad.net, optim.net, lr);
  adam_step(actor.log_std, grad.log_std, optim.log_std, lr);
  actor.log_std = clamp_log_std(actor.log_std);
}

inline Vector flatten(const Actor & a)
{
  Vector flat(static_cast<Eigen::Index>(a.net.num_params()) + a.log_std.size());
  flat << flatten(a.net), a.log_std;
  return flat;
}

inline Vector flatten(const ActorGrad & g)
{
  Vector flat(static_cast<Eigen::Index>(g.net.num_params()) + g.log_std.size());
  flat << flatten(g.net), g.log_std;
  return flat;
}

inline Actor unflatten(const Vector & flat, const Actor & like)
{
  const auto n = static_cast<Eigen::Index>(like.net.num_params());
  Actor a = like;
  a.net = unflatten(Vector(flat.head(n)), like.net);
  a.log_std = flat.tail(like.log_std.size());
  return a;
}

/**
 * Forward pass that keeps what the log-likelihood gradients need.
 */
struct ActorForward
{
  ForwardResult raw;
  Matrix mean;      // squashed
  Matrix dmean_draw;  // d mean / d raw, elementwise
};

inline ActorForward actor_forward(const Actor & actor, const Matrix & obs)
{
  ActorForward f;
  f.raw = mlp_forward(actor.net, obs);
  const Matrix t = f.raw.output.array().tanh();
  f.mean = actor.squash(f.raw.output);
  f.dmean_draw = ((1.0 - t.array().square()).colwise() * actor.half_range().array()).matrix();
  return f;
}

/**
 * Backpropagates dL/dmean (act_dim x n) through the squash and the network.
 */
inline Mlp actor_backward_mean(const Actor & actor, const ActorForward & f, const Matrix & dmean)
{
  return mlp_backward(actor.net, f.raw.tape, dmean.cwiseProduct(f.dmean_draw), false).grads;
}

struct ActorLoss
{
  double loss = 0.0;
  ActorGrad grad;
};

/// -mean_i( w_i * log pi(a_i | s_i) ) and its gradient.
inline ActorLoss weighted_nll_loss(
  const Actor & actor, const Matrix & obs, const Matrix & actions,
  const Vector & weights)
{
  const Eigen::Index n = obs.cols();
  if (actions.cols() != n || weights.size() != n ||
    static_cast<std::size_t>(actions.rows()) != actor.act_dim())
  {
    throw ShapeError("weighted_nll_loss: batch shape mismatch");
  }
  if (n == 0) {
    throw std::invalid_argument("weighted_nll_loss: empty batch");
  }
  const ActorForward f = actor_forward(actor, obs);
  const Vector ls = clamp_log_std(actor.log_std);
  const Vector inv_sd = (-ls).array().exp();
  const Matrix z = ((actions - f.mean).array().colwise() * inv_sd.array()).matrix();
  const Vector logp = actor.log_prob(f.mean, actions);
  const double inv_n = 1.0 / static_cast<double>(n);

  ActorLoss out;
  out.loss = -(weights.array() * logp.array()).sum() * inv_n;
  // d logp / d mean = z / sd ; d logp / d log_std = z^2 - 1
  Matrix dmean = (z.array().colwise() * inv_sd.array()).matrix();
  dmean = (dmean.array().rowwise() * (-weights.transpose().array() * inv_n)).matrix();
  out.grad.net = actor_backward_mean(actor, f, dmean);
  out.grad.log_std = -((z.array().square() - 1.0).matrix() * weights) * inv_n;
  return out;
}

}  // namespace pex

#endif  // PEX_ACTOR_HPP_
