#ifndef PEX_IQL_HPP_
#define PEX_IQL_HPP_

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pex/actor.hpp"
#include "pex/numcore.hpp"
#include "pex/policy_set.hpp"
#include "pex/replay.hpp"

namespace pex
{

struct IqlHyper
{
  double expectile = 0.9;
  double inv_temperature = 10.0;  // 1 / alpha
  double weight_max = 100.0;
  double discount = 0.99;

  double temperature() const { return 1.0 / inv_temperature; }

  void validate() const
  {
    if (!(expectile > 0.0 && expectile < 1.0)) {
      throw std::invalid_argument("expectile must lie in (0, 1)");
    }
    if (!(inv_temperature > 0.0) || !(weight_max > 0.0)) {
      throw std::invalid_argument("inverse temperature and weight clamp must be positive");
    }
    if (!(discount > 0.0 && discount < 1.0)) {
      throw std::invalid_argument("discount must lie in (0, 1)");
    }
  }
};

/// Double critics with targets, state value network and the actor.
struct IqlNets
{
  Mlp q1, q2, q1_target, q2_target, v;
  Actor actor;

  static IqlNets init(
    std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t> & hidden,
    const Vector & low, const Vector & high, Rng & rng)
  {
    auto sizes = [&](std::size_t in) {
        std::vector<std::size_t> s{in};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(1);
        return s;
      };
    IqlNets n;
    n.q1 = mlp_init(sizes(obs_dim + act_dim), rng);
    n.q2 = mlp_init(sizes(obs_dim + act_dim), rng);
    n.q1_target = n.q1;
    n.q2_target = n.q2;
    n.v = mlp_init(sizes(obs_dim), rng);
    n.actor = Actor::init(obs_dim, act_dim, hidden, low, high, rng);
    return n;
  }
};

struct IqlOptim
{
  AdamState q1, q2, v;
  ActorOptim actor;

  static IqlOptim for_nets(const IqlNets & n)
  {
    return IqlOptim{AdamState::for_params(n.q1), AdamState::for_params(n.q2),
      AdamState::for_params(n.v), ActorOptim::for_actor(n.actor)};
  }
};

/// |tau - 1(u < 0)| * u^2
inline double expectile_loss(double u, double tau)
{
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("expectile_loss: tau must lie in (0, 1)");
  }
  return (u < 0.0 ? 1.0 - tau : tau) * u * u;
}

struct MlpLoss
{
  double loss = 0.0;
  Mlp grad;
};

struct CriticPairLoss
{
  double loss = 0.0;
  Mlp grad_q1;
  Mlp grad_q2;
};

/// mean_i L2^tau( min(q1_t, q2_t)(s, a) - V(s) ); gradient for V only.
inline MlpLoss v_loss(const IqlNets & nets, const Batch & batch, const IqlHyper & hyper)
{
  const Eigen::Index n = batch.size();
  if (n == 0) {
    throw std::invalid_argument("v_loss: empty batch");
  }
  const Vector target = min_q(nets.q1_target, nets.q2_target, batch.obs, batch.actions);
  const ForwardResult fv = mlp_forward(nets.v, batch.obs);
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dv(1, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = target(i) - fv.output(0, i);
    const double w = u < 0.0 ? 1.0 - hyper.expectile : hyper.expectile;
    loss += w * u * u;
    dv(0, i) = -2.0 * w * u * inv_n;
  }
  return MlpLoss{loss * inv_n, mlp_backward(nets.v, fv.tape, dv, false).grads};
}

/// Both critics regressed on y; returns the summed mean squared errors.
inline CriticPairLoss double_critic_mse(
  const Mlp & q1, const Mlp & q2, const Matrix & obs, const Matrix & actions,
  const Vector & y)
{
  const Eigen::Index n = obs.cols();
  const Matrix x = critic_input(obs, actions);
  const ForwardResult f1 = mlp_forward(q1, x);
  const ForwardResult f2 = mlp_forward(q2, x);
  const Matrix e1 = f1.output - y.transpose();
  const Matrix e2 = f2.output - y.transpose();
  const double inv_n = 1.0 / static_cast<double>(n);
  CriticPairLoss out;
  out.loss = (e1.squaredNorm() + e2.squaredNorm()) * inv_n;
  out.grad_q1 = mlp_backward(q1, f1.tape, 2.0 * inv_n * e1, false).grads;
  out.grad_q2 = mlp_backward(q2, f2.tape, 2.0 * inv_n * e2, false).grads;
  return out;
}

/// TD target r + gamma * (1 - done) * V(s').
inline Vector iql_td_target(const IqlNets & nets, const Batch & batch, const IqlHyper & hyper)
{
  const Vector v_next = mlp_predict(nets.v, batch.next_obs).row(0).transpose();
  return batch.rewards.array() + hyper.discount * (1.0 - batch.dones.array()) * v_next.array();
}

/// mean_i (q1 - y)^2 + (q2 - y)^2 with y = r + gamma (1 - done) V(s'); V is not differentiated.
inline CriticPairLoss q_loss(const IqlNets & nets, const Batch & batch, const IqlHyper & hyper)
{
  if (batch.size() == 0) {
    throw std::invalid_argument("q_loss: empty batch");
  }
  return double_critic_mse(nets.q1, nets.q2, batch.obs, batch.actions, iql_td_target(nets, batch, hyper));
}

/// min( exp((min(q1, q2)(s, a) - V(s)) / alpha), w_max ), gradient-stopped.
inline Vector awr_weights(const IqlNets & nets, const Batch & batch, const IqlHyper & hyper)
{
  const Vector q = min_q(nets.q1, nets.q2, batch.obs, batch.actions);
  const Vector v = mlp_predict(nets.v, batch.obs).row(0).transpose();
  Vector w(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    w(i) = std::min(std::exp((q(i) - v(i)) * hyper.inv_temperature), hyper.weight_max);
  }
  return w;
}

/// Advantage-weighted log-likelihood of the batch actions under `actor`.
inline ActorLoss awr_policy_loss(
  const IqlNets & nets, const Actor & actor, const Batch & batch,
  const IqlHyper & hyper)
{
  if (batch.size() == 0) {
    throw std::invalid_argument("awr_policy_loss: empty batch");
  }
  return weighted_nll_loss(actor, batch.obs, batch.actions, awr_weights(nets, batch, hyper));
}

struct LearningRates
{
  double critic = 3e-4;
  double actor = 3e-4;
  double target_speed = 5e-3;
};

struct IqlUpdateFlags
{
  bool train_critics = true;
  bool train_actor = true;
};

/// Extra actor trained on the same batch (the offline policy when freezing is disabled).
struct ExtraActor
{
  Actor * actor = nullptr;
  ActorOptim * optim = nullptr;
};

struct IqlStats
{
  double v_loss = 0.0;
  double q_loss = 0.0;
  double actor_loss = 0.0;
};

/**
 * One IQL step: Adam on V, then on both critics, then on the trainable actor(s);
 * finally soft-updates the target critics.
 */
inline IqlStats iql_update(
  IqlNets & nets, IqlOptim & optim, const Batch & batch, const IqlHyper & hyper,
  const LearningRates & lr, const IqlUpdateFlags & flags = {},
  const std::vector<ExtraActor> & extra = {})
{
  IqlStats stats;
  if (flags.train_critics) {
    MlpLoss lv = v_loss(nets, batch, hyper);
    adam_step(nets.v, lv.grad, optim.v, lr.critic);
    stats.v_loss = lv.loss;

    CriticPairLoss lq = q_loss(nets, batch, hyper);
    adam_step(nets.q1, lq.grad_q1, optim.q1, lr.critic);
    adam_step(nets.q2, lq.grad_q2, optim.q2, lr.critic);
    stats.q_loss = lq.loss;
  }
  if (flags.train_actor || !extra.empty()) {
    const Vector w = awr_weights(nets, batch, hyper);
    if (flags.train_actor) {
      ActorLoss la = weighted_nll_loss(nets.actor, batch.obs, batch.actions, w);
      adam_step(nets.actor, la.grad, optim.actor, lr.actor);
      stats.actor_loss = la.loss;
    }
    for (const auto & e : extra) {
      ActorLoss le = weighted_nll_loss(*e.actor, batch.obs, batch.actions, w);
      adam_step(*e.actor, le.grad, *e.optim, lr.actor);
    }
  }
  if (flags.train_critics) {
    soft_update(nets.q1_target, nets.q1, lr.target_speed);
    soft_update(nets.q2_target, nets.q2, lr.target_speed);
  }
  return stats;
}

}  // namespace pex

#endif  // PEX_IQL_HPP_
