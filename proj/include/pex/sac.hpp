#ifndef PEX_SAC_HPP_
#define PEX_SAC_HPP_

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pex/actor.hpp"
#include "pex/iql.hpp"
#include "pex/numcore.hpp"
#include "pex/policy_set.hpp"
#include "pex/replay.hpp"

namespace pex
{

struct SacNets
{
  Mlp q1, q2, q1_target, q2_target;
  Actor actor;  // the trainable online policy
  double log_ent_coef = 0.0;

  double ent_coef() const { return std::exp(log_ent_coef); }

  static SacNets init(
    std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t> & hidden,
    const Vector & low, const Vector & high, Rng & rng)
  {
    IqlNets tmp = IqlNets::init(obs_dim, act_dim, hidden, low, high, rng);
    return SacNets{tmp.q1, tmp.q2, tmp.q1_target, tmp.q2_target, tmp.actor, 0.0};
  }

  /// Critics (and their targets) and optionally the actor carried over from offline IQL.
  static SacNets from_iql(const IqlNets & iql)
  {
    return SacNets{iql.q1, iql.q2, iql.q1_target, iql.q2_target, iql.actor, 0.0};
  }
};

struct SacOptim
{
  AdamState q1, q2;
  ActorOptim actor;
  VectorAdamState log_ent_coef;

  static SacOptim for_nets(const SacNets & n)
  {
    return SacOptim{AdamState::for_params(n.q1), AdamState::for_params(n.q2),
      ActorOptim::for_actor(n.actor), VectorAdamState::for_size(1)};
  }
};

struct SacHyper
{
  double discount = 0.99;
  double target_entropy = -1.0;
};

// ---------------------------------------------------------------------------
// Critic

/**
 * Target y = r + gamma (1 - done) (min(q1_t, q2_t)(s', a') - c * log pi_theta(a'|s')),
 * a' drawn from the composite policy at s' (scored by the target critics). The entropy
 * term only applies where a' came from `nets.actor`.
 */
inline Vector sac_td_target(
  const SacNets & nets, const Batch & batch, const SacHyper & hyper,
  const PolicySet & set, const CompositeNoise & noise)
{
  const CompositeDraw d = composite_act(
    set, nets.q1_target, nets.q2_target, batch.next_obs, noise, ActMode::Explore);
  const Vector q_next = min_q(nets.q1_target, nets.q2_target, batch.next_obs, d.actions);
  const Eigen::Index n = batch.size();
  Vector soft = q_next;
  const double c = nets.ent_coef();
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set.members[k].policy != &nets.actor) {
      continue;
    }
    const Vector logp = nets.actor.log_prob(d.proposal_means[k], d.proposals[k]);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d.chosen[static_cast<std::size_t>(i)] == k) {
        soft(i) -= c * logp(i);
      }
    }
  }
  return batch.rewards.array() + hyper.discount * (1.0 - batch.dones.array()) * soft.array();
}

inline CriticPairLoss sac_critic_loss(
  const SacNets & nets, const Batch & batch, const SacHyper & hyper,
  const PolicySet & set, const CompositeNoise & noise)
{
  if (batch.size() == 0) {
    throw std::invalid_argument("sac_critic_loss: empty batch");
  }
  return double_critic_mse(
    nets.q1, nets.q2, batch.obs, batch.actions,
    sac_td_target(nets, batch, hyper, set, noise));
}

// ---------------------------------------------------------------------------
// Actor

/// Gradient-stopped pieces of the actor loss, computed at the current parameters.
struct PseudoTargets
{
  Matrix targets;        // stop(dQ/da + a), act_dim x n
  Matrix noise;          // reparameterization noise used for a0
  std::vector<std::size_t> chosen;
};

/// dmin(q1, q2)/da at (obs, actions), act_dim x n.
inline Matrix min_q_action_grad(const Mlp & q1, const Mlp & q2, const Matrix & obs, const Matrix & actions)
{
  const Matrix x = critic_input(obs, actions);
  const ForwardResult f1 = mlp_forward(q1, x);
  const ForwardResult f2 = mlp_forward(q2, x);
  const Eigen::Index n = obs.cols();
  Matrix g1 = Matrix::Zero(1, n), g2 = Matrix::Zero(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (f1.output(0, i) <= f2.output(0, i)) {
      g1(0, i) = 1.0;
    } else {
      g2(0, i) = 1.0;
    }
  }
  const Matrix d = mlp_backward(q1, f1.tape, g1).input_grad + mlp_backward(q2, f2.tape, g2).input_grad;
  return d.bottomRows(actions.rows());
}

/**
 * Draws a ~ composite policy (the trainable member proposes its reparameterized sample
 * a0 = clip(mean + std * eps)) and forms the pseudo-targets stop(dQ/da + a).
 */
inline PseudoTargets pex_pseudo_targets(
  const SacNets & nets, const Batch & batch, const PolicySet & set,
  const CompositeNoise & noise)
{
  std::size_t own = set.size();
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set.members[k].policy == &nets.actor) {
      own = k;
    }
  }
  if (own == set.size()) {
    throw std::invalid_argument("pex_pseudo_targets: policy set does not contain the trainable actor");
  }
  const CompositeDraw d = composite_act(set, nets.q1, nets.q2, batch.obs, noise, ActMode::Explore);
  PseudoTargets pt;
  pt.targets = min_q_action_grad(nets.q1, nets.q2, batch.obs, d.actions) + d.actions;
  pt.noise = noise.proposal_noise[own];
  pt.chosen = d.chosen;
  return pt;
}

struct PexActorLoss
{
  double loss = 0.0;
  ActorGrad grad;
  Vector log_probs;  // log pi(a0 | s), gradient-free copy for temperature tuning
};

/**
 * mean_i || t_i - a0_i ||^2 + c * mean_i log pi(a0_i | s_i), with t fixed and
 * a0 = clip(mean + std * noise). Gradients flow into `actor` only.
 */
inline PexActorLoss pseudo_target_loss(
  const Actor & actor, const Matrix & obs, const Matrix & targets,
  const Matrix & noise, double ent_coef)
{
  const Eigen::Index n = obs.cols();
  if (n == 0) {
    throw std::invalid_argument("pseudo_target_loss: empty batch");
  }
  const ActorForward f = actor_forward(actor, obs);
  const Vector ls = clamp_log_std(actor.log_std);
  const Vector sd = ls.array().exp();
  const Matrix unclipped = f.mean + (noise.array().colwise() * sd.array()).matrix();
  const Matrix a0 = actor.sample_with_noise(f.mean, noise);
  const Matrix inside = ((unclipped.array() > actor.action_low.replicate(1, n).array()) &&
    (unclipped.array() < actor.action_high.replicate(1, n).array())).cast<double>().matrix();
  const Matrix z = ((a0 - f.mean).array().colwise() / sd.array()).matrix();
  const double inv_n = 1.0 / static_cast<double>(n);

  PexActorLoss out;
  out.log_probs = actor.log_prob(f.mean, a0);
  const Matrix resid = targets - a0;
  out.loss = resid.squaredNorm() * inv_n + ent_coef * out.log_probs.mean();

  // d/da0 of the squared term; a0 depends on mean and log-std only where unclipped.
  const Matrix da0 = -2.0 * inv_n * resid;
  Matrix dmean = da0.cwiseProduct(inside);
  Matrix dls_cols = (da0.cwiseProduct(inside).cwiseProduct(noise)).array().colwise() * sd.array();
  // Entropy term: total derivative of log pi(a0(mean, ls) | mean, ls).
  const Matrix outside = Matrix::Ones(inside.rows(), n) - inside;
  dmean += (ent_coef * inv_n) * ((z.array().colwise() / sd.array()) * outside.array()).matrix();
  dls_cols += (ent_coef * inv_n) *
    (z.array().square() - 1.0 - z.array() * noise.array() * inside.array()).matrix();

  out.grad.net = actor_backward_mean(actor, f, dmean);
  out.grad.log_std = dls_cols.rowwise().sum();
  return out;
}

inline PexActorLoss pex_actor_loss(
  const SacNets & nets, const Batch & batch, const PolicySet & set,
  const CompositeNoise & noise)
{
  const PseudoTargets pt = pex_pseudo_targets(nets, batch, set, noise);
  return pseudo_target_loss(nets.actor, batch.obs, pt.targets, pt.noise, nets.ent_coef());
}

// ---------------------------------------------------------------------------
// Entropy temperature

/// Gradient of -log_c * mean(stop(log pi) + target_entropy) with respect to log_c.
inline double entropy_tune_grad(const Vector & batch_log_probs, double target_entropy)
{
  return -(batch_log_probs.mean() + target_entropy);
}

inline double entropy_tune_loss(double log_ent_coef, const Vector & batch_log_probs, double target_entropy)
{
  return -log_ent_coef * (batch_log_probs.mean() + target_entropy);
}

/// One Adam step on the log entropy coefficient.
inline void entropy_tune(
  double & log_ent_coef, VectorAdamState & state, const Vector & batch_log_probs,
  double target_entropy, double lr)
{
  Vector p = Vector::Constant(1, log_ent_coef);
  adam_step(p, Vector::Constant(1, entropy_tune_grad(batch_log_probs, target_entropy)), state, lr);
  log_ent_coef = p(0);
}

struct SacStats
{
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double ent_coef = 0.0;
};

struct SacUpdateFlags
{
  bool train_critics = true;
  bool train_actor = true;
  bool tune_entropy = true;
};

/**
 * One SAC step on the composite policy `set` (which must contain `nets.actor`):
 * critic step, actor step, entropy-temperature step, then target soft update.
 * `extra` actors (an unfrozen offline policy) get the same pseudo-target loss.
 */
inline SacStats sac_update(
  SacNets & nets, SacOptim & optim, const Batch & batch, const SacHyper & hyper,
  const LearningRates & lr, const PolicySet & set, Rng & rng,
  const SacUpdateFlags & flags = {}, const std::vector<ExtraActor> & extra = {},
  double lr_entropy = 3e-4)
{
  SacStats stats;
  const std::size_t act_dim = nets.actor.act_dim();
  if (flags.train_critics) {
    const CompositeNoise nn = CompositeNoise::draw(set, act_dim, batch.size(), rng);
    CriticPairLoss lc = sac_critic_loss(nets, batch, hyper, set, nn);
    adam_step(nets.q1, lc.grad_q1, optim.q1, lr.critic);
    adam_step(nets.q2, lc.grad_q2, optim.q2, lr.critic);
    stats.critic_loss = lc.loss;
  }
  if (flags.train_actor) {
    const CompositeNoise na = CompositeNoise::draw(set, act_dim, batch.size(), rng);
    const PseudoTargets pt = pex_pseudo_targets(nets, batch, set, na);
    PexActorLoss la = pseudo_target_loss(nets.actor, batch.obs, pt.targets, pt.noise, nets.ent_coef());
    for (const auto & e : extra) {
      Matrix eps(static_cast<Eigen::Index>(act_dim), batch.size());
      for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps.data()[i] = rng.normal();
      }
      PexActorLoss le = pseudo_target_loss(*e.actor, batch.obs, pt.targets, eps, nets.ent_coef());
      adam_step(*e.actor, le.grad, *e.optim, lr.actor);
    }
    adam_step(nets.actor, la.grad, optim.actor, lr.actor);
    stats.actor_loss = la.loss;
    if (flags.tune_entropy) {
      entropy_tune(nets.log_ent_coef, optim.log_ent_coef, la.log_probs, hyper.target_entropy, lr_entropy);
    }
  }
  if (flags.train_critics) {
    soft_update(nets.q1_target, nets.q1, lr.target_speed);
    soft_update(nets.q2_target, nets.q2, lr.target_speed);
  }
  stats.ent_coef = nets.ent_coef();
  return stats;
}

}  // namespace pex

#endif  // PEX_SAC_HPP_
