#ifndef PEX_POLICY_SET_HPP_
#define PEX_POLICY_SET_HPP_

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pex/actor.hpp"
#include "pex/distributions.hpp"
#include "pex/numcore.hpp"

namespace pex
{

/// Stacks observation rows on top of action rows: the critic input layout.
inline Matrix critic_input(const Matrix & obs, const Matrix & actions)
{
  if (obs.cols() != actions.cols()) {
    throw ShapeError("critic_input: observation and action batch sizes differ");
  }
  Matrix x(obs.rows() + actions.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

/// min(q1, q2)(s, a) per column.
inline Vector min_q(const Mlp & q1, const Mlp & q2, const Matrix & obs, const Matrix & actions)
{
  const Matrix x = critic_input(obs, actions);
  return mlp_predict(q1, x).row(0).cwiseMin(mlp_predict(q2, x).row(0)).transpose();
}

/**
 * Ordered candidate policies. Under policy expansion member 0 is the frozen offline
 * policy and member 1 the trainable online policy.
 */
struct PolicySet
{
  struct Member
  {
    const Actor * policy = nullptr;
    bool frozen = false;
    bool greedy_proposal = false;  // propose the mean action even when exploring
  };

  std::vector<Member> members;
  double temperature = 0.1;

  std::size_t size() const { return members.size(); }

  void validate() const
  {
    if (members.empty()) {
      throw std::invalid_argument("policy set is empty");
    }
    for (const auto & m : members) {
      if (m.policy == nullptr) {
        throw std::invalid_argument("policy set member without a policy");
      }
    }
    if (!(temperature > 0.0)) {
      throw std::invalid_argument("policy set temperature must be positive");
    }
  }

  /// Policy expansion [pi_beta (frozen, greedy proposals), pi_theta].
  static PolicySet expansion(const Actor & offline, const Actor & online, double temperature, bool freeze = true)
  {
    return PolicySet{{{&offline, freeze, true}, {&online, false, false}}, temperature};
  }

  static PolicySet single(const Actor & policy, double temperature)
  {
    return PolicySet{{{&policy, false, false}}, temperature};
  }
};

enum class ActMode
{
  Explore,
  Eval,
};

/// Pre-drawn randomness for a batched composite draw; keeps the draw a pure function.
struct CompositeNoise
{
  std::vector<Matrix> proposal_noise;  // per member, act_dim x n
  Vector selection_uniform;            // n

  static CompositeNoise draw(const PolicySet & set, std::size_t act_dim, Eigen::Index n, Rng & rng)
  {
    CompositeNoise noise;
    for (std::size_t k = 0; k < set.size(); ++k) {
      Matrix e(static_cast<Eigen::Index>(act_dim), n);
      if (!set.members[k].greedy_proposal) {
        for (Eigen::Index c = 0; c < n; ++c) {
          for (Eigen::Index r = 0; r < e.rows(); ++r) {
            e(r, c) = rng.normal();
          }
        }
      } else {
        e.setZero();
      }
      noise.proposal_noise.push_back(std::move(e));
    }
    noise.selection_uniform.resize(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      noise.selection_uniform(c) = rng.uniform();
    }
    return noise;
  }
};

struct CompositeDraw
{
  Matrix actions;                    // chosen action per column
  std::vector<std::size_t> chosen;   // member index per column
  std::vector<Matrix> proposals;     // per member, act_dim x n
  std::vector<Matrix> proposal_means;
  Matrix q_values;                   // K x n
  Matrix probabilities;              // K x n
};

/**
 * Proposes one action per member and state, scores each with min(q1, q2), then picks a
 * member per state: Explore samples from softmax(q / temperature); Eval takes the argmax
 * (lowest index on ties) over greedy proposals.
 */
inline CompositeDraw composite_act(
  const PolicySet & set, const Mlp & q1, const Mlp & q2, const Matrix & obs,
  const CompositeNoise & noise, ActMode mode)
{
  set.validate();
  const std::size_t K = set.size();
  const Eigen::Index n = obs.cols();
  CompositeDraw d;
  d.q_values.resize(static_cast<Eigen::Index>(K), n);
  for (std::size_t k = 0; k < K; ++k) {
    const Actor & pi = *set.members[k].policy;
    Matrix mu = pi.mean(obs);
    Matrix a = (mode == ActMode::Eval || set.members[k].greedy_proposal) ?
      mu : pi.sample_with_noise(mu, noise.proposal_noise[k]);
    d.q_values.row(static_cast<Eigen::Index>(k)) = min_q(q1, q2, obs, a).transpose();
    d.proposal_means.push_back(std::move(mu));
    d.proposals.push_back(std::move(a));
  }
  if (!d.q_values.allFinite()) {
    throw std::runtime_error("composite_act: non-finite critic values");
  }
  d.probabilities.resize(static_cast<Eigen::Index>(K), n);
  d.chosen.resize(static_cast<std::size_t>(n));
  d.actions.resize(d.proposals.front().rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const SelectionDistribution dist = softmax_temperature(d.q_values.col(c), set.temperature);
    d.probabilities.col(c) = dist.probabilities;
    std::size_t pick = 0;
    if (mode == ActMode::Explore) {
      pick = categorical_from_uniform(dist.probabilities, noise.selection_uniform(c));
    } else {
      for (std::size_t k = 1; k < K; ++k) {
        if (d.q_values(static_cast<Eigen::Index>(k), c) > d.q_values(static_cast<Eigen::Index>(pick), c)) {
          pick = k;
        }
      }
    }
    d.chosen[static_cast<std::size_t>(c)] = pick;
    d.actions.col(c) = d.proposals[pick].col(c);
  }
  return d;
}

}  // namespace pex

#endif  // PEX_POLICY_SET_HPP_
