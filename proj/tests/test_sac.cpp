#include <gtest/gtest.h>

#include <cmath>

#include "pex/sac.hpp"
#include "support/gradients.hpp"

using namespace pex;
using pex::testing::random_actor;
using pex::testing::random_batch;
using pex::testing::unit_bounds;

namespace
{

SacNets random_sac(Rng & rng)
{
  SacNets n = SacNets::from_iql(pex::testing::random_iql(rng));
  n.q1_target = n.q1;
  n.q2_target = n.q2;
  return n;
}

/// Independent target: explicit per-column loop over the composite draw.
Vector oracle_target(const SacNets & n, const Batch & b, const SacHyper & h, const PolicySet & set, const CompositeNoise & noise)
{
  Vector y(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const Vector s = b.next_obs.col(i);
    std::vector<Vector> props;
    std::vector<double> qs;
    for (std::size_t k = 0; k < set.size(); ++k) {
      const Actor & pi = *set.members[k].policy;
      const Vector mu = pi.greedy(s);
      Vector a = mu;
      if (!set.members[k].greedy_proposal) {
        for (Eigen::Index j = 0; j < a.size(); ++j) {
          a(j) = std::clamp(mu(j) + noise.proposal_noise[k](j, i) * pi.std()(j), pi.action_low(j), pi.action_high(j));
        }
      }
      Vector x(s.size() + a.size());
      x << s, a;
      const double q = std::min(mlp_predict(n.q1_target, x)(0, 0), mlp_predict(n.q2_target, x)(0, 0));
      props.push_back(a);
      qs.push_back(q);
    }
    double mx = *std::max_element(qs.begin(), qs.end());
    std::vector<double> p;
    double z = 0.0;
    for (double q : qs) {
      p.push_back(std::exp((q - mx) / set.temperature));
      z += p.back();
    }
    std::size_t pick = set.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < set.size(); ++k) {
      acc += p[k] / z;
      if (noise.selection_uniform(i) < acc) {
        pick = k;
        break;
      }
    }
    double soft = qs[pick];
    if (set.members[pick].policy == &n.actor) {
      const Vector mu = n.actor.greedy(s);
      double lp = 0.0;
      for (Eigen::Index j = 0; j < mu.size(); ++j) {
        const double sd = n.actor.std()(j);
        const double zz = (props[pick](j) - mu(j)) / sd;
        lp += -0.5 * zz * zz - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
      }
      soft -= n.ent_coef() * lp;
    }
    y(i) = b.rewards(i) + h.discount * (1.0 - b.dones(i)) * soft;
  }
  return y;
}

}  // namespace

TEST(SacCritic, TerminalTargetsEqualReward)
{
  Rng rng(1);
  SacNets n = random_sac(rng);
  Batch b = random_batch(rng, 16);
  b.dones.setOnes();
  const PolicySet set = PolicySet::single(n.actor, 0.1);
  const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), rng);
  EXPECT_EQ(sac_td_target(n, b, SacHyper{}, set, noise), b.rewards);
}

TEST(SacCritic, ZeroEntropySingleMemberIsPlainTd)
{
  Rng rng(2);
  SacNets n = random_sac(rng);
  n.log_ent_coef = -1e9;
  const Batch b = random_batch(rng, 16);
  const PolicySet set = PolicySet::single(n.actor, 0.1);
  const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), rng);
  const Matrix a = n.actor.sample_with_noise(n.actor.mean(b.next_obs), noise.proposal_noise[0]);
  const Vector plain = b.rewards.array() + 0.99 * (1.0 - b.dones.array()) *
    min_q(n.q1_target, n.q2_target, b.next_obs, a).array();
  const Vector y = sac_td_target(n, b, SacHyper{}, set, noise);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(y(i), plain(i), 1e-12);
  }
}

TEST(SacCritic, MatchesLoopOracle)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    SacNets n = random_sac(rng);
    n.q1_target = mlp_init(n.q1.layer_sizes, rng);
    n.log_ent_coef = -0.5;
    const Actor offline = random_actor(rng);
    const Batch b = random_batch(rng, 32);
    const PolicySet set = PolicySet::expansion(offline, n.actor, 0.05);
    const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), rng);
    const Vector y = sac_td_target(n, b, SacHyper{}, set, noise);
    const Vector o = oracle_target(n, b, SacHyper{}, set, noise);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(y(i), o(i), 1e-10);
    }
  }
}

TEST(SacCritic, FrozenMemberSkipsEntropy)
{
  Rng rng(3);
  SacNets n = random_sac(rng);
  n.log_ent_coef = 2.0;
  const Batch b = random_batch(rng, 8);
  // The set holds a copy of the actor, so no entropy term applies.
  const Actor copy = n.actor;
  const PolicySet set = PolicySet::single(copy, 0.1);
  const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), rng);
  const Matrix a = copy.sample_with_noise(copy.mean(b.next_obs), noise.proposal_noise[0]);
  const Vector plain = b.rewards.array() + 0.99 * (1.0 - b.dones.array()) *
    min_q(n.q1_target, n.q2_target, b.next_obs, a).array();
  EXPECT_EQ(sac_td_target(n, b, SacHyper{}, set, noise), plain);
}

TEST(SacCritic, ZeroLossAtTarget)
{
  Rng rng(4);
  SacNets n = random_sac(rng);
  n.q1 = Mlp::zeros(n.q1.layer_sizes);
  n.q2 = n.q1;
  Batch b = random_batch(rng, 8);
  b.dones.setOnes();
  b.rewards.setZero();
  const PolicySet set = PolicySet::single(n.actor, 0.1);
  const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), rng);
  EXPECT_EQ(sac_critic_loss(n, b, SacHyper{}, set, noise).loss, 0.0);
}

TEST(Gradients, AllSacLossesOverTenSeeds)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto errs = pex::testing::gradient_errors(seed);
    for (const char * k : {"sac_critic_loss", "pex_actor_loss", "entropy_tune", "bc_loss"}) {
      EXPECT_LT(errs.at(k), 1e-4) << k << " seed " << seed;
    }
  }
}

TEST(PexActor, FixedPointLeavesEntropyOnly)
{
  Rng rng(5);
  const Actor actor = random_actor(rng);
  const Batch b = random_batch(rng, 16);
  Matrix noise(2, 16);
  noise.setZero();
  const Matrix a0 = actor.sample_with_noise(actor.mean(b.obs), noise);
  const PexActorLoss l = pseudo_target_loss(actor, b.obs, a0, noise, 0.3);
  EXPECT_NEAR(l.loss, 0.3 * l.log_probs.mean(), 1e-12);
}

TEST(PexActor, RequiresTrainableMember)
{
  Rng rng(6);
  SacNets n = random_sac(rng);
  const Actor other = n.actor;
  const PolicySet set = PolicySet::single(other, 0.1);
  const Batch b = random_batch(rng, 4);
  EXPECT_THROW(pex_pseudo_targets(n, b, set, CompositeNoise::draw(set, 2, 4, rng)), std::invalid_argument);
}

TEST(PexActor, QuadraticCriticPullsMeanToZero)
{
  // Q(s, a) = -|a|^2 gives pseudo-targets stop(dQ/da + a) = -a.
  Rng rng(7);
  Actor actor = Actor::init(2, 1, {16}, unit_bounds(-1.0, 1), unit_bounds(1.0, 1), rng);
  actor.net.biases.back()(0) = 1.0;
  ActorOptim optim = ActorOptim::for_actor(actor);
  Matrix states(2, 32);
  for (Eigen::Index i = 0; i < states.size(); ++i) {
    states.data()[i] = rng.uniform(-1.0, 1.0);
  }
  const double before = actor.mean(states).cwiseAbs().mean();
  for (int step = 0; step < 500; ++step) {
    Matrix noise(1, 32);
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
      noise.data()[i] = rng.normal();
    }
    const Matrix a = actor.sample_with_noise(actor.mean(states), noise);
    const Matrix targets = -2.0 * a + a;
    const PexActorLoss l = pseudo_target_loss(actor, states, targets, noise, 0.0);
    adam_step(actor, l.grad, optim, 1e-3);
  }
  const double after = actor.mean(states).cwiseAbs().mean();
  EXPECT_LT(after, before);
  EXPECT_LT(after, 0.2);
}

TEST(SacUpdate, FrozenOfflinePolicyUnchanged)
{
  Rng rng(8);
  SacNets n = random_sac(rng);
  SacOptim o = SacOptim::for_nets(n);
  const Actor offline = random_actor(rng);
  const Actor before = offline;
  const PolicySet set = PolicySet::expansion(offline, n.actor, 0.1);
  const Actor theta0 = n.actor;
  for (int i = 0; i < 50; ++i) {
    sac_update(n, o, random_batch(rng), SacHyper{}, LearningRates{}, set, rng);
  }
  EXPECT_EQ(offline, before);
  EXPECT_FALSE(n.actor == theta0);
}

TEST(SacUpdate, ExtraActorMovesWhenUnfrozen)
{
  Rng rng(9);
  SacNets n = random_sac(rng);
  SacOptim o = SacOptim::for_nets(n);
  Actor offline = random_actor(rng);
  ActorOptim oo = ActorOptim::for_actor(offline);
  const Actor before = offline;
  const PolicySet set = PolicySet::expansion(offline, n.actor, 0.1, false);
  sac_update(n, o, random_batch(rng), SacHyper{}, LearningRates{}, set, rng, {}, {ExtraActor{&offline, &oo}});
  EXPECT_FALSE(offline == before);
}

TEST(SacUpdate, CriticLossDropsOnFixedBatch)
{
  Rng rng(10);
  SacNets n = random_sac(rng);
  SacOptim o = SacOptim::for_nets(n);
  const Batch b = random_batch(rng, 64);
  const PolicySet set = PolicySet::single(n.actor, 0.1);
  Rng probe(1);
  const CompositeNoise noise = CompositeNoise::draw(set, 2, b.size(), probe);
  const double l0 = sac_critic_loss(n, b, SacHyper{}, set, noise).loss;
  SacUpdateFlags flags;
  flags.train_actor = false;
  for (int i = 0; i < 300; ++i) {
    sac_update(n, o, b, SacHyper{}, LearningRates{1e-3, 1e-3, 5e-3}, set, rng, flags);
  }
  EXPECT_LT(sac_critic_loss(n, b, SacHyper{}, set, noise).loss, l0);
}

TEST(EntropyTune, EquilibriumLeavesCoefficient)
{
  double log_c = 0.4;
  VectorAdamState st = VectorAdamState::for_size(1);
  entropy_tune(log_c, st, Vector::Constant(4, 2.0), -2.0, 1e-2);
  EXPECT_EQ(log_c, 0.4);
}

TEST(EntropyTune, LowEntropyRaisesCoefficient)
{
  double log_c = 0.0;
  VectorAdamState st = VectorAdamState::for_size(1);
  for (int i = 0; i < 10; ++i) {
    entropy_tune(log_c, st, Vector::Constant(4, 5.0), -2.0, 1e-2);
  }
  EXPECT_GT(log_c, 0.0);
  double log_d = 0.0;
  VectorAdamState sd = VectorAdamState::for_size(1);
  entropy_tune(log_d, sd, Vector::Constant(4, -5.0), -2.0, 1e-2);
  EXPECT_LT(log_d, 0.0);
}

TEST(EntropyTune, GradientClosedForm)
{
  const Vector lp{{1.0, 2.0, 3.0}};
  EXPECT_NEAR(entropy_tune_grad(lp, -2.0), 0.0, 1e-12);
  EXPECT_NEAR(entropy_tune_grad(lp, -1.0), -1.0, 1e-12);
  EXPECT_NEAR(entropy_tune_loss(0.5, lp, -1.0), -0.5, 1e-12);
}
