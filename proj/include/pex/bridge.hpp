#ifndef PEX_BRIDGE_HPP_
#define PEX_BRIDGE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pex/actor.hpp"
#include "pex/distributions.hpp"
#include "pex/errors.hpp"
#include "pex/policy_set.hpp"
#include "pex/replay.hpp"

namespace pex
{

enum class BridgeStrategy
{
  Scratch,
  Buffer,
  Direct,
  PEX,
  BT,
  JSRL,
  BCOffline,
};

inline const char * to_string(BridgeStrategy s)
{
  switch (s) {
    case BridgeStrategy::Scratch: return "scratch";
    case BridgeStrategy::Buffer: return "buffer";
    case BridgeStrategy::Direct: return "direct";
    case BridgeStrategy::PEX: return "pex";
    case BridgeStrategy::BT: return "bt";
    case BridgeStrategy::JSRL: return "jsrl";
    case BridgeStrategy::BCOffline: return "bc-offline";
  }
  return "?";
}

inline BridgeStrategy strategy_from_string(const std::string & s)
{
  for (auto v : {BridgeStrategy::Scratch, BridgeStrategy::Buffer, BridgeStrategy::Direct,
      BridgeStrategy::PEX, BridgeStrategy::BT, BridgeStrategy::JSRL, BridgeStrategy::BCOffline})
  {
    if (s == to_string(v)) {
      return v;
    }
  }
  throw ConfigError("unknown strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// PEX action selection for a single state

struct SelectionLogEntry
{
  std::uint64_t env_step = 0;
  std::size_t chosen_index = 0;
  Vector probabilities;

  bool operator==(const SelectionLogEntry & o) const
  {
    return env_step == o.env_step && chosen_index == o.chosen_index &&
           probabilities.size() == o.probabilities.size() && probabilities == o.probabilities;
  }
};

struct PexChoice
{
  Vector action;
  SelectionLogEntry entry;
};

inline PexChoice pex_act(
  const PolicySet & set, const Mlp & q1, const Mlp & q2, const Vector & obs,
  Rng & rng, ActMode mode, std::uint64_t env_step = 0)
{
  const Matrix s = obs;
  const std::size_t act_dim = set.members.at(0).policy->act_dim();
  CompositeNoise noise;
  if (mode == ActMode::Explore) {
    noise = CompositeNoise::draw(set, act_dim, 1, rng);
  } else {
    noise.proposal_noise.assign(set.size(), Matrix::Zero(static_cast<Eigen::Index>(act_dim), 1));
    noise.selection_uniform = Vector::Zero(1);
  }
  const CompositeDraw d = composite_act(set, q1, q2, s, noise, mode);
  PexChoice out;
  out.action = d.actions.col(0);
  out.entry.env_step = env_step;
  out.entry.chosen_index = d.chosen[0];
  out.entry.probabilities = d.probabilities.col(0);
  return out;
}

// ---------------------------------------------------------------------------
// Behavior Transfer

/// Remaining steps of the current offline-policy unroll.
struct BtState
{
  std::uint64_t remaining = 0;
  std::uint64_t last_activation_length = 0;  // 0 until the first activation
};

struct BtChoice
{
  Vector action;
  bool used_offline = false;
  bool activated = false;  // a new unroll started at this step
};

/**
 * Offline policy (greedy) while an unroll is in progress; otherwise with probability
 * `epsilon` starts an unroll of n ~ Zeta(zeta_a) steps including this one, else the
 * online policy acts (sampled when exploring, greedy otherwise).
 */
inline BtChoice bt_act(
  const Actor & offline, const Actor & online, BtState & state, const Vector & obs,
  Rng & rng, double epsilon, double zeta_a, bool explore = true)
{
  BtChoice out;
  if (state.remaining > 0) {
    --state.remaining;
    out.used_offline = true;
  } else if (epsilon > 0.0 && rng.uniform() < epsilon) {
    const std::uint64_t n = zeta_sample(zeta_a, rng);
    state.remaining = n - 1;
    state.last_activation_length = n;
    out.used_offline = true;
    out.activated = true;
  }
  if (out.used_offline) {
    out.action = offline.greedy(obs);
  } else {
    out.action = explore ? online.sample(obs, rng) : online.greedy(obs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jump-Start RL

/// round((1 - progress) * max_guide_steps), progress clamped to [0, 1].
inline std::uint64_t jsrl_guide_horizon(double training_progress, std::uint64_t max_guide_steps)
{
  const double p = std::clamp(training_progress, 0.0, 1.0);
  return static_cast<std::uint64_t>(std::llround((1.0 - p) * static_cast<double>(max_guide_steps)));
}

struct JsrlChoice
{
  Vector action;
  bool used_offline = false;
};

inline JsrlChoice jsrl_act(
  const Actor & offline, const Actor & online, const Vector & obs, std::uint64_t episode_step,
  double training_progress, std::uint64_t max_guide_steps, Rng & rng, bool explore = true)
{
  JsrlChoice out;
  out.used_offline = episode_step < jsrl_guide_horizon(training_progress, max_guide_steps);
  if (out.used_offline) {
    out.action = offline.greedy(obs);
  } else {
    out.action = explore ? online.sample(obs, rng) : online.greedy(obs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reward-free behavior cloning

/// -mean log pi(a|s) over the batch.
inline ActorLoss bc_loss(const Actor & actor, const Batch & batch)
{
  if (batch.size() == 0) {
    throw std::invalid_argument("bc_loss: empty batch");
  }
  return weighted_nll_loss(actor, batch.obs, batch.actions, Vector::Ones(batch.size()));
}

// ---------------------------------------------------------------------------
// Policy usage

/// Fraction of entries choosing member 0 in each consecutive run of `bucket` entries.
inline std::vector<double> usage_summary(const std::vector<SelectionLogEntry> & log, std::size_t bucket)
{
  if (bucket < 1) {
    throw std::invalid_argument("usage_summary: bucket must be at least 1");
  }
  std::vector<double> out;
  for (std::size_t start = 0; start < log.size(); start += bucket) {
    const std::size_t end = std::min(log.size(), start + bucket);
    std::size_t zeros = 0;
    for (std::size_t i = start; i < end; ++i) {
      zeros += log[i].chosen_index == 0 ? 1 : 0;
    }
    out.push_back(static_cast<double>(zeros) / static_cast<double>(end - start));
  }
  return out;
}

/// CSV: env_step,chosen_index,p0,p1 (p1 empty for single-member sets).
inline std::string selection_log_csv(const std::vector<SelectionLogEntry> & log)
{
  std::ostringstream os;
  os << "env_step,chosen_index,p0,p1\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto & e : log) {
    os << e.env_step << ',' << e.chosen_index << ',';
    if (e.probabilities.size() > 0) {
      os << e.probabilities(0);
    }
    os << ',';
    if (e.probabilities.size() > 1) {
      os << e.probabilities(1);
    }
    os << '\n';
  }
  return os.str();
}

inline std::vector<SelectionLogEntry> parse_selection_log_csv(const std::string & text)
{
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::vector<SelectionLogEntry> out;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      f.push_back(cell);
    }
    while (f.size() < 4) {
      f.emplace_back();
    }
    SelectionLogEntry e;
    e.env_step = std::stoull(f[0]);
    e.chosen_index = std::stoul(f[1]);
    std::vector<double> p;
    for (std::size_t k = 2; k < 4; ++k) {
      if (!f[k].empty()) {
        p.push_back(std::strtod(f[k].c_str(), nullptr));
      }
    }
    e.probabilities = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pex

#endif  // PEX_BRIDGE_HPP_
