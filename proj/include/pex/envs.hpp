#ifndef PEX_ENVS_HPP_
#define PEX_ENVS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pex/numcore.hpp"
#include "pex/rng.hpp"

namespace pex
{

struct EnvSpec
{
  std::string env_id;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  Vector action_low;
  Vector action_high;
  std::size_t max_episode_steps = 0;
  double reference_random_return = 0.0;
  double reference_expert_return = 1.0;
  bool sparse_reward = false;

  void validate() const
  {
    if (obs_dim == 0 || act_dim == 0 || max_episode_steps == 0) {
      throw std::invalid_argument("env spec: dimensions and episode length must be positive");
    }
    if (static_cast<std::size_t>(action_low.size()) != act_dim ||
      static_cast<std::size_t>(action_high.size()) != act_dim)
    {
      throw ShapeError("env spec: action bounds length differs from act_dim");
    }
    if (!(reference_expert_return > reference_random_return)) {
      throw std::invalid_argument("env spec: expert reference return must exceed random reference");
    }
  }
};

/// 100 * (R - R_random) / (R_expert - R_random)
inline double normalized_score(const EnvSpec & spec, double raw_return)
{
  const double span = spec.reference_expert_return - spec.reference_random_return;
  if (!(span > 0.0)) {
    throw std::invalid_argument("normalized_score: degenerate reference returns");
  }
  return 100.0 * (raw_return - spec.reference_random_return) / span;
}

/// One environment step. `done` marks true termination only; time limits set `truncated`.
struct Transition
{
  Vector obs;
  Vector action;
  double reward = 0.0;
  Vector next_obs;
  bool done = false;
  bool truncated = false;
};

enum class BehaviorGrade : std::uint8_t
{
  Random = 0,
  Medium = 1,
  Expert = 2,
  MediumReplay = 3,
};

inline const char * to_string(BehaviorGrade g)
{
  switch (g) {
    case BehaviorGrade::Random: return "random";
    case BehaviorGrade::Medium: return "medium";
    case BehaviorGrade::Expert: return "expert";
    case BehaviorGrade::MediumReplay: return "medium-replay";
  }
  return "?";
}

inline BehaviorGrade grade_from_string(const std::string & s)
{
  if (s == "random") {return BehaviorGrade::Random;}
  if (s == "medium") {return BehaviorGrade::Medium;}
  if (s == "expert") {return BehaviorGrade::Expert;}
  if (s == "medium-replay" || s == "medium_replay") {return BehaviorGrade::MediumReplay;}
  throw std::invalid_argument("unknown behavior grade '" + s + "'");
}

/**
 * @brief Episodic environment with a scripted expert controller.
 */
class Env
{
public:
  virtual ~Env() = default;

  const EnvSpec & spec() const { return spec_; }
  const Vector & observation() const { return obs_; }
  bool episode_over() const { return over_; }
  std::size_t episode_step() const { return t_; }

  Vector reset(Rng & rng)
  {
    obs_ = initial_state(rng);
    t_ = 0;
    over_ = false;
    return obs_;
  }

  Transition step(const Vector & action)
  {
    if (over_) {
      throw std::logic_error("env step after episode end; call reset()");
    }
    if (static_cast<std::size_t>(action.size()) != spec_.act_dim) {
      throw ShapeError("env step: action dimension mismatch");
    }
    Transition tr;
    tr.obs = obs_;
    tr.action = action;
    const Vector a = action.cwiseMax(spec_.action_low).cwiseMin(spec_.action_high);
    auto [next, reward, done] = dynamics(obs_, a);
    ++t_;
    tr.reward = reward;
    tr.next_obs = next;
    tr.done = done;
    tr.truncated = !done && t_ >= spec_.max_episode_steps;
    obs_ = std::move(next);
    over_ = tr.done || tr.truncated;
    return tr;
  }

  /// Scripted controller used for the expert and medium behavior grades.
  virtual Vector expert_action(const Vector & obs) const = 0;

  virtual std::unique_ptr<Env> clone() const = 0;

protected:
  struct StepOutcome
  {
    Vector next;
    double reward;
    bool done;
  };

  virtual Vector initial_state(Rng & rng) const = 0;
  virtual StepOutcome dynamics(const Vector & obs, const Vector & action) const = 0;

  EnvSpec spec_;
  Vector obs_;
  std::size_t t_ = 0;
  bool over_ = true;
};

// ---------------------------------------------------------------------------
// PointMaze: sparse-reward navigation on an ASCII grid.

/**
 * Point agent in a grid maze. '#' wall, 'S' start, 'G' goal, anything else floor.
 * Cells are unit squares; observation is (x, y) with x along columns and y along rows.
 * Actions in [-1, 1]^2 scale to a displacement of at most 0.25 per axis; a move that
 * would enter a wall is dropped on that axis. Reward 1 and termination within 0.5 of
 * the goal center.
 */
class PointMaze : public Env
{
public:
  static constexpr double kStepScale = 0.25;
  static constexpr double kGoalRadius = 0.5;
  static constexpr double kResetJitter = 0.1;

  PointMaze(std::string env_id, std::vector<std::string> layout, std::size_t max_steps = 300)
  : layout_(std::move(layout))
  {
    if (layout_.empty()) {
      throw std::invalid_argument("maze layout is empty");
    }
    const std::size_t width = layout_.front().size();
    bool have_start = false, have_goal = false;
    for (std::size_t r = 0; r < layout_.size(); ++r) {
      if (layout_[r].size() != width) {
        throw std::invalid_argument("maze layout rows differ in width");
      }
      for (std::size_t c = 0; c < width; ++c) {
        if (layout_[r][c] == 'S') {
          start_ = {r, c};
          have_start = true;
        } else if (layout_[r][c] == 'G') {
          goal_ = {r, c};
          have_goal = true;
        }
      }
    }
    if (!have_start || !have_goal) {
      throw std::invalid_argument("maze layout needs one 'S' and one 'G'");
    }
    compute_distances();
    if (distance_[start_.first][start_.second] < 0) {
      throw std::invalid_argument("maze goal unreachable from start");
    }
    spec_.env_id = std::move(env_id);
    spec_.obs_dim = 2;
    spec_.act_dim = 2;
    spec_.action_low = Vector::Constant(2, -1.0);
    spec_.action_high = Vector::Constant(2, 1.0);
    spec_.max_episode_steps = max_steps;
    spec_.sparse_reward = true;
  }

  std::size_t rows() const { return layout_.size(); }
  std::size_t cols() const { return layout_.front().size(); }
  const std::vector<std::string> & layout() const { return layout_; }

  bool is_free(long r, long c) const
  {
    if (r < 0 || c < 0 || r >= static_cast<long>(rows()) || c >= static_cast<long>(cols())) {
      return false;
    }
    return layout_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] != '#';
  }

  bool is_free_point(double x, double y) const
  {
    return is_free(static_cast<long>(std::floor(y)), static_cast<long>(std::floor(x)));
  }

  Vector cell_center(std::size_t r, std::size_t c) const
  {
    return Vector{{static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5}};
  }

  Vector start_center() const { return cell_center(start_.first, start_.second); }
  Vector goal_center() const { return cell_center(goal_.first, goal_.second); }

  /// Shortest-path length (in cells) from (r, c) to the goal; -1 when unreachable.
  int cell_distance(std::size_t r, std::size_t c) const { return distance_[r][c]; }

  Vector expert_action(const Vector & obs) const override
  {
    const auto r = static_cast<long>(std::floor(obs(1)));
    const auto c = static_cast<long>(std::floor(obs(0)));
    Vector target = goal_center();
    if (is_free(r, c)) {
      const int d = distance_[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (d > 0) {
        static constexpr long kDr[4] = {-1, 1, 0, 0};
        static constexpr long kDc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const long nr = r + kDr[k], nc = c + kDc[k];
          if (is_free(nr, nc) &&
            distance_[static_cast<std::size_t>(nr)][static_cast<std::size_t>(nc)] == d - 1)
          {
            target = cell_center(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
            break;
          }
        }
      }
    }
    return ((target - obs) / kStepScale).cwiseMax(-1.0).cwiseMin(1.0);
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMaze>(*this); }

protected:
  Vector initial_state(Rng & rng) const override
  {
    Vector s = start_center();
    s(0) += rng.uniform(-kResetJitter, kResetJitter);
    s(1) += rng.uniform(-kResetJitter, kResetJitter);
    return s;
  }

  StepOutcome dynamics(const Vector & obs, const Vector & action) const override
  {
    Vector next = obs;
    const double nx = next(0) + kStepScale * action(0);
    if (is_free_point(nx, next(1))) {
      next(0) = nx;
    }
    const double ny = next(1) + kStepScale * action(1);
    if (is_free_point(next(0), ny)) {
      next(1) = ny;
    }
    const bool reached = (next - goal_center()).norm() < kGoalRadius;
    return {next, reached ? 1.0 : 0.0, reached};
  }

private:
  void compute_distances()
  {
    distance_.assign(rows(), std::vector<int>(cols(), -1));
    std::deque<std::pair<std::size_t, std::size_t>> queue{goal_};
    distance_[goal_.first][goal_.second] = 0;
    while (!queue.empty()) {
      auto [r, c] = queue.front();
      queue.pop_front();
      static constexpr long kDr[4] = {-1, 1, 0, 0};
      static constexpr long kDc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const long nr = static_cast<long>(r) + kDr[k], nc = static_cast<long>(c) + kDc[k];
        if (is_free(nr, nc)) {
          auto ur = static_cast<std::size_t>(nr), uc = static_cast<std::size_t>(nc);
          if (distance_[ur][uc] < 0) {
            distance_[ur][uc] = distance_[r][c] + 1;
            queue.emplace_back(ur, uc);
          }
        }
      }
    }
  }

  std::vector<std::string> layout_;
  std::pair<std::size_t, std::size_t> start_{0, 0};
  std::pair<std::size_t, std::size_t> goal_{0, 0};
  std::vector<std::vector<int>> distance_;
};

// ---------------------------------------------------------------------------
// LineReach: dense-reward 1-D reaching.

/**
 * Cart on [-5, 5] pushed by a force in [-1, 1]:
 *   velocity += 0.1 * force - 0.01 * velocity;  position += 0.1 * velocity.
 * Reward -|position - 3| per step; the position is clamped at the track ends (velocity zeroed).
 */
class LineReach : public Env
{
public:
  static constexpr double kTarget = 3.0;
  static constexpr double kTrackLimit = 5.0;

  explicit LineReach(std::size_t max_steps = 200)
  {
    spec_.env_id = "linereach";
    spec_.obs_dim = 2;
    spec_.act_dim = 1;
    spec_.action_low = Vector::Constant(1, -1.0);
    spec_.action_high = Vector::Constant(1, 1.0);
    spec_.max_episode_steps = max_steps;
    spec_.sparse_reward = false;
  }

  Vector expert_action(const Vector & obs) const override
  {
    return Vector::Constant(1, std::clamp(1.5 * (kTarget - obs(0)) - obs(1), -1.0, 1.0));
  }

  std::unique_ptr<Env> clone() const override { return std::make_unique<LineReach>(*this); }

protected:
  Vector initial_state(Rng &) const override { return Vector::Zero(2); }

  StepOutcome dynamics(const Vector & obs, const Vector & action) const override
  {
    double v = obs(1) + 0.1 * action(0) - 0.01 * obs(1);
    double p = obs(0) + 0.1 * v;
    if (p > kTrackLimit || p < -kTrackLimit) {
      p = std::clamp(p, -kTrackLimit, kTrackLimit);
      v = 0.0;
    }
    return {Vector{{p, v}}, -std::abs(p - kTarget), false};
  }
};

// ---------------------------------------------------------------------------
// Registry

inline const std::vector<std::string> & umaze_layout()
{
  static const std::vector<std::string> layout{
    "#######",
    "#S....#",
    "#####.#",
    "#G....#",
    "#######",
  };
  return layout;
}

inline const std::vector<std::string> & medium_maze_layout()
{
  static const std::vector<std::string> layout{
    "##########",
    "#S.##....#",
    "#..#..#..#",
    "##...#...#",
    "#..#..##.#",
    "#.##.#...#",
    "#....#.#G#",
    "##########",
  };
  return layout;
}

/// Runs `episodes` episodes of a behavior and returns their undiscounted returns.
template<typename Policy>
std::vector<double> rollout_returns(Env & env, Policy && policy, std::size_t episodes, Rng & rng)
{
  std::vector<double> returns;
  returns.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    Vector obs = env.reset(rng);
    double total = 0.0;
    while (!env.episode_over()) {
      const Transition tr = env.step(policy(obs, rng));
      total += tr.reward;
      obs = tr.next_obs;
    }
    returns.push_back(total);
  }
  return returns;
}

inline Vector uniform_action(const EnvSpec & spec, Rng & rng)
{
  Vector a(static_cast<Eigen::Index>(spec.act_dim));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a(i) = rng.uniform(spec.action_low(i), spec.action_high(i));
  }
  return a;
}

constexpr std::uint64_t kReferenceSeed = 20230101;
constexpr std::size_t kReferenceEpisodes = 200;

/// Random/expert reference returns: mean over 200 episodes each with a pinned seed.
inline std::pair<double, double> compute_reference_returns(const Env & prototype)
{
  auto env = prototype.clone();
  Rng rng(kReferenceSeed);
  const EnvSpec spec = env->spec();
  auto random_returns = rollout_returns(
    *env, [&](const Vector &, Rng & r) {return uniform_action(spec, r);},
    kReferenceEpisodes, rng);
  auto expert_returns = rollout_returns(
    *env, [&](const Vector & o, Rng &) {return env->expert_action(o);},
    kReferenceEpisodes, rng);
  auto mean = [](const std::vector<double> & v) {
      double s = 0.0;
      for (double x : v) {s += x;}
      return s / static_cast<double>(v.size());
    };
  return {mean(random_returns), mean(expert_returns)};
}

template<typename E>
class WithReferences : public E
{
public:
  template<typename ... Args>
  explicit WithReferences(Args && ... args) : E(std::forward<Args>(args)...)
  {
    auto [lo, hi] = compute_reference_returns(*this);
    this->spec_.reference_random_return = lo;
    this->spec_.reference_expert_return = hi;
    this->spec_.validate();
  }
};

/**
 * Builds an environment by id: "pointmaze-umaze", "pointmaze-medium", "linereach",
 * or "pointmaze-custom" with an explicit layout. Reference returns are filled in.
 */
inline std::unique_ptr<Env> make_env(
  const std::string & env_id,
  const std::optional<std::vector<std::string>> & layout = std::nullopt)
{
  // Reference returns are deterministic per (id, layout); cache the constructed prototypes.
  static std::mutex mu;
  static std::map<std::pair<std::string, std::vector<std::string>>, std::unique_ptr<Env>> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(env_id, layout.value_or(std::vector<std::string>{}));
  if (auto it = cache.find(key); it != cache.end()) {
    return it->second->clone();
  }
  std::unique_ptr<Env> env;
  if (env_id == "linereach") {
    env = std::make_unique<WithReferences<LineReach>>();
  } else if (env_id == "pointmaze-umaze") {
    env = std::make_unique<WithReferences<PointMaze>>(env_id, layout.value_or(umaze_layout()));
  } else if (env_id == "pointmaze-medium") {
    env = std::make_unique<WithReferences<PointMaze>>(env_id, layout.value_or(medium_maze_layout()));
  } else if (env_id == "pointmaze-custom" && layout) {
    env = std::make_unique<WithReferences<PointMaze>>(env_id, *layout);
  } else {
    throw std::invalid_argument("unknown env id '" + env_id + "'");
  }
  auto copy = env->clone();
  cache.emplace(key, std::move(env));
  return copy;
}

// ---------------------------------------------------------------------------
// Offline dataset generation

constexpr double kMediumEpsilon = 0.4;
constexpr double kMediumNoiseStd = 0.3;

/**
 * Rolls out a graded behavior policy for exactly `n_transitions` steps.
 *
 * Random: uniform actions. Expert: the scripted controller. Medium: with probability
 * 0.4 a uniform action, else the controller plus N(0, 0.3^2) noise. MediumReplay: the
 * same mixture with epsilon annealed linearly from 1.0 to 0.4 across the dataset.
 * A final partial episode is marked truncated.
 */
inline std::vector<Transition> generate_offline_dataset(
  Env & env, BehaviorGrade grade,
  std::size_t n_transitions, Rng & rng)
{
  if (n_transitions < 1) {
    throw std::invalid_argument("generate_offline_dataset: need at least one transition");
  }
  const EnvSpec & spec = env.spec();
  std::vector<Transition> data;
  data.reserve(n_transitions);
  auto noisy_expert = [&](const Vector & obs, double eps) -> Vector {
      if (rng.uniform() < eps) {
        return uniform_action(spec, rng);
      }
      Vector a = env.expert_action(obs);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a(i) += kMediumNoiseStd * rng.normal();
      }
      return a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
    };
  Vector obs = env.reset(rng);
  while (data.size() < n_transitions) {
    if (env.episode_over()) {
      obs = env.reset(rng);
    }
    Vector action;
    switch (grade) {
      case BehaviorGrade::Random:
        action = uniform_action(spec, rng);
        break;
      case BehaviorGrade::Expert:
        action = env.expert_action(obs);
        break;
      case BehaviorGrade::Medium:
        action = noisy_expert(obs, kMediumEpsilon);
        break;
      case BehaviorGrade::MediumReplay: {
          const double progress = static_cast<double>(data.size()) / static_cast<double>(n_transitions);
          action = noisy_expert(obs, 1.0 - (1.0 - kMediumEpsilon) * progress);
          break;
        }
    }
    Transition tr = env.step(action);
    obs = tr.next_obs;
    data.push_back(std::move(tr));
  }
  if (!data.back().done) {
    data.back().truncated = true;
  }
  return data;
}

/// Undiscounted returns of the episodes in a transition sequence (split at done/truncated).
inline std::vector<double> episode_returns(const std::vector<Transition> & data)
{
  std::vector<double> out;
  double acc = 0.0;
  for (const auto & t : data) {
    acc += t.reward;
    if (t.done || t.truncated) {
      out.push_back(acc);
      acc = 0.0;
    }
  }
  return out;
}

}  // namespace pex

#endif  // PEX_ENVS_HPP_
