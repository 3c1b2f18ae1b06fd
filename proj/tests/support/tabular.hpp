#ifndef PEX_TESTS_TABULAR_HPP_
#define PEX_TESTS_TABULAR_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pex/iql.hpp"

namespace pex::testing
{

/// 5x5 deterministic grid: four moves, bumping a wall stays put, entering G pays 1 and ends.
struct GridWorld
{
  static constexpr int kSide = 5;
  static constexpr int kCells = kSide * kSide;
  static constexpr int kMoves = 4;

  std::vector<std::string> rows{
    "S....",
    "###..",
    ".....",
    ".##..",
    "G....",
  };

  bool free(int r, int c) const
  {
    return r >= 0 && r < kSide && c >= 0 && c < kSide && rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] != '#';
  }
  bool goal(int cell) const { return rows[static_cast<std::size_t>(cell / kSide)][static_cast<std::size_t>(cell % kSide)] == 'G'; }
  bool free(int cell) const { return free(cell / kSide, cell % kSide); }

  int next(int cell, int move) const
  {
    static constexpr std::array<int, 4> dr{-1, 1, 0, 0};
    static constexpr std::array<int, 4> dc{0, 0, -1, 1};
    const int r = cell / kSide + dr[static_cast<std::size_t>(move)];
    const int c = cell % kSide + dc[static_cast<std::size_t>(move)];
    return free(r, c) ? r * kSide + c : cell;
  }

  /// Non-goal free cells; each contributes all four moves to the dataset.
  std::vector<int> states() const
  {
    std::vector<int> out;
    for (int s = 0; s < kCells; ++s) {
      if (free(s) && !goal(s)) {
        out.push_back(s);
      }
    }
    return out;
  }

  /// Q* by value iteration to machine precision.
  std::vector<std::array<double, 4>> optimal_q(double gamma) const
  {
    std::vector<double> v(kCells, 0.0);
    std::vector<std::array<double, 4>> q(kCells, {0.0, 0.0, 0.0, 0.0});
    for (int it = 0; it < 10000; ++it) {
      double delta = 0.0;
      for (int s : states()) {
        double best = -1e300;
        for (int a = 0; a < kMoves; ++a) {
          const int n = next(s, a);
          q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = goal(n) ? 1.0 : gamma * v[static_cast<std::size_t>(n)];
          best = std::max(best, q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]);
        }
        delta = std::max(delta, std::abs(best - v[static_cast<std::size_t>(s)]));
        v[static_cast<std::size_t>(s)] = best;
      }
      if (delta == 0.0) {
        break;
      }
    }
    return q;
  }

  static Vector state_feature(int s)
  {
    Vector x = Vector::Zero(kCells);
    x(s) = 1.0;
    return x;
  }

  /// One-hot over (cell, move) pairs, so a linear critic over [state; action] is a table.
  static Vector action_feature(int s, int a)
  {
    Vector x = Vector::Zero(kCells * kMoves);
    x(s * kMoves + a) = 1.0;
    return x;
  }

  /// Every (state, move) transition exactly once.
  Batch full_coverage_batch() const
  {
    const auto ss = states();
    Batch b = Batch::with_shape(kCells, kCells * kMoves, ss.size() * kMoves);
    Eigen::Index col = 0;
    for (int s : ss) {
      for (int a = 0; a < kMoves; ++a) {
        const int n = next(s, a);
        b.obs.col(col) = state_feature(s);
        b.actions.col(col) = action_feature(s, a);
        b.rewards(col) = goal(n) ? 1.0 : 0.0;
        b.next_obs.col(col) = state_feature(n);
        b.dones(col) = goal(n) ? 1.0 : 0.0;
        ++col;
      }
    }
    return b;
  }
};

struct TabularResult
{
  double max_error = 0.0;
  std::size_t updates = 0;
};

/// Full-batch IQL on the grid with linear (tabular) critics; returns ||min-Q - Q*||_inf over the data.
inline TabularResult run_tabular_iql(
  std::uint64_t seed, double expectile = 0.99, std::size_t updates = 20000,
  double gamma = 0.9)
{
  const GridWorld g;
  const Batch batch = g.full_coverage_batch();
  Rng rng(seed);
  const Vector low = Vector::Constant(1, -1.0);
  const Vector high = Vector::Constant(1, 1.0);
  IqlNets nets;
  nets.q1 = mlp_init({GridWorld::kCells * (1 + GridWorld::kMoves), 1}, rng);
  nets.q2 = mlp_init({GridWorld::kCells * (1 + GridWorld::kMoves), 1}, rng);
  nets.q1_target = nets.q1;
  nets.q2_target = nets.q2;
  nets.v = mlp_init({GridWorld::kCells, 1}, rng);
  nets.actor = Actor::init(GridWorld::kCells, 1, {}, low, high, rng);
  IqlOptim optim = IqlOptim::for_nets(nets);
  IqlHyper hyper;
  hyper.expectile = expectile;
  hyper.discount = gamma;
  LearningRates lr;
  lr.critic = 1e-2;
  lr.target_speed = 0.05;
  IqlUpdateFlags flags;
  flags.train_actor = false;

  for (std::size_t i = 0; i < updates; ++i) {
    iql_update(nets, optim, batch, hyper, lr, flags);
  }

  const auto qstar = g.optimal_q(gamma);
  const Vector q = min_q(nets.q1, nets.q2, batch.obs, batch.actions);
  TabularResult res;
  res.updates = updates;
  Eigen::Index col = 0;
  for (int s : g.states()) {
    for (int a = 0; a < GridWorld::kMoves; ++a) {
      res.max_error = std::max(res.max_error, std::abs(q(col) - qstar[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
      ++col;
    }
  }
  return res;
}

}  // namespace pex::testing

#endif  // PEX_TESTS_TABULAR_HPP_
