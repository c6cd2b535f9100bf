#include "doctest.h"
#include "marlab/env.hpp"
#include "marlab/matrix_game.hpp"
#include "marlab/rng.hpp"

using namespace marlab;

TEST_SUITE_BEGIN("matrix_game");

TEST_CASE("xor payoff matches the payoff table") {
  PayoffTensor p = xor_payoff();
  CHECK(p.at({0, 1}) == 1.0);
  CHECK(p.at({0, 0}) == 0.0);
  CHECK(p.at({1, 0}) == 1.0);
  CHECK(p.at({1, 1}) == 0.0);
}

TEST_CASE("permutation reward is the permutation indicator") {
  CHECK(permutation_reward(4, {0, 1, 2, 3}) == 1.0);
  CHECK(permutation_reward(4, {0, 0, 1, 2}) == 0.0);
  CHECK(permutation_reward(2, {1, 0}) == 1.0);  // XOR reduction
  CHECK(permutation_reward(2, {0, 0}) == 0.0);
  CHECK_THROWS(permutation_reward(3, {0, 1, 3}));
  CHECK_THROWS(permutation_reward(3, {0, -1, 2}));
}

TEST_CASE("permutation game payoff equals the reward function") {
  MatrixGameSpec g = permutation_game(3);
  CHECK(g.payoff.joint_count() == 27);
  int winners = 0;
  for (int idx = 0; idx < 27; ++idx) {
    auto joint = g.payoff.unflatten(idx);
    CHECK(g.payoff.flat(idx) == permutation_reward(3, joint));
    if (g.payoff.flat(idx) == 1.0) ++winners;
  }
  CHECK(winners == 6);  // 3!
}

TEST_CASE("permutation reward is invariant under jointly permuting agents and actions") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + rng.next_below(3);
    std::vector<int> joint(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) joint[static_cast<std::size_t>(i)] = rng.next_below(n);
    std::vector<int> perm = rng.permutation(n);
    std::vector<int> permuted(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) permuted[static_cast<std::size_t>(i)] = joint[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    CHECK(permutation_reward(n, joint) == permutation_reward(n, permuted));
  }
}

TEST_CASE("payoff csv round trip") {
  PayoffTensor p = xor_payoff();
  PayoffTensor q = PayoffTensor::from_csv(p.to_csv());
  REQUIRE(q.dims() == p.dims());
  for (int i = 0; i < p.joint_count(); ++i) CHECK(q.flat(i) == p.flat(i));

  MatrixGameSpec g = permutation_game(3);
  PayoffTensor r = PayoffTensor::from_csv(g.payoff.to_csv());
  REQUIRE(r.dims() == g.payoff.dims());
  for (int i = 0; i < g.payoff.joint_count(); ++i) CHECK(r.flat(i) == g.payoff.flat(i));
}

TEST_CASE("matrix game env terminates in exactly one step") {
  MatrixGameEnv env(xor_game());
  env.reset();
  CHECK(!env.done());
  EnvStep s = env.step({0, 1});
  CHECK(s.episode_done);
  CHECK(s.team_reward == 1.0);
  CHECK(env.done());
  CHECK_THROWS(env.step({0, 1}));
}

TEST_SUITE_END();
