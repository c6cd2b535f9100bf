#include <cmath>
#include <map>

#include "doctest.h"
#include "grad_check.hpp"
#include "marlab/bridge.hpp"
#include "marlab/matrix_game.hpp"
#include "marlab/policies.hpp"

using namespace marlab;
using marlab::testing::check_loss_gradients;

TEST_SUITE_BEGIN("policies");

namespace {

double dist_sum(const std::vector<double>& dist) {
  double s = 0.0;
  for (double p : dist) s += p;
  return s;
}

}  // namespace

TEST_CASE("execution orders are uniform permutations") {
  Rng rng(1);
  CHECK(sample_execution_order(1, rng) == std::vector<int>{0});
  int first_count = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    if (sample_execution_order(2, rng)[0] == 0) ++first_count;
  }
  double sigma = std::sqrt(draws * 0.25);
  CHECK(std::abs(first_count - draws / 2.0) <= 3.0 * sigma);

  // chi-square uniformity check over the 24 orders of n=4
  std::map<std::vector<int>, int> counts;
  for (int i = 0; i < draws; ++i) ++counts[sample_execution_order(4, rng)];
  CHECK(counts.size() == 24);
  double expected = draws / 24.0;
  double chi2 = 0.0;
  for (auto& [order, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 49.73);  // 99.9th percentile of chi-square with 23 dof
}

TEST_CASE("joint distributions are normalized for every representation") {
  Rng rng(2);
  for (PolicyRepr repr : {PolicyRepr::shared, PolicyRepr::individual, PolicyRepr::id_conditioned,
                          PolicyRepr::auto_regressive}) {
    MatrixPolicy p(repr, 3, 3, rng);
    // random-ish logits
    Tensor& table = p.params().value(p.table_param());
    for (int i = 0; i < table.size(); ++i) table[i] = rng.uniform(-2, 2);
    for (bool randomized : {false, true}) {
      double total = dist_sum(p.joint_distribution(randomized));
      CAPTURE(policy_repr_name(repr));
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("independent uniform policy has joint logprob log(1/4)") {
  Rng rng(3);
  MatrixPolicy p(PolicyRepr::shared, 2, 2, rng);
  p.params().value(p.table_param()).fill(0.0);
  CHECK(p.joint_logprob({0, 1}, {0, 1}) == doctest::Approx(std::log(0.25)));
}

TEST_CASE("AR uniform-first deterministic-second has joint logprob log(1/2)") {
  Rng rng(4);
  MatrixPolicy p(PolicyRepr::auto_regressive, 2, 2, rng);
  p.set_uniform_permutation_construction();
  CHECK(p.joint_logprob({0, 1}, {0, 1}) == doctest::Approx(std::log(0.5)));
  CHECK(p.joint_logprob({0, 1}, {1, 0}) == doctest::Approx(std::log(0.5)));

  // and only the two optimal joint actions ever get sampled, equiprobably
  int count01 = 0, count10 = 0;
  for (int i = 0; i < 4000; ++i) {
    auto s = p.sample_joint(sample_execution_order(2, rng), rng);
    if (s.actions == std::vector<int>{0, 1}) {
      ++count01;
    } else if (s.actions == std::vector<int>{1, 0}) {
      ++count10;
    } else {
      FAIL("sampled a non-permutation joint action");
    }
  }
  CHECK(std::abs(count01 - 2000) < 3 * std::sqrt(4000 * 0.25));
  CHECK(count01 + count10 == 4000);
}

TEST_CASE("sampled per-agent logps sum to the joint logprob") {
  Rng rng(5);
  for (PolicyRepr repr : {PolicyRepr::individual, PolicyRepr::auto_regressive}) {
    MatrixPolicy p(repr, 3, 3, rng);
    Tensor& table = p.params().value(p.table_param());
    for (int i = 0; i < table.size(); ++i) table[i] = rng.uniform(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
      auto order = sample_execution_order(3, rng);
      auto s = p.sample_joint(order, rng);
      double sum = 0.0;
      for (double lp : s.logps) sum += lp;
      CHECK(sum == doctest::Approx(p.joint_logprob(order, s.actions)).epsilon(1e-12));
    }
  }
}

TEST_CASE("shared representation gives identical per-agent marginals") {
  Rng rng(6);
  MatrixPolicy p(PolicyRepr::shared, 2, 2, rng);
  Tensor& table = p.params().value(p.table_param());
  table[0] = 0.7;
  table[1] = -0.4;
  CHECK(p.action_probs(0, 0) == p.action_probs(1, 0));
}

TEST_CASE("uniform permutation construction is exactly uniform over n! permutations") {
  Rng rng(7);
  for (int n = 2; n <= 5; ++n) {
    MatrixPolicy p(PolicyRepr::auto_regressive, n, n, rng);
    p.set_uniform_permutation_construction();
    auto dist = p.joint_distribution(true);
    MatrixGameSpec game = permutation_game(n);
    double fact = 1;
    for (int i = 2; i <= n; ++i) fact *= i;
    for (int idx = 0; idx < game.payoff.joint_count(); ++idx) {
      if (game.payoff.flat(idx) == 1.0) {
        CHECK(dist[static_cast<std::size_t>(idx)] == doctest::Approx(1.0 / fact).epsilon(1e-12));
      } else {
        CHECK(dist[static_cast<std::size_t>(idx)] == 0.0);
      }
    }
  }
}

TEST_CASE("bridge: shared policy emits identical distributions for identical observations") {
  Rng rng(8);
  BridgePolicy shared(PolicyRepr::shared, BridgePolicy::Backbone::mlp, 2, rng);
  std::vector<double> obs = {0, 0, 6, 0, 6, 0};
  CHECK(shared.action_probs(0, obs, -1) == shared.action_probs(1, obs, -1));

  BridgePolicy idc(PolicyRepr::id_conditioned, BridgePolicy::Backbone::mlp, 2, rng);
  auto p0 = idc.action_probs(0, obs, -1);
  auto p1 = idc.action_probs(1, obs, -1);
  double diff = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i) diff += std::abs(p0[i] - p1[i]);
  CHECK(diff > 1e-9);  // the one-hot ID input separates the agents
}

TEST_CASE("bridge individual policies have disjoint parameters") {
  Rng rng(9);
  BridgePolicy ind(PolicyRepr::individual, BridgePolicy::Backbone::mlp, 2, rng);
  std::vector<double> obs = {1, 0, 6, 0, 5, 0};
  auto before = ind.action_probs(1, obs, -1);
  // perturb agent 0's first layer; agent 1's distribution must not move
  int pid = ind.params().find("actor0.lin0.w");
  REQUIRE(pid >= 0);
  ind.params().value(pid)[0] += 10.0;
  CHECK(ind.action_probs(1, obs, -1) == before);
  CHECK(ind.params().find("actor1.lin0.w") >= 0);
}

TEST_CASE("bridge AR policies condition on the predecessor action") {
  Rng rng(10);
  for (BridgePolicy::Backbone bb : {BridgePolicy::Backbone::attention, BridgePolicy::Backbone::mlp}) {
    BridgePolicy ar(PolicyRepr::auto_regressive, bb, 2, rng);
    std::vector<double> obs = {1, 0, 6, 0, 5, 0};
    auto none = ar.action_probs(0, obs, -1);
    auto with3 = ar.action_probs(0, obs, 3);
    double diff = 0.0;
    for (std::size_t i = 0; i < none.size(); ++i) diff += std::abs(none[i] - with3[i]);
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("attention AR backbone gradients match finite differences") {
  Rng rng(11);
  BridgePolicy ar(PolicyRepr::auto_regressive, BridgePolicy::Backbone::attention, 2, rng);
  std::vector<std::vector<double>> obs = {{1, 0, 6, 0, 5, 0}, {4, 0, 6, 0, -1, -1}, {2, 1, 6, 0, 3, 0}};
  std::vector<int> agents = {0, 1, 0};
  std::vector<int> prev = {-1, 2, 4};
  auto res = check_loss_gradients(ar.params(), [&](Tape& t) {
    int logits = ar.logits_node(t, agents, obs, prev);
    int lp = t.log_softmax_lastdim(logits);
    return t.mean(t.mul(lp, lp));
  });
  CAPTURE(res.worst_param);
  CHECK(res.ok);
}

TEST_SUITE_END();
