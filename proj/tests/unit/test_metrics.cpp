#include <cmath>

#include "doctest.h"
#include "marlab/metrics.hpp"
#include "marlab/reinforce.hpp"

using namespace marlab;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("deterministic policy has zero trajectory entropy") {
  Rng rng(1);
  MatrixPolicy p(PolicyRepr::individual, 4, 4, rng);
  Tensor& table = p.params().value(p.table_param());
  table.fill(0.0);
  for (int agent = 0; agent < 4; ++agent) table.at({agent, agent}) = 1e9;
  EntropyEstimate e = trajectory_entropy_exact(p, false);
  CHECK(e.value == doctest::Approx(0.0));
}

TEST_CASE("uniform over permutations has entropy log(n!)") {
  Rng rng(2);
  MatrixPolicy p4(PolicyRepr::auto_regressive, 4, 4, rng);
  p4.set_uniform_permutation_construction();
  CHECK(trajectory_entropy_exact(p4, true).value == doctest::Approx(std::log(24.0)).epsilon(1e-9));

  MatrixPolicy p2(PolicyRepr::auto_regressive, 2, 2, rng);
  p2.set_uniform_permutation_construction();
  CHECK(trajectory_entropy_exact(p2, true).value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("monte carlo entropy agrees with enumeration within 3 standard errors") {
  Rng rng(3);
  MatrixPolicy p(PolicyRepr::auto_regressive, 3, 3, rng);
  Tensor& table = p.params().value(p.table_param());
  for (int i = 0; i < table.size(); ++i) table[i] = rng.uniform(-1.5, 1.5);
  EntropyEstimate exact = trajectory_entropy_exact(p, true);
  EntropyEstimate mc = trajectory_entropy_mc(p, true, 20000, rng);
  CHECK(std::abs(mc.value - exact.value) <= 3.0 * mc.std_error + 1e-12);
}

TEST_CASE("histogram counts sum to the episode count and normalize to one") {
  Rng rng(4);
  MatrixGameSpec game = permutation_game(4);
  MatrixPolicy p(PolicyRepr::auto_regressive, 4, 4, rng);
  p.set_uniform_permutation_construction();
  JointActionHistogram hist = joint_action_histogram(p, game, 1000, rng, true);
  CHECK(hist.total() == 1000);
  CHECK(hist.episodes == 1000);
  double norm = 0.0;
  for (long c : hist.counts) norm += static_cast<double>(c) / hist.episodes;
  CHECK(std::abs(norm - 1.0) < 1e-12);

  // all 24 permutation cells hit, nothing else
  int occupied = 0;
  for (int idx = 0; idx < game.payoff.joint_count(); ++idx) {
    if (game.payoff.flat(idx) == 1.0) {
      CHECK(hist.counts[static_cast<std::size_t>(idx)] > 0);
      ++occupied;
    } else {
      CHECK(hist.counts[static_cast<std::size_t>(idx)] == 0);
    }
  }
  CHECK(occupied == 24);
}

TEST_CASE("deterministic policy concentrates the histogram in one cell") {
  Rng rng(5);
  MatrixGameSpec game = xor_game();
  MatrixPolicy p(PolicyRepr::individual, 2, 2, rng);
  Tensor& table = p.params().value(p.table_param());
  table.fill(0.0);
  table.at({0, 0}) = 1e9;
  table.at({1, 1}) = 1e9;
  JointActionHistogram hist = joint_action_histogram(p, game, 1000, rng, false);
  CHECK(hist.count_at({0, 1}) == 1000);
}

TEST_CASE("16x16 export lays out the 4-agent histogram") {
  Rng rng(6);
  MatrixGameSpec game = permutation_game(4);
  MatrixPolicy p(PolicyRepr::auto_regressive, 4, 4, rng);
  p.set_uniform_permutation_construction();
  JointActionHistogram hist = joint_action_histogram(p, game, 100, rng, true);
  std::string csv = histogram_16x16_csv(hist);
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 17);  // header + 16 rows
}

TEST_CASE("payoff fit error from a q table") {
  PayoffTensor payoff = xor_payoff();
  CHECK(payoff_fit_error_from_q({0.5, 0.5, 0.5, 0.5}, payoff) == doctest::Approx(1.0));
  CHECK(payoff_fit_error_from_q({0, 0, 0, 0}, payoff) == doctest::Approx(2.0));
  CHECK(payoff_fit_error_from_q({0, 1, 1, 0}, payoff) == doctest::Approx(0.0));
}

TEST_CASE("shared policy xor return formula matches enumeration to 1e-12") {
  CHECK(shared_policy_xor_return(0.5) == doctest::Approx(0.5));
  CHECK(shared_policy_xor_return(0.0) == 0.0);
  CHECK(shared_policy_xor_return(1.0) == 0.0);

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    double alpha = rng.next_double();
    MatrixPolicy p(PolicyRepr::shared, 2, 2, rng);
    Tensor& table = p.params().value(p.table_param());
    table.at({0, 0}) = std::log(alpha + 1e-300);
    table.at({0, 1}) = std::log(1.0 - alpha + 1e-300);
    double enumerated = exact_expected_return(p, xor_payoff(), false);
    CHECK(std::abs(enumerated - shared_policy_xor_return(alpha)) < 1e-12);
  }
}

TEST_CASE("uniform bridge joint policy has state entropy log 25") {
  Rng rng(8);
  BridgePolicy pol(PolicyRepr::shared, BridgePolicy::Backbone::mlp, 2, rng);
  pol.params().value(pol.params().find("actor.lin2.w")).fill(0.0);
  pol.params().value(pol.params().find("actor.lin2.b")).fill(0.0);
  BridgeSpec spec;
  BridgeState s = bridge_ends_state(spec);
  CHECK(bridge_state_policy_entropy(pol, spec, s) == doctest::Approx(std::log(25.0)).epsilon(1e-9));

  auto dist = bridge_state_joint_distribution(pol, spec, s);
  double sum = 0.0;
  for (double p : dist) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("bridge ends state sits just outside the bridge") {
  BridgeSpec spec;
  BridgeState s = bridge_ends_state(spec);
  CHECK(s.pos[0] == GridPos{1, 0});
  CHECK(s.pos[1] == GridPos{5, 0});
  CHECK(bridge_cell_valid(spec, s.pos[0]));
  CHECK(bridge_cell_valid(spec, s.pos[1]));
}

TEST_CASE("AR bridge joint distribution is normalized") {
  Rng rng(9);
  BridgePolicy ar(PolicyRepr::auto_regressive, BridgePolicy::Backbone::attention, 2, rng);
  BridgeSpec spec;
  auto dist = bridge_state_joint_distribution(ar, spec, bridge_ends_state(spec));
  double sum = 0.0;
  for (double p : dist) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_SUITE_END();
