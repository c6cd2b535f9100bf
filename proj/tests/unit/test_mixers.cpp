#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "grad_check.hpp"
#include "marlab/metrics.hpp"
#include "marlab/mixers.hpp"

using namespace marlab;
using marlab::testing::check_loss_gradients;

TEST_SUITE_BEGIN("mixers");

namespace {

// Least-squares fit of an additive model u(a1) + v(a2) to a 2x2 payoff:
// fitted entry = row mean + column mean - grand mean. Independent oracle for
// the VDN representation floor.
double additive_least_squares_error(const PayoffTensor& payoff) {
  double row[2] = {0, 0}, col[2] = {0, 0}, grand = 0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double r = payoff.at({a, b});
      row[a] += r / 2;
      col[b] += r / 2;
      grand += r / 4;
    }
  }
  double err = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double fit = row[a] + col[b] - grand;
      double d = fit - payoff.at({a, b});
      err += d * d;
    }
  }
  return err;
}

void set_local_table(VdModel& m, const std::vector<double>& values) {
  int pid = m.params().find("local_q.table");
  REQUIRE(pid >= 0);
  Tensor& t = m.params().value(pid);
  REQUIRE(t.size() == static_cast<int>(values.size()));
  for (int i = 0; i < t.size(); ++i) t[i] = values[static_cast<std::size_t>(i)];
}

double q_tot_at(const VdModel& m, const PayoffTensor& payoff, const std::vector<int>& joint) {
  return m.q_tot_all_joint(payoff)[static_cast<std::size_t>(payoff.flat_index(joint))];
}

}  // namespace

TEST_CASE("vdn with unit weights sums the local values") {
  Rng rng(2);
  VdModel m = VdModel::stateless(MixerKind::vdn, 2, 2, rng);
  set_local_table(m, {0.3, 0.0, 0.4, 0.0});  // Q1(0)=0.3, Q2(0)=0.4
  int w = m.params().find("mixer.vdn.w");
  m.params().value(w) = Tensor({2, 1}, {1.0, 1.0});
  CHECK(q_tot_at(m, xor_payoff(), {0, 0}) == doctest::Approx(0.7));
}

TEST_CASE("qmix with all-zero local Qs is action-independent (bias terms only)") {
  Rng rng(3);
  VdModel m = VdModel::stateless(MixerKind::qmix, 2, 2, rng);
  set_local_table(m, {0.0, 0.0, 0.0, 0.0});
  auto q = m.q_tot_all_joint(xor_payoff());
  for (std::size_t i = 1; i < q.size(); ++i) CHECK(q[i] == doctest::Approx(q[0]).epsilon(1e-12));
}

TEST_CASE("qplex at the local argmax equals the transformed value term") {
  Rng rng(4);
  VdModel m = VdModel::stateless(MixerKind::qplex, 2, 2, rng);
  set_local_table(m, {0.9, 0.1, 0.2, 0.8});  // argmax = (0, 1)
  PayoffTensor payoff = xor_payoff();
  double at_greedy = q_tot_at(m, payoff, {0, 1});

  // All advantages are zero at the greedy joint action, so the attention
  // parameters must not influence Q_tot there (Eq. (3) at the maximizer)...
  int head_w = m.params().find("mixer.qplex.h0.k.w");
  REQUIRE(head_w >= 0);
  // row 1 of the key weights reads the agent-0 one-hot, so perturbing it
  // shifts the two agents' attention scores apart
  int agent_row_entry = 1 * 16;
  m.params().value(head_w)[agent_row_entry] += 5.0;
  CHECK(q_tot_at(m, payoff, {0, 1}) == doctest::Approx(at_greedy).epsilon(1e-12));
  // ...while off-argmax entries do depend on them.
  double off1 = q_tot_at(m, payoff, {1, 0});
  m.params().value(head_w)[agent_row_entry] += 5.0;
  double off2 = q_tot_at(m, payoff, {1, 0});
  CHECK(off1 != off2);
}

TEST_CASE("igm greedy takes per-agent argmaxes with lowest-index ties") {
  CHECK(igm_greedy({{0.9, 0.1}, {0.2, 0.8}}) == std::vector<int>{0, 1});
  CHECK(igm_greedy({{0.5, 0.5}, {0.1, 0.8}}) == std::vector<int>{0, 1});
  CHECK(igm_greedy({{-1.0, -1.0, -0.5}}) == std::vector<int>{2});
}

TEST_CASE("advantage_tot is zero at the maximizer and negative elsewhere") {
  std::vector<double> q = {0.0, 1.0, 1.0, 0.0};
  CHECK(advantage_tot(q, 1) == 0.0);
  CHECK(advantage_tot(q, 0) == -1.0);
  std::vector<double> constant(9, 0.4);
  for (int i = 0; i < 9; ++i) CHECK(advantage_tot(constant, i) == 0.0);
}

TEST_CASE("igm soundness: greedy joint action attains the q_tot maximum") {
  Rng rng(71);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int n_actions = 2 + trial % 3;  // 2..4
    MixerKind kind = trial % 2 == 0 ? MixerKind::qmix : MixerKind::qplex;
    VdModel m = VdModel::stateless(kind, 2, n_actions, rng);
    std::vector<double> table(static_cast<std::size_t>(2 * n_actions));
    for (double& v : table) v = rng.uniform(-2, 2);
    set_local_table(m, table);

    std::vector<int> dims(2, n_actions);
    PayoffTensor dummy(dims, std::vector<double>(static_cast<std::size_t>(n_actions * n_actions), 0.0));
    auto q = m.q_tot_all_joint(dummy);

    std::vector<std::vector<double>> local(2, std::vector<double>(static_cast<std::size_t>(n_actions)));
    for (int i = 0; i < 2; ++i) {
      for (int a = 0; a < n_actions; ++a) local[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] = table[static_cast<std::size_t>(i * n_actions + a)];
    }
    std::vector<int> greedy = igm_greedy(local);
    double best = q[0];
    for (double v : q) best = std::max(best, v);
    double at_greedy = q[static_cast<std::size_t>(dummy.flat_index(greedy))];
    CHECK(at_greedy == doctest::Approx(best).epsilon(1e-10));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("vdn additive floor: no parameter setting beats the least-squares bound") {
  PayoffTensor payoff = xor_payoff();
  double bound = additive_least_squares_error(payoff);
  CHECK(bound == doctest::Approx(1.0));

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    VdModel m = VdModel::stateless(MixerKind::vdn, 2, 2, rng);
    std::vector<double> table(4);
    for (double& v : table) v = rng.uniform(-3, 3);
    set_local_table(m, table);
    int w = m.params().find("mixer.vdn.w");
    m.params().value(w)[0] = rng.uniform(-3, 3);
    m.params().value(w)[1] = rng.uniform(-3, 3);
    CHECK(payoff_fit_error(m, payoff) >= bound - 1e-6);
  }
}

TEST_CASE("fitting vdn on xor converges to the additive floor of 1.0") {
  Rng rng(9);
  VdModel m = VdModel::stateless(MixerKind::vdn, 2, 2, rng);
  FitResult res = fit_payoff(m, xor_payoff(), 4000, 0.1);
  CHECK(res.final_error == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("every mixer fits a constant payoff to near-zero error") {
  PayoffTensor constant({2, 2}, {1, 1, 1, 1});
  Rng rng(10);
  for (MixerKind kind : {MixerKind::vdn, MixerKind::qmix, MixerKind::qplex}) {
    VdModel m = VdModel::stateless(kind, 2, 2, rng);
    FitResult res = fit_payoff(m, constant, 3000, 0.1);
    CAPTURE(mixer_kind_name(kind));
    CHECK(res.final_error < 1e-3);
  }
}

TEST_CASE("fit aborts on divergence") {
  Rng rng(11);
  VdModel m = VdModel::stateless(MixerKind::vdn, 2, 2, rng);
  CHECK_THROWS_AS(fit_payoff(m, xor_payoff(), 2000, 50.0), std::runtime_error);
}

TEST_CASE("qmix and qplex gradients match finite differences") {
  Rng rng(12);
  PayoffTensor payoff = xor_payoff();
  Tensor target({4}, {0, 1, 1, 0});
  for (MixerKind kind : {MixerKind::qmix, MixerKind::qplex}) {
    for (int trial = 0; trial < 3; ++trial) {
      VdModel m = VdModel::stateless(kind, 2, 2, rng);
      auto res = check_loss_gradients(m.params(), [&](Tape& t) {
        int q = m.q_tot_all_joint_node(t, payoff);
        int d = t.sub(q, t.constant(target));
        return t.mean(t.mul(d, d));
      });
      CAPTURE(mixer_kind_name(kind));
      CAPTURE(res.worst_param);
      CHECK(res.ok);
    }
  }
}

TEST_CASE("bridge vd model clones into an identical target network") {
  Rng rng(13);
  VdModel m = VdModel::bridge_net(MixerKind::qmix, 6, 5, 2, 6, false, rng);
  VdModel target = m.clone();
  std::vector<double> obs = {0, 0, 6, 0, 6, 0};
  CHECK(m.local_q_values(0, obs) == target.local_q_values(0, obs));
  int bias = m.params().find("local_q.net.lin0.b");
  REQUIRE(bias >= 0);
  m.params().value(bias)[0] += 1.0;
  CHECK(m.local_q_values(0, obs) != target.local_q_values(0, obs));
}

TEST_SUITE_END();
