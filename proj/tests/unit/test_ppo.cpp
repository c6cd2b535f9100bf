#include <cmath>
#include <map>

#include "doctest.h"
#include "marlab/metrics.hpp"
#include "marlab/ppo.hpp"

using namespace marlab;

TEST_SUITE_BEGIN("ppo");

TEST_CASE("gae with lambda=1, gamma=1 is return minus value") {
  std::vector<double> rewards = {1, 0, 1};
  std::vector<double> values = {0.5, 0.5, 0.5};
  std::vector<bool> done = {false, false, true};
  std::vector<double> adv, ret;
  compute_gae(rewards, values, done, 123.0, 1.0, 1.0, adv, ret);
  CHECK(adv[0] == doctest::Approx(2.0 - 0.5));
  CHECK(adv[1] == doctest::Approx(1.0 - 0.5));
  CHECK(adv[2] == doctest::Approx(1.0 - 0.5));
  CHECK(ret[0] == doctest::Approx(2.0));
}

TEST_CASE("gae single step is the one-step td error") {
  std::vector<double> adv, ret;
  compute_gae({0.3}, {0.1}, {false}, 0.7, 0.99, 0.95, adv, ret);
  CHECK(adv[0] == doctest::Approx(0.3 + 0.99 * 0.7 - 0.1));
  compute_gae({0.3}, {0.1}, {true}, 0.7, 0.99, 0.95, adv, ret);
  CHECK(adv[0] == doctest::Approx(0.3 - 0.1));
}

TEST_CASE("gae 3-step toy matches the hand-unrolled recursion") {
  std::vector<double> rewards = {1, 0, 1};
  std::vector<double> values = {0.5, 0.5, 0.5};
  std::vector<bool> done = {false, false, false};
  std::vector<double> adv, ret;
  compute_gae(rewards, values, done, 0.0, 0.99, 0.95, adv, ret);

  // hand oracle: delta_t = r_t + 0.99 V_{t+1} - V_t, A_t = delta_t + 0.99*0.95*A_{t+1}
  double d2 = 1 + 0.99 * 0.0 - 0.5;
  double d1 = 0 + 0.99 * 0.5 - 0.5;
  double d0 = 1 + 0.99 * 0.5 - 0.5;
  double a2 = d2;
  double a1 = d1 + 0.99 * 0.95 * a2;
  double a0 = d0 + 0.99 * 0.95 * a1;
  CHECK(std::abs(adv[2] - a2) < 1e-9);
  CHECK(std::abs(adv[1] - a1) < 1e-9);
  CHECK(std::abs(adv[0] - a0) < 1e-9);

  // brute-force recursion oracle over random streams
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + rng.next_below(8);
    std::vector<double> r(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
    std::vector<bool> dn(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      r[static_cast<std::size_t>(i)] = rng.uniform(-1, 1);
      v[static_cast<std::size_t>(i)] = rng.uniform(-1, 1);
      dn[static_cast<std::size_t>(i)] = rng.next_double() < 0.3;
    }
    double boot = rng.uniform(-1, 1);
    compute_gae(r, v, dn, boot, 0.99, 0.95, adv, ret);
    std::vector<double> expect(static_cast<std::size_t>(n));
    double gae = 0.0;
    for (int t = n - 1; t >= 0; --t) {
      double nv = t + 1 < n ? v[static_cast<std::size_t>(t + 1)] : boot;
      double nonterm = dn[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
      double delta = r[static_cast<std::size_t>(t)] + 0.99 * nonterm * nv - v[static_cast<std::size_t>(t)];
      gae = delta + 0.99 * 0.95 * nonterm * gae;
      expect[static_cast<std::size_t>(t)] = gae;
    }
    for (int t = 0; t < n; ++t) CHECK(std::abs(adv[static_cast<std::size_t>(t)] - expect[static_cast<std::size_t>(t)]) < 1e-9);
  }
}

TEST_CASE("running normalizer matches direct mean and std") {
  RunningNormalizer nz;
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0, 10.0};
  nz.update({xs[0], xs[1]});
  nz.update({xs[2], xs[3], xs[4]});
  double mean = 4.0;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= 5;
  CHECK(nz.mean() == doctest::Approx(mean));
  CHECK(nz.stddev() == doctest::Approx(std::sqrt(var)));
  CHECK(nz.denormalize(nz.normalize(7.7)) == doctest::Approx(7.7));
}

TEST_CASE("identity ratio makes the clipped surrogate the plain advantage") {
  // new == old -> ratio 1 -> policy loss = -mean(advantage)
  Tensor adv({4}, {0.5, -1.0, 2.0, 0.0});
  Tape t;
  Tensor logp_old({4}, {-0.1, -0.2, -0.3, -0.4});
  int logp_new = t.constant(logp_old);
  int ratio = t.exp_(t.sub(logp_new, t.constant(logp_old)));
  int s1 = t.mul_const(ratio, adv);
  int s2 = t.mul_const(t.clamp(ratio, 0.8, 1.2), adv);
  int loss = t.mul_scalar(t.sum(t.min_(s1, s2)), -1.0 / 4);
  double expect = -(0.5 - 1.0 + 2.0 + 0.0) / 4;
  CHECK(t.value(loss)[0] == doctest::Approx(expect));
}

TEST_CASE("positive advantage with ratio beyond the clip passes no gradient") {
  ParamStore ps;
  int logit = ps.add("logit", Tensor::scalar(0.5));
  Tape t(&ps);
  int logp_new = t.param(logit);
  Tensor logp_old_t({1}, {0.0});
  int ratio = t.exp_(t.sub(logp_new, t.constant(logp_old_t)));  // ratio = e^0.5 > 1.2
  Tensor adv({1}, {1.0});
  int s1 = t.mul_const(ratio, adv);
  int s2 = t.mul_const(t.clamp(ratio, 0.8, 1.2), adv);
  int loss = t.neg(t.mean(t.min_(s1, s2)));
  t.backward(loss);
  CHECK(ps.grad(logit)[0] == 0.0);
}

TEST_CASE("zero advantages and matched value targets give exactly zero gradients") {
  Rng rng(41);
  BridgePolicy pol(PolicyRepr::id_conditioned, BridgePolicy::Backbone::mlp, 2, rng);
  std::vector<std::vector<double>> obs = {{0, 0, 6, 0, 6, 0}, {1, 0, 6, 0, 4, 0}};
  std::vector<int> agents = {0, 1};
  std::vector<int> prev = {-1, -1};
  std::vector<int> taken = {1, 4};

  Tape t(&pol.params());
  int logits = pol.logits_node(t, agents, obs, prev);
  int logp = t.select_col(t.log_softmax_lastdim(logits), taken);
  Tensor old_lp = t.value(logp);
  int ratio = t.exp_(t.sub(logp, t.constant(old_lp)));
  Tensor zero_adv({2}, {0.0, 0.0});
  int s1 = t.mul_const(ratio, zero_adv);
  int s2 = t.mul_const(t.clamp(ratio, 0.8, 1.2), zero_adv);
  int loss = t.neg(t.mean(t.min_(s1, s2)));  // entropy coefficient zero
  t.backward(loss);
  for (int pid = 0; pid < pol.params().count(); ++pid) {
    const Tensor& g = pol.params().grad(pid);
    for (int i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
  }

  // critic with targets equal to its own predictions: huber gradient is zero
  ParamStore cps;
  Mlp critic(cps, "critic", {6, 8, 1}, rng);
  Tape tc(&cps);
  Tensor st({2, 6}, {0, 0, 6, 0, 0, 0, 1, 0, 5, 0, 0, 1});
  int v = tc.reshape(critic.forward(tc, tc.constant(st)), {2});
  Tensor target = tc.value(v);
  int h = tc.huber(v, target, 10.0);
  int vloss = tc.mean(h);
  tc.backward(vloss);
  for (int pid = 0; pid < cps.count(); ++pid) {
    const Tensor& g = cps.grad(pid);
    for (int i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
  }

  // and Adam with all-zero gradients moves nothing
  Optimizer opt(OptimConfig{}, cps);
  Tensor before = cps.value(0);
  opt.step(cps);
  CHECK(cps.value(0).values() == before.values());
}

TEST_CASE("action frame conversion is a self-inverse mirror") {
  for (int a = 0; a < 5; ++a) {
    CHECK(bridge_action_in_frame(0, a, 0) == a);
    CHECK(bridge_action_in_frame(1, bridge_action_in_frame(0, a, 1), 0) == a);
  }
  CHECK(bridge_action_in_frame(0, kRight, 1) == kLeft);
  CHECK(bridge_action_in_frame(1, kRight, 0) == kLeft);
  CHECK(bridge_action_in_frame(0, kUp, 1) == kUp);
}

TEST_CASE("executing the DP-optimal plan attains the oracle return exactly") {
  BridgeSpec spec;
  auto plan = bridge_optimal_plan(spec);
  BridgeState s = bridge_reset(spec);
  double total = 0.0;
  for (const auto& acts : plan) {
    auto r = bridge_step(spec, s, acts);
    total += r.team_reward();
    s = r.next;
    if (r.episode_done) break;
  }
  CHECK(total == doctest::Approx(bridge_optimal_return(spec)).epsilon(1e-12));
}

TEST_CASE("uniform-random play scores strictly below the oracle") {
  BridgeSpec spec;
  Rng rng(77);
  BridgePolicy pol(PolicyRepr::shared, BridgePolicy::Backbone::mlp, 2, rng);
  // zero the output layer -> exactly uniform action distribution
  int w = pol.params().find("actor.lin2.w");
  int b = pol.params().find("actor.lin2.b");
  REQUIRE(w >= 0);
  pol.params().value(w).fill(0.0);
  pol.params().value(b).fill(0.0);
  EvalResult res = eval_bridge_policy(pol, spec, 50, false, rng);
  CHECK(res.mean < bridge_optimal_return(spec));
}

TEST_CASE("one ppo iteration runs and keeps parameters finite") {
  Rng rng(55);
  PpoConfig cfg;
  cfg.batch_steps = 200;
  cfg.n_envs = 8;
  cfg.ppo_epochs = 2;
  BridgeSpec spec;
  auto pol = std::make_unique<BridgePolicy>(PolicyRepr::id_conditioned, BridgePolicy::Backbone::mlp, 2, rng);
  PpoTrainer trainer(std::move(pol), spec, cfg, rng);
  for (int i = 0; i < 3; ++i) {
    PpoIterStats st = trainer.iterate();
    CHECK(std::isfinite(st.policy_loss));
    CHECK(std::isfinite(st.value_loss));
  }
  for (int pid = 0; pid < trainer.policy().params().count(); ++pid) {
    CHECK(trainer.policy().params().value(pid).all_finite());
  }
}

TEST_SUITE_END();
