#include "marlab/reinforce.hpp"

#include <cmath>

namespace marlab {

double exact_expected_return(const MatrixPolicy& policy, const PayoffTensor& payoff, bool randomized_order) {
  std::vector<double> dist = policy.joint_distribution(randomized_order);
  double ret = 0.0;
  for (int idx = 0; idx < payoff.joint_count(); ++idx) {
    ret += dist[static_cast<std::size_t>(idx)] * payoff.flat(idx);
  }
  return ret;
}

namespace {

double exact_entropy(const MatrixPolicy& policy, bool randomized_order) {
  std::vector<double> dist = policy.joint_distribution(randomized_order);
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

ReinforceRecord train_reinforce(MatrixPolicy& policy, const MatrixGameSpec& game, const ReinforceConfig& config,
                                Rng& rng, const std::function<void(const ReinforcePoint&)>& on_record) {
  int n = game.n_agents;
  bool ar = policy.repr() == PolicyRepr::auto_regressive;

  OptimConfig oc;
  oc.kind = OptimKind::adam;
  oc.learning_rate = config.learning_rate;
  oc.grad_norm_clip = config.grad_norm_clip;
  Optimizer opt(oc, policy.params());

  std::vector<int> identity(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) identity[static_cast<std::size_t>(i)] = i;

  ReinforceRecord record;
  auto record_point = [&](int update) {
    ReinforcePoint pt;
    pt.update = update;
    pt.expected_return = exact_expected_return(policy, game.payoff, config.randomized_order);
    pt.entropy = exact_entropy(policy, config.randomized_order);
    record.curve.push_back(pt);
    if (on_record) on_record(pt);
  };

  int b = config.batch_episodes;
  for (int update = 0; update < config.updates; ++update) {
    std::vector<JointActionSample> samples;
    samples.reserve(static_cast<std::size_t>(b));
    std::vector<double> rewards(static_cast<std::size_t>(b));
    double baseline = 0.0;
    for (int e = 0; e < b; ++e) {
      std::vector<int> order = ar && config.randomized_order ? sample_execution_order(n, rng) : identity;
      samples.push_back(policy.sample_joint(order, rng));
      rewards[static_cast<std::size_t>(e)] = game.payoff.at(samples.back().actions);
      baseline += rewards[static_cast<std::size_t>(e)];
    }
    baseline /= b;

    // One row per (episode, execution position).
    std::vector<int> agents(static_cast<std::size_t>(b * n));
    std::vector<int> masks(static_cast<std::size_t>(b * n), 0);
    std::vector<int> taken(static_cast<std::size_t>(b * n));
    Tensor weights({b * n});
    for (int e = 0; e < b; ++e) {
      const JointActionSample& s = samples[static_cast<std::size_t>(e)];
      double adv = rewards[static_cast<std::size_t>(e)] - baseline;
      int mask = 0;
      for (int pos = 0; pos < n; ++pos) {
        int agent = s.order[static_cast<std::size_t>(pos)];
        int row = e * n + pos;
        agents[static_cast<std::size_t>(row)] = agent;
        masks[static_cast<std::size_t>(row)] = ar ? mask : 0;
        taken[static_cast<std::size_t>(row)] = s.actions[static_cast<std::size_t>(agent)];
        weights[row] = adv * (ar && config.multi_step ? static_cast<double>(n - pos) : 1.0);
        mask |= 1 << s.actions[static_cast<std::size_t>(agent)];
      }
    }

    Tape t(&policy.params());
    int logits = policy.logits_node(t, agents, masks);
    int logp_all = t.log_softmax_lastdim(logits);
    int probs = t.exp_(logp_all);
    int logp_sel = t.select_col(logp_all, taken);

    int policy_loss = t.mul_scalar(t.sum(t.mul_const(logp_sel, weights)), -1.0 / b);
    int entropy = t.mul_scalar(t.sum(t.neg(t.sum_lastdim(t.mul(probs, logp_all)))), 1.0 / b);
    int loss = t.add(policy_loss, t.mul_scalar(entropy, -config.entropy_coef));
    t.backward(loss);
    opt.step(policy.params());

    if ((update + 1) % config.record_interval == 0 || update + 1 == config.updates) record_point(update + 1);
  }
  if (record.curve.empty()) record_point(config.updates);
  return record;
}

}  // namespace marlab
