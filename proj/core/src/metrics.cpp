#include "marlab/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace marlab {

EntropyEstimate trajectory_entropy_exact(const MatrixPolicy& policy, bool randomized_order) {
  std::vector<double> dist = policy.joint_distribution(randomized_order);
  EntropyEstimate e;
  e.method = EntropyMethod::exact_enumeration;
  e.samples = static_cast<long>(dist.size());
  for (double p : dist) {
    if (p > 0.0) e.value -= p * std::log(p);
  }
  return e;
}

EntropyEstimate trajectory_entropy_mc(const MatrixPolicy& policy, bool randomized_order, int samples, Rng& rng) {
  // Sample trajectories from the policy and score them under the exact
  // trajectory distribution, so the estimator targets the same quantity as
  // the enumeration.
  std::vector<double> dist = policy.joint_distribution(randomized_order);
  int n = policy.n_agents();
  std::vector<int> identity(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) identity[static_cast<std::size_t>(i)] = i;

  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < samples; ++s) {
    std::vector<int> order = policy.repr() == PolicyRepr::auto_regressive && randomized_order
                                 ? sample_execution_order(n, rng)
                                 : identity;
    JointActionSample js = policy.sample_joint(order, rng);
    int idx = 0;
    for (int i = 0; i < n; ++i) idx = idx * policy.n_actions() + js.actions[static_cast<std::size_t>(i)];
    double nlp = -std::log(dist[static_cast<std::size_t>(idx)]);
    sum += nlp;
    sq += nlp * nlp;
  }
  EntropyEstimate e;
  e.method = EntropyMethod::monte_carlo;
  e.samples = samples;
  e.value = sum / samples;
  double var = sq / samples - e.value * e.value;
  e.std_error = std::sqrt(std::max(var, 0.0) / samples);
  return e;
}

long JointActionHistogram::count_at(const std::vector<int>& joint) const {
  int idx = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) idx = idx * dims[i] + joint[i];
  return counts[static_cast<std::size_t>(idx)];
}

long JointActionHistogram::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

JointActionHistogram joint_action_histogram(const MatrixPolicy& policy, const MatrixGameSpec& game, int episodes,
                                            Rng& rng, bool randomized_order) {
  JointActionHistogram hist;
  hist.dims.assign(static_cast<std::size_t>(game.n_agents), game.n_actions);
  int total = 1;
  for (int i = 0; i < game.n_agents; ++i) total *= game.n_actions;
  hist.counts.assign(static_cast<std::size_t>(total), 0);
  hist.episodes = episodes;

  std::vector<int> identity(static_cast<std::size_t>(game.n_agents));
  for (int i = 0; i < game.n_agents; ++i) identity[static_cast<std::size_t>(i)] = i;

  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<int> order = policy.repr() == PolicyRepr::auto_regressive && randomized_order
                                 ? sample_execution_order(game.n_agents, rng)
                                 : identity;
    JointActionSample s = policy.sample_joint(order, rng);
    int idx = 0;
    for (int i = 0; i < game.n_agents; ++i) idx = idx * game.n_actions + s.actions[static_cast<std::size_t>(i)];
    ++hist.counts[static_cast<std::size_t>(idx)];
  }
  return hist;
}

std::string histogram_to_csv(const JointActionHistogram& hist) {
  std::ostringstream os;
  for (std::size_t i = 0; i < hist.dims.size(); ++i) os << "a" << (i + 1) << ",";
  os << "count\n";
  int n = static_cast<int>(hist.dims.size());
  std::vector<int> joint(static_cast<std::size_t>(n), 0);
  for (std::size_t idx = 0; idx < hist.counts.size(); ++idx) {
    int rem = static_cast<int>(idx);
    for (int i = n - 1; i >= 0; --i) {
      joint[static_cast<std::size_t>(i)] = rem % hist.dims[static_cast<std::size_t>(i)];
      rem /= hist.dims[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < n; ++i) os << joint[static_cast<std::size_t>(i)] << ",";
    os << hist.counts[idx] << "\n";
  }
  return os.str();
}

std::string histogram_16x16_csv(const JointActionHistogram& hist) {
  if (hist.dims.size() != 4 || hist.dims[0] != 4) {
    throw std::runtime_error("16x16 heatmap layout requires the 4-agent, 4-action game");
  }
  std::ostringstream os;
  os << "a3a4\\a1a2";
  for (int a1 = 0; a1 < 4; ++a1) {
    for (int a2 = 0; a2 < 4; ++a2) os << ",(" << a1 << " " << a2 << ")";
  }
  os << "\n";
  for (int a3 = 0; a3 < 4; ++a3) {
    for (int a4 = 0; a4 < 4; ++a4) {
      os << "(" << a3 << " " << a4 << ")";
      for (int a1 = 0; a1 < 4; ++a1) {
        for (int a2 = 0; a2 < 4; ++a2) os << "," << hist.count_at({a1, a2, a3, a4});
      }
      os << "\n";
    }
  }
  return os.str();
}

double payoff_fit_error_from_q(const std::vector<double>& q_tot_all, const PayoffTensor& payoff) {
  if (static_cast<int>(q_tot_all.size()) != payoff.joint_count()) {
    throw std::runtime_error("q table size does not match payoff");
  }
  double err = 0.0;
  for (int i = 0; i < payoff.joint_count(); ++i) {
    double d = q_tot_all[static_cast<std::size_t>(i)] - payoff.flat(i);
    err += d * d;
  }
  return err;
}

double shared_policy_xor_return(double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::runtime_error("alpha must be in [0,1]");
  return 2.0 * alpha * (1.0 - alpha);
}

std::vector<double> bridge_state_joint_distribution(const BridgePolicy& policy, const BridgeSpec& spec,
                                                    const BridgeState& state, bool fixed_order) {
  int A = policy.n_actions();
  std::vector<std::vector<double>> obs = {bridge_observe(spec, state, 0), bridge_observe(spec, state, 1)};
  std::vector<double> dist(static_cast<std::size_t>(A * A), 0.0);

  if (policy.repr() != PolicyRepr::auto_regressive) {
    auto p0 = policy.action_probs(0, obs[0], -1);
    auto p1 = policy.action_probs(1, obs[1], -1);
    for (int a = 0; a < A; ++a) {
      for (int b = 0; b < A; ++b) {
        dist[static_cast<std::size_t>(a * A + b)] = p0[static_cast<std::size_t>(a)] * p1[static_cast<std::size_t>(b)];
      }
    }
    return dist;
  }

  std::vector<std::vector<int>> orders = {{0, 1}, {1, 0}};
  if (fixed_order) orders = {{0, 1}};
  double order_weight = 1.0 / static_cast<double>(orders.size());
  for (const auto& order : orders) {
    int first = order[0], second = order[1];
    auto p_first = policy.action_probs(first, obs[static_cast<std::size_t>(first)], -1);
    for (int af = 0; af < A; ++af) {
      int prev = bridge_action_in_frame(first, af, second);
      auto p_second = policy.action_probs(second, obs[static_cast<std::size_t>(second)], prev);
      for (int as = 0; as < A; ++as) {
        int a0 = first == 0 ? af : as;
        int a1 = first == 0 ? as : af;
        dist[static_cast<std::size_t>(a0 * A + a1)] +=
            order_weight * p_first[static_cast<std::size_t>(af)] * p_second[static_cast<std::size_t>(as)];
      }
    }
  }
  return dist;
}

double bridge_state_policy_entropy(const BridgePolicy& policy, const BridgeSpec& spec, const BridgeState& state,
                                   bool fixed_order) {
  std::vector<double> dist = bridge_state_joint_distribution(policy, spec, state, fixed_order);
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

BridgeState bridge_ends_state(const BridgeSpec& spec) {
  BridgeState s;
  s.pos[0] = GridPos{spec.bridge_lo() - 1, 0};
  s.pos[1] = GridPos{spec.bridge_hi() + 1, 0};
  s.done = {false, false};
  s.t = 2;  // any mid-episode timestep; dynamics do not depend on t
  return s;
}

}  // namespace marlab
