#pragma once

#include <string>
#include <vector>

#include "marlab/mixers.hpp"
#include "marlab/policies.hpp"
#include "marlab/ppo.hpp"

namespace marlab {

enum class EntropyMethod { exact_enumeration, monte_carlo };

struct EntropyEstimate {
  double value = 0.0;  // nats
  EntropyMethod method = EntropyMethod::exact_enumeration;
  long samples = 0;
  double std_error = 0.0;  // monte carlo only
};

// H(pi) = -E_tau[log p(tau)] of a matrix-game policy. For the AR
// representation with randomized execution order, p is the uniform mixture
// over all orders.
EntropyEstimate trajectory_entropy_exact(const MatrixPolicy& policy, bool randomized_order);
EntropyEstimate trajectory_entropy_mc(const MatrixPolicy& policy, bool randomized_order, int samples, Rng& rng);

struct JointActionHistogram {
  std::vector<int> dims;      // n_actions per agent
  std::vector<long> counts;   // flat, row-major over joint actions
  long episodes = 0;

  long count_at(const std::vector<int>& joint) const;
  long total() const;
};

JointActionHistogram joint_action_histogram(const MatrixPolicy& policy, const MatrixGameSpec& game, int episodes,
                                            Rng& rng, bool randomized_order);

// CSV rows a1,...,an,count.
std::string histogram_to_csv(const JointActionHistogram& hist);
// 4-agent layout matching the paper's heatmap axes: 16 columns indexed by
// (a1,a2), 16 rows indexed by (a3,a4).
std::string histogram_16x16_csv(const JointActionHistogram& hist);

// Sum over joint actions of (q_tot - payoff)^2 for a precomputed Q table.
double payoff_fit_error_from_q(const std::vector<double>& q_tot_all, const PayoffTensor& payoff);

// Expected XOR return of a shared policy that picks action 0 with
// probability alpha: 2*alpha*(1-alpha).
double shared_policy_xor_return(double alpha);

// Exact joint action distribution of a Bridge policy at one state (25 joint
// actions in local frames). With randomized execution order an AR policy is
// the uniform mixture over the two orders; fixed_order conditions on the
// order (0 then 1), isolating the policy's own stochasticity from the
// order randomness.
std::vector<double> bridge_state_joint_distribution(const BridgePolicy& policy, const BridgeSpec& spec,
                                                    const BridgeState& state, bool fixed_order = false);

// Entropy (nats) of that distribution.
double bridge_state_policy_entropy(const BridgePolicy& policy, const BridgeSpec& spec, const BridgeState& state,
                                   bool fixed_order = false);

// The ablation-table probe state: both agents alive on the corridor cells
// immediately before their near bridge entrance.
BridgeState bridge_ends_state(const BridgeSpec& spec);

}  // namespace marlab
