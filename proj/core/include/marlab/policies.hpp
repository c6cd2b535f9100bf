#pragma once

#include <memory>
#include <string>
#include <vector>

#include "marlab/nn.hpp"
#include "marlab/rng.hpp"

namespace marlab {

// Four joint-policy factorizations:
//   shared          one parameter set, same distribution for every agent
//   individual      disjoint parameters per agent
//   id_conditioned  shared parameters, one-hot agent ID appended to the input
//   auto_regressive agents act along an execution order, conditioning on
//                   predecessors' actions
enum class PolicyRepr { shared, individual, id_conditioned, auto_regressive };

const char* policy_repr_name(PolicyRepr r);
PolicyRepr policy_repr_from_name(const std::string& name);

// Uniformly random execution order (a permutation of 0..n-1).
std::vector<int> sample_execution_order(int n, Rng& rng);

struct JointActionSample {
  std::vector<int> actions;        // indexed by agent
  std::vector<double> logps;       // log prob of each agent's action, by agent
  std::vector<int> order;          // execution order used
};

// Policies for stateless matrix games: logit tables. The auto-regressive
// table conditions each agent on the set of actions already taken by its
// predecessors.
class MatrixPolicy {
 public:
  MatrixPolicy(PolicyRepr repr, int n_agents, int n_actions, Rng& rng);

  PolicyRepr repr() const { return repr_; }
  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Row of the logit table for (agent, predecessor-action set).
  int table_row(int agent, int used_action_mask) const;
  int table_param() const { return table_; }

  // Batched logits node: one row per (agent, mask) query.
  int logits_node(Tape& t, const std::vector<int>& agents, const std::vector<int>& masks) const;

  std::vector<double> action_probs(int agent, int used_action_mask) const;

  JointActionSample sample_joint(const std::vector<int>& order, Rng& rng) const;
  double joint_logprob(const std::vector<int>& order, const std::vector<int>& joint_action) const;

  // Exact joint-action distribution (size n_actions^n). With
  // randomized_order the auto-regressive policy is the uniform mixture over
  // all n! orders; other representations ignore the flag.
  std::vector<double> joint_distribution(bool randomized_order) const;

  // Sets the auto-regressive table to the uniform-over-unused-actions
  // construction (requires n_actions == n_agents): the joint distribution is
  // uniform over all n! permutations.
  void set_uniform_permutation_construction();

 private:
  PolicyRepr repr_;
  int n_agents_;
  int n_actions_;
  ParamStore params_;
  int table_ = -1;
};

// Actor for the Bridge game. The auto-regressive representation uses the
// attention backbone (observation split into self/goal/ally slots, the
// predecessor's action embedded onto the ally slot) or a flat MLP variant
// for the no-attention ablation.
class BridgePolicy {
 public:
  enum class Backbone { mlp, attention };

  BridgePolicy(PolicyRepr repr, Backbone backbone, int n_agents, Rng& rng);

  PolicyRepr repr() const { return repr_; }
  Backbone backbone() const { return backbone_; }
  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Batched per-decision logits. prev_actions[i] is the local action of the
  // agent's predecessor in the execution order, or -1 when acting first
  // (non-AR representations ignore it).
  int logits_node(Tape& t, const std::vector<int>& agents, const std::vector<std::vector<double>>& obs,
                  const std::vector<int>& prev_actions) const;

  std::vector<double> action_probs(int agent, const std::vector<double>& obs, int prev_action) const;

 private:
  int ar_input_dim() const;

  PolicyRepr repr_;
  Backbone backbone_;
  int n_agents_;
  int n_actions_ = 5;
  int obs_dim_ = 6;
  ParamStore params_;

  std::vector<Mlp> mlps_;  // 1 (shared/id/ar-mlp) or n (individual)

  // attention backbone
  Linear embed_self_, embed_goal_, embed_ally_;
  Embedding embed_action_;
  AttentionBlock block_;
  Linear head_;
};

}  // namespace marlab
