#pragma once

#include <memory>
#include <string>
#include <vector>

#include "marlab/matrix_game.hpp"
#include "marlab/nn.hpp"
#include "marlab/optim.hpp"

namespace marlab {

enum class MixerKind { vdn, qmix, qplex };

const char* mixer_kind_name(MixerKind kind);
MixerKind mixer_kind_from_name(const std::string& name);

// Mixing function f_mix(Q_1..Q_n; s) -> Q_tot, batched.
//
//   q_chosen [B,n]  local Q of the taken actions
//   q_max    [B,n]  per-agent max over actions (qplex dueling term)
//   state    [B,S]  centralized state (constant 1 for stateless games)
//   joint_actions   B rows of n action ids (qplex attention keys)
//
// Returns a [B] node.
class Mixer {
 public:
  virtual ~Mixer() = default;
  virtual MixerKind kind() const = 0;
  virtual int q_tot_node(Tape& t, int q_chosen, int q_max, int state_node,
                         const std::vector<std::vector<int>>& joint_actions) const = 0;
};

// Weighted sum with one trainable weight per agent.
std::unique_ptr<Mixer> make_vdn(ParamStore& ps, int n_agents, Rng& rng);
// Monotonic mixing network; hypernets with one 64-unit hidden layer emit
// |weights| >= 0 from the state.
std::unique_ptr<Mixer> make_qmix(ParamStore& ps, int n_agents, int state_dim, Rng& rng);
// Duplex dueling: positive state-conditioned transform (w_i > 0, b_i) of
// local values plus 4-head attention importance weights lambda_i(s,a) > 0
// over local advantages.
std::unique_ptr<Mixer> make_qplex(ParamStore& ps, int n_agents, int n_actions, int state_dim, Rng& rng);

std::unique_ptr<Mixer> make_mixer(MixerKind kind, ParamStore& ps, int n_agents, int n_actions, int state_dim,
                                  Rng& rng);

// Local Q representation plus a mixer, sharing one ParamStore so the whole
// model trains and target-copies as a unit.
class VdModel {
 public:
  // Stateless games: local Q is a table of n_agents x n_actions scalars.
  // optimistic_init centers the local table on the best payoff; the
  // epsilon-greedy learners use it so early greedy picks get disconfirmed
  // instead of freezing in. The supervised payoff fit starts plain-centered.
  static VdModel stateless(MixerKind kind, int n_agents, int n_actions, Rng& rng, bool optimistic_init = false);
  // Bridge: shared 2-hidden-layer MLP over the 6-dim observation, optionally
  // ID-conditioned.
  static VdModel bridge_net(MixerKind kind, int obs_dim, int n_actions, int n_agents, int state_dim,
                            bool id_conditioned, Rng& rng);

  VdModel(VdModel&&) = default;
  VdModel& operator=(VdModel&&) = default;

  // Identical architecture with copied parameter values (target network).
  VdModel clone() const;
  void copy_params_from(const VdModel& other) { params_.copy_values_from(other.params_); }

  // Local Q-values for one agent: [B, n_actions] node. obs rows are in the
  // agent's local frame; the table variant ignores them.
  int local_q_node(Tape& t, int agent, const std::vector<std::vector<double>>& obs_batch) const;

  // Plain evaluation of local Q-values for one agent in one state.
  std::vector<double> local_q_values(int agent, const std::vector<double>& obs) const;

  // Q_tot for a batch of (obs, state, joint action).
  int q_tot_node(Tape& t, const std::vector<std::vector<std::vector<double>>>& obs_per_agent,
                 const std::vector<std::vector<double>>& states,
                 const std::vector<std::vector<int>>& joint_actions) const;

  // Q_tot over every joint action of a stateless game: [#joint] node.
  int q_tot_all_joint_node(Tape& t, const PayoffTensor& payoff) const;
  std::vector<double> q_tot_all_joint(const PayoffTensor& payoff) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  MixerKind kind() const { return kind_; }
  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  bool id_conditioned() const { return id_conditioned_; }

 private:
  VdModel() = default;
  void build(Rng& rng);

  ParamStore params_;
  MixerKind kind_ = MixerKind::vdn;
  bool stateless_ = true;
  bool optimistic_init_ = false;
  bool id_conditioned_ = false;
  int n_agents_ = 2;
  int n_actions_ = 2;
  int state_dim_ = 1;
  int obs_dim_ = 1;
  int local_table_ = -1;  // stateless variant
  Mlp local_net_;         // network variant
  std::unique_ptr<Mixer> mixer_;
};

// Per-agent argmax; ties break toward the lowest action index.
std::vector<int> igm_greedy(const std::vector<std::vector<double>>& local_qs);

// A_tot(a) = Q_tot(a) - max_a' Q_tot(a') over an exhaustive joint-action table.
double advantage_tot(const std::vector<double>& q_tot_all, int joint_index);

// Sum over all joint actions of (Q_tot - payoff)^2.
double payoff_fit_error(const VdModel& model, const PayoffTensor& payoff);

struct FitResult {
  std::vector<double> error_curve;  // total squared error per step
  double final_error = 0.0;
};

// Uniform regression of Q_tot onto the payoff: all entries every step,
// SGD on the mean squared error. Aborts if the error exceeds 1e6.
FitResult fit_payoff(VdModel& model, const PayoffTensor& payoff, int steps, double lr);

}  // namespace marlab
