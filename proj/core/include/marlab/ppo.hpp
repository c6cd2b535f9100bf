#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "marlab/env.hpp"
#include "marlab/optim.hpp"
#include "marlab/policies.hpp"

namespace marlab {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double ppo_clip = 0.2;
  double value_clip = 0.2;
  double huber_delta = 10.0;
  double entropy_coef = 0.01;  // 0.05 for the auto-regressive representation
  double learning_rate = 5e-4;
  double grad_norm_clip = 10.0;
  int ppo_epochs = 5;
  int batch_steps = 3200;  // environment steps per rollout batch
  int n_envs = 32;         // parallel environment instances feeding one batch
  double value_loss_coef = 1.0;
  bool multi_step = true;        // AR prefix weighting
  bool randomized_order = true;  // AR execution order per timestep
};

// Running mean/variance of return targets (Welford). The critic is trained
// on normalized targets and its outputs are de-normalized for GAE.
class RunningNormalizer {
 public:
  void update(const std::vector<double>& xs);
  double mean() const { return count_ > 0 ? mean_ : 0.0; }
  double stddev() const;
  double normalize(double x) const { return (x - mean()) / stddev(); }
  double denormalize(double v) const { return v * stddev() + mean(); }
  long long count() const { return count_; }

 private:
  long long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// GAE over one episode-ordered stream. done[t] marks episode ends;
// bootstrap_value is V(s_T) for a truncated final segment.
void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<bool>& done, double bootstrap_value, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns);

struct PpoIterStats {
  int iteration = 0;
  int env_steps = 0;            // cumulative
  int episodes = 0;             // completed this iteration
  double mean_episode_return = 0.0;
  double entropy_mc = 0.0;      // -mean joint log prob over completed episodes
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

// PPO with a centralized critic on the Bridge game. Rollouts come from
// n_envs deterministic environment instances stepped in lockstep.
class PpoTrainer {
 public:
  PpoTrainer(std::unique_ptr<BridgePolicy> policy, const BridgeSpec& spec, const PpoConfig& config, Rng& rng);

  PpoIterStats iterate();

  BridgePolicy& policy() { return *policy_; }
  const BridgePolicy& policy() const { return *policy_; }
  const PpoConfig& config() const { return config_; }
  const RunningNormalizer& value_normalizer() const { return normalizer_; }

 private:
  struct Decision {
    int agent = 0;
    std::vector<double> obs;
    int prev_action = -1;  // predecessor's action in this agent's frame
    int taken = 0;
    double logp_old = 0.0;
    int order_pos = 0;
  };
  struct StepRecord {
    std::vector<double> state;
    std::array<Decision, 2> decisions;
    double reward = 0.0;
    bool done = false;
    double value = 0.0;
  };

  void collect();

  BridgeSpec spec_;
  PpoConfig config_;
  std::unique_ptr<BridgePolicy> policy_;
  ParamStore critic_params_;
  Mlp critic_;
  Optimizer actor_opt_;
  Optimizer critic_opt_;
  RunningNormalizer normalizer_;
  Rng& rng_;

  std::vector<std::unique_ptr<BridgeEnv>> envs_;
  std::vector<std::vector<std::vector<double>>> obs_;  // [env][agent][6]
  std::vector<double> run_return_;                      // per-env accumulators
  std::vector<double> run_logp_;
  std::vector<std::vector<StepRecord>> batch_;          // [env][T]
  std::vector<double> bootstrap_;
  std::vector<double> episode_returns_;
  std::vector<double> episode_logps_;
  int iteration_ = 0;
  int env_steps_ = 0;
};

// Converts a predecessor's local action into the observing agent's frame.
int bridge_action_in_frame(int predecessor, int pred_local_action, int observer);

// One joint action at the given observations, sampled (or argmax) along an
// execution order; logps are the per-agent log probabilities.
JointActionSample bridge_sample_joint(const BridgePolicy& policy, const std::vector<std::vector<double>>& obs,
                                      const std::vector<int>& order, Rng& rng, bool deterministic);

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;  // across episodes
  std::vector<double> returns;
};

// Mean undiscounted episode return of a Bridge policy. deterministic picks
// argmax actions; otherwise actions are sampled. The AR execution order is
// randomized per step unless fixed_order is set.
EvalResult eval_bridge_policy(const BridgePolicy& policy, const BridgeSpec& spec, int episodes, bool deterministic,
                              Rng& rng, bool fixed_order = false);

}  // namespace marlab
