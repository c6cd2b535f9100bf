#pragma once

#include <functional>
#include <vector>

#include "marlab/matrix_game.hpp"
#include "marlab/optim.hpp"
#include "marlab/policies.hpp"

namespace marlab {

struct ReinforceConfig {
  int updates = 5000;
  int batch_episodes = 128;
  double learning_rate = 0.05;
  double entropy_coef = 0.01;  // 0.05 for the auto-regressive representation
  double grad_norm_clip = 10.0;
  bool multi_step = true;        // prefix weighting for the AR factorization
  bool randomized_order = true;  // resample the execution order each episode
  int record_interval = 50;
};

struct ReinforcePoint {
  int update = 0;
  double expected_return = 0.0;  // exact, by enumeration
  double entropy = 0.0;          // exact trajectory entropy, nats
};

struct ReinforceRecord {
  std::vector<ReinforcePoint> curve;
};

// Exact expected return of the policy's joint distribution.
double exact_expected_return(const MatrixPolicy& policy, const PayoffTensor& payoff, bool randomized_order);

// REINFORCE with a batch-mean baseline and an entropy bonus. For the AR
// representation each prefix of the execution order contributes its members'
// log-prob gradients, so the agent at position i (0-based) carries weight
// n - i.
ReinforceRecord train_reinforce(MatrixPolicy& policy, const MatrixGameSpec& game, const ReinforceConfig& config,
                                Rng& rng,
                                const std::function<void(const ReinforcePoint&)>& on_record = nullptr);

}  // namespace marlab
