#pragma once

#include <functional>
#include <vector>

#include "marlab/env.hpp"
#include "marlab/mixers.hpp"
#include "marlab/rng.hpp"

namespace marlab {

struct Transition {
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
  std::vector<int> actions;  // local frames
  double reward = 0.0;       // team reward
  std::vector<std::vector<double>> next_obs;
  std::vector<double> next_state;
  bool done = false;
};

// Ring buffer with FIFO eviction and uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(Transition t);
  int size() const { return static_cast<int>(storage_.size()); }
  int capacity() const { return capacity_; }
  const Transition& at(int i) const { return storage_[static_cast<std::size_t>(i)]; }

  std::vector<int> sample_indices(int batch, Rng& rng) const;

 private:
  int capacity_;
  int next_ = 0;
  std::vector<Transition> storage_;
};

struct QLearnConfig {
  double gamma = 0.99;
  int target_update_interval = 50;  // hard copy cadence, in optimizer steps
  double learning_rate = 5e-4;
  double grad_norm_clip = 10.0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  int eps_decay_steps = 0;  // 0 -> first half of total_steps
  int batch_size = 32;
  int replay_capacity = 10000;
  int total_steps = 20000;   // environment steps
  int warmup_steps = 200;    // transitions before training starts
  int train_interval = 1;    // env steps between optimizer steps
  int record_interval = 100; // metric cadence, in env steps

  double epsilon_at(int step) const;
};

struct QLearnRecord {
  std::vector<std::pair<int, double>> curve;  // (env step, metric)
};

// Per-agent epsilon-greedy over the model's local Q-values.
std::vector<int> eps_greedy_actions(const VdModel& model, const std::vector<std::vector<double>>& obs, double eps,
                                    Rng& rng);

// Greedy (IGM) episode return on a fresh environment instance.
double vd_greedy_return(const VdModel& model, Env& env);

// Deep Q-learning with a hard-updated target network and MSE TD loss.
// For the stateless XOR game the TD target degenerates to the immediate
// reward; the recorded metric is the Q_tot-vs-payoff error. For episodic
// environments the metric is the greedy evaluation return. Aborts on
// non-finite loss. on_train_step observes (optimizer step count, target
// copy) after each update.
QLearnRecord qlearn(VdModel& model, Env& env, const QLearnConfig& config, Rng& rng,
                    const std::function<void(int, const VdModel&)>& on_record = nullptr,
                    const std::function<void(int, const VdModel&)>& on_train_step = nullptr);

}  // namespace marlab
