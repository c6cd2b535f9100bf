#include "marlab/env.hpp"

#include <stdexcept>

namespace marlab {

std::vector<std::vector<double>> MatrixGameEnv::reset() {
  done_ = false;
  return std::vector<std::vector<double>>(static_cast<std::size_t>(spec_.n_agents), std::vector<double>{1.0});
}

EnvStep MatrixGameEnv::step(const std::vector<int>& local_actions) {
  if (done_) throw std::runtime_error("matrix game episode already finished");
  double r = spec_.payoff.at(local_actions);
  done_ = true;
  EnvStep s;
  s.rewards.assign(static_cast<std::size_t>(spec_.n_agents), r / spec_.n_agents);
  s.team_reward = r;
  s.obs = std::vector<std::vector<double>>(static_cast<std::size_t>(spec_.n_agents), std::vector<double>{1.0});
  s.episode_done = true;
  return s;
}

std::vector<std::vector<double>> BridgeEnv::reset() {
  state_ = bridge_reset(spec_);
  return {bridge_observe(spec_, state_, 0), bridge_observe(spec_, state_, 1)};
}

EnvStep BridgeEnv::step(const std::vector<int>& local_actions) {
  if (local_actions.size() != 2) throw std::runtime_error("bridge expects 2 actions");
  std::array<int, 2> global{bridge_to_global_action(0, local_actions[0]), bridge_to_global_action(1, local_actions[1])};
  BridgeStepResult r = bridge_step(spec_, state_, global);
  state_ = r.next;
  EnvStep s;
  s.rewards = {r.rewards[0], r.rewards[1]};
  s.team_reward = r.team_reward();
  s.obs = std::move(r.obs);
  s.episode_done = r.episode_done;
  return s;
}

bool BridgeEnv::done() const {
  return (state_.done[0] && state_.done[1]) || state_.t >= spec_.horizon;
}

}  // namespace marlab
