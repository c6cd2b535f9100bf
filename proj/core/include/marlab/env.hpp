#pragma once

#include <memory>
#include <vector>

#include "marlab/bridge.hpp"
#include "marlab/matrix_game.hpp"

namespace marlab {

struct EnvStep {
  std::vector<double> rewards;            // per-agent contributions
  double team_reward = 0.0;               // cooperative training signal
  std::vector<std::vector<double>> obs;   // per-agent, in each agent's local frame
  bool episode_done = false;
};

// Episodic multi-agent environment as seen by learners: observations and
// actions are in each agent's local (possibly mirrored) frame. Environments
// are deterministic state machines; all exploration randomness belongs to
// the caller.
class Env {
 public:
  virtual ~Env() = default;

  virtual int n_agents() const = 0;
  virtual int n_actions() const = 0;
  virtual int obs_dim() const = 0;
  virtual int state_dim() const = 0;

  virtual std::vector<std::vector<double>> reset() = 0;
  virtual EnvStep step(const std::vector<int>& local_actions) = 0;
  virtual std::vector<double> state() const = 0;  // centralized critic input
  virtual bool done() const = 0;
  virtual int timestep() const = 0;

  virtual std::unique_ptr<Env> clone_spec() const = 0;  // fresh instance, same spec
};

// Stateless matrix game: a single joint action ends the episode. The
// observation is a constant placeholder (policies for these games are
// tables, conditioned on agent identity only).
class MatrixGameEnv : public Env {
 public:
  explicit MatrixGameEnv(MatrixGameSpec spec) : spec_(std::move(spec)) {}

  int n_agents() const override { return spec_.n_agents; }
  int n_actions() const override { return spec_.n_actions; }
  int obs_dim() const override { return 1; }
  int state_dim() const override { return 1; }

  std::vector<std::vector<double>> reset() override;
  EnvStep step(const std::vector<int>& local_actions) override;
  std::vector<double> state() const override { return {1.0}; }
  bool done() const override { return done_; }
  int timestep() const override { return done_ ? 1 : 0; }
  std::unique_ptr<Env> clone_spec() const override { return std::make_unique<MatrixGameEnv>(spec_); }

  const MatrixGameSpec& spec() const { return spec_; }

 private:
  MatrixGameSpec spec_;
  bool done_ = false;
};

// Bridge adapter: mirrors both observations and the left/right actions for
// agent 1, making the two seats interchangeable for shared-parameter
// learners.
class BridgeEnv : public Env {
 public:
  explicit BridgeEnv(BridgeSpec spec) : spec_(spec) { state_ = bridge_reset(spec_); }

  int n_agents() const override { return 2; }
  int n_actions() const override { return kBridgeActionCount; }
  int obs_dim() const override { return 6; }
  int state_dim() const override { return 6; }

  std::vector<std::vector<double>> reset() override;
  EnvStep step(const std::vector<int>& local_actions) override;
  std::vector<double> state() const override { return bridge_global_state(spec_, state_); }
  bool done() const override;
  int timestep() const override { return state_.t; }
  std::unique_ptr<Env> clone_spec() const override { return std::make_unique<BridgeEnv>(spec_); }

  const BridgeSpec& spec() const { return spec_; }
  const BridgeState& raw_state() const { return state_; }
  void set_state(const BridgeState& s) { state_ = s; }

 private:
  BridgeSpec spec_;
  BridgeState state_;
};

}  // namespace marlab
