#pragma once

#include <array>
#include <vector>

#include "marlab/tensor.hpp"

namespace marlab {

// Two-row grid: row 0 is a corridor of `length` cells whose middle
// length-4 cells form the one-wide bridge; row 1 exists only at the two
// waiting columns flanking the bridge ends. Agents spawn at the corridor
// corners and must swap sides.
struct BridgeSpec {
  int length = 7;          // corridor length L (>= 5 for the 2-agent game)
  int horizon = 50;        // H
  double distance_cost = 0.01;
  double gamma = 0.99;     // used by learners, not by the dynamics
  int n_agents = 2;        // 1 allowed for oracle sanity checks

  int bridge_lo() const { return 2; }             // first bridge column
  int bridge_hi() const { return length - 3; }    // last bridge column
  std::array<int, 2> waiting_columns() const { return {1, length - 2}; }
  void validate() const;
};

struct GridPos {
  int col = 0;
  int row = 0;
  bool operator==(const GridPos&) const = default;
};

struct BridgeState {
  std::array<GridPos, 2> pos;
  std::array<bool, 2> done = {false, false};
  int t = 0;
};

enum BridgeAction : int {
  kIdle = 0,
  kUp = 1,     // row - 1 (waiting cell -> corridor)
  kDown = 2,   // row + 1 (corridor -> waiting cell)
  kLeft = 3,
  kRight = 4,
};
inline constexpr int kBridgeActionCount = 5;

struct BridgeStepResult {
  std::array<double, 2> rewards = {0.0, 0.0};  // -c * pre-move distance, 0 once done
  BridgeState next;
  std::vector<std::vector<double>> obs;
  bool episode_done = false;

  double team_reward() const { return rewards[0] + rewards[1]; }
};

bool bridge_cell_valid(const BridgeSpec& spec, GridPos p);
GridPos bridge_spawn(const BridgeSpec& spec, int agent);
GridPos bridge_goal(const BridgeSpec& spec, int agent);

BridgeState bridge_reset(const BridgeSpec& spec);

// Simultaneous moves with symmetric conflict rules: two movers targeting one
// cell both stay, swaps are forbidden, and a move into an occupied cell whose
// occupant stays is blocked. Actions are in the global frame; actions of done
// agents are ignored.
BridgeStepResult bridge_step(const BridgeSpec& spec, const BridgeState& state, const std::array<int, 2>& joint_action);

// 6-dim [self, goal, ally] view, left-right mirrored for agent 1 so the two
// sides see the game identically; dead ally slot is the (-1,-1) sentinel.
std::vector<double> bridge_observe(const BridgeSpec& spec, const BridgeState& state, int agent);

// Local action frames mirror left/right for agent 1, matching the mirrored
// observations.
int bridge_to_global_action(int agent, int local_action);

// Global critic input: unmirrored positions plus done flags.
std::vector<double> bridge_global_state(const BridgeSpec& spec, const BridgeState& state);

// Exact optimal undiscounted episode return by backward induction over the
// joint MDP.
double bridge_optimal_return(const BridgeSpec& spec);

// One optimal open-loop joint plan (global-frame actions), extracted by
// greedy decoding of the DP value tables. Executing it from reset attains
// bridge_optimal_return exactly.
std::vector<std::array<int, 2>> bridge_optimal_plan(const BridgeSpec& spec);

// Brute force over all deterministic open-loop joint plans; only for tiny
// horizons (cost grows as 25^H). Test oracle for bridge_optimal_return.
double bridge_best_open_loop_return(const BridgeSpec& spec, int max_horizon);

}  // namespace marlab
