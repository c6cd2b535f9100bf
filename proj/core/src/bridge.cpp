#include "marlab/bridge.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace marlab {

void BridgeSpec::validate() const {
  if (n_agents != 1 && n_agents != 2) throw std::runtime_error("bridge supports 1 or 2 agents");
  int min_len = n_agents == 2 ? 5 : 2;
  if (length < min_len) throw std::runtime_error("bridge corridor too short: " + std::to_string(length));
  if (horizon < 1) throw std::runtime_error("bridge horizon must be >= 1");
  if (distance_cost < 0.0) throw std::runtime_error("bridge distance cost must be >= 0");
}

bool bridge_cell_valid(const BridgeSpec& spec, GridPos p) {
  if (p.row == 0) return p.col >= 0 && p.col < spec.length;
  if (p.row == 1) {
    if (spec.length < 5) return false;  // degenerate instances have no waiting cells
    auto wc = spec.waiting_columns();
    return p.col == wc[0] || p.col == wc[1];
  }
  return false;
}

GridPos bridge_spawn(const BridgeSpec& spec, int agent) {
  return agent == 0 ? GridPos{0, 0} : GridPos{spec.length - 1, 0};
}

GridPos bridge_goal(const BridgeSpec& spec, int agent) {
  // Each agent's goal is the other agent's spawn.
  return agent == 0 ? GridPos{spec.length - 1, 0} : GridPos{0, 0};
}

BridgeState bridge_reset(const BridgeSpec& spec) {
  spec.validate();
  BridgeState s;
  s.pos = {bridge_spawn(spec, 0), bridge_spawn(spec, 1)};
  s.done = {false, false};
  if (spec.n_agents == 1) s.done[1] = true;
  s.t = 0;
  return s;
}

namespace {

GridPos apply_move(GridPos p, int action) {
  switch (action) {
    case kIdle: return p;
    case kUp: return GridPos{p.col, p.row - 1};
    case kDown: return GridPos{p.col, p.row + 1};
    case kLeft: return GridPos{p.col - 1, p.row};
    case kRight: return GridPos{p.col + 1, p.row};
    default: throw std::runtime_error("malformed bridge action index " + std::to_string(action));
  }
}

int manhattan(GridPos a, GridPos b) { return std::abs(a.col - b.col) + std::abs(a.row - b.row); }

}  // namespace

BridgeStepResult bridge_step(const BridgeSpec& spec, const BridgeState& state, const std::array<int, 2>& joint_action) {
  if (state.t >= spec.horizon || (state.done[0] && state.done[1])) {
    throw std::runtime_error("bridge_step called on a terminal state");
  }

  BridgeStepResult res;
  // Penalty uses the pre-move distance, so every step before arrival costs.
  for (int i = 0; i < 2; ++i) {
    if (!state.done[i]) res.rewards[i] = -spec.distance_cost * manhattan(state.pos[i], bridge_goal(spec, i));
  }

  std::array<GridPos, 2> intended = state.pos;
  for (int i = 0; i < 2; ++i) {
    if (state.done[i]) continue;  // contract: actions of done agents are ignored
    GridPos target = apply_move(state.pos[i], joint_action[i]);
    if (bridge_cell_valid(spec, target)) intended[i] = target;
  }

  bool both_live = !state.done[0] && !state.done[1];
  if (both_live) {
    if (intended[0] == intended[1]) {
      intended = state.pos;  // same target (or move into a stayer): both stay
    } else if (intended[0] == state.pos[1] && intended[1] == state.pos[0]) {
      intended = state.pos;  // swap forbidden
    }
  }

  BridgeState next = state;
  next.pos = intended;
  for (int i = 0; i < 2; ++i) {
    if (!next.done[i] && next.pos[i] == bridge_goal(spec, i)) next.done[i] = true;
  }
  next.t = state.t + 1;

  res.episode_done = (next.done[0] && next.done[1]) || next.t >= spec.horizon;
  res.obs.resize(2);
  for (int i = 0; i < 2; ++i) res.obs[static_cast<std::size_t>(i)] = bridge_observe(spec, next, i);
  res.next = next;
  return res;
}

std::vector<double> bridge_observe(const BridgeSpec& spec, const BridgeState& state, int agent) {
  auto view = [&](GridPos p) -> GridPos {
    return agent == 1 ? GridPos{spec.length - 1 - p.col, p.row} : p;
  };
  int ally = 1 - agent;
  std::vector<double> obs(6);
  GridPos self = view(state.pos[agent]);
  GridPos goal = view(bridge_goal(spec, agent));
  obs[0] = self.col;
  obs[1] = self.row;
  obs[2] = goal.col;
  obs[3] = goal.row;
  if (state.done[ally]) {
    obs[4] = -1.0;
    obs[5] = -1.0;
  } else {
    GridPos ap = view(state.pos[ally]);
    obs[4] = ap.col;
    obs[5] = ap.row;
  }
  return obs;
}

int bridge_to_global_action(int agent, int local_action) {
  if (local_action < 0 || local_action >= kBridgeActionCount) {
    throw std::runtime_error("malformed bridge action index " + std::to_string(local_action));
  }
  if (agent == 1) {
    if (local_action == kLeft) return kRight;
    if (local_action == kRight) return kLeft;
  }
  return local_action;
}

std::vector<double> bridge_global_state(const BridgeSpec& spec, const BridgeState& state) {
  (void)spec;
  std::vector<double> s(6);
  for (int i = 0; i < 2; ++i) {
    s[static_cast<std::size_t>(2 * i)] = state.pos[i].col;
    s[static_cast<std::size_t>(2 * i + 1)] = state.pos[i].row;
    s[static_cast<std::size_t>(4 + i)] = state.done[i] ? 1.0 : 0.0;
  }
  return s;
}

namespace {

// Dense cell ids: corridor cells 0..L-1, then waiting cells.
struct CellIndex {
  std::vector<GridPos> cells;
  int id(GridPos p) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] == p) return static_cast<int>(i);
    }
    throw std::runtime_error("invalid bridge cell");
  }
};

CellIndex enumerate_cells(const BridgeSpec& spec) {
  CellIndex ci;
  for (int c = 0; c < spec.length; ++c) ci.cells.push_back({c, 0});
  if (spec.length >= 5) {
    auto wc = spec.waiting_columns();
    ci.cells.push_back({wc[0], 1});
    if (wc[1] != wc[0]) ci.cells.push_back({wc[1], 1});
  }
  return ci;
}

}  // namespace

namespace {

struct JointDp {
  CellIndex cells;
  int nstates = 0;
  std::vector<std::vector<double>> value;  // [t][code], t in 0..H

  int encode(const BridgeSpec& spec, const BridgeState& s) const {
    int done_id = static_cast<int>(cells.cells.size());
    int a = s.done[0] ? done_id : cells.id(s.pos[0]);
    int b = s.done[1] ? done_id : cells.id(s.pos[1]);
    (void)spec;
    return a * nstates + b;
  }
};

JointDp solve_joint_dp(const BridgeSpec& spec) {
  spec.validate();
  JointDp dp;
  dp.cells = enumerate_cells(spec);
  int ncells = static_cast<int>(dp.cells.cells.size());
  dp.nstates = ncells + 1;  // + done sentinel per agent
  const int kDone = ncells;
  int ncodes = dp.nstates * dp.nstates;

  auto decode = [&](int code, int t) {
    BridgeState s;
    int a = code / dp.nstates, b = code % dp.nstates;
    s.done[0] = a == kDone;
    s.done[1] = b == kDone;
    if (!s.done[0]) s.pos[0] = dp.cells.cells[static_cast<std::size_t>(a)];
    if (!s.done[1]) s.pos[1] = dp.cells.cells[static_cast<std::size_t>(b)];
    // Done agents sit on their goals; position is ignored by dynamics.
    if (s.done[0]) s.pos[0] = bridge_goal(spec, 0);
    if (s.done[1]) s.pos[1] = bridge_goal(spec, 1);
    s.t = t;
    return s;
  };

  dp.value.assign(static_cast<std::size_t>(spec.horizon + 1), std::vector<double>(static_cast<std::size_t>(ncodes), 0.0));
  for (int t = spec.horizon - 1; t >= 0; --t) {
    for (int code = 0; code < ncodes; ++code) {
      BridgeState s = decode(code, t);
      if (s.done[0] && s.done[1]) continue;
      if (!s.done[0] && !s.done[1] && s.pos[0] == s.pos[1]) continue;  // unreachable overlap
      double best = -1e300;
      for (int a0 = 0; a0 < kBridgeActionCount; ++a0) {
        for (int a1 = 0; a1 < kBridgeActionCount; ++a1) {
          BridgeStepResult r = bridge_step(spec, s, {a0, a1});
          double total = r.team_reward();
          if (!r.episode_done) total += dp.value[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(dp.encode(spec, r.next))];
          if (total > best) best = total;
          if (s.done[1]) break;  // second agent's action is ignored
        }
        if (s.done[0]) break;
      }
      dp.value[static_cast<std::size_t>(t)][static_cast<std::size_t>(code)] = best;
    }
  }
  return dp;
}

}  // namespace

double bridge_optimal_return(const BridgeSpec& spec) {
  JointDp dp = solve_joint_dp(spec);
  return dp.value[0][static_cast<std::size_t>(dp.encode(spec, bridge_reset(spec)))];
}

std::vector<std::array<int, 2>> bridge_optimal_plan(const BridgeSpec& spec) {
  JointDp dp = solve_joint_dp(spec);
  std::vector<std::array<int, 2>> plan;
  BridgeState s = bridge_reset(spec);
  for (int t = 0; t < spec.horizon; ++t) {
    if (s.done[0] && s.done[1]) break;
    double best = -1e300;
    std::array<int, 2> best_a{0, 0};
    for (int a0 = 0; a0 < kBridgeActionCount; ++a0) {
      for (int a1 = 0; a1 < kBridgeActionCount; ++a1) {
        BridgeStepResult r = bridge_step(spec, s, {a0, a1});
        double total = r.team_reward();
        if (!r.episode_done) total += dp.value[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(dp.encode(spec, r.next))];
        if (total > best) {
          best = total;
          best_a = {a0, a1};
        }
        if (s.done[1]) break;
      }
      if (s.done[0]) break;
    }
    plan.push_back(best_a);
    s = bridge_step(spec, s, best_a).next;
  }
  return plan;
}

double bridge_best_open_loop_return(const BridgeSpec& spec, int max_horizon) {
  spec.validate();
  if (max_horizon > 8) throw std::runtime_error("open-loop enumeration limited to horizon 8");
  BridgeSpec small = spec;
  small.horizon = max_horizon;

  int plan_len = max_horizon;
  long total_plans = 1;
  for (int i = 0; i < 2 * plan_len; ++i) total_plans *= kBridgeActionCount;

  double best = -1e300;
  std::array<int, 2> acts{};
  for (long plan = 0; plan < total_plans; ++plan) {
    long p = plan;
    BridgeState s = bridge_reset(small);
    double ret = 0.0;
    for (int t = 0; t < plan_len; ++t) {
      acts[0] = static_cast<int>(p % kBridgeActionCount);
      p /= kBridgeActionCount;
      acts[1] = static_cast<int>(p % kBridgeActionCount);
      p /= kBridgeActionCount;
      BridgeStepResult r = bridge_step(small, s, acts);
      ret += r.team_reward();
      s = r.next;
      if (r.episode_done) break;
    }
    if (ret > best) best = ret;
  }
  return best;
}

}  // namespace marlab
