#include "marlab/policies.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marlab {

const char* policy_repr_name(PolicyRepr r) {
  switch (r) {
    case PolicyRepr::shared: return "shared";
    case PolicyRepr::individual: return "individual";
    case PolicyRepr::id_conditioned: return "id_conditioned";
    case PolicyRepr::auto_regressive: return "auto_regressive";
  }
  return "?";
}

PolicyRepr policy_repr_from_name(const std::string& name) {
  if (name == "shared") return PolicyRepr::shared;
  if (name == "individual") return PolicyRepr::individual;
  if (name == "id_conditioned") return PolicyRepr::id_conditioned;
  if (name == "auto_regressive") return PolicyRepr::auto_regressive;
  throw std::runtime_error("unknown policy representation: " + name);
}

std::vector<int> sample_execution_order(int n, Rng& rng) {
  if (n < 1) throw std::runtime_error("execution order needs n >= 1");
  return rng.permutation(n);
}

namespace {

std::vector<double> softmax_probs(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

}  // namespace

MatrixPolicy::MatrixPolicy(PolicyRepr repr, int n_agents, int n_actions, Rng& rng)
    : repr_(repr), n_agents_(n_agents), n_actions_(n_actions) {
  int rows;
  switch (repr_) {
    case PolicyRepr::shared: rows = 1; break;
    case PolicyRepr::individual:
    case PolicyRepr::id_conditioned: rows = n_agents_; break;
    case PolicyRepr::auto_regressive: rows = n_agents_ << n_actions_; break;
  }
  Tensor table({rows, n_actions_});
  for (int i = 0; i < table.size(); ++i) table[i] = rng.uniform(-0.01, 0.01);
  table_ = params_.add("policy.table", std::move(table));
}

int MatrixPolicy::table_row(int agent, int used_action_mask) const {
  switch (repr_) {
    case PolicyRepr::shared: return 0;
    case PolicyRepr::individual:
    case PolicyRepr::id_conditioned: return agent;
    case PolicyRepr::auto_regressive: return (agent << n_actions_) | used_action_mask;
  }
  return 0;
}

int MatrixPolicy::logits_node(Tape& t, const std::vector<int>& agents, const std::vector<int>& masks) const {
  std::vector<int> rows(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) rows[i] = table_row(agents[i], masks[i]);
  return t.gather_rows(t.param(table_), rows);
}

std::vector<double> MatrixPolicy::action_probs(int agent, int used_action_mask) const {
  const Tensor& table = params_.value(table_);
  int row = table_row(agent, used_action_mask);
  std::vector<double> logits(static_cast<std::size_t>(n_actions_));
  for (int a = 0; a < n_actions_; ++a) logits[static_cast<std::size_t>(a)] = table.at({row, a});
  return softmax_probs(logits);
}

JointActionSample MatrixPolicy::sample_joint(const std::vector<int>& order, Rng& rng) const {
  if (static_cast<int>(order.size()) != n_agents_) throw std::runtime_error("order arity mismatch");
  JointActionSample s;
  s.order = order;
  s.actions.assign(static_cast<std::size_t>(n_agents_), -1);
  s.logps.assign(static_cast<std::size_t>(n_agents_), 0.0);
  int mask = 0;
  for (int pos = 0; pos < n_agents_; ++pos) {
    int agent = order[static_cast<std::size_t>(pos)];
    auto probs = action_probs(agent, repr_ == PolicyRepr::auto_regressive ? mask : 0);
    int a = rng.categorical(probs);
    s.actions[static_cast<std::size_t>(agent)] = a;
    s.logps[static_cast<std::size_t>(agent)] = std::log(probs[static_cast<std::size_t>(a)]);
    mask |= 1 << a;
  }
  return s;
}

double MatrixPolicy::joint_logprob(const std::vector<int>& order, const std::vector<int>& joint_action) const {
  if (static_cast<int>(order.size()) != n_agents_) throw std::runtime_error("order arity mismatch");
  double lp = 0.0;
  int mask = 0;
  for (int pos = 0; pos < n_agents_; ++pos) {
    int agent = order[static_cast<std::size_t>(pos)];
    int a = joint_action[static_cast<std::size_t>(agent)];
    auto probs = action_probs(agent, repr_ == PolicyRepr::auto_regressive ? mask : 0);
    lp += std::log(probs[static_cast<std::size_t>(a)]);
    mask |= 1 << a;
  }
  return lp;
}

std::vector<double> MatrixPolicy::joint_distribution(bool randomized_order) const {
  int total = 1;
  for (int i = 0; i < n_agents_; ++i) total *= n_actions_;
  std::vector<double> dist(static_cast<std::size_t>(total), 0.0);

  std::vector<std::vector<int>> orders;
  if (repr_ == PolicyRepr::auto_regressive && randomized_order) {
    std::vector<int> order(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i) order[static_cast<std::size_t>(i)] = i;
    do {
      orders.push_back(order);
    } while (std::next_permutation(order.begin(), order.end()));
  } else {
    std::vector<int> identity(static_cast<std::size_t>(n_agents_));
    for (int i = 0; i < n_agents_; ++i) identity[static_cast<std::size_t>(i)] = i;
    orders.push_back(identity);
  }

  std::vector<int> joint(static_cast<std::size_t>(n_agents_));
  for (int idx = 0; idx < total; ++idx) {
    int rem = idx;
    for (int i = n_agents_ - 1; i >= 0; --i) {
      joint[static_cast<std::size_t>(i)] = rem % n_actions_;
      rem /= n_actions_;
    }
    double p = 0.0;
    for (const auto& order : orders) p += std::exp(joint_logprob(order, joint));
    dist[static_cast<std::size_t>(idx)] = p / static_cast<double>(orders.size());
  }
  return dist;
}

void MatrixPolicy::set_uniform_permutation_construction() {
  if (repr_ != PolicyRepr::auto_regressive) {
    throw std::runtime_error("uniform permutation construction requires the auto-regressive table");
  }
  if (n_actions_ != n_agents_) throw std::runtime_error("construction requires n_actions == n_agents");
  Tensor& table = params_.value(table_);
  // exp(-1e9) underflows to exactly 0, so used actions get zero probability
  // and the remainder is exactly uniform.
  for (int agent = 0; agent < n_agents_; ++agent) {
    for (int mask = 0; mask < (1 << n_actions_); ++mask) {
      for (int a = 0; a < n_actions_; ++a) {
        table.at({table_row(agent, mask), a}) = (mask >> a) & 1 ? -1e9 : 0.0;
      }
    }
  }
}

int BridgePolicy::ar_input_dim() const { return obs_dim_ + n_actions_ + 1; }

BridgePolicy::BridgePolicy(PolicyRepr repr, Backbone backbone, int n_agents, Rng& rng)
    : repr_(repr), backbone_(backbone), n_agents_(n_agents) {
  if (repr_ != PolicyRepr::auto_regressive && backbone_ == Backbone::attention) {
    throw std::runtime_error("attention backbone is only used by the auto-regressive representation");
  }
  switch (repr_) {
    case PolicyRepr::shared:
      mlps_.emplace_back(params_, "actor", std::vector<int>{obs_dim_, 64, 64, n_actions_}, rng);
      break;
    case PolicyRepr::id_conditioned:
      mlps_.emplace_back(params_, "actor", std::vector<int>{obs_dim_ + n_agents_, 64, 64, n_actions_}, rng);
      break;
    case PolicyRepr::individual:
      for (int i = 0; i < n_agents_; ++i) {
        mlps_.emplace_back(params_, "actor" + std::to_string(i), std::vector<int>{obs_dim_, 64, 64, n_actions_}, rng);
      }
      break;
    case PolicyRepr::auto_regressive:
      if (backbone_ == Backbone::attention) {
        embed_self_ = Linear(params_, "ar.embed_self", 2, 64, rng);
        embed_goal_ = Linear(params_, "ar.embed_goal", 2, 64, rng);
        embed_ally_ = Linear(params_, "ar.embed_ally", 2, 64, rng);
        embed_action_ = Embedding(params_, "ar.embed_action", n_actions_, 64, rng);
        block_ = AttentionBlock(params_, "ar.block", 64, 4, 64, rng);
        head_ = Linear(params_, "ar.head", 64, n_actions_, rng);
      } else {
        mlps_.emplace_back(params_, "actor", std::vector<int>{ar_input_dim(), 64, 64, n_actions_}, rng);
      }
      break;
  }
}

int BridgePolicy::logits_node(Tape& t, const std::vector<int>& agents, const std::vector<std::vector<double>>& obs,
                              const std::vector<int>& prev_actions) const {
  int b = static_cast<int>(obs.size());

  if (repr_ == PolicyRepr::auto_regressive && backbone_ == Backbone::attention) {
    Tensor self_in({b, 2}), goal_in({b, 2}), ally_in({b, 2});
    std::vector<int> act_idx(static_cast<std::size_t>(b), 0);
    Tensor act_gate({b});
    for (int r = 0; r < b; ++r) {
      const auto& o = obs[static_cast<std::size_t>(r)];
      self_in[r * 2] = o[0];
      self_in[r * 2 + 1] = o[1];
      goal_in[r * 2] = o[2];
      goal_in[r * 2 + 1] = o[3];
      ally_in[r * 2] = o[4];
      ally_in[r * 2 + 1] = o[5];
      int prev = prev_actions[static_cast<std::size_t>(r)];
      if (prev >= 0) {
        act_idx[static_cast<std::size_t>(r)] = prev;
        act_gate[r] = 1.0;
      }
    }
    int self_e = embed_self_.forward(t, t.constant(std::move(self_in)));
    int goal_e = embed_goal_.forward(t, t.constant(std::move(goal_in)));
    int ally_e = embed_ally_.forward(t, t.constant(std::move(ally_in)));
    // Predecessor action embedding is added onto the ally slot; rows without
    // a visible action are gated to zero.
    int act_e = t.scale_rows(embed_action_.forward(t, act_idx), t.constant(std::move(act_gate)));
    ally_e = t.add(ally_e, act_e);

    int slots = t.stack_slots({self_e, goal_e, ally_e});  // [b,3,64]
    // First slot corresponds to the acting agent itself; only its output
    // feeds the policy head.
    return head_.forward(t, block_.forward_query(t, slots, 0, Tensor()));
  }

  int in_dim;
  switch (repr_) {
    case PolicyRepr::shared:
    case PolicyRepr::individual: in_dim = obs_dim_; break;
    case PolicyRepr::id_conditioned: in_dim = obs_dim_ + n_agents_; break;
    case PolicyRepr::auto_regressive: in_dim = ar_input_dim(); break;
  }

  if (repr_ == PolicyRepr::individual) {
    // One forward per agent's own network, scattered back into batch order.
    int combined = -1;
    for (int agent = 0; agent < n_agents_; ++agent) {
      std::vector<int> rows;
      for (int r = 0; r < b; ++r) {
        if (agents[static_cast<std::size_t>(r)] == agent) rows.push_back(r);
      }
      if (rows.empty()) continue;
      Tensor input({static_cast<int>(rows.size()), in_dim});
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& o = obs[static_cast<std::size_t>(rows[k])];
        for (int j = 0; j < obs_dim_; ++j) input[static_cast<int>(k) * in_dim + j] = o[static_cast<std::size_t>(j)];
      }
      int out = mlps_[static_cast<std::size_t>(agent)].forward(t, t.constant(std::move(input)));
      int placed = t.scatter_rows(out, rows, b);
      combined = combined < 0 ? placed : t.add(combined, placed);
    }
    return combined;
  }

  Tensor input({b, in_dim});
  for (int r = 0; r < b; ++r) {
    const auto& o = obs[static_cast<std::size_t>(r)];
    for (int j = 0; j < obs_dim_; ++j) input[r * in_dim + j] = o[static_cast<std::size_t>(j)];
    if (repr_ == PolicyRepr::id_conditioned) {
      input[r * in_dim + obs_dim_ + agents[static_cast<std::size_t>(r)]] = 1.0;
    } else if (repr_ == PolicyRepr::auto_regressive) {
      int prev = prev_actions[static_cast<std::size_t>(r)];
      if (prev >= 0) {
        input[r * in_dim + obs_dim_ + prev] = 1.0;
        input[r * in_dim + obs_dim_ + n_actions_] = 1.0;  // "predecessor visible" flag
      }
    }
  }
  return mlps_[0].forward(t, t.constant(std::move(input)));
}

std::vector<double> BridgePolicy::action_probs(int agent, const std::vector<double>& obs, int prev_action) const {
  Tape t(const_cast<ParamStore*>(&params_));
  int logits = logits_node(t, {agent}, {obs}, {prev_action});
  return softmax_probs(t.value(logits).values());
}

}  // namespace marlab
