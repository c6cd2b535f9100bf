#include "marlab/mixers.hpp"

#include <cmath>
#include <stdexcept>

namespace marlab {

const char* mixer_kind_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::vdn: return "vdn";
    case MixerKind::qmix: return "qmix";
    case MixerKind::qplex: return "qplex";
  }
  return "?";
}

MixerKind mixer_kind_from_name(const std::string& name) {
  if (name == "vdn") return MixerKind::vdn;
  if (name == "qmix") return MixerKind::qmix;
  if (name == "qplex") return MixerKind::qplex;
  throw std::runtime_error("unknown mixer kind: " + name);
}

namespace {

// Hypernet hidden layers start damped: a 64-unit hidden layer on a low-dim
// state otherwise makes the effective SGD step on the head ~10x the learning
// rate, and the lr-0.1 payoff fit blows up on the multiplicative mixing
// structure. The head keeps full scale so the mixing weights stay alive for
// TD learning.
void shrink_hidden_layers(ParamStore& ps, const Mlp& net, double scale) {
  for (std::size_t i = 0; i + 1 < net.linears.size(); ++i) {
    Tensor& w = ps.value(net.linears[i].w);
    for (int j = 0; j < w.size(); ++j) w[j] *= scale;
  }
}


int stack_columns(Tape& t, const std::vector<int>& cols) {
  // k nodes of shape [B] -> [B, k]
  std::vector<int> as2d;
  as2d.reserve(cols.size());
  int b = t.value(cols[0]).dim(0);
  for (int c : cols) as2d.push_back(t.reshape(c, {b, 1}));
  int stacked = t.stack_slots(as2d);  // [B, k, 1]
  return t.reshape(stacked, {b, static_cast<int>(cols.size())});
}

class VdnMixer : public Mixer {
 public:
  VdnMixer(ParamStore& ps, int n_agents, Rng& rng) {
    weights_ = ps.add("mixer.vdn.w", init_linear_weight(n_agents, 1, rng));
  }

  MixerKind kind() const override { return MixerKind::vdn; }

  int q_tot_node(Tape& t, int q_chosen, int, int, const std::vector<std::vector<int>>&) const override {
    int b = t.value(q_chosen).dim(0);
    return t.reshape(t.matmul(q_chosen, t.param(weights_)), {b});
  }

 private:
  int weights_;
};

class QmixMixer : public Mixer {
 public:
  static constexpr int kMixHidden = 32;

  QmixMixer(ParamStore& ps, int n_agents, int state_dim, Rng& rng)
      : n_(n_agents),
        hyper_w1_(ps, "mixer.qmix.hw1", {state_dim, 64, n_agents * kMixHidden}, rng, false),
        hyper_b1_(ps, "mixer.qmix.hb1", {state_dim, 64, kMixHidden}, rng, false),
        hyper_w2_(ps, "mixer.qmix.hw2", {state_dim, 64, kMixHidden}, rng, false),
        hyper_b2_(ps, "mixer.qmix.hb2", {state_dim, 64, 1}, rng, false) {
    for (const Mlp* net : {&hyper_w1_, &hyper_b1_, &hyper_w2_, &hyper_b2_}) shrink_hidden_layers(ps, *net, 0.5);
  }

  MixerKind kind() const override { return MixerKind::qmix; }

  int q_tot_node(Tape& t, int q_chosen, int, int state, const std::vector<std::vector<int>>&) const override {
    int b = t.value(q_chosen).dim(0);
    int w1 = t.reshape(t.abs_(hyper_w1_.forward(t, state)), {b, n_, kMixHidden});
    int b1 = t.reshape(hyper_b1_.forward(t, state), {b, 1, kMixHidden});
    int w2 = t.reshape(t.abs_(hyper_w2_.forward(t, state)), {b, kMixHidden, 1});
    int b2 = t.reshape(hyper_b2_.forward(t, state), {b});

    int q = t.reshape(q_chosen, {b, 1, n_});
    int hidden = t.elu(t.add(t.bmm(q, w1), b1));          // [b,1,m]
    int mixed = t.reshape(t.bmm(hidden, w2), {b});        // [b]
    return t.add(mixed, b2);
  }

 private:
  int n_;
  Mlp hyper_w1_, hyper_b1_, hyper_w2_, hyper_b2_;
};

class QplexMixer : public Mixer {
 public:
  static constexpr int kHeads = 4;
  static constexpr int kHeadDim = 16;  // 4 x 16 = 64 hidden units
  static constexpr double kLambdaFloor = 0.25;

  QplexMixer(ParamStore& ps, int n_agents, int n_actions, int state_dim, Rng& rng)
      : n_(n_agents),
        actions_(n_actions),
        state_dim_(state_dim),
        w_net_(ps, "mixer.qplex.w", {state_dim, 64, n_agents}, rng, false),
        b_net_(ps, "mixer.qplex.b", {state_dim, 64, n_agents}, rng, false) {
    int key_dim = state_dim + n_agents + n_actions;
    for (int k = 0; k < kHeads; ++k) {
      std::string base = "mixer.qplex.h" + std::to_string(k);
      q_lin_.emplace_back(ps, base + ".q", state_dim, kHeadDim, rng);
      k_lin_.emplace_back(ps, base + ".k", key_dim, kHeadDim, rng);
      v_lin_.emplace_back(ps, base + ".v", state_dim, 1, rng);
    }
    shrink_hidden_layers(ps, w_net_, 0.5);
    shrink_hidden_layers(ps, b_net_, 0.5);
  }

  MixerKind kind() const override { return MixerKind::qplex; }

  int q_tot_node(Tape& t, int q_chosen, int q_max, int state,
                 const std::vector<std::vector<int>>& joint_actions) const override {
    int b = t.value(q_chosen).dim(0);
    if (static_cast<int>(joint_actions.size()) != b) {
      throw std::runtime_error("qplex needs one joint action per batch row");
    }

    // Positive transform of values and advantages.
    int w = t.softplus(w_net_.forward(t, state));  // [b,n], > 0
    int bias = b_net_.forward(t, state);
    int v_term = t.add(t.mul(w, q_max), bias);
    int adv = t.mul(w, t.sub(q_chosen, q_max));    // [b,n], <= 0 scaled

    // Attention keys carry (state, agent id, action id).
    int key_dim = state_dim_ + n_ + actions_;
    Tensor key_in({b * n_, key_dim});
    const Tensor& st = t.value(state);
    for (int r = 0; r < b; ++r) {
      for (int i = 0; i < n_; ++i) {
        double* row = key_in.data() + (r * n_ + i) * key_dim;
        for (int s = 0; s < state_dim_; ++s) row[s] = st[r * state_dim_ + s];
        row[state_dim_ + i] = 1.0;
        row[state_dim_ + n_ + joint_actions[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)]] = 1.0;
      }
    }
    int keys_const = t.constant(std::move(key_in));

    int lambda = -1;  // [b,n], strictly positive
    for (int k = 0; k < kHeads; ++k) {
      int query = t.reshape(q_lin_[static_cast<std::size_t>(k)].forward(t, state), {b, kHeadDim, 1});
      int keys = t.reshape(k_lin_[static_cast<std::size_t>(k)].forward(t, keys_const), {b, n_, kHeadDim});
      int scores = t.mul_scalar(t.reshape(t.bmm(keys, query), {b, n_}), 1.0 / std::sqrt(double(kHeadDim)));
      int probs = t.softmax_lastdim(scores);                                  // [b,n]
      int vk = t.softplus(t.reshape(v_lin_[static_cast<std::size_t>(k)].forward(t, state), {b}));
      int contrib = t.scale_rows(probs, vk);
      lambda = k == 0 ? contrib : t.add(lambda, contrib);
    }
    // Hard floor keeps every agent's advantage coupled to Q_tot. Without it
    // TD learning can zero out one agent's importance weight and freeze a
    // wrong local ordering instead of repairing it.
    lambda = t.add_scalar(lambda, kLambdaFloor);

    return t.add(t.sum_lastdim(v_term), t.sum_lastdim(t.mul(lambda, adv)));
  }

 private:
  int n_;
  int actions_;
  int state_dim_;
  Mlp w_net_, b_net_;
  std::vector<Linear> q_lin_, k_lin_, v_lin_;
};

}  // namespace

std::unique_ptr<Mixer> make_vdn(ParamStore& ps, int n_agents, Rng& rng) {
  return std::make_unique<VdnMixer>(ps, n_agents, rng);
}

std::unique_ptr<Mixer> make_qmix(ParamStore& ps, int n_agents, int state_dim, Rng& rng) {
  return std::make_unique<QmixMixer>(ps, n_agents, state_dim, rng);
}

std::unique_ptr<Mixer> make_qplex(ParamStore& ps, int n_agents, int n_actions, int state_dim, Rng& rng) {
  return std::make_unique<QplexMixer>(ps, n_agents, n_actions, state_dim, rng);
}

std::unique_ptr<Mixer> make_mixer(MixerKind kind, ParamStore& ps, int n_agents, int n_actions, int state_dim,
                                  Rng& rng) {
  switch (kind) {
    case MixerKind::vdn: return make_vdn(ps, n_agents, rng);
    case MixerKind::qmix: return make_qmix(ps, n_agents, state_dim, rng);
    case MixerKind::qplex: return make_qplex(ps, n_agents, n_actions, state_dim, rng);
  }
  throw std::runtime_error("unknown mixer kind");
}

VdModel VdModel::stateless(MixerKind kind, int n_agents, int n_actions, Rng& rng, bool optimistic_init) {
  VdModel m;
  m.kind_ = kind;
  m.stateless_ = true;
  m.optimistic_init_ = optimistic_init;
  m.n_agents_ = n_agents;
  m.n_actions_ = n_actions;
  m.state_dim_ = 1;
  m.build(rng);
  return m;
}

VdModel VdModel::bridge_net(MixerKind kind, int obs_dim, int n_actions, int n_agents, int state_dim,
                            bool id_conditioned, Rng& rng) {
  VdModel m;
  m.kind_ = kind;
  m.stateless_ = false;
  m.id_conditioned_ = id_conditioned;
  m.n_agents_ = n_agents;
  m.n_actions_ = n_actions;
  m.state_dim_ = state_dim;
  m.obs_dim_ = obs_dim;
  m.build(rng);
  return m;
}

void VdModel::build(Rng& rng) {
  if (stateless_) {
    double shift = optimistic_init_ ? 1.0 : 0.0;
    Tensor table({n_agents_, n_actions_});
    for (int i = 0; i < table.size(); ++i) table[i] = shift + rng.uniform(-1.0, 1.0);
    local_table_ = params_.add("local_q.table", std::move(table));
  } else {
    int in = obs_dim_ + (id_conditioned_ ? n_agents_ : 0);
    local_net_ = Mlp(params_, "local_q.net", {in, 64, 64, n_actions_}, rng);
  }
  mixer_ = make_mixer(kind_, params_, n_agents_, n_actions_, state_dim_, rng);
}

VdModel VdModel::clone() const {
  Rng dummy(0);
  VdModel copy;
  copy.kind_ = kind_;
  copy.stateless_ = stateless_;
  copy.optimistic_init_ = optimistic_init_;
  copy.id_conditioned_ = id_conditioned_;
  copy.n_agents_ = n_agents_;
  copy.n_actions_ = n_actions_;
  copy.state_dim_ = state_dim_;
  copy.obs_dim_ = obs_dim_;
  copy.build(dummy);
  copy.params_.copy_values_from(params_);
  return copy;
}

int VdModel::local_q_node(Tape& t, int agent, const std::vector<std::vector<double>>& obs_batch) const {
  int b = static_cast<int>(obs_batch.size());
  if (stateless_) {
    return t.gather_rows(t.param(local_table_), std::vector<int>(static_cast<std::size_t>(b), agent));
  }
  int in = obs_dim_ + (id_conditioned_ ? n_agents_ : 0);
  Tensor input({b, in});
  for (int r = 0; r < b; ++r) {
    const auto& obs = obs_batch[static_cast<std::size_t>(r)];
    if (static_cast<int>(obs.size()) != obs_dim_) throw std::runtime_error("observation size mismatch");
    for (int j = 0; j < obs_dim_; ++j) input[r * in + j] = obs[static_cast<std::size_t>(j)];
    if (id_conditioned_) input[r * in + obs_dim_ + agent] = 1.0;
  }
  return local_net_.forward(t, t.constant(std::move(input)));
}

std::vector<double> VdModel::local_q_values(int agent, const std::vector<double>& obs) const {
  Tape t(const_cast<ParamStore*>(&params_));
  int node = local_q_node(t, agent, {obs});
  return t.value(node).values();
}

int VdModel::q_tot_node(Tape& t, const std::vector<std::vector<std::vector<double>>>& obs_per_agent,
                        const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<int>>& joint_actions) const {
  int b = static_cast<int>(joint_actions.size());
  std::vector<int> chosen_cols, max_cols;
  for (int i = 0; i < n_agents_; ++i) {
    int q_all = local_q_node(t, i, obs_per_agent[static_cast<std::size_t>(i)]);
    std::vector<int> act_idx(static_cast<std::size_t>(b));
    for (int r = 0; r < b; ++r) act_idx[static_cast<std::size_t>(r)] = joint_actions[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
    chosen_cols.push_back(t.select_col(q_all, act_idx));
    max_cols.push_back(t.max_lastdim(q_all));
  }
  int q_chosen = stack_columns(t, chosen_cols);
  int q_max = stack_columns(t, max_cols);

  Tensor st({b, state_dim_});
  for (int r = 0; r < b; ++r) {
    const auto& s = states[static_cast<std::size_t>(r)];
    if (static_cast<int>(s.size()) != state_dim_) throw std::runtime_error("state size mismatch");
    for (int j = 0; j < state_dim_; ++j) st[r * state_dim_ + j] = s[static_cast<std::size_t>(j)];
  }
  return mixer_->q_tot_node(t, q_chosen, q_max, t.constant(std::move(st)), joint_actions);
}

int VdModel::q_tot_all_joint_node(Tape& t, const PayoffTensor& payoff) const {
  if (!stateless_) throw std::runtime_error("q_tot_all_joint requires the stateless model");
  int b = payoff.joint_count();
  std::vector<std::vector<int>> joints;
  joints.reserve(static_cast<std::size_t>(b));
  for (int idx = 0; idx < b; ++idx) joints.push_back(payoff.unflatten(idx));
  std::vector<std::vector<std::vector<double>>> obs(
      static_cast<std::size_t>(n_agents_),
      std::vector<std::vector<double>>(static_cast<std::size_t>(b), std::vector<double>{1.0}));
  std::vector<std::vector<double>> states(static_cast<std::size_t>(b), std::vector<double>{1.0});
  return q_tot_node(t, obs, states, joints);
}

std::vector<double> VdModel::q_tot_all_joint(const PayoffTensor& payoff) const {
  Tape t(const_cast<ParamStore*>(&params_));
  return t.value(q_tot_all_joint_node(t, payoff)).values();
}

std::vector<int> igm_greedy(const std::vector<std::vector<double>>& local_qs) {
  std::vector<int> joint;
  joint.reserve(local_qs.size());
  for (const auto& q : local_qs) {
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a) {
      if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
    }
    joint.push_back(best);
  }
  return joint;
}

double advantage_tot(const std::vector<double>& q_tot_all, int joint_index) {
  double mx = q_tot_all[0];
  for (double v : q_tot_all) mx = std::max(mx, v);
  return q_tot_all[static_cast<std::size_t>(joint_index)] - mx;
}

double payoff_fit_error(const VdModel& model, const PayoffTensor& payoff) {
  std::vector<double> q = model.q_tot_all_joint(payoff);
  double err = 0.0;
  for (int i = 0; i < payoff.joint_count(); ++i) {
    double d = q[static_cast<std::size_t>(i)] - payoff.flat(i);
    err += d * d;
  }
  return err;
}

FitResult fit_payoff(VdModel& model, const PayoffTensor& payoff, int steps, double lr) {
  OptimConfig oc;
  oc.kind = OptimKind::sgd;
  oc.learning_rate = lr;
  Optimizer opt(oc, model.params());

  Tensor target({payoff.joint_count()});
  for (int i = 0; i < payoff.joint_count(); ++i) target[i] = payoff.flat(i);

  FitResult res;
  res.error_curve.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    Tape t(&model.params());
    int q = model.q_tot_all_joint_node(t, payoff);
    int diff = t.sub(q, t.constant(target));
    int sq = t.mul(diff, diff);
    int total_err = t.sum(sq);
    int loss = t.mean(sq);
    double err = t.value(total_err)[0];
    if (!(err <= 1e6)) {
      throw std::runtime_error("fit_payoff diverged at step " + std::to_string(step) + ": error " +
                               std::to_string(err));
    }
    res.error_curve.push_back(err);
    t.backward(loss);
    opt.step(model.params());
  }
  res.final_error = payoff_fit_error(model, payoff);
  return res;
}

}  // namespace marlab
