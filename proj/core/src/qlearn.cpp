#include "marlab/qlearn.hpp"

#include <cmath>
#include <stdexcept>

namespace marlab {

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::runtime_error("replay capacity must be positive");
  storage_.reserve(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[static_cast<std::size_t>(next_)] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<int> ReplayBuffer::sample_indices(int batch, Rng& rng) const {
  if (batch > size()) throw std::runtime_error("cannot sample more transitions than stored");
  std::vector<int> idx(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) idx[static_cast<std::size_t>(i)] = rng.next_below(size());
  return idx;
}

double QLearnConfig::epsilon_at(int step) const {
  int decay = eps_decay_steps > 0 ? eps_decay_steps : total_steps / 2;
  if (decay <= 0) return eps_end;
  double frac = std::min(1.0, static_cast<double>(step) / decay);
  return eps_start + frac * (eps_end - eps_start);
}

std::vector<int> eps_greedy_actions(const VdModel& model, const std::vector<std::vector<double>>& obs, double eps,
                                    Rng& rng) {
  int n = model.n_agents();
  std::vector<std::vector<double>> qs;
  qs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) qs.push_back(model.local_q_values(i, obs[static_cast<std::size_t>(i)]));
  std::vector<int> actions = igm_greedy(qs);
  for (int i = 0; i < n; ++i) {
    if (rng.next_double() < eps) actions[static_cast<std::size_t>(i)] = rng.next_below(model.n_actions());
  }
  return actions;
}

double vd_greedy_return(const VdModel& model, Env& env) {
  auto obs = env.reset();
  double total = 0.0;
  while (!env.done()) {
    std::vector<std::vector<double>> qs;
    for (int i = 0; i < model.n_agents(); ++i) qs.push_back(model.local_q_values(i, obs[static_cast<std::size_t>(i)]));
    EnvStep s = env.step(igm_greedy(qs));
    total += s.team_reward;
    obs = s.obs;
  }
  return total;
}

namespace {

double td_train_step(VdModel& model, const VdModel& target, const ReplayBuffer& buffer, const std::vector<int>& idx,
                     const QLearnConfig& config, Optimizer& opt) {
  int b = static_cast<int>(idx.size());
  int n = model.n_agents();

  std::vector<std::vector<std::vector<double>>> obs(static_cast<std::size_t>(n));
  std::vector<std::vector<std::vector<double>>> next_obs(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> states, next_states;
  std::vector<std::vector<int>> actions;
  for (int r = 0; r < b; ++r) {
    const Transition& tr = buffer.at(idx[static_cast<std::size_t>(r)]);
    for (int i = 0; i < n; ++i) {
      obs[static_cast<std::size_t>(i)].push_back(tr.obs[static_cast<std::size_t>(i)]);
      next_obs[static_cast<std::size_t>(i)].push_back(tr.next_obs[static_cast<std::size_t>(i)]);
    }
    states.push_back(tr.state);
    next_states.push_back(tr.next_state);
    actions.push_back(tr.actions);
  }

  // TD targets from the frozen copy: r + gamma * (1-done) * Q_tot(s', a'_greedy).
  Tensor targets({b});
  {
    Tape tt(const_cast<ParamStore*>(&target.params()));
    std::vector<std::vector<int>> greedy(static_cast<std::size_t>(b), std::vector<int>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) {
      int q_all = target.local_q_node(tt, i, next_obs[static_cast<std::size_t>(i)]);
      const Tensor& q = tt.value(q_all);
      for (int r = 0; r < b; ++r) {
        int best = 0;
        for (int a = 1; a < model.n_actions(); ++a) {
          if (q[r * model.n_actions() + a] > q[r * model.n_actions() + best]) best = a;
        }
        greedy[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = best;
      }
    }
    int qtot_next = target.q_tot_node(tt, next_obs, next_states, greedy);
    const Tensor& qn = tt.value(qtot_next);
    for (int r = 0; r < b; ++r) {
      const Transition& tr = buffer.at(idx[static_cast<std::size_t>(r)]);
      targets[r] = tr.reward + (tr.done ? 0.0 : config.gamma * qn[r]);
    }
  }

  Tape t(&model.params());
  int qtot = model.q_tot_node(t, obs, states, actions);
  int diff = t.sub(qtot, t.constant(targets));
  int loss = t.mean(t.mul(diff, diff));
  double loss_v = t.value(loss)[0];
  if (!std::isfinite(loss_v)) throw std::runtime_error("q-learning TD loss is not finite; aborting run");
  t.backward(loss);
  opt.step(model.params());
  return loss_v;
}

}  // namespace

QLearnRecord qlearn(VdModel& model, Env& env, const QLearnConfig& config, Rng& rng,
                    const std::function<void(int, const VdModel&)>& on_record,
                    const std::function<void(int, const VdModel&)>& on_train_step) {
  VdModel target = model.clone();
  ReplayBuffer buffer(config.replay_capacity);
  OptimConfig oc;
  oc.kind = OptimKind::adam;
  oc.learning_rate = config.learning_rate;
  oc.grad_norm_clip = config.grad_norm_clip;
  Optimizer opt(oc, model.params());

  const MatrixGameEnv* matrix = dynamic_cast<const MatrixGameEnv*>(&env);
  QLearnRecord record;
  auto record_metric = [&](int step) {
    double metric;
    if (matrix) {
      metric = payoff_fit_error(model, matrix->spec().payoff);
    } else {
      auto eval_env = env.clone_spec();
      metric = vd_greedy_return(model, *eval_env);
    }
    record.curve.emplace_back(step, metric);
    if (on_record) on_record(step, model);
  };

  auto obs = env.reset();
  auto state = env.state();
  for (int step = 0; step < config.total_steps; ++step) {
    double eps = config.epsilon_at(step);
    std::vector<int> actions = eps_greedy_actions(model, obs, eps, rng);
    EnvStep s = env.step(actions);

    Transition tr;
    tr.obs = obs;
    tr.state = state;
    tr.actions = actions;
    tr.reward = s.team_reward;
    tr.next_obs = s.obs;
    tr.next_state = env.state();
    tr.done = s.episode_done;
    buffer.push(std::move(tr));

    if (s.episode_done) {
      obs = env.reset();
    } else {
      obs = s.obs;
    }
    state = env.state();

    if (buffer.size() >= std::max(config.batch_size, config.warmup_steps) && step % config.train_interval == 0) {
      td_train_step(model, target, buffer, buffer.sample_indices(config.batch_size, rng), config, opt);
      if (opt.step_count() % config.target_update_interval == 0) target.copy_params_from(model);
      if (on_train_step) on_train_step(opt.step_count(), target);
    }

    if ((step + 1) % config.record_interval == 0) record_metric(step + 1);
  }
  if (record.curve.empty() || record.curve.back().first != config.total_steps) record_metric(config.total_steps);
  return record;
}

}  // namespace marlab
