#include "marlab/ppo.hpp"

#include <cmath>
#include <stdexcept>

namespace marlab {

void RunningNormalizer::update(const std::vector<double>& xs) {
  for (double x : xs) {
    ++count_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d * (x - mean_);
  }
}

double RunningNormalizer::stddev() const {
  if (count_ < 2) return 1.0;
  double var = m2_ / static_cast<double>(count_);
  return var > 1e-12 ? std::sqrt(var) : 1e-6;
}

void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<bool>& done, double bootstrap_value, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns) {
  int n = static_cast<int>(rewards.size());
  advantages.assign(static_cast<std::size_t>(n), 0.0);
  returns.assign(static_cast<std::size_t>(n), 0.0);
  double gae = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    double next_v = t + 1 < n ? values[static_cast<std::size_t>(t + 1)] : bootstrap_value;
    double nonterminal = done[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    double delta = rewards[static_cast<std::size_t>(t)] + gamma * nonterminal * next_v - values[static_cast<std::size_t>(t)];
    gae = delta + gamma * lambda * nonterminal * gae;
    advantages[static_cast<std::size_t>(t)] = gae;
    returns[static_cast<std::size_t>(t)] = gae + values[static_cast<std::size_t>(t)];
  }
}

int bridge_action_in_frame(int predecessor, int pred_local_action, int observer) {
  int global = bridge_to_global_action(predecessor, pred_local_action);
  return bridge_to_global_action(observer, global);  // the mirror swap is an involution
}

namespace {

int argmax_index(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace

namespace {

OptimConfig ppo_adam(const PpoConfig& config) {
  OptimConfig oc;
  oc.kind = OptimKind::adam;
  oc.learning_rate = config.learning_rate;
  oc.grad_norm_clip = config.grad_norm_clip;
  return oc;
}

}  // namespace

PpoTrainer::PpoTrainer(std::unique_ptr<BridgePolicy> policy, const BridgeSpec& spec, const PpoConfig& config,
                       Rng& rng)
    : spec_(spec),
      config_(config),
      policy_(std::move(policy)),
      actor_opt_(ppo_adam(config), policy_->params()),
      critic_opt_(ppo_adam(config), critic_params_),
      rng_(rng) {
  critic_ = Mlp(critic_params_, "critic", {6, 64, 64, 1}, rng_);
  critic_opt_ = Optimizer(ppo_adam(config_), critic_params_);

  if (config_.batch_steps % config_.n_envs != 0) {
    throw std::runtime_error("batch_steps must be a multiple of n_envs");
  }
  for (int e = 0; e < config_.n_envs; ++e) {
    envs_.push_back(std::make_unique<BridgeEnv>(spec_));
    obs_.push_back(envs_.back()->reset());
  }
  run_return_.assign(static_cast<std::size_t>(config_.n_envs), 0.0);
  run_logp_.assign(static_cast<std::size_t>(config_.n_envs), 0.0);
}

void PpoTrainer::collect() {
  int E = config_.n_envs;
  int T = config_.batch_steps / E;
  batch_.assign(static_cast<std::size_t>(E), {});
  for (auto& stream : batch_) stream.reserve(static_cast<std::size_t>(T));
  episode_returns_.clear();
  episode_logps_.clear();

  bool ar = policy_->repr() == PolicyRepr::auto_regressive;

  for (int t = 0; t < T; ++t) {
    // Critic values for all envs in one pass.
    std::vector<double> values(static_cast<std::size_t>(E));
    {
      Tape tape(&critic_params_);
      Tensor states({E, 6});
      for (int e = 0; e < E; ++e) {
        auto s = envs_[static_cast<std::size_t>(e)]->state();
        for (int j = 0; j < 6; ++j) states[e * 6 + j] = s[static_cast<std::size_t>(j)];
      }
      int out = critic_.forward(tape, tape.constant(std::move(states)));
      const Tensor& v = tape.value(out);
      for (int e = 0; e < E; ++e) values[static_cast<std::size_t>(e)] = normalizer_.denormalize(v[e]);
    }

    std::vector<std::array<int, 2>> orders(static_cast<std::size_t>(E), {0, 1});
    if (ar && config_.randomized_order) {
      for (int e = 0; e < E; ++e) {
        auto p = sample_execution_order(2, rng_);
        orders[static_cast<std::size_t>(e)] = {p[0], p[1]};
      }
    }

    std::vector<StepRecord> recs(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e) {
      recs[static_cast<std::size_t>(e)].state = envs_[static_cast<std::size_t>(e)]->state();
      recs[static_cast<std::size_t>(e)].value = values[static_cast<std::size_t>(e)];
    }

    std::vector<std::array<int, 2>> local_actions(static_cast<std::size_t>(E));
    for (int pos = 0; pos < 2; ++pos) {
      std::vector<int> agents(static_cast<std::size_t>(E));
      std::vector<std::vector<double>> pos_obs(static_cast<std::size_t>(E));
      std::vector<int> prev(static_cast<std::size_t>(E), -1);
      for (int e = 0; e < E; ++e) {
        int agent = orders[static_cast<std::size_t>(e)][static_cast<std::size_t>(pos)];
        agents[static_cast<std::size_t>(e)] = agent;
        pos_obs[static_cast<std::size_t>(e)] = obs_[static_cast<std::size_t>(e)][static_cast<std::size_t>(agent)];
        if (ar && pos == 1) {
          int pred = orders[static_cast<std::size_t>(e)][0];
          prev[static_cast<std::size_t>(e)] =
              bridge_action_in_frame(pred, local_actions[static_cast<std::size_t>(e)][static_cast<std::size_t>(pred)], agent);
        }
      }

      Tape tape(&policy_->params());
      int logits = policy_->logits_node(tape, agents, pos_obs, prev);
      int logp = tape.log_softmax_lastdim(logits);
      const Tensor& lp = tape.value(logp);
      int A = policy_->n_actions();
      for (int e = 0; e < E; ++e) {
        std::vector<double> probs(static_cast<std::size_t>(A));
        for (int a = 0; a < A; ++a) probs[static_cast<std::size_t>(a)] = std::exp(lp[e * A + a]);
        int action = rng_.categorical(probs);
        int agent = agents[static_cast<std::size_t>(e)];
        local_actions[static_cast<std::size_t>(e)][static_cast<std::size_t>(agent)] = action;
        Decision& d = recs[static_cast<std::size_t>(e)].decisions[static_cast<std::size_t>(agent)];
        d.agent = agent;
        d.obs = pos_obs[static_cast<std::size_t>(e)];
        d.prev_action = prev[static_cast<std::size_t>(e)];
        d.taken = action;
        d.logp_old = lp[e * A + action];
        d.order_pos = pos;
        run_logp_[static_cast<std::size_t>(e)] += d.logp_old;
      }
    }

    for (int e = 0; e < E; ++e) {
      auto& env = *envs_[static_cast<std::size_t>(e)];
      EnvStep s = env.step({local_actions[static_cast<std::size_t>(e)][0], local_actions[static_cast<std::size_t>(e)][1]});
      StepRecord& rec = recs[static_cast<std::size_t>(e)];
      rec.reward = s.team_reward;
      rec.done = s.episode_done;
      run_return_[static_cast<std::size_t>(e)] += s.team_reward;
      if (s.episode_done) {
        episode_returns_.push_back(run_return_[static_cast<std::size_t>(e)]);
        episode_logps_.push_back(run_logp_[static_cast<std::size_t>(e)]);
        run_return_[static_cast<std::size_t>(e)] = 0.0;
        run_logp_[static_cast<std::size_t>(e)] = 0.0;
        obs_[static_cast<std::size_t>(e)] = env.reset();
      } else {
        obs_[static_cast<std::size_t>(e)] = s.obs;
      }
      batch_[static_cast<std::size_t>(e)].push_back(std::move(rec));
    }
  }

  // Bootstrap values for truncated streams.
  bootstrap_.assign(static_cast<std::size_t>(E), 0.0);
  Tape tape(&critic_params_);
  Tensor states({E, 6});
  for (int e = 0; e < E; ++e) {
    auto s = envs_[static_cast<std::size_t>(e)]->state();
    for (int j = 0; j < 6; ++j) states[e * 6 + j] = s[static_cast<std::size_t>(j)];
  }
  int out = critic_.forward(tape, tape.constant(std::move(states)));
  const Tensor& v = tape.value(out);
  for (int e = 0; e < E; ++e) bootstrap_[static_cast<std::size_t>(e)] = normalizer_.denormalize(v[e]);

  env_steps_ += config_.batch_steps;
}

PpoIterStats PpoTrainer::iterate() {
  collect();

  int E = config_.n_envs;
  int T = config_.batch_steps / E;
  int B = E * T;

  // GAE per environment stream.
  std::vector<double> adv_all(static_cast<std::size_t>(B)), ret_all(static_cast<std::size_t>(B));
  for (int e = 0; e < E; ++e) {
    std::vector<double> rewards(static_cast<std::size_t>(T)), values(static_cast<std::size_t>(T));
    std::vector<bool> done(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      const StepRecord& r = batch_[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)];
      rewards[static_cast<std::size_t>(t)] = r.reward;
      values[static_cast<std::size_t>(t)] = r.value;
      done[static_cast<std::size_t>(t)] = r.done;
    }
    std::vector<double> adv, ret;
    compute_gae(rewards, values, done, bootstrap_[static_cast<std::size_t>(e)], config_.gamma, config_.gae_lambda,
                adv, ret);
    for (int t = 0; t < T; ++t) {
      adv_all[static_cast<std::size_t>(e * T + t)] = adv[static_cast<std::size_t>(t)];
      ret_all[static_cast<std::size_t>(e * T + t)] = ret[static_cast<std::size_t>(t)];
    }
  }

  // Normalize advantages over the batch.
  double am = 0.0, a2 = 0.0;
  for (double a : adv_all) am += a;
  am /= B;
  for (double a : adv_all) a2 += (a - am) * (a - am);
  double astd = std::sqrt(a2 / B) + 1e-8;
  for (double& a : adv_all) a = (a - am) / astd;

  // Return targets feed the value normalizer; the critic fits them in
  // normalized space.
  normalizer_.update(ret_all);

  bool ar = policy_->repr() == PolicyRepr::auto_regressive;
  int rows = 2 * B;
  std::vector<int> agents(static_cast<std::size_t>(rows));
  std::vector<std::vector<double>> obs(static_cast<std::size_t>(rows));
  std::vector<int> prev(static_cast<std::size_t>(rows));
  std::vector<int> taken(static_cast<std::size_t>(rows));
  Tensor logp_old({rows});
  Tensor row_adv({rows});
  Tensor row_weight({rows});
  for (int e = 0; e < E; ++e) {
    for (int t = 0; t < T; ++t) {
      const StepRecord& rec = batch_[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)];
      for (int i = 0; i < 2; ++i) {
        const Decision& d = rec.decisions[static_cast<std::size_t>(i)];
        int row = ((e * T) + t) * 2 + i;
        agents[static_cast<std::size_t>(row)] = d.agent;
        obs[static_cast<std::size_t>(row)] = d.obs;
        prev[static_cast<std::size_t>(row)] = d.prev_action;
        taken[static_cast<std::size_t>(row)] = d.taken;
        logp_old[row] = d.logp_old;
        row_adv[row] = adv_all[static_cast<std::size_t>(e * T + t)];
        row_weight[row] = ar && config_.multi_step ? static_cast<double>(2 - d.order_pos) : 1.0;
      }
    }
  }

  Tensor states({B, 6});
  Tensor v_old_norm({B});
  Tensor target_norm({B});
  for (int e = 0; e < E; ++e) {
    for (int t = 0; t < T; ++t) {
      const StepRecord& rec = batch_[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)];
      int r = e * T + t;
      for (int j = 0; j < 6; ++j) states[r * 6 + j] = rec.state[static_cast<std::size_t>(j)];
      v_old_norm[r] = normalizer_.normalize(rec.value);
      target_norm[r] = normalizer_.normalize(ret_all[static_cast<std::size_t>(r)]);
    }
  }

  PpoIterStats stats;
  stats.iteration = ++iteration_;
  stats.env_steps = env_steps_;
  stats.episodes = static_cast<int>(episode_returns_.size());
  if (!episode_returns_.empty()) {
    double sum_r = 0.0, sum_lp = 0.0;
    for (double r : episode_returns_) sum_r += r;
    for (double lp : episode_logps_) sum_lp += lp;
    stats.mean_episode_return = sum_r / static_cast<double>(episode_returns_.size());
    stats.entropy_mc = -sum_lp / static_cast<double>(episode_logps_.size());
  }

  Tensor adv_weighted({rows});
  for (int r = 0; r < rows; ++r) adv_weighted[r] = row_adv[r];

  // Joint-ratio mode: without multi-step optimization the auto-regressive
  // policy is updated as one joint distribution, i.e. a single clipped
  // importance ratio per timestep over the product of the agents' ratios.
  bool joint_ratio = ar && !config_.multi_step;
  Tensor logp_old_joint({B});
  Tensor step_adv({B});
  if (joint_ratio) {
    for (int r = 0; r < B; ++r) {
      logp_old_joint[r] = logp_old[2 * r] + logp_old[2 * r + 1];
      step_adv[r] = adv_all[static_cast<std::size_t>(r)];
    }
  }

  for (int epoch = 0; epoch < config_.ppo_epochs; ++epoch) {
    {  // actor
      Tape t(&policy_->params());
      int logits = policy_->logits_node(t, agents, obs, prev);
      int logp_all = t.log_softmax_lastdim(logits);
      int logp_sel = t.select_col(logp_all, taken);

      int policy_loss;
      if (joint_ratio) {
        int logp_joint = t.sum_lastdim(t.reshape(logp_sel, {B, 2}));
        int ratio = t.exp_(t.sub(logp_joint, t.constant(logp_old_joint)));
        const Tensor& ratio_v = t.value(ratio);
        for (int r = 0; r < B; ++r) {
          if (!std::isfinite(ratio_v[r])) {
            throw std::runtime_error("PPO joint ratio not finite at step " + std::to_string(r) + ", epoch " +
                                     std::to_string(epoch));
          }
        }
        int surr1 = t.mul_const(ratio, step_adv);
        int surr2 = t.mul_const(t.clamp(ratio, 1.0 - config_.ppo_clip, 1.0 + config_.ppo_clip), step_adv);
        policy_loss = t.mul_scalar(t.sum(t.min_(surr1, surr2)), -1.0 / B);
      } else {
        int ratio = t.exp_(t.sub(logp_sel, t.constant(logp_old)));
        const Tensor& ratio_v = t.value(ratio);
        for (int r = 0; r < rows; ++r) {
          if (!std::isfinite(ratio_v[r])) {
            throw std::runtime_error("PPO ratio not finite at batch row " + std::to_string(r) + " (agent " +
                                     std::to_string(agents[static_cast<std::size_t>(r)]) + ", epoch " +
                                     std::to_string(epoch) + ")");
          }
        }
        int surr1 = t.mul_const(ratio, adv_weighted);
        int surr2 = t.mul_const(t.clamp(ratio, 1.0 - config_.ppo_clip, 1.0 + config_.ppo_clip), adv_weighted);
        int clipped = t.min_(surr1, surr2);
        int weighted = t.mul_const(clipped, row_weight);
        policy_loss = t.mul_scalar(t.sum(weighted), -1.0 / rows);
      }

      int probs = t.exp_(logp_all);
      int entropy = t.mul_scalar(t.sum(t.neg(t.sum_lastdim(t.mul(probs, logp_all)))), 1.0 / rows);
      int loss = t.add(policy_loss, t.mul_scalar(entropy, -config_.entropy_coef));
      stats.policy_loss = t.value(policy_loss)[0];
      t.backward(loss);
      actor_opt_.step(policy_->params());
    }
    {  // critic, clipped huber loss in normalized space
      Tape t(&critic_params_);
      int v_pred = t.reshape(critic_.forward(t, t.constant(states)), {B});
      int v_clip = t.add(t.constant(v_old_norm),
                         t.clamp(t.sub(v_pred, t.constant(v_old_norm)), -config_.value_clip, config_.value_clip));
      int h1 = t.huber(v_pred, target_norm, config_.huber_delta);
      int h2 = t.huber(v_clip, target_norm, config_.huber_delta);
      int vloss = t.mul_scalar(t.mean(t.max_(h1, h2)), config_.value_loss_coef);
      stats.value_loss = t.value(vloss)[0];
      t.backward(vloss);
      critic_opt_.step(critic_params_);
    }
  }
  return stats;
}

JointActionSample bridge_sample_joint(const BridgePolicy& policy, const std::vector<std::vector<double>>& obs,
                                      const std::vector<int>& order, Rng& rng, bool deterministic) {
  bool ar = policy.repr() == PolicyRepr::auto_regressive;
  JointActionSample s;
  s.order = order;
  s.actions.assign(2, -1);
  s.logps.assign(2, 0.0);
  for (int pos = 0; pos < 2; ++pos) {
    int agent = order[static_cast<std::size_t>(pos)];
    int prev = -1;
    if (ar && pos == 1) {
      int pred = order[0];
      prev = bridge_action_in_frame(pred, s.actions[static_cast<std::size_t>(pred)], agent);
    }
    auto probs = policy.action_probs(agent, obs[static_cast<std::size_t>(agent)], prev);
    int action = deterministic ? argmax_index(probs) : rng.categorical(probs);
    s.actions[static_cast<std::size_t>(agent)] = action;
    s.logps[static_cast<std::size_t>(agent)] = std::log(std::max(probs[static_cast<std::size_t>(action)], 1e-300));
  }
  return s;
}

EvalResult eval_bridge_policy(const BridgePolicy& policy, const BridgeSpec& spec, int episodes, bool deterministic,
                              Rng& rng, bool fixed_order) {
  // All episodes run in lockstep so the policy forward passes stay batched.
  bool ar = policy.repr() == PolicyRepr::auto_regressive;
  std::vector<BridgeEnv> envs(static_cast<std::size_t>(episodes), BridgeEnv(spec));
  std::vector<std::vector<std::vector<double>>> obs(static_cast<std::size_t>(episodes));
  std::vector<double> totals(static_cast<std::size_t>(episodes), 0.0);
  for (int e = 0; e < episodes; ++e) obs[static_cast<std::size_t>(e)] = envs[static_cast<std::size_t>(e)].reset();

  ParamStore& params = const_cast<ParamStore&>(policy.params());
  std::vector<int> alive;
  for (;;) {
    alive.clear();
    for (int e = 0; e < episodes; ++e) {
      if (!envs[static_cast<std::size_t>(e)].done()) alive.push_back(e);
    }
    if (alive.empty()) break;
    int n = static_cast<int>(alive.size());

    std::vector<std::array<int, 2>> orders(static_cast<std::size_t>(n), {0, 1});
    if (ar && !fixed_order) {
      for (int i = 0; i < n; ++i) {
        auto p = sample_execution_order(2, rng);
        orders[static_cast<std::size_t>(i)] = {p[0], p[1]};
      }
    }

    std::vector<std::array<int, 2>> actions(static_cast<std::size_t>(n));
    for (int pos = 0; pos < 2; ++pos) {
      std::vector<int> agents(static_cast<std::size_t>(n));
      std::vector<std::vector<double>> pos_obs(static_cast<std::size_t>(n));
      std::vector<int> prev(static_cast<std::size_t>(n), -1);
      for (int i = 0; i < n; ++i) {
        int agent = orders[static_cast<std::size_t>(i)][static_cast<std::size_t>(pos)];
        agents[static_cast<std::size_t>(i)] = agent;
        pos_obs[static_cast<std::size_t>(i)] = obs[static_cast<std::size_t>(alive[static_cast<std::size_t>(i)])][static_cast<std::size_t>(agent)];
        if (ar && pos == 1) {
          int pred = orders[static_cast<std::size_t>(i)][0];
          prev[static_cast<std::size_t>(i)] = bridge_action_in_frame(
              pred, actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(pred)], agent);
        }
      }
      Tape tape(&params);
      int logits = policy.logits_node(tape, agents, pos_obs, prev);
      int logp = tape.log_softmax_lastdim(logits);
      const Tensor& lp = tape.value(logp);
      int A = policy.n_actions();
      for (int i = 0; i < n; ++i) {
        int action;
        if (deterministic) {
          action = 0;
          for (int a = 1; a < A; ++a) {
            if (lp[i * A + a] > lp[i * A + action]) action = a;
          }
        } else {
          std::vector<double> probs(static_cast<std::size_t>(A));
          for (int a = 0; a < A; ++a) probs[static_cast<std::size_t>(a)] = std::exp(lp[i * A + a]);
          action = rng.categorical(probs);
        }
        actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(agents[static_cast<std::size_t>(i)])] = action;
      }
    }

    for (int i = 0; i < n; ++i) {
      int e = alive[static_cast<std::size_t>(i)];
      EnvStep step = envs[static_cast<std::size_t>(e)].step(
          {actions[static_cast<std::size_t>(i)][0], actions[static_cast<std::size_t>(i)][1]});
      totals[static_cast<std::size_t>(e)] += step.team_reward;
      obs[static_cast<std::size_t>(e)] = step.obs;
    }
  }

  EvalResult res;
  res.returns = totals;
  double sum = 0.0;
  for (double r : res.returns) sum += r;
  res.mean = sum / episodes;
  double sq = 0.0;
  for (double r : res.returns) sq += (r - res.mean) * (r - res.mean);
  res.stddev = std::sqrt(sq / episodes);
  return res;
}

}  // namespace marlab
