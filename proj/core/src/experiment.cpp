#include "marlab/experiment.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <thread>

#include <json.hpp>

#include "marlab/checkpoint.hpp"
#include "marlab/csv.hpp"
#include "marlab/metrics.hpp"

namespace marlab {

namespace fs = std::filesystem;

std::string resolve_out_dir(const std::string& out_dir) {
  const char* root = std::getenv("MARLAB_OUT_ROOT");
  if (root && *root && fs::path(out_dir).is_relative()) {
    return (fs::path(root) / out_dir).string();
  }
  return out_dir;
}

std::string model_tag(const ExperimentConfig& cfg) {
  if (cfg.is_vd()) return "mixer/" + cfg.algorithm;
  return "policy/" + std::string(policy_repr_name(cfg.policy_repr()));
}

namespace {

MatrixGameSpec matrix_spec(const ExperimentConfig& cfg) {
  return cfg.env == "xor" ? xor_game() : permutation_game(cfg.perm_n);
}

void write_q_table_csv(const std::string& path, const VdModel& model, const PayoffTensor& payoff,
                       std::vector<std::string>& files) {
  std::vector<std::string> header;
  for (int i = 0; i < payoff.n_agents(); ++i) header.push_back("a" + std::to_string(i + 1));
  header.push_back("q_tot");
  CsvWriter csv(path, header);
  std::vector<double> q = model.q_tot_all_joint(payoff);
  for (int idx = 0; idx < payoff.joint_count(); ++idx) {
    std::vector<double> row;
    for (int a : payoff.unflatten(idx)) row.push_back(a);
    row.push_back(q[static_cast<std::size_t>(idx)]);
    csv.row(row);
  }
  files.push_back(fs::path(path).filename().string());
}

void run_fit(const ExperimentConfig& cfg, std::uint64_t seed, Rng& rng, const std::string& dir, RunRecord& rec) {
  (void)seed;
  MatrixGameSpec game = matrix_spec(cfg);
  VdModel model = VdModel::stateless(cfg.mixer_kind(), game.n_agents, game.n_actions, rng, false);

  FitResult res = fit_payoff(model, game.payoff, cfg.fit_steps, cfg.fit_learning_rate);
  CsvWriter err_csv(dir + "/error.csv", {"step", "error"});
  for (std::size_t i = 0; i < res.error_curve.size(); ++i) {
    int step = static_cast<int>(i);
    if (step % cfg.fit_record_interval == 0 || i + 1 == res.error_curve.size()) {
      err_csv.row({static_cast<double>(step), res.error_curve[i]});
    }
  }
  rec.files.push_back("error.csv");
  write_q_table_csv(dir + "/final_q.csv", model, game.payoff, rec.files);
  save_checkpoint(dir + "/checkpoint.txt", model_tag(cfg), cfg.fingerprint(), model.params());
  rec.files.push_back("checkpoint.txt");
  rec.summary["final_error"] = res.final_error;
}

void run_qlearn(const ExperimentConfig& cfg, std::uint64_t seed, Rng& rng, const std::string& dir, RunRecord& rec) {
  (void)seed;
  std::unique_ptr<Env> env;
  VdModel model = [&] {
    if (cfg.env == "bridge") {
      env = std::make_unique<BridgeEnv>(cfg.bridge);
      return VdModel::bridge_net(cfg.mixer_kind(), 6, kBridgeActionCount, 2, 6, false, rng);
    }
    MatrixGameSpec game = matrix_spec(cfg);
    env = std::make_unique<MatrixGameEnv>(game);
    return VdModel::stateless(cfg.mixer_kind(), game.n_agents, game.n_actions, rng, true);
  }();

  QLearnConfig qc = cfg.qlearn;
  qc.gamma = cfg.env == "bridge" ? cfg.bridge.gamma : qc.gamma;

  const char* metric_name = cfg.env == "bridge" ? "greedy_return" : "error";
  CsvWriter curve(dir + "/" + (cfg.env == "bridge" ? "return.csv" : "error.csv"),
                  {"step", metric_name});
  rec.files.push_back(cfg.env == "bridge" ? "return.csv" : "error.csv");

  QLearnRecord qr = qlearn(model, *env, qc, rng, [&](int step, const VdModel& m) {
    (void)m;
    (void)step;
  });
  double min_metric = 1e300, max_metric = -1e300;
  for (auto& [step, value] : qr.curve) {
    curve.row({static_cast<double>(step), value});
    min_metric = std::min(min_metric, value);
    max_metric = std::max(max_metric, value);
  }

  if (cfg.env != "bridge") {
    MatrixGameSpec game = matrix_spec(cfg);
    write_q_table_csv(dir + "/final_q.csv", model, game.payoff, rec.files);
    auto q = model.q_tot_all_joint(game.payoff);
    rec.summary["q_01"] = q[static_cast<std::size_t>(game.payoff.flat_index({0, 1}))];
    rec.summary["q_10"] = q[static_cast<std::size_t>(game.payoff.flat_index({1, 0}))];
    rec.summary["max_optimal_q"] = std::max(rec.summary["q_01"], rec.summary["q_10"]);
    rec.summary["final_error"] = qr.curve.back().second;
    rec.summary["min_recorded_error"] = min_metric;
  } else {
    rec.summary["final_return"] = qr.curve.back().second;
    rec.summary["best_return"] = max_metric;
  }
  save_checkpoint(dir + "/checkpoint.txt", model_tag(cfg), cfg.fingerprint(), model.params());
  rec.files.push_back("checkpoint.txt");
}

void run_reinforce(const ExperimentConfig& cfg, std::uint64_t seed, Rng& rng, const std::string& dir,
                   RunRecord& rec) {
  (void)seed;
  MatrixGameSpec game = matrix_spec(cfg);
  MatrixPolicy policy(cfg.policy_repr(), game.n_agents, game.n_actions, rng);

  CsvWriter curve(dir + "/curve.csv", {"update", "expected_return", "entropy_nats"});
  rec.files.push_back("curve.csv");
  train_reinforce(policy, game, cfg.reinforce, rng, [&](const ReinforcePoint& pt) {
    curve.row({static_cast<double>(pt.update), pt.expected_return, pt.entropy});
  });

  EntropyEstimate ent = trajectory_entropy_exact(policy, cfg.reinforce.randomized_order);
  rec.summary["final_return"] = exact_expected_return(policy, game.payoff, cfg.reinforce.randomized_order);
  rec.summary["final_entropy"] = ent.value;

  JointActionHistogram hist =
      joint_action_histogram(policy, game, cfg.histogram_episodes, rng, cfg.reinforce.randomized_order);
  write_text_file(dir + "/histogram.csv", histogram_to_csv(hist));
  rec.files.push_back("histogram.csv");
  if (game.n_agents == 4 && game.n_actions == 4) {
    write_text_file(dir + "/heatmap16.csv", histogram_16x16_csv(hist));
    rec.files.push_back("heatmap16.csv");
  }
  long occupied = 0, optimal_occupied = 0;
  for (int idx = 0; idx < game.payoff.joint_count(); ++idx) {
    if (hist.counts[static_cast<std::size_t>(idx)] > 0) {
      ++occupied;
      if (game.payoff.flat(idx) == 1.0) ++optimal_occupied;
    }
  }
  long max_cell = 0;
  for (long c : hist.counts) max_cell = std::max(max_cell, c);
  rec.summary["histogram_cells"] = static_cast<double>(occupied);
  rec.summary["histogram_optimal_cells"] = static_cast<double>(optimal_occupied);
  rec.summary["histogram_max_cell"] = static_cast<double>(max_cell);

  save_checkpoint(dir + "/checkpoint.txt", model_tag(cfg), cfg.fingerprint(), policy.params());
  rec.files.push_back("checkpoint.txt");
}

void run_ppo(const ExperimentConfig& cfg, std::uint64_t seed, Rng& rng, const std::string& dir, RunRecord& rec) {
  (void)seed;
  auto backbone = cfg.policy_repr() == PolicyRepr::auto_regressive && cfg.ar_attention
                      ? BridgePolicy::Backbone::attention
                      : BridgePolicy::Backbone::mlp;
  auto policy = std::make_unique<BridgePolicy>(cfg.policy_repr(), backbone, 2, rng);
  PpoTrainer trainer(std::move(policy), cfg.bridge, cfg.ppo, rng);

  CsvWriter curve(dir + "/train.csv",
                  {"iteration", "env_steps", "mean_return", "entropy_mc", "policy_loss", "value_loss"});
  rec.files.push_back("train.csv");
  for (int i = 0; i < cfg.ppo_iterations; ++i) {
    PpoIterStats st = trainer.iterate();
    curve.row({static_cast<double>(st.iteration), static_cast<double>(st.env_steps), st.mean_episode_return,
               st.entropy_mc, st.policy_loss, st.value_loss});
  }

  EvalResult ev = eval_bridge_policy(trainer.policy(), cfg.bridge, cfg.eval_episodes, cfg.eval_deterministic, rng);
  CsvWriter eval_csv(dir + "/eval.csv", {"episode", "return"});
  for (std::size_t i = 0; i < ev.returns.size(); ++i) eval_csv.row({static_cast<double>(i), ev.returns[i]});
  rec.files.push_back("eval.csv");

  BridgeState probe = bridge_ends_state(cfg.bridge);
  rec.summary["eval_mean"] = ev.mean;
  rec.summary["eval_std"] = ev.stddev;
  rec.summary["ends_state_entropy"] = bridge_state_policy_entropy(trainer.policy(), cfg.bridge, probe);
  rec.summary["ends_state_entropy_fixed_order"] =
      bridge_state_policy_entropy(trainer.policy(), cfg.bridge, probe, true);

  save_checkpoint(dir + "/checkpoint.txt", model_tag(cfg), cfg.fingerprint(), trainer.policy().params());
  rec.files.push_back("checkpoint.txt");
}

void write_manifest(const RunRecord& rec, const std::string& dir) {
  nlohmann::json j;
  j["format"] = "marlab-run-manifest/1";
  j["experiment"] = rec.experiment;
  j["seed"] = rec.seed;
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016" PRIx64, rec.fingerprint);
  j["fingerprint"] = fp;
  j["files"] = rec.files;
  j["duration_s"] = rec.duration_s;
  j["aborted"] = rec.aborted;
  if (rec.aborted) j["abort_reason"] = rec.abort_reason;
  j["summary"] = rec.summary;
  write_text_file(dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace

RunRecord run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RunRecord rec;
  rec.experiment = cfg.experiment;
  rec.seed = seed;
  rec.fingerprint = cfg.fingerprint();

  fs::path dir = fs::path(resolve_out_dir(cfg.out_dir)) / cfg.experiment / ("seed" + std::to_string(seed));
  fs::create_directories(dir);
  rec.run_dir = dir.string();

  write_text_file((dir / "config.txt").string(), cfg.serialize());
  rec.files.push_back("config.txt");

  auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed);
  try {
    if (cfg.regime == "fit") {
      run_fit(cfg, seed, rng, dir.string(), rec);
    } else if (cfg.regime == "qlearn") {
      run_qlearn(cfg, seed, rng, dir.string(), rec);
    } else if (cfg.regime == "reinforce") {
      run_reinforce(cfg, seed, rng, dir.string(), rec);
    } else {
      run_ppo(cfg, seed, rng, dir.string(), rec);
    }
  } catch (const std::exception& e) {
    rec.aborted = true;
    rec.abort_reason = e.what();
  }
  rec.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(rec, dir.string());
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int max_parallel) {
  cfg.validate();
  int n = static_cast<int>(cfg.seeds.size());
  std::vector<RunRecord> records(static_cast<std::size_t>(n));
  if (max_parallel <= 1) {
    for (int i = 0; i < n; ++i) records[static_cast<std::size_t>(i)] = run_one_seed(cfg, cfg.seeds[static_cast<std::size_t>(i)]);
    return records;
  }
  for (int base = 0; base < n; base += max_parallel) {
    int count = std::min(max_parallel, n - base);
    std::vector<std::thread> workers;
    for (int k = 0; k < count; ++k) {
      int idx = base + k;
      workers.emplace_back([&cfg, &records, idx] {
        records[static_cast<std::size_t>(idx)] = run_one_seed(cfg, cfg.seeds[static_cast<std::size_t>(idx)]);
      });
    }
    for (auto& w : workers) w.join();
  }
  return records;
}

}  // namespace marlab
