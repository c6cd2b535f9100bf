#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "marlab/checkpoint.hpp"
#include "marlab/csv.hpp"
#include "marlab/experiment.hpp"
#include "marlab/metrics.hpp"

namespace fs = std::filesystem;
using namespace marlab;

namespace {

struct CommonOpts {
  std::string config_file;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  int seed_count = 0;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "config file (key = value with [section] headers)");
  cmd->add_option("--out", opts.out_dir, "output directory (default: runs)");
  cmd->add_option("--seed-list", opts.seeds, "explicit seeds, e.g. --seed-list 0 1 2")->expected(-1);
  cmd->add_option("--seeds", opts.seed_count, "use seeds 0..N-1");
  cmd->add_option("--jobs", opts.jobs, "seeds to run concurrently (default 1)");
}

ExperimentConfig finalize(ExperimentConfig cfg, const CommonOpts& opts) {
  if (!opts.config_file.empty()) {
    cfg = ExperimentConfig::parse(read_text_file(opts.config_file));
  }
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.seeds.empty()) {
    cfg.seeds = opts.seeds;
  } else if (opts.seed_count > 0) {
    cfg.seeds.clear();
    for (int s = 0; s < opts.seed_count; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  cfg.validate();
  return cfg;
}

int run_and_report(const ExperimentConfig& cfg, int jobs = 1) {
  std::printf("experiment %s  (fingerprint %016" PRIx64 ", %zu seed%s)\n", cfg.experiment.c_str(),
              cfg.fingerprint(), cfg.seeds.size(), cfg.seeds.size() == 1 ? "" : "s");
  bool any_abort = false;
  for (const RunRecord& rec : run_experiment(cfg, jobs)) {
    if (rec.aborted) {
      any_abort = true;
      std::printf("  seed %" PRIu64 ": ABORTED (%s)\n", rec.seed, rec.abort_reason.c_str());
      continue;
    }
    std::printf("  seed %" PRIu64 ": done in %.1fs ->", rec.seed, rec.duration_s);
    for (const auto& [k, v] : rec.summary) std::printf("  %s=%.6g", k.c_str(), v);
    std::printf("\n");
  }
  return any_abort ? 1 : 0;
}

int cmd_preset_family(const std::string& fallback_preset, const CommonOpts& opts, const std::string& mixer,
                      const std::string& algo, int steps_override, int iters_override) {
  std::string name = fallback_preset;
  if (!mixer.empty()) {
    name = fallback_preset.substr(0, fallback_preset.rfind('_') + 1) + mixer;
  }
  ExperimentConfig cfg = preset_config(name);
  if (!algo.empty()) cfg.algorithm = algo;
  if (steps_override > 0) {
    cfg.fit_steps = steps_override;
    cfg.qlearn.total_steps = steps_override;
    cfg.reinforce.updates = steps_override;
  }
  if (iters_override > 0) cfg.ppo_iterations = iters_override;
  return run_and_report(finalize(std::move(cfg), opts), opts.jobs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marlab: a desk-scale multi-agent RL laboratory (value decomposition and policy gradients\n"
               "on the XOR game, n-player permutation games and the Bridge grid-world)"};
  app.require_subcommand(1);

  // ---- fit-xor ----
  CommonOpts fit_opts;
  std::string fit_mixer = "vdn";
  int fit_steps = 0;
  auto* fit = app.add_subcommand("fit-xor", "uniformly fit Q_tot to the XOR payoff matrix");
  fit->add_option("--mixer", fit_mixer, "vdn | qmix | qplex")->check(CLI::IsMember({"vdn", "qmix", "qplex"}));
  fit->add_option("--steps", fit_steps, "gradient steps (default 10000)");
  add_common(fit, fit_opts);

  // ---- qlearn-xor ----
  CommonOpts qx_opts;
  std::string qx_mixer = "vdn";
  int qx_steps = 0;
  auto* qx = app.add_subcommand("qlearn-xor", "epsilon-greedy Q-learning on the XOR game");
  qx->add_option("--mixer", qx_mixer, "vdn | qmix | qplex")->check(CLI::IsMember({"vdn", "qmix", "qplex"}));
  qx->add_option("--steps", qx_steps, "environment steps (default 20000)");
  add_common(qx, qx_opts);

  // ---- train-matrix ----
  CommonOpts tm_opts;
  std::string tm_preset = "xor_pg_ind";
  int tm_updates = 0;
  auto* tm = app.add_subcommand("train-matrix", "REINFORCE on a matrix game (xor_pg_*, perm4_pg_*)");
  tm->add_option("--preset", tm_preset, "xor_pg_sh | xor_pg_ind | perm4_pg_ind | perm4_pg_ar")
      ->check(CLI::IsMember({"xor_pg_sh", "xor_pg_ind", "perm4_pg_ind", "perm4_pg_ar"}));
  tm->add_option("--updates", tm_updates, "optimizer updates");
  add_common(tm, tm_opts);

  // ---- train-bridge ----
  CommonOpts tb_opts;
  std::string tb_algo = "pg_id";
  int tb_iters = 0;
  bool tb_no_mo = false, tb_no_ro = false, tb_no_attn = false;
  auto* tb = app.add_subcommand("train-bridge", "PPO on the Bridge game");
  tb->add_option("--algo", tb_algo, "pg_sh | pg_id | pg_ind | pg_ar")
      ->check(CLI::IsMember({"pg_sh", "pg_id", "pg_ind", "pg_ar"}));
  tb->add_option("--iterations", tb_iters, "PPO iterations");
  tb->add_flag("--no-multi-step", tb_no_mo, "pg_ar: disable multi-step optimization");
  tb->add_flag("--no-randomized-order", tb_no_ro, "pg_ar: fix the execution order");
  tb->add_flag("--no-attention", tb_no_attn, "pg_ar: flat MLP backbone instead of attention");
  add_common(tb, tb_opts);

  // ---- qlearn-bridge ----
  CommonOpts qb_opts;
  std::string qb_mixer = "qmix";
  int qb_steps = 0;
  auto* qb = app.add_subcommand("qlearn-bridge", "value-decomposition Q-learning on the Bridge game");
  qb->add_option("--mixer", qb_mixer, "vdn | qmix | qplex")->check(CLI::IsMember({"vdn", "qmix", "qplex"}));
  qb->add_option("--steps", qb_steps, "environment steps");
  add_common(qb, qb_opts);

  // ---- eval ----
  std::string ev_checkpoint;
  int ev_episodes = 100;
  bool ev_det = false, ev_fixed_order = false;
  auto* ev = app.add_subcommand("eval", "evaluate a Bridge policy checkpoint");
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint.txt from a train-bridge run")->required();
  ev->add_option("--episodes", ev_episodes, "evaluation episodes");
  ev->add_flag("--deterministic", ev_det, "argmax actions instead of sampling");
  ev->add_flag("--fixed-order", ev_fixed_order, "pg_ar: fix the execution order at evaluation");

  // ---- oracle-bridge ----
  std::string ob_preset = "default";
  int ob_length = 7, ob_horizon = 50;
  double ob_cost = 0.01;
  auto* ob = app.add_subcommand("oracle-bridge", "exact optimal Bridge return by joint value iteration");
  ob->add_option("--preset", ob_preset, "default (L=7, H=50, c=0.01)");
  ob->add_option("--length", ob_length, "corridor length");
  ob->add_option("--horizon", ob_horizon, "episode horizon");
  ob->add_option("--cost", ob_cost, "distance penalty coefficient");

  // ---- export-heatmap ----
  std::string xh_run;
  auto* xh = app.add_subcommand("export-heatmap", "16x16 joint-action layout from a perm4 run directory");
  xh->add_option("--run", xh_run, "run directory containing histogram.csv")->required();

  // ---- list-presets ----
  auto* lp = app.add_subcommand("list-presets", "list built-in experiment presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_preset_family("xor_fit_" + fit_mixer, fit_opts, "", "", fit_steps, 0);
    if (qx->parsed()) return cmd_preset_family("xor_qlearn_" + qx_mixer, qx_opts, "", "", qx_steps, 0);
    if (tm->parsed()) return cmd_preset_family(tm_preset, tm_opts, "", "", tm_updates, 0);
    if (qb->parsed()) return cmd_preset_family("bridge_" + qb_mixer, qb_opts, "", "", qb_steps, 0);

    if (tb->parsed()) {
      std::string name = "bridge_" + tb_algo;
      if (tb_algo == "pg_ar") {
        if (tb_no_mo) name = "bridge_ablation_no_mo";
        if (tb_no_ro) name = "bridge_ablation_no_ro";
        if (tb_no_attn) name = "bridge_ablation_no_attn";
      }
      ExperimentConfig cfg = preset_config(name);
      if (tb_algo == "pg_ar") {
        cfg.ppo.multi_step = !tb_no_mo;
        cfg.ppo.randomized_order = !tb_no_ro;
        cfg.ar_attention = !tb_no_attn;
      }
      if (tb_iters > 0) cfg.ppo_iterations = tb_iters;
      return run_and_report(finalize(std::move(cfg), tb_opts), tb_opts.jobs);
    }

    if (ev->parsed()) {
      Checkpoint ckpt = load_checkpoint(ev_checkpoint);
      if (ckpt.model_tag.rfind("policy/", 0) != 0) {
        throw std::runtime_error("eval expects a policy checkpoint, got '" + ckpt.model_tag + "'");
      }
      PolicyRepr repr = policy_repr_from_name(ckpt.model_tag.substr(7));
      Rng init_rng(0);
      bool attention = false;
      for (const auto& [name, t] : ckpt.tensors) {
        if (name.rfind("ar.", 0) == 0) attention = true;
      }
      BridgePolicy policy(repr, attention ? BridgePolicy::Backbone::attention : BridgePolicy::Backbone::mlp, 2,
                          init_rng);
      load_into(policy.params(), ckpt, ckpt.model_tag);
      BridgeSpec spec;
      Rng rng(12345);
      EvalResult res = eval_bridge_policy(policy, spec, ev_episodes, ev_det, rng, ev_fixed_order);
      std::printf("episodes %d  mean %.6f  std %.6f\n", ev_episodes, res.mean, res.stddev);
      return 0;
    }

    if (ob->parsed()) {
      BridgeSpec spec;
      spec.length = ob_length;
      spec.horizon = ob_horizon;
      spec.distance_cost = ob_cost;
      std::printf("%.10g\n", bridge_optimal_return(spec));
      return 0;
    }

    if (xh->parsed()) {
      std::string hist_path = (fs::path(xh_run) / "histogram.csv").string();
      std::string text = read_text_file(hist_path);
      // rebuild the counts tensor from the flat histogram rows
      JointActionHistogram hist;
      hist.dims = {4, 4, 4, 4};
      hist.counts.assign(256, 0);
      std::istringstream is(text);
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        int a[4], count;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d", &a[0], &a[1], &a[2], &a[3], &count) != 5) {
          throw std::runtime_error("export-heatmap needs a 4-agent histogram.csv (run perm4_pg_*)");
        }
        int idx = ((a[0] * 4 + a[1]) * 4 + a[2]) * 4 + a[3];
        hist.counts[static_cast<std::size_t>(idx)] = count;
        hist.episodes += count;
      }
      std::string out_path = (fs::path(xh_run) / "heatmap16.csv").string();
      write_text_file(out_path, histogram_16x16_csv(hist));
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }

    if (lp->parsed()) {
      for (const std::string& name : preset_names()) std::printf("%s\n", name.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
