#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marlab/bridge.hpp"
#include "marlab/ppo.hpp"
#include "marlab/qlearn.hpp"
#include "marlab/reinforce.hpp"

namespace marlab {

// One experiment = environment + algorithm + training regime + seeds.
// Defaults reproduce the paper's hyperparameter tables; presets pin each
// desk-scale experiment so tables and figures are one command each.
struct ExperimentConfig {
  std::string experiment = "custom";

  // environment
  std::string env = "xor";  // xor | perm | bridge
  int perm_n = 4;
  BridgeSpec bridge;

  // learner
  std::string algorithm = "vdn";  // vdn qmix qplex pg_sh pg_id pg_ind pg_ar
  std::string regime = "fit";     // fit qlearn reinforce ppo

  // fit
  int fit_steps = 10000;
  double fit_learning_rate = 0.1;
  int fit_record_interval = 10;

  QLearnConfig qlearn;
  ReinforceConfig reinforce;
  PpoConfig ppo;
  int ppo_iterations = 200;
  bool ar_attention = true;  // pg_ar backbone: attention or flat MLP (ablation)

  // evaluation
  int eval_episodes = 100;
  bool eval_deterministic = false;
  int histogram_episodes = 1000;

  // run bookkeeping (not fingerprinted)
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string out_dir = "runs";

  bool is_vd() const;
  bool is_pg() const;
  PolicyRepr policy_repr() const;   // pg algorithms only
  MixerKind mixer_kind() const;     // vd algorithms only

  // Rejects unknown algorithm/regime/env combinations (e.g. pg_ar + fit).
  void validate() const;

  // Canonical `key = value` text with [section] headers, fixed order.
  std::string serialize(bool include_run_fields = true) const;

  // Parses the documented format; unknown keys, malformed values and
  // incompatible combinations are errors naming the line.
  static ExperimentConfig parse(const std::string& text);

  // FNV-1a over the canonical serialization without run bookkeeping:
  // deterministic under field reordering in the input text.
  std::uint64_t fingerprint() const;
};

// Built-in presets covering each experiment (xor_fit_*, xor_qlearn_*,
// xor_pg_*, perm4_pg_*, bridge_*, bridge_ablation_*).
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();
bool is_preset(const std::string& name);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace marlab
