#include "marlab/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace marlab {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool ExperimentConfig::is_vd() const { return algorithm == "vdn" || algorithm == "qmix" || algorithm == "qplex"; }

bool ExperimentConfig::is_pg() const {
  return algorithm == "pg_sh" || algorithm == "pg_id" || algorithm == "pg_ind" || algorithm == "pg_ar";
}

PolicyRepr ExperimentConfig::policy_repr() const {
  if (algorithm == "pg_sh") return PolicyRepr::shared;
  if (algorithm == "pg_id") return PolicyRepr::id_conditioned;
  if (algorithm == "pg_ind") return PolicyRepr::individual;
  if (algorithm == "pg_ar") return PolicyRepr::auto_regressive;
  throw std::runtime_error("algorithm " + algorithm + " has no policy representation");
}

MixerKind ExperimentConfig::mixer_kind() const { return mixer_kind_from_name(algorithm); }

void ExperimentConfig::validate() const {
  if (env != "xor" && env != "perm" && env != "bridge") {
    throw std::runtime_error("unknown env '" + env + "' (expected xor, perm or bridge)");
  }
  if (!is_vd() && !is_pg()) throw std::runtime_error("unknown algorithm '" + algorithm + "'");
  if (regime != "fit" && regime != "qlearn" && regime != "reinforce" && regime != "ppo") {
    throw std::runtime_error("unknown regime '" + regime + "'");
  }
  if (is_vd() && (regime == "reinforce" || regime == "ppo")) {
    throw std::runtime_error("algorithm " + algorithm + " is value-based; regime " + regime + " is incompatible");
  }
  if (is_pg() && (regime == "fit" || regime == "qlearn")) {
    throw std::runtime_error("algorithm " + algorithm + " is policy-based; regime " + regime + " is incompatible");
  }
  if (regime == "fit" && env == "bridge") throw std::runtime_error("payoff fitting needs a stateless matrix game");
  if (regime == "reinforce" && env == "bridge") {
    throw std::runtime_error("reinforce runs on matrix games; use regime = ppo for bridge");
  }
  if (regime == "ppo" && env != "bridge") throw std::runtime_error("ppo runs on bridge");
  if (env == "perm" && perm_n < 2) throw std::runtime_error("perm_n must be >= 2");
  if (seeds.empty()) throw std::runtime_error("at least one seed is required");
  bridge.validate();
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string ExperimentConfig::serialize(bool include_run_fields) const {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "experiment = " << experiment << "\n";
  os << "env = " << env << "\n";
  os << "algorithm = " << algorithm << "\n";
  os << "regime = " << regime << "\n";
  if (include_run_fields) {
    os << "seeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
    os << "\n";
    os << "out_dir = " << out_dir << "\n";
  }
  os << "\n[env]\n";
  os << "perm_n = " << perm_n << "\n";
  os << "corridor_length = " << bridge.length << "\n";
  os << "horizon = " << bridge.horizon << "\n";
  os << "distance_cost = " << fmt_double(bridge.distance_cost) << "\n";
  os << "bridge_gamma = " << fmt_double(bridge.gamma) << "\n";
  os << "\n[fit]\n";
  os << "steps = " << fit_steps << "\n";
  os << "learning_rate = " << fmt_double(fit_learning_rate) << "\n";
  os << "record_interval = " << fit_record_interval << "\n";
  os << "\n[qlearn]\n";
  os << "gamma = " << fmt_double(qlearn.gamma) << "\n";
  os << "target_update_interval = " << qlearn.target_update_interval << "\n";
  os << "learning_rate = " << fmt_double(qlearn.learning_rate) << "\n";
  os << "grad_norm_clip = " << fmt_double(qlearn.grad_norm_clip) << "\n";
  os << "eps_start = " << fmt_double(qlearn.eps_start) << "\n";
  os << "eps_end = " << fmt_double(qlearn.eps_end) << "\n";
  os << "eps_decay_steps = " << qlearn.eps_decay_steps << "\n";
  os << "batch_size = " << qlearn.batch_size << "\n";
  os << "replay_capacity = " << qlearn.replay_capacity << "\n";
  os << "total_steps = " << qlearn.total_steps << "\n";
  os << "warmup_steps = " << qlearn.warmup_steps << "\n";
  os << "train_interval = " << qlearn.train_interval << "\n";
  os << "record_interval = " << qlearn.record_interval << "\n";
  os << "\n[reinforce]\n";
  os << "updates = " << reinforce.updates << "\n";
  os << "batch_episodes = " << reinforce.batch_episodes << "\n";
  os << "learning_rate = " << fmt_double(reinforce.learning_rate) << "\n";
  os << "entropy_coef = " << fmt_double(reinforce.entropy_coef) << "\n";
  os << "grad_norm_clip = " << fmt_double(reinforce.grad_norm_clip) << "\n";
  os << "multi_step = " << (reinforce.multi_step ? "true" : "false") << "\n";
  os << "randomized_order = " << (reinforce.randomized_order ? "true" : "false") << "\n";
  os << "record_interval = " << reinforce.record_interval << "\n";
  os << "\n[ppo]\n";
  os << "iterations = " << ppo_iterations << "\n";
  os << "gamma = " << fmt_double(ppo.gamma) << "\n";
  os << "gae_lambda = " << fmt_double(ppo.gae_lambda) << "\n";
  os << "ppo_clip = " << fmt_double(ppo.ppo_clip) << "\n";
  os << "value_clip = " << fmt_double(ppo.value_clip) << "\n";
  os << "huber_delta = " << fmt_double(ppo.huber_delta) << "\n";
  os << "entropy_coef = " << fmt_double(ppo.entropy_coef) << "\n";
  os << "learning_rate = " << fmt_double(ppo.learning_rate) << "\n";
  os << "grad_norm_clip = " << fmt_double(ppo.grad_norm_clip) << "\n";
  os << "ppo_epochs = " << ppo.ppo_epochs << "\n";
  os << "batch_steps = " << ppo.batch_steps << "\n";
  os << "n_envs = " << ppo.n_envs << "\n";
  os << "value_loss_coef = " << fmt_double(ppo.value_loss_coef) << "\n";
  os << "multi_step = " << (ppo.multi_step ? "true" : "false") << "\n";
  os << "randomized_order = " << (ppo.randomized_order ? "true" : "false") << "\n";
  os << "ar_attention = " << (ar_attention ? "true" : "false") << "\n";
  os << "\n[eval]\n";
  os << "episodes = " << eval_episodes << "\n";
  os << "deterministic = " << (eval_deterministic ? "true" : "false") << "\n";
  os << "histogram_episodes = " << histogram_episodes << "\n";
  return os.str();
}

std::uint64_t ExperimentConfig::fingerprint() const { return fnv1a64(serialize(false)); }

namespace {

struct Parser {
  ExperimentConfig cfg;
  std::string section;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": " + msg);
  }

  int to_int(const std::string& v) const {
    try {
      std::size_t pos;
      int r = std::stoi(v, &pos);
      if (pos != v.size()) fail("expected integer, got '" + v + "'");
      return r;
    } catch (const std::invalid_argument&) {
      fail("expected integer, got '" + v + "'");
    } catch (const std::out_of_range&) {
      fail("integer out of range: '" + v + "'");
    }
  }

  double to_double(const std::string& v) const {
    try {
      std::size_t pos;
      double r = std::stod(v, &pos);
      if (pos != v.size()) fail("expected number, got '" + v + "'");
      return r;
    } catch (const std::invalid_argument&) {
      fail("expected number, got '" + v + "'");
    } catch (const std::out_of_range&) {
      fail("number out of range: '" + v + "'");
    }
  }

  bool to_bool(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false, got '" + v + "'");
  }

  std::vector<std::uint64_t> to_seed_list(const std::string& v) const {
    std::vector<std::uint64_t> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      if (tok.empty()) fail("empty seed entry");
      out.push_back(std::stoull(tok));
    }
    if (out.empty()) fail("empty seed list");
    return out;
  }

  void apply(const std::string& key, const std::string& value) {
    if (section == "experiment") {
      if (key == "preset") {
        std::vector<std::uint64_t> keep_seeds = cfg.seeds;
        std::string keep_out = cfg.out_dir;
        cfg = preset_config(value);
        (void)keep_seeds;
        (void)keep_out;
      } else if (key == "experiment") {
        cfg.experiment = value;
      } else if (key == "env") {
        cfg.env = value;
      } else if (key == "algorithm") {
        cfg.algorithm = value;
      } else if (key == "regime") {
        cfg.regime = value;
      } else if (key == "seeds") {
        cfg.seeds = to_seed_list(value);
      } else if (key == "out_dir") {
        cfg.out_dir = value;
      } else {
        fail("unknown key '" + key + "' in [experiment]");
      }
    } else if (section == "env") {
      if (key == "perm_n") {
        cfg.perm_n = to_int(value);
      } else if (key == "corridor_length") {
        cfg.bridge.length = to_int(value);
      } else if (key == "horizon") {
        cfg.bridge.horizon = to_int(value);
      } else if (key == "distance_cost") {
        cfg.bridge.distance_cost = to_double(value);
      } else if (key == "bridge_gamma") {
        cfg.bridge.gamma = to_double(value);
      } else {
        fail("unknown key '" + key + "' in [env]");
      }
    } else if (section == "fit") {
      if (key == "steps") {
        cfg.fit_steps = to_int(value);
      } else if (key == "learning_rate") {
        cfg.fit_learning_rate = to_double(value);
      } else if (key == "record_interval") {
        cfg.fit_record_interval = to_int(value);
      } else {
        fail("unknown key '" + key + "' in [fit]");
      }
    } else if (section == "qlearn") {
      if (key == "gamma") {
        cfg.qlearn.gamma = to_double(value);
      } else if (key == "target_update_interval") {
        cfg.qlearn.target_update_interval = to_int(value);
      } else if (key == "learning_rate") {
        cfg.qlearn.learning_rate = to_double(value);
      } else if (key == "grad_norm_clip") {
        cfg.qlearn.grad_norm_clip = to_double(value);
      } else if (key == "eps_start") {
        cfg.qlearn.eps_start = to_double(value);
      } else if (key == "eps_end") {
        cfg.qlearn.eps_end = to_double(value);
      } else if (key == "eps_decay_steps") {
        cfg.qlearn.eps_decay_steps = to_int(value);
      } else if (key == "batch_size") {
        cfg.qlearn.batch_size = to_int(value);
      } else if (key == "replay_capacity") {
        cfg.qlearn.replay_capacity = to_int(value);
      } else if (key == "total_steps") {
        cfg.qlearn.total_steps = to_int(value);
      } else if (key == "warmup_steps") {
        cfg.qlearn.warmup_steps = to_int(value);
      } else if (key == "train_interval") {
        cfg.qlearn.train_interval = to_int(value);
      } else if (key == "record_interval") {
        cfg.qlearn.record_interval = to_int(value);
      } else {
        fail("unknown key '" + key + "' in [qlearn]");
      }
    } else if (section == "reinforce") {
      if (key == "updates") {
        cfg.reinforce.updates = to_int(value);
      } else if (key == "batch_episodes") {
        cfg.reinforce.batch_episodes = to_int(value);
      } else if (key == "learning_rate") {
        cfg.reinforce.learning_rate = to_double(value);
      } else if (key == "entropy_coef") {
        cfg.reinforce.entropy_coef = to_double(value);
      } else if (key == "grad_norm_clip") {
        cfg.reinforce.grad_norm_clip = to_double(value);
      } else if (key == "multi_step") {
        cfg.reinforce.multi_step = to_bool(value);
      } else if (key == "randomized_order") {
        cfg.reinforce.randomized_order = to_bool(value);
      } else if (key == "record_interval") {
        cfg.reinforce.record_interval = to_int(value);
      } else {
        fail("unknown key '" + key + "' in [reinforce]");
      }
    } else if (section == "ppo") {
      if (key == "iterations") {
        cfg.ppo_iterations = to_int(value);
      } else if (key == "gamma") {
        cfg.ppo.gamma = to_double(value);
      } else if (key == "gae_lambda") {
        cfg.ppo.gae_lambda = to_double(value);
      } else if (key == "ppo_clip") {
        cfg.ppo.ppo_clip = to_double(value);
      } else if (key == "value_clip") {
        cfg.ppo.value_clip = to_double(value);
      } else if (key == "huber_delta") {
        cfg.ppo.huber_delta = to_double(value);
      } else if (key == "entropy_coef") {
        cfg.ppo.entropy_coef = to_double(value);
      } else if (key == "learning_rate") {
        cfg.ppo.learning_rate = to_double(value);
      } else if (key == "grad_norm_clip") {
        cfg.ppo.grad_norm_clip = to_double(value);
      } else if (key == "ppo_epochs") {
        cfg.ppo.ppo_epochs = to_int(value);
      } else if (key == "batch_steps") {
        cfg.ppo.batch_steps = to_int(value);
      } else if (key == "n_envs") {
        cfg.ppo.n_envs = to_int(value);
      } else if (key == "value_loss_coef") {
        cfg.ppo.value_loss_coef = to_double(value);
      } else if (key == "multi_step") {
        cfg.ppo.multi_step = to_bool(value);
      } else if (key == "randomized_order") {
        cfg.ppo.randomized_order = to_bool(value);
      } else if (key == "ar_attention") {
        cfg.ar_attention = to_bool(value);
      } else {
        fail("unknown key '" + key + "' in [ppo]");
      }
    } else if (section == "eval") {
      if (key == "episodes") {
        cfg.eval_episodes = to_int(value);
      } else if (key == "deterministic") {
        cfg.eval_deterministic = to_bool(value);
      } else if (key == "histogram_episodes") {
        cfg.histogram_episodes = to_int(value);
      } else {
        fail("unknown key '" + key + "' in [eval]");
      }
    } else {
      fail("unknown section [" + section + "]");
    }
  }
};

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  Parser p;
  std::istringstream is(text);
  std::string raw;
  while (std::getline(is, raw)) {
    ++p.line_no;
    std::string line = strip(raw);
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = strip(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') p.fail("malformed section header '" + line + "'");
      p.section = line.substr(1, line.size() - 2);
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected 'key = value', got '" + line + "'");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (p.section.empty()) p.fail("key '" + key + "' outside any [section]");
    p.apply(key, value);
  }
  p.cfg.validate();
  return p.cfg;
}

namespace {

ExperimentConfig base_fit(MixerKind kind) {
  ExperimentConfig c;
  c.env = "xor";
  c.algorithm = mixer_kind_name(kind);
  c.regime = "fit";
  c.seeds = {0, 1, 2, 3, 4, 5};
  return c;
}

ExperimentConfig base_qlearn_xor(MixerKind kind) {
  ExperimentConfig c;
  c.env = "xor";
  c.algorithm = mixer_kind_name(kind);
  c.regime = "qlearn";
  c.qlearn.total_steps = 20000;
  c.qlearn.record_interval = 100;
  c.seeds = {0, 1, 2, 3, 4, 5};
  return c;
}

ExperimentConfig base_qlearn_bridge(MixerKind kind) {
  ExperimentConfig c;
  c.env = "bridge";
  c.algorithm = mixer_kind_name(kind);
  c.regime = "qlearn";
  c.qlearn.total_steps = 150000;
  c.qlearn.replay_capacity = 50000;
  c.qlearn.warmup_steps = 1000;
  c.qlearn.train_interval = 2;
  c.qlearn.record_interval = 5000;
  c.seeds = {0, 1, 2};
  return c;
}

ExperimentConfig base_xor_pg(const std::string& algo) {
  ExperimentConfig c;
  c.env = "xor";
  c.algorithm = algo;
  c.regime = "reinforce";
  c.reinforce.updates = 5000;
  c.seeds = {0, 1, 2, 3, 4, 5};
  return c;
}

ExperimentConfig base_perm4_pg(const std::string& algo) {
  ExperimentConfig c;
  c.env = "perm";
  c.perm_n = 4;
  c.algorithm = algo;
  c.regime = "reinforce";
  c.reinforce.updates = 8000;
  if (algo == "pg_ar") c.reinforce.entropy_coef = 0.05;
  c.seeds = {0, 1, 2};
  return c;
}

ExperimentConfig base_bridge_pg(const std::string& algo) {
  ExperimentConfig c;
  c.env = "bridge";
  c.algorithm = algo;
  c.regime = "ppo";
  c.ppo_iterations = 200;
  if (algo == "pg_ar") {
    c.ppo.entropy_coef = 0.05;
    c.ppo_iterations = 150;
  }
  c.seeds = {0, 1, 2};
  return c;
}

}  // namespace

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "xor_fit_vdn") {
    c = base_fit(MixerKind::vdn);
  } else if (name == "xor_fit_qmix") {
    c = base_fit(MixerKind::qmix);
  } else if (name == "xor_fit_qplex") {
    c = base_fit(MixerKind::qplex);
  } else if (name == "xor_qlearn_vdn") {
    c = base_qlearn_xor(MixerKind::vdn);
  } else if (name == "xor_qlearn_qmix") {
    c = base_qlearn_xor(MixerKind::qmix);
  } else if (name == "xor_qlearn_qplex") {
    c = base_qlearn_xor(MixerKind::qplex);
  } else if (name == "xor_pg_sh") {
    c = base_xor_pg("pg_sh");
  } else if (name == "xor_pg_ind") {
    c = base_xor_pg("pg_ind");
  } else if (name == "perm4_pg_ind") {
    c = base_perm4_pg("pg_ind");
  } else if (name == "perm4_pg_ar") {
    c = base_perm4_pg("pg_ar");
  } else if (name == "bridge_qmix") {
    c = base_qlearn_bridge(MixerKind::qmix);
  } else if (name == "bridge_qplex") {
    c = base_qlearn_bridge(MixerKind::qplex);
  } else if (name == "bridge_pg_sh") {
    c = base_bridge_pg("pg_sh");
  } else if (name == "bridge_pg_id") {
    c = base_bridge_pg("pg_id");
  } else if (name == "bridge_pg_ind") {
    c = base_bridge_pg("pg_ind");
  } else if (name == "bridge_pg_ar") {
    c = base_bridge_pg("pg_ar");
  } else if (name == "bridge_ablation_no_mo") {
    c = base_bridge_pg("pg_ar");
    c.ppo.multi_step = false;
  } else if (name == "bridge_ablation_no_ro") {
    c = base_bridge_pg("pg_ar");
    c.ppo.randomized_order = false;
  } else if (name == "bridge_ablation_no_attn") {
    c = base_bridge_pg("pg_ar");
    c.ar_attention = false;
  } else {
    throw std::runtime_error("unknown preset '" + name + "'");
  }
  c.experiment = name;
  return c;
}

std::vector<std::string> preset_names() {
  return {"xor_fit_vdn",    "xor_fit_qmix",   "xor_fit_qplex",  "xor_qlearn_vdn", "xor_qlearn_qmix",
          "xor_qlearn_qplex", "xor_pg_sh",    "xor_pg_ind",     "perm4_pg_ind",   "perm4_pg_ar",
          "bridge_qmix",    "bridge_qplex",   "bridge_pg_sh",   "bridge_pg_id",   "bridge_pg_ind",
          "bridge_pg_ar",   "bridge_ablation_no_mo", "bridge_ablation_no_ro", "bridge_ablation_no_attn"};
}

bool is_preset(const std::string& name) {
  auto names = preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace marlab
