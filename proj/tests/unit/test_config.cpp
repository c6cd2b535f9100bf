#include <stdexcept>

#include "doctest.h"
#include "marlab/config.hpp"

using namespace marlab;

TEST_SUITE_BEGIN("config");

TEST_CASE("preset reference fills appendix defaults") {
  ExperimentConfig cfg = ExperimentConfig::parse("[experiment]\npreset = xor_fit_vdn\n");
  CHECK(cfg.experiment == "xor_fit_vdn");
  CHECK(cfg.fit_learning_rate == 0.1);
  CHECK(cfg.fit_steps == 10000);
  CHECK(cfg.seeds.size() == 6);

  ExperimentConfig ppo_cfg = preset_config("bridge_pg_id");
  CHECK(ppo_cfg.ppo.gamma == 0.99);
  CHECK(ppo_cfg.ppo.gae_lambda == 0.95);
  CHECK(ppo_cfg.ppo.ppo_clip == 0.2);
  CHECK(ppo_cfg.ppo.value_clip == 0.2);
  CHECK(ppo_cfg.ppo.huber_delta == 10.0);
  CHECK(ppo_cfg.ppo.entropy_coef == 0.01);
  CHECK(ppo_cfg.ppo.learning_rate == 5e-4);
  CHECK(ppo_cfg.ppo.grad_norm_clip == 10.0);
  CHECK(ppo_cfg.ppo.ppo_epochs == 5);
  CHECK(ppo_cfg.ppo.batch_steps == 3200);

  ExperimentConfig ar = preset_config("bridge_pg_ar");
  CHECK(ar.ppo.entropy_coef == 0.05);

  ExperimentConfig vd = preset_config("xor_qlearn_qmix");
  CHECK(vd.qlearn.gamma == 0.99);
  CHECK(vd.qlearn.target_update_interval == 50);
  CHECK(vd.qlearn.learning_rate == 5e-4);
  CHECK(vd.qlearn.grad_norm_clip == 10.0);
}

TEST_CASE("values round-trip through serialize and parse") {
  ExperimentConfig cfg = preset_config("bridge_pg_id");
  cfg.ppo.ppo_clip = 0.2;
  ExperimentConfig back = ExperimentConfig::parse(cfg.serialize());
  CHECK(back.ppo.ppo_clip == 0.2);
  CHECK(back.serialize() == cfg.serialize());
}

TEST_CASE("incompatible algorithm and regime are rejected") {
  ExperimentConfig cfg = preset_config("xor_fit_vdn");
  cfg.algorithm = "pg_ar";
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("incompatible"), std::runtime_error);

  cfg = preset_config("xor_pg_ind");
  cfg.regime = "qlearn";
  CHECK_THROWS(cfg.validate());

  CHECK_THROWS(ExperimentConfig::parse("[experiment]\nalgorithm = pg_ar\nregime = fit\n"));
}

TEST_CASE("unknown keys are rejected with the line number") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse("[experiment]\nexperiment = x\n[fit]\nbogus_key = 3\n"),
                       doctest::Contains("line 4"), std::runtime_error);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse("[nope]\nx = 1\n"), doctest::Contains("unknown section"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse("[fit]\nsteps = abc\n"), doctest::Contains("integer"),
                       std::runtime_error);
}

TEST_CASE("fingerprint ignores field order and run bookkeeping") {
  ExperimentConfig a = ExperimentConfig::parse(
      "[experiment]\nexperiment = t\nenv = xor\nalgorithm = vdn\nregime = fit\n[fit]\nsteps = 500\nlearning_rate = "
      "0.1\n");
  ExperimentConfig b = ExperimentConfig::parse(
      "[fit]\nlearning_rate = 0.1\nsteps = 500\n[experiment]\nregime = fit\nalgorithm = vdn\nenv = xor\nexperiment "
      "= t\n");
  CHECK(a.fingerprint() == b.fingerprint());

  ExperimentConfig c = a;
  c.seeds = {42};
  c.out_dir = "elsewhere";
  CHECK(c.fingerprint() == a.fingerprint());

  ExperimentConfig d = a;
  d.fit_steps = 501;
  CHECK(d.fingerprint() != a.fingerprint());
}

TEST_CASE("every preset exists and validates") {
  for (const std::string& name : preset_names()) {
    CAPTURE(name);
    ExperimentConfig cfg = preset_config(name);
    CHECK(cfg.experiment == name);
    CHECK_NOTHROW(cfg.validate());
    CHECK_NOTHROW(ExperimentConfig::parse(cfg.serialize()));
  }
  CHECK(is_preset("bridge_pg_ar"));
  CHECK(!is_preset("nonsense"));
  CHECK_THROWS(preset_config("nonsense"));
}

TEST_SUITE_END();
