#pragma once

#include <optional>
#include <vector>

#include "marlab/tape.hpp"

namespace marlab {

enum class OptimKind { sgd, adam };

struct OptimConfig {
  OptimKind kind = OptimKind::adam;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> grad_norm_clip;  // global L2 clip, applied before the step
};

// SGD/Adam over a ParamStore. Throws on non-finite gradients.
class Optimizer {
 public:
  Optimizer(OptimConfig config, const ParamStore& params);

  // Rescales so the global gradient norm is at most the clip value.
  // Returns the pre-clip norm.
  double clip_gradients(ParamStore& params) const;

  // Applies one update from the accumulated gradients, then zeroes them.
  void step(ParamStore& params);

  int step_count() const { return step_count_; }
  const OptimConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  OptimConfig config_;
  int step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace marlab
