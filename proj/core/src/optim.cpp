#include "marlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace marlab {

Optimizer::Optimizer(OptimConfig config, const ParamStore& params) : config_(config) {
  if (config_.kind == OptimKind::adam) {
    for (int pid = 0; pid < params.count(); ++pid) {
      m_.push_back(Tensor(params.value(pid).shape()));
      v_.push_back(Tensor(params.value(pid).shape()));
    }
  }
}

double Optimizer::clip_gradients(ParamStore& params) const {
  double sq = 0.0;
  for (int pid = 0; pid < params.count(); ++pid) {
    const Tensor& g = params.grad(pid);
    for (int i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  double norm = std::sqrt(sq);
  if (config_.grad_norm_clip && norm > *config_.grad_norm_clip) {
    double scale = *config_.grad_norm_clip / norm;
    for (int pid = 0; pid < params.count(); ++pid) {
      Tensor& g = params.grad(pid);
      for (int i = 0; i < g.size(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

void Optimizer::step(ParamStore& params) {
  for (int pid = 0; pid < params.count(); ++pid) {
    if (!params.grad(pid).all_finite()) {
      throw std::runtime_error("non-finite gradient for parameter " + params.name(pid));
    }
  }
  clip_gradients(params);
  ++step_count_;

  if (config_.kind == OptimKind::sgd) {
    for (int pid = 0; pid < params.count(); ++pid) {
      Tensor& p = params.value(pid);
      const Tensor& g = params.grad(pid);
      for (int i = 0; i < p.size(); ++i) p[i] -= config_.learning_rate * g[i];
    }
  } else {
    double bc1 = 1.0 - std::pow(config_.beta1, step_count_);
    double bc2 = 1.0 - std::pow(config_.beta2, step_count_);
    for (int pid = 0; pid < params.count(); ++pid) {
      Tensor& p = params.value(pid);
      const Tensor& g = params.grad(pid);
      Tensor& m = m_[static_cast<std::size_t>(pid)];
      Tensor& v = v_[static_cast<std::size_t>(pid)];
      for (int i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps);
      }
    }
  }
  params.zero_grad();
}

}  // namespace marlab
