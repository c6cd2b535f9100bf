#include "marlab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace marlab {

int ParamStore::add(const std::string& name, Tensor init) {
  if (find(name) >= 0) throw std::runtime_error("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.grad = Tensor(init.shape());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.count() != count()) throw std::runtime_error("param store layout mismatch in copy_values_from");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].value.same_shape(other.params_[i].value)) {
      throw std::runtime_error("param shape mismatch for " + params_[i].name);
    }
    params_[i].value = other.params_[i].value;
  }
}

Tensor init_linear_weight(int fan_in, int fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (int i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

void Tape::fail(const char* op, const std::string& msg) const {
  throw std::runtime_error(std::string(op) + " (node " + std::to_string(nodes_.size()) + "): " + msg);
}

int Tape::push(const char* op, Tensor value, std::function<void(Tape&, int)> bw) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_ref(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) throw std::runtime_error("node has no gradient (backward not run or unreachable)");
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& dst = grad_ref(id);
  for (int i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::accumulate_at(int id, int flat_index, double g) {
  grad_ref(id)[flat_index] += g;
}

int Tape::constant(Tensor t) { return push("constant", std::move(t), nullptr); }

int Tape::param(int pid) {
  if (!params_) fail("param", "tape has no parameter store");
  auto it = param_nodes_.find(pid);
  if (it != param_nodes_.end()) return it->second;
  Node n;
  n.op = "param";
  n.value = params_->value(pid);
  n.param_id = pid;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(pid, id);
  return id;
}

int Tape::add(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) fail("add", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  return push("add", std::move(out), [a, b](Tape& t, int self) {
    t.accumulate(a, t.grad(self));
    t.accumulate(b, t.grad(self));
  });
}

int Tape::add_rowvec(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  int c = ta.dim(ta.ndim() - 1);
  if (tb.ndim() != 1 || tb.dim(0) != c) {
    fail("add_rowvec", "bias shape " + tb.shape_str() + " does not match last dim of " + ta.shape_str());
  }
  Tensor out(ta.shape());
  int rows = ta.size() / c;
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < c; ++j) out[r * c + j] = ta[r * c + j] + tb[j];
  }
  return push("add_rowvec", std::move(out), [a, b, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    t.accumulate(a, g);
    Tensor& gb = t.grad_ref(b);
    int rows = g.size() / c;
    for (int r = 0; r < rows; ++r) {
      for (int j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
  });
}

int Tape::sub(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) fail("sub", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
  return push("sub", std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    t.accumulate(a, g);
    Tensor& gb = t.grad_ref(b);
    for (int i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

int Tape::neg(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = -ta[i];
  return push("neg", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

int Tape::mul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) fail("mul", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  return push("mul", std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (int i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

int Tape::mul_const(int a, const Tensor& c) {
  const Tensor& ta = value(a);
  if (!ta.same_shape(c)) fail("mul_const", "shape mismatch " + ta.shape_str() + " vs " + c.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] * c[i];
  Tensor cc = c;
  return push("mul_const", std::move(out), [a, cc](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * cc[i];
  });
}

int Tape::mul_scalar(int a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] * c;
  return push("mul_scalar", std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

int Tape::add_scalar(int a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] + c;
  return push("add_scalar", std::move(out), [a](Tape& t, int self) { t.accumulate(a, t.grad(self)); });
}

int Tape::scale_rows(int a, int s) {
  const Tensor& ta = value(a);
  const Tensor& ts = value(s);
  int rows = ta.dim(0);
  if (ts.ndim() != 1 || ts.dim(0) != rows) {
    fail("scale_rows", "scale shape " + ts.shape_str() + " does not match leading dim of " + ta.shape_str());
  }
  int cols = ta.size() / rows;
  Tensor out(ta.shape());
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < cols; ++j) out[r * cols + j] = ta[r * cols + j] * ts[r];
  }
  return push("scale_rows", std::move(out), [a, s, rows, cols](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vs = t.value(s);
    Tensor& ga = t.grad_ref(a);
    Tensor& gs = t.grad_ref(s);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) {
        ga[r * cols + j] += g[r * cols + j] * vs[r];
        acc += g[r * cols + j] * va[r * cols + j];
      }
      gs[r] += acc;
    }
  });
}

int Tape::relu(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  return push("relu", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) {
      if (va[i] > 0.0) ga[i] += g[i];
    }
  });
}

int Tape::elu(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : std::expm1(ta[i]);
  return push("elu", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += va[i] > 0.0 ? g[i] : g[i] * (y[i] + 1.0);
  });
}

int Tape::exp_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::exp(ta[i]);
  return push("exp", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

int Tape::log_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::log(ta[i]);
  return push("log", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
  });
}

int Tape::softplus(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) {
    double x = ta[i];
    out[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  return push("softplus", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / (1.0 + std::exp(-va[i]));
  });
}

int Tape::abs_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::abs(ta[i]);
  return push("abs", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += va[i] >= 0.0 ? g[i] : -g[i];
  });
}

int Tape::clamp(int a, double lo, double hi) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, ta[i]));
  return push("clamp", std::move(out), [a, lo, hi](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) {
      if (va[i] >= lo && va[i] <= hi) ga[i] += g[i];
    }
  });
}

int Tape::min_(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) fail("min", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::min(ta[i], tb[i]);
  return push("min", std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (int i = 0; i < g.size(); ++i) {
      if (va[i] <= vb[i]) {
        ga[i] += g[i];
      } else {
        gb[i] += g[i];
      }
    }
  });
}

int Tape::max_(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) fail("max", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.shape());
  for (int i = 0; i < out.size(); ++i) out[i] = std::max(ta[i], tb[i]);
  return push("max", std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (int i = 0; i < g.size(); ++i) {
      if (va[i] >= vb[i]) {
        ga[i] += g[i];
      } else {
        gb[i] += g[i];
      }
    }
  });
}

namespace {

// C[r,c] += A[r,k] * B[k,c]; plain loops, -O3 vectorizes the inner j loop.
// Row-parallel: disjoint output rows, so results are thread-count invariant.
void gemm_acc_rows(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c, int r_lo,
                   int r_hi, int K, int C) {
  for (int r = r_lo; r < r_hi; ++r) {
    for (int k = 0; k < K; ++k) {
      double av = a[r * K + k];
      const double* __restrict__ brow = b + k * C;
      double* __restrict__ crow = c + r * C;
      for (int j = 0; j < C; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_acc(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c, int R, int K,
              int C) {
  if (static_cast<long>(R) * K * C > 1 << 21 && R > 1) {
#pragma omp parallel
    {
#ifdef _OPENMP
      int nt = omp_get_num_threads();
      int tid = omp_get_thread_num();
#else
      int nt = 1, tid = 0;
#endif
      int r_lo = static_cast<int>(static_cast<long>(R) * tid / nt);
      int r_hi = static_cast<int>(static_cast<long>(R) * (tid + 1) / nt);
      gemm_acc_rows(a, b, c, r_lo, r_hi, K, C);
    }
  } else {
    gemm_acc_rows(a, b, c, 0, R, K, C);
  }
}

// C[r,c] += A[r,k] * B[c,k]  (A x B^T). Large cases transpose B so the inner
// loop runs in axpy form, which vectorizes (the dot-product form cannot
// without float reassociation). Tiny cases, e.g. per-head attention scores,
// keep the allocation-free dot form.
void gemm_nt_acc(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c, int R, int K,
                 int C) {
  if (static_cast<long>(R) * K * C >= 1 << 14) {
    std::vector<double> bt(static_cast<std::size_t>(K) * C);
    for (int j = 0; j < C; ++j) {
      for (int k = 0; k < K; ++k) bt[static_cast<std::size_t>(k) * C + j] = b[j * K + k];
    }
    gemm_acc(a, bt.data(), c, R, K, C);
    return;
  }
  for (int r = 0; r < R; ++r) {
    const double* __restrict__ arow = a + r * K;
    for (int j = 0; j < C; ++j) {
      const double* __restrict__ brow = b + j * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      c[r * C + j] += acc;
    }
  }
}

// C[k,c] += A[r,k] * B[r,c]  (A^T x B). Threads own disjoint k-ranges and
// stream the rows once each, so results are thread-count invariant.
void gemm_tn_ks(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c, int R, int K,
                int C, int k_lo, int k_hi) {
  for (int r = 0; r < R; ++r) {
    const double* __restrict__ arow = a + r * K;
    const double* __restrict__ brow = b + r * C;
    for (int k = k_lo; k < k_hi; ++k) {
      double av = arow[k];
      double* __restrict__ crow = c + k * C;
      for (int j = 0; j < C; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn_acc(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c, int R, int K,
                 int C) {
  if (static_cast<long>(R) * K * C > 1 << 21 && K > 1) {
#pragma omp parallel
    {
#ifdef _OPENMP
      int nt = omp_get_num_threads();
      int tid = omp_get_thread_num();
#else
      int nt = 1, tid = 0;
#endif
      int k_lo = static_cast<int>(static_cast<long>(K) * tid / nt);
      int k_hi = static_cast<int>(static_cast<long>(K) * (tid + 1) / nt);
      gemm_tn_ks(a, b, c, R, K, C, k_lo, k_hi);
    }
  } else {
    gemm_tn_ks(a, b, c, R, K, C, 0, K);
  }
}

}  // namespace

int Tape::matmul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0)) {
    fail("matmul", "incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
  }
  int R = ta.dim(0), K = ta.dim(1), C = tb.dim(1);
  Tensor out({R, C});
  gemm_acc(ta.data(), tb.data(), out.data(), R, K, C);
  return push("matmul", std::move(out), [a, b, R, K, C](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    gemm_nt_acc(g.data(), vb.data(), t.grad_ref(a).data(), R, C, K);  // dA = g x B^T
    gemm_tn_acc(va.data(), g.data(), t.grad_ref(b).data(), R, K, C);  // dB = A^T x g
  });
}

int Tape::bmm(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.ndim() != 3 || tb.ndim() != 3 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(1)) {
    fail("bmm", "incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
  }
  int N = ta.dim(0), R = ta.dim(1), K = ta.dim(2), C = tb.dim(2);
  Tensor out({N, R, C});
  for (int n = 0; n < N; ++n) {
    gemm_acc(ta.data() + n * R * K, tb.data() + n * K * C, out.data() + n * R * C, R, K, C);
  }
  return push("bmm", std::move(out), [a, b, N, R, K, C](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (int n = 0; n < N; ++n) {
      gemm_nt_acc(g.data() + n * R * C, vb.data() + n * K * C, ga.data() + n * R * K, R, C, K);
      gemm_tn_acc(va.data() + n * R * K, g.data() + n * R * C, gb.data() + n * K * C, R, K, C);
    }
  });
}

int Tape::bmm_nt(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.ndim() != 3 || tb.ndim() != 3 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2)) {
    fail("bmm_nt", "incompatible shapes " + ta.shape_str() + " x " + tb.shape_str() + "^T");
  }
  int N = ta.dim(0), R = ta.dim(1), K = ta.dim(2), C = tb.dim(1);
  Tensor out({N, R, C});
  for (int n = 0; n < N; ++n) {
    gemm_nt_acc(ta.data() + n * R * K, tb.data() + n * C * K, out.data() + n * R * C, R, K, C);
  }
  // y = A x B^T  =>  dA = g x B, dB = g^T x A
  return push("bmm_nt", std::move(out), [a, b, N, R, K, C](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (int n = 0; n < N; ++n) {
      gemm_acc(g.data() + n * R * C, vb.data() + n * C * K, ga.data() + n * R * K, R, C, K);
      gemm_tn_acc(g.data() + n * R * C, va.data() + n * R * K, gb.data() + n * C * K, R, C, K);
    }
  });
}

int Tape::sum(int a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (int i = 0; i < ta.size(); ++i) acc += ta[i];
  return push("sum", Tensor::scalar(acc), [a](Tape& t, int self) {
    double g = t.grad(self)[0];
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

int Tape::mean(int a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (int i = 0; i < ta.size(); ++i) acc += ta[i];
  int n = ta.size();
  return push("mean", Tensor::scalar(acc / n), [a, n](Tape& t, int self) {
    double g = t.grad(self)[0] / n;
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

int Tape::sum_lastdim(int a) {
  const Tensor& ta = value(a);
  if (ta.ndim() < 2) fail("sum_lastdim", "needs rank >= 2, got " + ta.shape_str());
  int c = ta.dim(ta.ndim() - 1);
  std::vector<int> oshape(ta.shape().begin(), ta.shape().end() - 1);
  Tensor out(oshape);
  int rows = ta.size() / c;
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += ta[r * c + j];
    out[r] = acc;
  }
  return push("sum_lastdim", std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int r = 0; r < g.size(); ++r) {
      for (int j = 0; j < c; ++j) ga[r * c + j] += g[r];
    }
  });
}

int Tape::max_lastdim(int a) {
  const Tensor& ta = value(a);
  int c = ta.dim(ta.ndim() - 1);
  std::vector<int> oshape;
  if (ta.ndim() == 1) {
    oshape = {1};
  } else {
    oshape.assign(ta.shape().begin(), ta.shape().end() - 1);
  }
  Tensor out(oshape);
  int rows = ta.size() / c;
  std::vector<int> argmax(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (ta[r * c + j] > ta[r * c + best]) best = j;
    }
    argmax[static_cast<std::size_t>(r)] = best;
    out[r] = ta[r * c + best];
  }
  return push("max_lastdim", std::move(out), [a, c, argmax](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int r = 0; r < g.size(); ++r) ga[r * c + argmax[static_cast<std::size_t>(r)]] += g[r];
  });
}

int Tape::softmax_lastdim(int a, const Tensor* mask) {
  const Tensor& ta = value(a);
  int c = ta.dim(ta.ndim() - 1);
  if (mask && !mask->same_shape(ta)) {
    fail("softmax", "mask shape " + mask->shape_str() + " does not match input " + ta.shape_str());
  }
  Tensor out(ta.shape());
  int rows = ta.size() / c;
  for (int r = 0; r < rows; ++r) {
    double mx = -1e300;
    bool any = false;
    for (int j = 0; j < c; ++j) {
      if (mask && (*mask)[r * c + j] == 0.0) continue;
      any = true;
      mx = std::max(mx, ta[r * c + j]);
    }
    if (!any) fail("softmax", "all entries masked in row " + std::to_string(r));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      if (mask && (*mask)[r * c + j] == 0.0) {
        out[r * c + j] = 0.0;
      } else {
        out[r * c + j] = std::exp(ta[r * c + j] - mx);
        denom += out[r * c + j];
      }
    }
    for (int j = 0; j < c; ++j) out[r * c + j] /= denom;
  }
  // dx = y * (g - sum(g*y)); masked entries have y == 0 so their dx is 0.
  return push("softmax", std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(a);
    int rows = g.size() / c;
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
      for (int j = 0; j < c; ++j) ga[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

int Tape::log_softmax_lastdim(int a) {
  const Tensor& ta = value(a);
  int c = ta.dim(ta.ndim() - 1);
  Tensor out(ta.shape());
  int rows = ta.size() / c;
  for (int r = 0; r < rows; ++r) {
    double mx = ta[r * c];
    for (int j = 1; j < c; ++j) mx = std::max(mx, ta[r * c + j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(ta[r * c + j] - mx);
    double lse = mx + std::log(denom);
    for (int j = 0; j < c; ++j) out[r * c + j] = ta[r * c + j] - lse;
  }
  // dx = g - softmax(x) * sum(g)
  return push("log_softmax", std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(a);
    int rows = g.size() / c;
    for (int r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (int j = 0; j < c; ++j) gs += g[r * c + j];
      for (int j = 0; j < c; ++j) ga[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * gs;
    }
  });
}

int Tape::layer_norm_lastdim(int a, int gamma, int beta, double eps) {
  const Tensor& ta = value(a);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  int c = ta.dim(ta.ndim() - 1);
  if (tg.size() != c || tb.size() != c) {
    fail("layer_norm", "gamma/beta size must equal last dim " + std::to_string(c));
  }
  int rows = ta.size() / c;
  Tensor out(ta.shape());
  Tensor xhat(ta.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += ta[r * c + j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = ta[r * c + j] - mu;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < c; ++j) {
      double xh = (ta[r * c + j] - mu) * is;
      xhat[r * c + j] = xh;
      out[r * c + j] = xh * tg[j] + tb[j];
    }
  }
  return push("layer_norm", std::move(out), [a, gamma, beta, c, xhat, inv_std](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& tg = t.value(gamma);
    Tensor& ga = t.grad_ref(a);
    Tensor& gg = t.grad_ref(gamma);
    Tensor& gb = t.grad_ref(beta);
    int rows = g.size() / c;
    for (int r = 0; r < rows; ++r) {
      double mean_gh = 0.0, mean_ghx = 0.0;
      for (int j = 0; j < c; ++j) {
        double gh = g[r * c + j] * tg[j];
        mean_gh += gh;
        mean_ghx += gh * xhat[r * c + j];
        gg[j] += g[r * c + j] * xhat[r * c + j];
        gb[j] += g[r * c + j];
      }
      mean_gh /= c;
      mean_ghx /= c;
      double is = inv_std[static_cast<std::size_t>(r)];
      for (int j = 0; j < c; ++j) {
        double gh = g[r * c + j] * tg[j];
        ga[r * c + j] += is * (gh - mean_gh - xhat[r * c + j] * mean_ghx);
      }
    }
  });
}

int Tape::gather_rows(int table, const std::vector<int>& idx) {
  const Tensor& tt = value(table);
  if (tt.ndim() != 2) fail("gather_rows", "table must be rank 2, got " + tt.shape_str());
  int rows = tt.dim(0), c = tt.dim(1);
  int b = static_cast<int>(idx.size());
  Tensor out({b, c});
  for (int r = 0; r < b; ++r) {
    int src = idx[static_cast<std::size_t>(r)];
    if (src < 0 || src >= rows) fail("gather_rows", "row index " + std::to_string(src) + " out of range");
    for (int j = 0; j < c; ++j) out[r * c + j] = tt[src * c + j];
  }
  return push("gather_rows", std::move(out), [table, idx, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad_ref(table);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (int j = 0; j < c; ++j) gt[idx[r] * c + j] += g[static_cast<int>(r) * c + j];
    }
  });
}

int Tape::scatter_rows(int src, const std::vector<int>& idx, int total_rows) {
  const Tensor& ts = value(src);
  if (ts.ndim() != 2) fail("scatter_rows", "source must be rank 2, got " + ts.shape_str());
  int k = ts.dim(0), c = ts.dim(1);
  if (static_cast<int>(idx.size()) != k) fail("scatter_rows", "index count must match source rows");
  Tensor out({total_rows, c});
  for (int r = 0; r < k; ++r) {
    int dst = idx[static_cast<std::size_t>(r)];
    if (dst < 0 || dst >= total_rows) fail("scatter_rows", "row index " + std::to_string(dst) + " out of range");
    for (int j = 0; j < c; ++j) out[dst * c + j] = ts[r * c + j];
  }
  return push("scatter_rows", std::move(out), [src, idx, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gs = t.grad_ref(src);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (int j = 0; j < c; ++j) gs[static_cast<int>(r) * c + j] += g[idx[r] * c + j];
    }
  });
}

int Tape::select_col(int a, const std::vector<int>& idx) {
  const Tensor& ta = value(a);
  if (ta.ndim() != 2) fail("select_col", "input must be rank 2, got " + ta.shape_str());
  int rows = ta.dim(0), c = ta.dim(1);
  if (static_cast<int>(idx.size()) != rows) fail("select_col", "index count must match rows");
  Tensor out({rows});
  for (int r = 0; r < rows; ++r) {
    int j = idx[static_cast<std::size_t>(r)];
    if (j < 0 || j >= c) fail("select_col", "column index " + std::to_string(j) + " out of range");
    out[r] = ta[r * c + j];
  }
  return push("select_col", std::move(out), [a, idx, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int r = 0; r < g.size(); ++r) ga[r * c + idx[static_cast<std::size_t>(r)]] += g[r];
  });
}

int Tape::slice_slot(int a, int slot) {
  const Tensor& ta = value(a);
  if (ta.ndim() != 3) fail("slice_slot", "input must be rank 3, got " + ta.shape_str());
  int b = ta.dim(0), s = ta.dim(1), d = ta.dim(2);
  if (slot < 0 || slot >= s) fail("slice_slot", "slot out of range");
  Tensor out({b, d});
  for (int r = 0; r < b; ++r) {
    for (int j = 0; j < d; ++j) out[r * d + j] = ta[(r * s + slot) * d + j];
  }
  return push("slice_slot", std::move(out), [a, slot, s, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    int b = g.size() / d;
    for (int r = 0; r < b; ++r) {
      for (int j = 0; j < d; ++j) ga[(r * s + slot) * d + j] += g[r * d + j];
    }
  });
}

int Tape::stack_slots(const std::vector<int>& slots) {
  if (slots.empty()) fail("stack_slots", "needs at least one slot");
  const Tensor& t0 = value(slots[0]);
  if (t0.ndim() != 2) fail("stack_slots", "slots must be rank 2, got " + t0.shape_str());
  int b = t0.dim(0), d = t0.dim(1);
  int s = static_cast<int>(slots.size());
  Tensor out({b, s, d});
  for (int k = 0; k < s; ++k) {
    const Tensor& tk = value(slots[static_cast<std::size_t>(k)]);
    if (!tk.same_shape(t0)) fail("stack_slots", "slot shape mismatch " + tk.shape_str() + " vs " + t0.shape_str());
    for (int r = 0; r < b; ++r) {
      for (int j = 0; j < d; ++j) out[(r * s + k) * d + j] = tk[r * d + j];
    }
  }
  return push("stack_slots", std::move(out), [slots, s, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    int b = g.size() / (s * d);
    for (int k = 0; k < s; ++k) {
      Tensor& gk = t.grad_ref(slots[static_cast<std::size_t>(k)]);
      for (int r = 0; r < b; ++r) {
        for (int j = 0; j < d; ++j) gk[r * d + j] += g[(r * s + k) * d + j];
      }
    }
  });
}

int Tape::reshape(int a, std::vector<int> shape) {
  const Tensor& ta = value(a);
  if (shape_size(shape) != ta.size()) {
    fail("reshape", "cannot reshape " + ta.shape_str() + " to " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), ta.values());
  return push("reshape", std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

namespace {

// [B,S,H*Dh] <-> [B*H,S,Dh] index maps share this loop shape.
template <typename F>
void for_each_head_elem(int B, int S, int H, int Dh, F&& f) {
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int s = 0; s < S; ++s) {
        for (int j = 0; j < Dh; ++j) {
          int packed = ((b * S + s) * H + h) * Dh + j;       // [B,S,H*Dh]
          int split = (((b * H + h) * S + s)) * Dh + j;      // [B*H,S,Dh]
          f(packed, split);
        }
      }
    }
  }
}

}  // namespace

int Tape::split_heads(int a, int heads) {
  const Tensor& ta = value(a);
  if (ta.ndim() != 3 || ta.dim(2) % heads != 0) {
    fail("split_heads", "input " + ta.shape_str() + " not divisible into " + std::to_string(heads) + " heads");
  }
  int B = ta.dim(0), S = ta.dim(1), Dh = ta.dim(2) / heads;
  Tensor out({B * heads, S, Dh});
  for_each_head_elem(B, S, heads, Dh, [&](int packed, int split) { out[split] = ta[packed]; });
  return push("split_heads", std::move(out), [a, B, S, heads, Dh](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for_each_head_elem(B, S, heads, Dh, [&](int packed, int split) { ga[packed] += g[split]; });
  });
}

int Tape::merge_heads(int a, int heads) {
  const Tensor& ta = value(a);
  if (ta.ndim() != 3 || ta.dim(0) % heads != 0) {
    fail("merge_heads", "input " + ta.shape_str() + " not mergeable from " + std::to_string(heads) + " heads");
  }
  int B = ta.dim(0) / heads, S = ta.dim(1), Dh = ta.dim(2);
  Tensor out({B, S, heads * Dh});
  for_each_head_elem(B, S, heads, Dh, [&](int packed, int split) { out[packed] = ta[split]; });
  return push("merge_heads", std::move(out), [a, B, S, heads, Dh](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for_each_head_elem(B, S, heads, Dh, [&](int packed, int split) { ga[split] += g[packed]; });
  });
}

int Tape::concat_scalars(const std::vector<int>& scalars) {
  int k = static_cast<int>(scalars.size());
  Tensor out({k});
  for (int i = 0; i < k; ++i) {
    const Tensor& ti = value(scalars[static_cast<std::size_t>(i)]);
    if (ti.size() != 1) fail("concat_scalars", "input " + std::to_string(i) + " is not scalar");
    out[i] = ti[0];
  }
  return push("concat_scalars", std::move(out), [scalars](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (int i = 0; i < g.size(); ++i) t.accumulate_at(scalars[static_cast<std::size_t>(i)], 0, g[i]);
  });
}

int Tape::huber(int pred, const Tensor& target, double delta) {
  const Tensor& tp = value(pred);
  if (!tp.same_shape(target)) {
    fail("huber", "target shape " + target.shape_str() + " does not match " + tp.shape_str());
  }
  Tensor out(tp.shape());
  for (int i = 0; i < out.size(); ++i) {
    double e = tp[i] - target[i];
    double ae = std::abs(e);
    out[i] = ae <= delta ? 0.5 * e * e : delta * (ae - 0.5 * delta);
  }
  Tensor tgt = target;
  return push("huber", std::move(out), [pred, tgt, delta](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& vp = t.value(pred);
    Tensor& gp = t.grad_ref(pred);
    for (int i = 0; i < g.size(); ++i) {
      double e = vp[i] - tgt[i];
      double d = std::abs(e) <= delta ? e : (e > 0 ? delta : -delta);
      gp[i] += g[i] * d;
    }
  });
}

void Tape::backward(int loss) {
  if (loss < 0 || loss >= node_count()) throw std::runtime_error("backward: invalid loss node");
  if (value(loss).size() != 1) {
    throw std::runtime_error("backward: loss node must be scalar, got shape " + value(loss).shape_str());
  }
  grad_ref(loss)[0] = 1.0;
  for (int id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  if (params_) {
    for (const auto& [pid, nid] : param_nodes_) {
      Node& n = node(nid);
      if (n.grad.empty()) continue;
      Tensor& g = params_->grad(pid);
      for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

}  // namespace marlab
