#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "marlab/rng.hpp"
#include "marlab/tensor.hpp"

namespace marlab {

// Named trainable tensors plus their accumulated gradients. Optimizer state
// (Adam moments) lives in the optimizer, keyed by parameter id.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init);

  int count() const { return static_cast<int>(params_.size()); }
  const std::string& name(int pid) const { return params_[static_cast<std::size_t>(pid)].name; }
  Tensor& value(int pid) { return params_[static_cast<std::size_t>(pid)].value; }
  const Tensor& value(int pid) const { return params_[static_cast<std::size_t>(pid)].value; }
  Tensor& grad(int pid) { return params_[static_cast<std::size_t>(pid)].grad; }
  const Tensor& grad(int pid) const { return params_[static_cast<std::size_t>(pid)].grad; }

  void zero_grad();
  int find(const std::string& name) const;  // -1 if absent

  // Copies values (not grads) from another store with identical layout.
  // Used for hard target-network updates.
  void copy_values_from(const ParamStore& other);

 private:
  struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
  };
  std::vector<Param> params_;
};

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, so the node list is already a topological order; backward() walks
// it in reverse. One tape per forward pass; parameters live in a ParamStore
// shared across passes.
class Tape {
 public:
  explicit Tape(ParamStore* params = nullptr) : params_(params) {}

  // -- leaves --
  int constant(Tensor t);
  int param(int pid);  // memoized: one leaf per parameter per tape

  // -- elementwise / broadcast --
  int add(int a, int b);                  // same shape
  int add_rowvec(int a, int b);           // a[..., C] + b[C]
  int sub(int a, int b);                  // same shape
  int neg(int a);
  int mul(int a, int b);                  // same shape
  int mul_const(int a, const Tensor& c);  // elementwise by constant tensor
  int mul_scalar(int a, double c);
  int add_scalar(int a, double c);
  int scale_rows(int a, int s);           // a[R, ...] scaled per leading index by s[R]
  int relu(int a);
  int elu(int a);
  int exp_(int a);
  int log_(int a);
  int softplus(int a);
  int abs_(int a);
  int clamp(int a, double lo, double hi);
  int min_(int a, int b);                 // elementwise min, ties follow a
  int max_(int a, int b);                 // elementwise max, ties follow a

  // -- linear algebra --
  int matmul(int a, int b);               // [R,K]x[K,C]
  int bmm(int a, int b);                  // [N,R,K]x[N,K,C]
  int bmm_nt(int a, int b);               // [N,R,K]x[N,C,K]^T -> [N,R,C]

  // -- reductions --
  int sum(int a);                          // -> scalar
  int mean(int a);                         // -> scalar
  int sum_lastdim(int a);                  // [..., C] -> [...]
  int max_lastdim(int a);                  // [..., C] -> [...], tie -> lowest index

  // -- normalization / distributions --
  // mask: optional constant 0/1 tensor, same shape as a; masked entries get
  // exactly zero output weight. A fully-masked row is an error.
  int softmax_lastdim(int a, const Tensor* mask = nullptr);
  int log_softmax_lastdim(int a);
  int layer_norm_lastdim(int a, int gamma, int beta, double eps = 1e-5);

  // -- indexing / reshaping --
  int gather_rows(int table, const std::vector<int>& idx);    // [R,C], idx[B] -> [B,C]
  int scatter_rows(int src, const std::vector<int>& idx, int total_rows);  // [K,C] -> [total,C], other rows 0
  int select_col(int a, const std::vector<int>& idx);         // [R,C], idx[R] -> [R]
  int slice_slot(int a, int slot);                            // [B,S,D] -> [B,D]
  int stack_slots(const std::vector<int>& slots);             // k x [B,D] -> [B,k,D]
  int reshape(int a, std::vector<int> shape);
  int split_heads(int a, int heads);                          // [B,S,H*Dh] -> [B*H,S,Dh]
  int merge_heads(int a, int heads);                          // [B*H,S,Dh] -> [B,S,H*Dh]
  int concat_scalars(const std::vector<int>& scalars);        // k scalars -> [k]

  // -- losses --
  int huber(int pred, const Tensor& target, double delta);    // [B] -> [B]

  // Seeds d(loss)/d(loss)=1, sweeps the tape in reverse, then accumulates
  // parameter-leaf gradients into the ParamStore.
  void backward(int loss);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(int id) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const char* op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;  // lazily allocated on first accumulation
    int param_id = -1;
    std::function<void(Tape&, int)> backward;
  };

  int push(const char* op, Tensor value, std::function<void(Tape&, int)> bw);
  Tensor& grad_ref(int id);
  void accumulate(int id, const Tensor& g);
  void accumulate_at(int id, int flat_index, double g);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  [[noreturn]] void fail(const char* op, const std::string& msg) const;

  std::vector<Node> nodes_;
  ParamStore* params_;
  std::unordered_map<int, int> param_nodes_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight init; biases stay zero.
Tensor init_linear_weight(int fan_in, int fan_out, Rng& rng);

}  // namespace marlab
