#pragma once

#include <string>
#include <vector>

#include "marlab/tape.hpp"

namespace marlab {

// Layers hold parameter ids in a ParamStore; forward() records onto a Tape.

struct Linear {
  int w = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim, Rng& rng);
  int forward(Tape& t, int x) const;  // x[..., in] -> [..., out]
};

struct LayerNorm {
  int gamma = -1;
  int beta = -1;
  int dim = 0;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim);
  int forward(Tape& t, int x) const;
};

// Lookup table of embeddings, rows selected by integer index.
struct Embedding {
  int table = -1;
  int rows = 0;
  int dim = 0;

  Embedding() = default;
  Embedding(ParamStore& ps, const std::string& name, int rows, int dim, Rng& rng);
  int forward(Tape& t, const std::vector<int>& idx) const;  // -> [B, dim]
};

struct FeedForward {
  Linear lin1;
  Linear lin2;

  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng);
  int forward(Tape& t, int x) const;  // [..., dim] -> [..., dim]
};

// Standard multi-head self-attention over [B, S, dim]. An optional boolean
// key mask (1 = visible) zeroes attention to masked slots exactly.
struct MultiHeadSelfAttention {
  Linear wq, wk, wv, wo;
  int heads = 0;
  int dim = 0;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng);

  // key_visible: per-sample key visibility [B, S]; empty tensor = no mask.
  int forward(Tape& t, int x, const Tensor& key_visible) const;

  // Attention output for a single query slot: [B, dim]. Same math as the
  // corresponding row of forward(); keys and values still span all slots.
  int forward_query(Tape& t, int x, int query_slot, const Tensor& key_visible) const;
};

// Self-attention + feed-forward with residual connections, layer norm after
// each sublayer.
struct AttentionBlock {
  MultiHeadSelfAttention attn;
  LayerNorm ln1;
  FeedForward ff;
  LayerNorm ln2;

  AttentionBlock() = default;
  AttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ff_hidden, Rng& rng);
  int forward(Tape& t, int x, const Tensor& key_visible) const;

  // Block output for one slot only ([B, dim]); cheaper when a single slot
  // feeds the head downstream.
  int forward_query(Tape& t, int x, int query_slot, const Tensor& key_visible) const;
};

// MLP with ReLU hidden layers; layer norm after each hidden linear.
struct Mlp {
  std::vector<Linear> linears;
  std::vector<LayerNorm> norms;
  bool layer_norm = true;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng, bool layer_norm = true);
  int forward(Tape& t, int x) const;
};

}  // namespace marlab
