#include "marlab/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace marlab {

Linear::Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim, Rng& rng)
    : in(in_dim), out(out_dim) {
  w = ps.add(name + ".w", init_linear_weight(in_dim, out_dim, rng));
  b = ps.add(name + ".b", Tensor({out_dim}));
}

int Linear::forward(Tape& t, int x) const {
  const Tensor& tx = t.value(x);
  int xid = x;
  std::vector<int> orig = tx.shape();
  if (tx.ndim() != 2) {
    xid = t.reshape(x, {tx.size() / in, in});
  }
  int y = t.add_rowvec(t.matmul(xid, t.param(w)), t.param(b));
  if (tx.ndim() != 2) {
    std::vector<int> oshape(orig.begin(), orig.end() - 1);
    oshape.push_back(out);
    y = t.reshape(y, oshape);
  }
  return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int d) : dim(d) {
  gamma = ps.add(name + ".gamma", Tensor::full({d}, 1.0));
  beta = ps.add(name + ".beta", Tensor({d}));
}

int LayerNorm::forward(Tape& t, int x) const {
  return t.layer_norm_lastdim(x, t.param(gamma), t.param(beta));
}

Embedding::Embedding(ParamStore& ps, const std::string& name, int r, int d, Rng& rng) : rows(r), dim(d) {
  table = ps.add(name + ".table", init_linear_weight(r, d, rng));
}

int Embedding::forward(Tape& t, const std::vector<int>& idx) const {
  return t.gather_rows(t.param(table), idx);
}

FeedForward::FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng)
    : lin1(ps, name + ".lin1", dim, hidden, rng), lin2(ps, name + ".lin2", hidden, dim, rng) {}

int FeedForward::forward(Tape& t, int x) const { return lin2.forward(t, t.relu(lin1.forward(t, x))); }

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamStore& ps, const std::string& name, int d, int h, Rng& rng)
    : wq(ps, name + ".wq", d, d, rng),
      wk(ps, name + ".wk", d, d, rng),
      wv(ps, name + ".wv", d, d, rng),
      wo(ps, name + ".wo", d, d, rng),
      heads(h),
      dim(d) {
  if (d % h != 0) throw std::runtime_error("attention dim " + std::to_string(d) + " not divisible by heads");
}

int MultiHeadSelfAttention::forward(Tape& t, int x, const Tensor& key_visible) const {
  const Tensor& tx = t.value(x);
  if (tx.ndim() != 3 || tx.dim(2) != dim) {
    throw std::runtime_error("attention input must be [B,S," + std::to_string(dim) + "], got " + tx.shape_str());
  }
  int B = tx.dim(0), S = tx.dim(1);
  int dh = dim / heads;

  int q = t.split_heads(wq.forward(t, x), heads);  // [B*H, S, dh]
  int k = t.split_heads(wk.forward(t, x), heads);
  int v = t.split_heads(wv.forward(t, x), heads);

  int scores = t.mul_scalar(t.bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));  // [B*H, S, S]

  int attn;
  if (key_visible.empty()) {
    attn = t.softmax_lastdim(scores);
  } else {
    if (key_visible.ndim() != 2 || key_visible.dim(0) != B || key_visible.dim(1) != S) {
      throw std::runtime_error("attention mask must be [B,S], got " + key_visible.shape_str());
    }
    // Expand [B,S] key visibility to the [B*H, S, S] score layout.
    Tensor mask({B * heads, S, S});
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < S; ++i) {
          for (int j = 0; j < S; ++j) {
            mask[((b * heads + h) * S + i) * S + j] = key_visible[b * S + j];
          }
        }
      }
    }
    attn = t.softmax_lastdim(scores, &mask);
  }

  int mixed = t.merge_heads(t.bmm(attn, v), heads);  // [B, S, dim]
  return wo.forward(t, mixed);
}

int MultiHeadSelfAttention::forward_query(Tape& t, int x, int query_slot, const Tensor& key_visible) const {
  const Tensor& tx = t.value(x);
  if (tx.ndim() != 3 || tx.dim(2) != dim) {
    throw std::runtime_error("attention input must be [B,S," + std::to_string(dim) + "], got " + tx.shape_str());
  }
  int B = tx.dim(0), S = tx.dim(1);
  int dh = dim / heads;

  int q_slot = wq.forward(t, t.slice_slot(x, query_slot));               // [B, d]
  int q = t.split_heads(t.reshape(q_slot, {B, 1, dim}), heads);          // [B*H, 1, dh]
  int k = t.split_heads(wk.forward(t, x), heads);                        // [B*H, S, dh]
  int v = t.split_heads(wv.forward(t, x), heads);

  int scores = t.mul_scalar(t.bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));  // [B*H, 1, S]

  int attn;
  if (key_visible.empty()) {
    attn = t.softmax_lastdim(scores);
  } else {
    if (key_visible.ndim() != 2 || key_visible.dim(0) != B || key_visible.dim(1) != S) {
      throw std::runtime_error("attention mask must be [B,S], got " + key_visible.shape_str());
    }
    Tensor mask({B * heads, 1, S});
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        for (int j = 0; j < S; ++j) mask[(b * heads + h) * S + j] = key_visible[b * S + j];
      }
    }
    attn = t.softmax_lastdim(scores, &mask);
  }

  int mixed = t.reshape(t.merge_heads(t.bmm(attn, v), heads), {B, dim});
  return wo.forward(t, mixed);
}

AttentionBlock::AttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ff_hidden, Rng& rng)
    : attn(ps, name + ".attn", dim, heads, rng),
      ln1(ps, name + ".ln1", dim),
      ff(ps, name + ".ff", dim, ff_hidden, rng),
      ln2(ps, name + ".ln2", dim) {}

int AttentionBlock::forward(Tape& t, int x, const Tensor& key_visible) const {
  int h = ln1.forward(t, t.add(x, attn.forward(t, x, key_visible)));
  return ln2.forward(t, t.add(h, ff.forward(t, h)));
}

int AttentionBlock::forward_query(Tape& t, int x, int query_slot, const Tensor& key_visible) const {
  int x0 = t.slice_slot(x, query_slot);
  int h = ln1.forward(t, t.add(x0, attn.forward_query(t, x, query_slot, key_visible)));
  return ln2.forward(t, t.add(h, ff.forward(t, h)));
}

Mlp::Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng, bool ln) : layer_norm(ln) {
  if (dims.size() < 2) throw std::runtime_error("mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    linears.emplace_back(ps, name + ".lin" + std::to_string(i), dims[i], dims[i + 1], rng);
    if (layer_norm && i + 2 < dims.size()) {
      norms.emplace_back(ps, name + ".ln" + std::to_string(i), dims[i + 1]);
    }
  }
}

int Mlp::forward(Tape& t, int x) const {
  int h = x;
  for (std::size_t i = 0; i < linears.size(); ++i) {
    h = linears[i].forward(t, h);
    if (i + 1 < linears.size()) {
      if (layer_norm) h = norms[i].forward(t, h);
      h = t.relu(h);
    }
  }
  return h;
}

}  // namespace marlab
