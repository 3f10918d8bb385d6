#pragma once

#include <string>
#include <vector>

#include "hgdrive/ops.hpp"
#include "hgdrive/params.hpp"

namespace hgd {

// Parameterized building blocks. Each constructor registers its tensors under
// `prefix` so checkpoints and optimizer groups address them by name.

struct Linear {
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng);
  Tensor w;  // (in, out)
  Tensor b;  // (out)
  Tensor apply(const Tensor& x) const { return add_rows(matmul(x, w), b); }
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& prefix, int dim);
  Tensor gamma, beta;
  Tensor apply(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
};

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& prefix, int dim, int heads, Rng& rng);
  int heads = 1;
  int dim = 0;
  Linear wq, wk, wv, wo;
  // queries (Nq,dim) attend over memory (Nk,dim); scores scaled by
  // 1/sqrt(head_dim) before the row softmax.
  Tensor apply(const Tensor& queries, const Tensor& memory) const;
};

// Pre-norm transformer layer: x += attn(ln(x)); x += ffn(ln(x)).
struct EncoderLayer {
  EncoderLayer() = default;
  EncoderLayer(ParameterSet& ps, const std::string& prefix, int dim, int heads, int ffn_mult,
               Rng& rng);
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ffn1, ffn2;
  Tensor apply(const Tensor& x) const;
};

// Pre-norm decoder layer: self-attention, then cross-attention over memory,
// then FFN.
struct DecoderLayer {
  DecoderLayer() = default;
  DecoderLayer(ParameterSet& ps, const std::string& prefix, int dim, int heads, int ffn_mult,
               Rng& rng);
  LayerNorm ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  Linear ffn1, ffn2;
  Tensor apply(const Tensor& x, const Tensor& memory) const;
};

struct GruCellLayer {
  GruCellLayer() = default;
  GruCellLayer(ParameterSet& ps, const std::string& prefix, int in, int hidden, Rng& rng);
  GruWeights w;
  Tensor step(const Tensor& x, const Tensor& h) const { return gru_cell(x, h, w); }
};

struct Conv2dLayer {
  Conv2dLayer() = default;
  Conv2dLayer(ParameterSet& ps, const std::string& prefix, int in_ch, int out_ch, int kernel,
              int stride, int pad, Rng& rng);
  Tensor w, b;
  int stride = 1, pad = 0;
  Tensor apply(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct ConvTranspose2dLayer {
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(ParameterSet& ps, const std::string& prefix, int in_ch, int out_ch,
                       int kernel, int stride, Rng& rng);
  Tensor w, b;
  int stride = 1;
  Tensor apply(const Tensor& x) const { return conv_transpose2d(x, w, b, stride); }
};

}  // namespace hgd
