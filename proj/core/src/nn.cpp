#include "hgdrive/nn.hpp"

#include <cmath>

namespace hgd {

Linear::Linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng) {
  w = ps.add(prefix + ".w", init_uniform(rng, {in, out}, in));
  b = ps.add(prefix + ".b", Tensor::zeros({out}));
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& prefix, int dim) {
  gamma = ps.add(prefix + ".g", Tensor::full({dim}, 1.0));
  beta = ps.add(prefix + ".b", Tensor::zeros({dim}));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& prefix, int dim_,
                                       int heads_, Rng& rng)
    : heads(heads_), dim(dim_) {
  if (dim % heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(dim) + " not divisible by heads " +
                     std::to_string(heads));
  }
  wq = Linear(ps, prefix + ".q", dim, dim, rng);
  wk = Linear(ps, prefix + ".k", dim, dim, rng);
  wv = Linear(ps, prefix + ".v", dim, dim, rng);
  wo = Linear(ps, prefix + ".o", dim, dim, rng);
}

Tensor MultiHeadAttention::apply(const Tensor& queries, const Tensor& memory) const {
  Tensor q = wq.apply(queries);
  Tensor k = wk.apply(memory);
  Tensor v = wv.apply(memory);
  int dh = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor weights = softmax_rows(scale(matmul(qh, transpose2d(kh)), inv_sqrt));
    outs.push_back(matmul(weights, vh));
  }
  return wo.apply(heads == 1 ? outs[0] : concat_cols(outs));
}

EncoderLayer::EncoderLayer(ParameterSet& ps, const std::string& prefix, int dim, int heads,
                           int ffn_mult, Rng& rng) {
  ln1 = LayerNorm(ps, prefix + ".ln1", dim);
  attn = MultiHeadAttention(ps, prefix + ".attn", dim, heads, rng);
  ln2 = LayerNorm(ps, prefix + ".ln2", dim);
  ffn1 = Linear(ps, prefix + ".ffn1", dim, dim * ffn_mult, rng);
  ffn2 = Linear(ps, prefix + ".ffn2", dim * ffn_mult, dim, rng);
}

Tensor EncoderLayer::apply(const Tensor& x) const {
  Tensor h = ln1.apply(x);
  Tensor y = add(x, attn.apply(h, h));
  Tensor h2 = ln2.apply(y);
  return add(y, ffn2.apply(gelu(ffn1.apply(h2))));
}

DecoderLayer::DecoderLayer(ParameterSet& ps, const std::string& prefix, int dim, int heads,
                           int ffn_mult, Rng& rng) {
  ln1 = LayerNorm(ps, prefix + ".ln1", dim);
  self_attn = MultiHeadAttention(ps, prefix + ".self", dim, heads, rng);
  ln2 = LayerNorm(ps, prefix + ".ln2", dim);
  cross_attn = MultiHeadAttention(ps, prefix + ".cross", dim, heads, rng);
  ln3 = LayerNorm(ps, prefix + ".ln3", dim);
  ffn1 = Linear(ps, prefix + ".ffn1", dim, dim * ffn_mult, rng);
  ffn2 = Linear(ps, prefix + ".ffn2", dim * ffn_mult, dim, rng);
}

Tensor DecoderLayer::apply(const Tensor& x, const Tensor& memory) const {
  Tensor h = ln1.apply(x);
  Tensor y = add(x, self_attn.apply(h, h));
  Tensor h2 = ln2.apply(y);
  y = add(y, cross_attn.apply(h2, memory));
  Tensor h3 = ln3.apply(y);
  return add(y, ffn2.apply(gelu(ffn1.apply(h3))));
}

GruCellLayer::GruCellLayer(ParameterSet& ps, const std::string& prefix, int in, int hidden,
                           Rng& rng) {
  w.wz = ps.add(prefix + ".wz", init_uniform(rng, {in, hidden}, in));
  w.uz = ps.add(prefix + ".uz", init_uniform(rng, {hidden, hidden}, hidden));
  w.bz = ps.add(prefix + ".bz", Tensor::zeros({hidden}));
  w.wr = ps.add(prefix + ".wr", init_uniform(rng, {in, hidden}, in));
  w.ur = ps.add(prefix + ".ur", init_uniform(rng, {hidden, hidden}, hidden));
  w.br = ps.add(prefix + ".br", Tensor::zeros({hidden}));
  w.wh = ps.add(prefix + ".wh", init_uniform(rng, {in, hidden}, in));
  w.uh = ps.add(prefix + ".uh", init_uniform(rng, {hidden, hidden}, hidden));
  w.bh = ps.add(prefix + ".bh", Tensor::zeros({hidden}));
}

Conv2dLayer::Conv2dLayer(ParameterSet& ps, const std::string& prefix, int in_ch, int out_ch,
                         int kernel, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  w = ps.add(prefix + ".w", init_uniform(rng, {out_ch, in_ch, kernel, kernel},
                                         in_ch * kernel * kernel));
  b = ps.add(prefix + ".b", Tensor::zeros({out_ch}));
}

ConvTranspose2dLayer::ConvTranspose2dLayer(ParameterSet& ps, const std::string& prefix, int in_ch,
                                           int out_ch, int kernel, int stride_, Rng& rng)
    : stride(stride_) {
  w = ps.add(prefix + ".w", init_uniform(rng, {in_ch, out_ch, kernel, kernel}, in_ch));
  b = ps.add(prefix + ".b", Tensor::zeros({out_ch}));
}

}  // namespace hgd
