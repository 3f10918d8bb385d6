#pragma once

#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/geometry.hpp"
#include "hgdrive/nn.hpp"
#include "hgdrive/params.hpp"
#include "hgdrive/tensor.hpp"

namespace hgd {

// One downsampling stage: log2(factor) stride-2 3x3 convolutions, gelu after
// each. The first convolution changes the channel count.
struct ConvStage {
  ConvStage() = default;
  ConvStage(ParameterSet& ps, const std::string& prefix, int in_ch, int out_ch, int factor,
            Rng& rng);
  std::vector<Conv2dLayer> convs;
  Tensor apply(const Tensor& x) const;
};

// Cross-view block joining the two branches on a polar scaffold. Image
// columns become tokens (their vertical extent folded into the feature dim),
// a few self-attention layers mediate them, and every polar cell queries the
// columns with cross-attention keyed by its sinusoidal range/bearing code.
// The filled polar wedge is then resampled onto the top-down grid, stacked
// with the projected top-down features, fused by self-attention, and the
// fused top-down half becomes this block's output map.
struct CrossViewBlock {
  CrossViewBlock() = default;
  CrossViewBlock(ParameterSet& ps, const std::string& prefix, const ModelConfig& m, Rng& rng);

  PolarGrid grid;
  std::vector<int> bev_index;  // top-down cell -> polar cell (-1 outside wedge)
  int bev_cells = 0;           // side length of the stage-1 top-down map
  double bev_res = 0.0;
  Linear col_proj;  // (stage1_ch * stage1_h) -> dim
  std::vector<EncoderLayer> mediate;
  Linear grid_query;  // polar position code -> dim
  MultiHeadAttention cross;
  Linear bev_proj;  // stage-1 top-down channels -> dim
  Tensor fuse_pos;  // (2*G*G, dim) learned
  std::vector<EncoderLayer> fusion;

  // image_map (C1, H1, W1), bev_map (Cb1, G, G) -> (dim, G, G)
  Tensor apply(const Tensor& image_map, const Tensor& bev_map) const;
};

// Flattens non-overlapping patches of a feature map and projects each to the
// token width.
struct PatchTokenizer {
  PatchTokenizer() = default;
  PatchTokenizer(ParameterSet& ps, const std::string& prefix, int channels, int patch, int dim,
                 Rng& rng);
  int patch = 1;
  Linear proj;
  Tensor apply(const Tensor& map) const;
};

// Full sensor encoder: two convolution stages per branch, the cross-view
// block between them on the camera branch's first stage, patch tokens from
// both final maps, learned positions, and a shared self-attention stack.
struct PerceptionEncoder {
  PerceptionEncoder() = default;
  PerceptionEncoder(ParameterSet& ps, const std::string& prefix, const ModelConfig& m, Rng& rng);

  ConvStage img_stage1, img_stage2;
  ConvStage bev_stage1, bev_stage2;
  CrossViewBlock cross_view;
  Conv2dLayer img_out;  // 1x1 projection of the final camera map
  PatchTokenizer img_tok, bev_tok;
  Tensor pos_embed;  // (token_count, enc_dim) learned
  std::vector<EncoderLayer> layers;
  LayerNorm final_ln;

  // image (C,H,W), bev (Cb,G,G) -> tokens (token_count, enc_dim)
  Tensor apply(const Tensor& image, const Tensor& bev) const;
};

}  // namespace hgd
