#include "hgdrive/perception.hpp"

#include <cmath>

#include "hgdrive/ops.hpp"

namespace hgd {
namespace {

int log2_exact(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return n;
}

// (C,H,W) -> (W, C*H): one token per image column.
Tensor columns_to_rows(const Tensor& map) {
  int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  return transpose2d(reshape(map, {c * h, w}));
}

// (C,G,G) -> (G*G, C): one token per map cell.
Tensor cells_to_rows(const Tensor& map) {
  int c = map.dim(0);
  return transpose2d(reshape(map, {c, map.dim(1) * map.dim(2)}));
}

// (N, C) -> (C, gh, gw) with N == gh*gw.
Tensor rows_to_map(const Tensor& rows, int gh, int gw) {
  return reshape(transpose2d(rows), {rows.dim(1), gh, gw});
}

}  // namespace

ConvStage::ConvStage(ParameterSet& ps, const std::string& prefix, int in_ch, int out_ch,
                     int factor, Rng& rng) {
  int steps = log2_exact(factor);
  for (int i = 0; i < steps; ++i) {
    int ic = (i == 0) ? in_ch : out_ch;
    convs.emplace_back(ps, prefix + ".conv" + std::to_string(i), ic, out_ch, 3, 2, 1, rng);
  }
}

Tensor ConvStage::apply(const Tensor& x) const {
  Tensor y = x;
  for (const auto& conv : convs) y = gelu(conv.apply(y));
  return y;
}

CrossViewBlock::CrossViewBlock(ParameterSet& ps, const std::string& prefix, const ModelConfig& m,
                               Rng& rng) {
  int rays = m.image_s1_w();
  grid = build_polar_grid(rays, m.polar_depth_cells, m.polar_max_depth_m, m.camera_fov_deg,
                          m.polar_enc_dim);
  bev_cells = m.bev_s1_cells();
  bev_res = m.bev_span_m / bev_cells;
  bev_index = bev_to_polar_index(grid, bev_cells, bev_res);

  int dim = m.mbt_dim;
  col_proj = Linear(ps, prefix + ".col_proj", m.image_stage1_ch * m.image_s1_h(), dim, rng);
  for (int i = 0; i < m.mbt_mediate_layers; ++i)
    mediate.emplace_back(ps, prefix + ".mediate" + std::to_string(i), dim, m.mbt_heads,
                         m.ffn_mult, rng);
  grid_query = Linear(ps, prefix + ".grid_query", m.polar_enc_dim, dim, rng);
  cross = MultiHeadAttention(ps, prefix + ".cross", dim, m.mbt_heads, rng);
  bev_proj = Linear(ps, prefix + ".bev_proj", m.bev_stage1_ch, dim, rng);
  fuse_pos = ps.add(prefix + ".fuse_pos",
                    init_normal(rng, {2 * bev_cells * bev_cells, dim}, 0.02));
  for (int i = 0; i < m.mbt_fusion_layers; ++i)
    fusion.emplace_back(ps, prefix + ".fusion" + std::to_string(i), dim, m.mbt_heads, m.ffn_mult,
                        rng);
}

Tensor CrossViewBlock::apply(const Tensor& image_map, const Tensor& bev_map) const {
  Tensor cols = col_proj.apply(columns_to_rows(image_map));  // (rays, dim)
  for (const auto& layer : mediate) cols = layer.apply(cols);

  Tensor queries = grid_query.apply(grid.encodings);  // (cells, dim)
  Tensor polar = cross.apply(queries, cols);          // (cells, dim)

  Tensor sampled = gather_rows_or_zero(polar, bev_index);   // (G*G, dim)
  Tensor td = bev_proj.apply(cells_to_rows(bev_map));       // (G*G, dim)
  Tensor fused = add(concat_rows({sampled, td}), fuse_pos);
  for (const auto& layer : fusion) fused = layer.apply(fused);

  int cells = bev_cells * bev_cells;
  return rows_to_map(slice_rows(fused, cells, cells), bev_cells, bev_cells);
}

PatchTokenizer::PatchTokenizer(ParameterSet& ps, const std::string& prefix, int channels,
                               int patch_, int dim, Rng& rng)
    : patch(patch_), proj(ps, prefix + ".proj", channels * patch_ * patch_, dim, rng) {}

Tensor PatchTokenizer::apply(const Tensor& map) const {
  return proj.apply(im2patches(map, patch));
}

PerceptionEncoder::PerceptionEncoder(ParameterSet& ps, const std::string& prefix,
                                     const ModelConfig& m, Rng& rng) {
  int s2 = m.stage2_factor / m.stage1_factor;
  img_stage1 = ConvStage(ps, prefix + ".img1", m.image_channels, m.image_stage1_ch,
                         m.stage1_factor, rng);
  img_stage2 = ConvStage(ps, prefix + ".img2", m.image_stage1_ch, m.image_stage2_ch, s2, rng);
  bev_stage1 = ConvStage(ps, prefix + ".bev1", m.bev_channels, m.bev_stage1_ch, m.stage1_factor,
                         rng);
  cross_view = CrossViewBlock(ps, prefix + ".cross_view", m, rng);
  bev_stage2 = ConvStage(ps, prefix + ".bev2", m.mbt_dim, m.bev_stage2_ch, s2, rng);
  img_out = Conv2dLayer(ps, prefix + ".img_out", m.image_stage2_ch, m.enc_dim, 1, 1, 0, rng);
  img_tok = PatchTokenizer(ps, prefix + ".img_tok", m.enc_dim, m.patch_size, m.enc_dim, rng);
  bev_tok = PatchTokenizer(ps, prefix + ".bev_tok", m.bev_stage2_ch, m.patch_size, m.enc_dim,
                           rng);
  pos_embed = ps.add(prefix + ".pos_embed",
                     init_normal(rng, {m.token_count(), m.enc_dim}, 0.02));
  for (int i = 0; i < m.enc_layers; ++i)
    layers.emplace_back(ps, prefix + ".enc" + std::to_string(i), m.enc_dim, m.enc_heads,
                        m.ffn_mult, rng);
  final_ln = LayerNorm(ps, prefix + ".final_ln", m.enc_dim);
}

Tensor PerceptionEncoder::apply(const Tensor& image, const Tensor& bev) const {
  Tensor i1 = img_stage1.apply(image);
  Tensor b1 = bev_stage1.apply(bev);
  Tensor b_fused = cross_view.apply(i1, b1);
  Tensor i2 = img_stage2.apply(i1);
  Tensor b2 = bev_stage2.apply(b_fused);
  Tensor img_map = img_out.apply(i2);
  Tensor tokens = concat_rows({img_tok.apply(img_map), bev_tok.apply(b2)});
  tokens = add(tokens, pos_embed);
  for (const auto& layer : layers) tokens = layer.apply(tokens);
  return final_ln.apply(tokens);
}

}  // namespace hgd
