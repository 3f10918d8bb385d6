#include "hgdrive/decision.hpp"

#include "hgdrive/ops.hpp"

namespace hgd {

QuerySlots query_slots(const ModelConfig& m) {
  QuerySlots s;
  s.history = m.history_len;
  s.density = m.density_cells * m.density_cells;
  s.eye = m.eye_rows() * m.eye_cols();
  s.history_at = 0;
  s.density_at = s.history;
  s.eye_at = s.density_at + s.density;
  s.traffic_at = s.eye_at + s.eye;
  s.intention_at = s.traffic_at + 1;
  s.total = s.intention_at + 1;
  return s;
}

DecisionTransformer::DecisionTransformer(ParameterSet& ps, const std::string& prefix,
                                         const ModelConfig& m, Rng& rng)
    : slots(query_slots(m)) {
  int d = m.dec_dim;
  token_proj = Linear(ps, prefix + ".token_proj", m.enc_dim, d, rng);
  history_embed = Linear(ps, prefix + ".history_embed", 2, d, rng);
  density_queries = ps.add(prefix + ".density_queries", init_normal(rng, {slots.density, d}, 0.02));
  eye_queries = ps.add(prefix + ".eye_queries", init_normal(rng, {slots.eye, d}, 0.02));
  traffic_query = ps.add(prefix + ".traffic_query", init_normal(rng, {1, d}, 0.02));
  intention_query = ps.add(prefix + ".intention_query", init_normal(rng, {1, d}, 0.02));
  query_pos = ps.add(prefix + ".query_pos", init_normal(rng, {slots.total, d}, 0.02));
  for (int i = 0; i < m.dec_layers; ++i)
    layers.emplace_back(ps, prefix + ".dec" + std::to_string(i), d, m.dec_heads, m.ffn_mult, rng);
  final_ln = LayerNorm(ps, prefix + ".final_ln", d);
}

Tensor DecisionTransformer::decode(const Tensor& tokens, const std::vector<Vec2>& history) const {
  if (static_cast<int>(history.size()) != slots.history)
    throw ShapeError("decode: expected " + std::to_string(slots.history) + " history points, got " +
                     std::to_string(history.size()));
  Tensor mem = token_proj.apply(tokens);

  std::vector<double> hv;
  hv.reserve(history.size() * 2);
  for (const Vec2& p : history) {
    hv.push_back(p.x);
    hv.push_back(p.y);
  }
  Tensor hist = history_embed.apply(Tensor::from({slots.history, 2}, hv));

  Tensor q = concat_rows({hist, density_queries, eye_queries, traffic_query, intention_query});
  q = add(q, query_pos);
  for (const auto& layer : layers) q = layer.apply(q, mem);
  return final_ln.apply(q);
}

}  // namespace hgd
