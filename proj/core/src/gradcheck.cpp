#include "hgdrive/gradcheck.hpp"

#include <cmath>

#include "hgdrive/decision.hpp"
#include "hgdrive/heads.hpp"
#include "hgdrive/ops.hpp"
#include "hgdrive/perception.hpp"

namespace hgd {
namespace {

constexpr int kDirections = 12;
constexpr double kDirScale = 0.05;

// base + directions * x, reshaped; x is the low-dimensional FD point.
Tensor project_input(const Tensor& x, const Tensor& base_row, const Tensor& directions,
                     const Shape& shape) {
  return reshape(add(base_row, matmul(x, directions)), shape);
}

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (double& e : v) e = rng.uniform(lo, hi);
  return Tensor::from(shape, v);
}

Tensor direction_matrix(Rng& rng, int n) {
  std::vector<double> v(static_cast<std::size_t>(kDirections) * n);
  for (double& e : v) e = rng.normal() * kDirScale;
  return Tensor::from({kDirections, n}, v);
}

FdResult check_directional(const std::function<Tensor(const Tensor&)>& f) {
  return finite_diff_check(f, Tensor::zeros({1, kDirections}), 1e-5);
}

FdResult check_attention(const ModelConfig& m, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(seed);
  CrossViewBlock block(ps, "cv", m, rng);

  Shape img_shape = {m.image_stage1_ch, m.image_s1_h(), m.image_s1_w()};
  Shape bev_shape = {m.bev_stage1_ch, m.bev_s1_cells(), m.bev_s1_cells()};
  int n_img = static_cast<int>(numel(img_shape));
  int n_bev = static_cast<int>(numel(bev_shape));

  Rng drng = rng.derive("fd");
  Tensor base = random_tensor(drng, {1, n_img + n_bev}, -0.5, 0.5);
  Tensor dirs = direction_matrix(drng, n_img + n_bev);

  auto f = [&](const Tensor& x) {
    Tensor flat = add(base, matmul(x, dirs));
    Tensor img = reshape(slice_cols(flat, 0, n_img), img_shape);
    Tensor bev = reshape(slice_cols(flat, n_img, n_bev), bev_shape);
    return sum_all(block.apply(img, bev));
  };
  return check_directional(f);
}

FdResult check_encoder(const ModelConfig& m, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(seed);
  PerceptionEncoder enc(ps, "enc", m, rng);

  Shape img_shape = {m.image_channels, m.image_h, m.image_w};
  Shape bev_shape = {m.bev_channels, m.bev_cells, m.bev_cells};
  int n_img = static_cast<int>(numel(img_shape));
  int n_bev = static_cast<int>(numel(bev_shape));

  Rng drng = rng.derive("fd");
  Tensor base = random_tensor(drng, {1, n_img + n_bev}, 0.0, 1.0);
  Tensor dirs = direction_matrix(drng, n_img + n_bev);

  auto f = [&](const Tensor& x) {
    Tensor flat = add(base, matmul(x, dirs));
    Tensor img = reshape(slice_cols(flat, 0, n_img), img_shape);
    Tensor bev = reshape(slice_cols(flat, n_img, n_bev), bev_shape);
    return sum_all(enc.apply(img, bev));
  };
  return check_directional(f);
}

FdResult check_decoder(const ModelConfig& m, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(seed);
  DecisionTransformer dec(ps, "dec", m, rng);

  Shape tok_shape = {m.token_count(), m.enc_dim};
  int n = static_cast<int>(numel(tok_shape));
  Rng drng = rng.derive("fd");
  Tensor base = random_tensor(drng, {1, n}, -0.5, 0.5);
  Tensor dirs = direction_matrix(drng, n);
  std::vector<Vec2> history(static_cast<std::size_t>(m.history_len), Vec2{-1.0, 0.25});

  auto f = [&](const Tensor& x) {
    Tensor tokens = project_input(x, base, dirs, tok_shape);
    return sum_all(dec.decode(tokens, history));
  };
  return check_directional(f);
}

FdResult check_heads(const ModelConfig& m, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(seed);
  Heads heads(ps, "heads", m, rng);
  QuerySlots slots = query_slots(m);

  Shape dec_shape = {slots.total, m.dec_dim};
  int n = static_cast<int>(numel(dec_shape));
  Rng drng = rng.derive("fd");
  Tensor base = random_tensor(drng, {1, n}, -0.5, 0.5);
  Tensor dirs = direction_matrix(drng, n);

  // Targets with every channel present so all five loss terms join the graph.
  HeadTargets t;
  t.waypoints = {1.5, 0.3, 3.1, 0.7, 4.6, 1.2};
  int R = m.density_cells;
  t.density.assign(static_cast<std::size_t>(R) * R * 7, 0.0);
  std::size_t at = (static_cast<std::size_t>(R / 2) * R + R / 2) * 7;
  t.density[at] = 1.0;
  t.density[at + 1] = 0.25;
  t.density[at + 2] = -0.3;
  t.density[at + 3] = 0.4;
  t.density[at + 4] = 0.5;
  t.density[at + 5] = 0.4;
  t.density[at + 6] = 0.9;
  t.light = 1.0;
  t.stop = 0.0;
  t.junction = 1.0;
  t.gaze.assign(static_cast<std::size_t>(m.image_h) * m.image_w, 0.0);
  t.gaze[static_cast<std::size_t>(m.image_h / 2) * m.image_w + m.image_w / 2] = 1.0;
  t.has_gaze = true;
  t.eeg = 1.0;
  t.brake = 0.0;
  t.has_intention = true;
  LossWeights w;

  auto f = [&](const Tensor& x) {
    Tensor decoded = project_input(x, base, dirs, dec_shape);
    PredictionBundle pred = heads.apply(decoded, Vec2{9.0, 2.0});
    return compute_loss(pred, t, w).total;
  };
  return check_directional(f);
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const std::string& module, const ModelConfig& m,
                                        std::uint64_t seed) {
  std::vector<GradcheckRow> rows;
  bool all = module == "all";
  if (all || module == "attention") rows.push_back({"attention", check_attention(m, seed)});
  if (all || module == "encoder") rows.push_back({"encoder", check_encoder(m, seed)});
  if (all || module == "decoder") rows.push_back({"decoder", check_decoder(m, seed)});
  if (all || module == "heads") rows.push_back({"heads", check_heads(m, seed)});
  if (rows.empty()) throw ConfigError("unknown gradcheck module '" + module + "'");
  return rows;
}

}  // namespace hgd
