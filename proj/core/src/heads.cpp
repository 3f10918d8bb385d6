#include "hgdrive/heads.hpp"

#include <algorithm>
#include <cmath>

#include "hgdrive/ops.hpp"

namespace hgd {
namespace {

Tensor rows_to_map(const Tensor& rows, int gh, int gw) {
  return reshape(transpose2d(rows), {rows.dim(1), gh, gw});
}

Tensor point_row(const Vec2& p) { return Tensor::from({1, 2}, {p.x, p.y}); }

}  // namespace

Heads::Heads(ParameterSet& ps, const std::string& prefix, const ModelConfig& m, Rng& rng)
    : slots(query_slots(m)), eye_rows(m.eye_rows()), eye_cols(m.eye_cols()) {
  int d = m.dec_dim;
  goal_embed = Linear(ps, prefix + ".goal_embed", 2, d, rng);
  wp_embed = Linear(ps, prefix + ".wp_embed", 2, d, rng);
  gru = GruCellLayer(ps, prefix + ".gru", d, d, rng);
  wp_out = Linear(ps, prefix + ".wp_out", d, 2, rng);
  density_out = Linear(ps, prefix + ".density_out", d, 7, rng);
  traffic_out = Linear(ps, prefix + ".traffic_out", d, 3, rng);
  eye_up = ConvTranspose2dLayer(ps, prefix + ".eye_up", d, 1, m.eye_stride, m.eye_stride, rng);
  intention_out = Linear(ps, prefix + ".intention_out", d, 2, rng);
}

PredictionBundle Heads::apply(const Tensor& decoded, const Vec2& goal) const {
  if (decoded.dim(0) != slots.total)
    throw ShapeError("heads: expected " + std::to_string(slots.total) + " decoded rows, got " +
                     shape_str(decoded.shape()));
  PredictionBundle out;

  // waypoints
  int d = decoded.dim(1);
  Tensor h = Tensor::zeros({1, d});
  h = gru.step(goal_embed.apply(point_row(goal)), h);
  Tensor prev = point_row({0.0, 0.0});
  std::vector<Tensor> wps;
  for (int l = 0; l < slots.history; ++l) {
    h = add(h, slice_rows(decoded, slots.history_at + l, 1));
    h = gru.step(wp_embed.apply(prev), h);
    Tensor wp = wp_out.apply(h);
    wps.push_back(wp);
    prev = wp;
  }
  out.waypoints = concat_rows(wps);

  // density: presence squashed, regression channels raw
  Tensor dens = density_out.apply(slice_rows(decoded, slots.density_at, slots.density));
  Tensor pres = sigmoid(slice_cols(dens, 0, 1));
  out.density = concat_cols({pres, slice_cols(dens, 1, 6)});

  out.traffic = sigmoid(traffic_out.apply(slice_rows(decoded, slots.traffic_at, 1)));

  Tensor eye_map = rows_to_map(slice_rows(decoded, slots.eye_at, slots.eye), eye_rows, eye_cols);
  out.eye = sigmoid(eye_up.apply(eye_map));

  out.intention = sigmoid(intention_out.apply(slice_rows(decoded, slots.intention_at, 1)));
  return out;
}

LossTerms compute_loss(const PredictionBundle& pred, const HeadTargets& target,
                       const LossWeights& w) {
  LossTerms t;
  std::vector<Tensor> total_parts;

  if (w.pt > 0.0) {
    if (static_cast<std::int64_t>(target.waypoints.size()) != pred.waypoints.size())
      throw ShapeError("loss: waypoint target size mismatch");
    Tensor gt = Tensor::from(pred.waypoints.shape(), target.waypoints);
    t.pt = l1_loss_sum(pred.waypoints, gt);
    total_parts.push_back(scale(t.pt, w.pt));
  }

  if (w.map > 0.0) {
    int cells = pred.density.dim(0);
    if (static_cast<int>(target.density.size()) != cells * 7)
      throw ShapeError("loss: density target size mismatch");
    std::vector<double> pres_gt(cells), pos_mask(cells), neg_mask(cells);
    std::vector<double> meta_gt(static_cast<std::size_t>(cells) * 6);
    std::vector<double> pos6(static_cast<std::size_t>(cells) * 6);
    int n_pos = 0;
    for (int i = 0; i < cells; ++i) {
      double y = target.density[static_cast<std::size_t>(i) * 7];
      pres_gt[i] = y;
      pos_mask[i] = (y > 0.5) ? 1.0 : 0.0;
      neg_mask[i] = 1.0 - pos_mask[i];
      if (y > 0.5) ++n_pos;
      for (int c = 0; c < 6; ++c) {
        meta_gt[static_cast<std::size_t>(i) * 6 + c] =
            target.density[static_cast<std::size_t>(i) * 7 + 1 + c];
        pos6[static_cast<std::size_t>(i) * 6 + c] = pos_mask[i];
      }
    }
    int n_neg = cells - n_pos;
    Tensor pres = slice_cols(pred.density, 0, 1);
    Tensor meta = slice_cols(pred.density, 1, 6);
    Tensor pres_gt_t = Tensor::from({cells, 1}, pres_gt);
    Tensor pos_t = Tensor::from({cells, 1}, pos_mask);
    Tensor neg_t = Tensor::from({cells, 1}, neg_mask);
    Tensor neg_l1 = l1_loss_sum(mul(pres, neg_t), mul(pres_gt_t, neg_t));
    Tensor pos_l1 = l1_loss_sum(mul(pres, pos_t), mul(pres_gt_t, pos_t));
    Tensor term = add(scale(neg_l1, 0.5 / std::max(1, n_neg)),
                      scale(pos_l1, 0.5 / std::max(1, n_pos)));
    if (n_pos > 0) {
      Tensor pos6_t = Tensor::from({cells, 6}, pos6);
      Tensor meta_gt_t = Tensor::from({cells, 6}, meta_gt);
      Tensor meta_l1 = l1_loss_sum(mul(meta, pos6_t), mul(meta_gt_t, pos6_t));
      term = add(term, scale(meta_l1, 1.0 / (6.0 * n_pos)));
    }
    t.map = term;
    total_parts.push_back(scale(t.map, w.map));
  }

  if (w.eye > 0.0 && target.has_gaze) {
    if (static_cast<std::int64_t>(target.gaze.size()) != pred.eye.size())
      throw ShapeError("loss: gaze target size mismatch");
    Tensor gt = Tensor::from(pred.eye.shape(), target.gaze);
    t.eye = mse_loss_mean(pred.eye, gt);
    total_parts.push_back(scale(t.eye, w.eye));
  }

  if (w.tf > 0.0) {
    auto flag_bce = [&](int col, double y) {
      return bce_loss_mean(slice_cols(pred.traffic, col, 1), Tensor::from({1, 1}, {y}));
    };
    Tensor term = add(add(scale(flag_bce(0, target.light), w.tf_light),
                          scale(flag_bce(1, target.stop), w.tf_stop)),
                      scale(flag_bce(2, target.junction), w.tf_junction));
    t.tf = term;
    total_parts.push_back(scale(t.tf, w.tf));
  }

  if (w.hb > 0.0 && target.has_intention) {
    auto label_bce = [&](int col, double y) {
      return bce_loss_mean(slice_cols(pred.intention, col, 1), Tensor::from({1, 1}, {y}));
    };
    t.hb = add(scale(label_bce(0, target.eeg), w.hb_eeg),
               scale(label_bce(1, target.brake), w.hb_brake));
    total_parts.push_back(scale(t.hb, w.hb));
  }

  if (total_parts.empty()) {
    t.total = Tensor::scalar(0.0);
  } else {
    t.total = total_parts[0];
    for (std::size_t i = 1; i < total_parts.size(); ++i) t.total = add(t.total, total_parts[i]);
  }
  return t;
}

Waypoints to_waypoints(const Tensor& t) {
  if (t.shape().size() != 2 || t.dim(0) != 3 || t.dim(1) != 2)
    throw ShapeError("to_waypoints: expected (3,2), got " + shape_str(t.shape()));
  Waypoints w;
  for (int i = 0; i < 3; ++i) w[i] = {t.at(i, 0), t.at(i, 1)};
  return w;
}

}  // namespace hgd
