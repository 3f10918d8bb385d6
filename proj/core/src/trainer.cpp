#include "hgdrive/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

#include "hgdrive/geometry.hpp"
#include "hgdrive/ops.hpp"

namespace hgd {
namespace {

void deterministic_shuffle(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(idx[i], idx[j]);
  }
}

std::uint64_t params_signature(const ParameterSet& params, const std::string& prefix) {
  std::uint64_t h = fnv1a64(prefix);
  for (const auto& [name, t] : params.entries_with_prefix(prefix)) {
    h ^= fnv1a64(name);
    h ^= fnv1a64(t.data().data(), t.data().size() * sizeof(double));
    h *= 0x100000001b3ull;
  }
  return h;
}

HeadTargets targets_for(const FrameRecord& fr, bool fake_intention) {
  HeadTargets t = fr.targets;
  if (fake_intention && t.has_intention) t.eeg = t.brake;
  return t;
}

Tensor image_tensor(const FrameRecord& fr, const ModelConfig& m) {
  return Tensor::from({m.image_channels, m.image_h, m.image_w}, fr.image);
}

Tensor bev_tensor(const FrameRecord& fr, const ModelConfig& m) {
  return Tensor::from({m.bev_channels, m.bev_cells, m.bev_cells}, fr.bev);
}

// Stage-1 input augmentation: global intensity scale and per-channel jitter
// on the camera raster; a rotation of the top-down raster about the ego
// anchor, applied consistently to every ego-frame labeled quantity.
FrameRecord augment_frame(const FrameRecord& fr, const ModelConfig& m, const TrainConfig& tc,
                          Rng& rng) {
  FrameRecord out = fr;

  double scale = rng.uniform(tc.aug_scale_lo, tc.aug_scale_hi);
  for (double& v : out.image) v *= scale;
  std::size_t hw = static_cast<std::size_t>(m.image_h) * m.image_w;
  for (int c = 0; c < m.image_channels; ++c) {
    double j = 1.0 + rng.uniform(-tc.aug_color_jitter, tc.aug_color_jitter);
    for (std::size_t i = 0; i < hw; ++i) out.image[c * hw + i] *= j;
  }

  double th = deg2rad(rng.uniform(-tc.aug_rot_deg, tc.aug_rot_deg));
  if (th == 0.0) return out;

  int G = m.bev_cells;
  double res = m.bev_res_m();
  std::vector<double> rotated(out.bev.size(), 0.0);
  std::size_t gg = static_cast<std::size_t>(G) * G;
  for (int r = 0; r < G; ++r)
    for (int c = 0; c < G; ++c) {
      Vec2 src = rotate(bev_cell_center(G, res, r, c), -th);
      int rs = G - 1 - static_cast<int>(std::floor(src.x / res));
      int cs = G / 2 - 1 - static_cast<int>(std::floor(src.y / res));
      if (rs < 0 || rs >= G || cs < 0 || cs >= G) continue;
      for (int ch = 0; ch < m.bev_channels; ++ch)
        rotated[ch * gg + static_cast<std::size_t>(r) * G + c] =
            out.bev[ch * gg + static_cast<std::size_t>(rs) * G + cs];
    }
  out.bev = std::move(rotated);

  for (Vec2& p : out.history) p = rotate(p, th);
  out.goal = rotate(out.goal, th);
  for (std::size_t k = 0; k + 1 < out.targets.waypoints.size(); k += 2) {
    Vec2 p = rotate({out.targets.waypoints[k], out.targets.waypoints[k + 1]}, th);
    out.targets.waypoints[k] = p.x;
    out.targets.waypoints[k + 1] = p.y;
  }

  int R = m.density_cells;
  double dres = m.density_span_m / R;
  std::vector<double> dens(out.targets.density.size(), 0.0);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < R; ++c) {
      std::size_t at = (static_cast<std::size_t>(r) * R + c) * 7;
      if (out.targets.density[at] < 0.5) continue;
      double xc = (R - r - 0.5) * dres, yc = (R / 2.0 - c - 0.5) * dres;
      Vec2 pos = rotate({xc + out.targets.density[at + 1] * dres,
                         yc + out.targets.density[at + 2] * dres},
                        th);
      int rn = R - 1 - static_cast<int>(std::floor(pos.x / dres));
      int cn = R / 2 - 1 - static_cast<int>(std::floor(pos.y / dres));
      if (rn < 0 || rn >= R || cn < 0 || cn >= R) continue;
      std::size_t to = (static_cast<std::size_t>(rn) * R + cn) * 7;
      double xn = (R - rn - 0.5) * dres, yn = (R / 2.0 - cn - 0.5) * dres;
      dens[to + 0] = 1.0;
      dens[to + 1] = (pos.x - xn) / dres;
      dens[to + 2] = (pos.y - yn) / dres;
      dens[to + 3] = wrap_angle(out.targets.density[at + 3] * kPi + th) / kPi;
      dens[to + 4] = out.targets.density[at + 4];
      dens[to + 5] = out.targets.density[at + 5];
      dens[to + 6] = out.targets.density[at + 6];
    }
  out.targets.density = std::move(dens);
  return out;
}

LossTerms frame_terms(const DrivingModel& model, const FrameRecord& fr, const LossWeights& w,
                      bool fake_intention, const Tensor* cached_tokens) {
  PredictionBundle pred;
  if (cached_tokens) {
    pred = model.decode_from(*cached_tokens, fr.history, fr.goal);
  } else {
    ModelInput in{image_tensor(fr, model.cfg), bev_tensor(fr, model.cfg), fr.history, fr.goal};
    pred = model.forward(in);
  }
  return compute_loss(pred, targets_for(fr, fake_intention), w);
}

LossWeights guidance_weights(const TrainConfig& tc, bool* fake_intention) {
  LossWeights w = tc.weights;
  *fake_intention = false;
  if (tc.guidance == "none") {
    w.eye = 0.0;
    w.hb = 0.0;
  } else if (tc.guidance == "eye") {
    w.hb = 0.0;
  } else if (tc.guidance == "intention") {
    w.eye = 0.0;
  } else if (tc.guidance == "eye+intention") {
    // both on
  } else if (tc.guidance == "eye+fake-intention") {
    *fake_intention = true;
  } else {
    throw ConfigError("unknown guidance '" + tc.guidance + "'");
  }
  return w;
}

struct EpochPlan {
  int steps_per_epoch = 0;
  int total_steps = 0;
  int warmup_steps = 0;
};

EpochPlan plan_epochs(int n_train, const TrainConfig& tc) {
  EpochPlan p;
  p.steps_per_epoch = std::max(1, n_train / tc.batch);
  p.total_steps = p.steps_per_epoch * tc.epochs;
  p.warmup_steps = p.steps_per_epoch * tc.warmup_epochs;
  return p;
}

}  // namespace

double lr_schedule(int step, int total_steps, int warmup_steps) {
  if (total_steps <= 0) return 1.0;
  if (warmup_steps > 0 && step < warmup_steps) return (step + 1.0) / warmup_steps;
  int rest = total_steps - warmup_steps;
  if (rest <= 0) return 1.0;
  double x = static_cast<double>(step - warmup_steps) / rest;
  return 0.5 * (1.0 + std::cos(kPi * clamp(x, 0.0, 1.0)));
}

AdamW::AdamW(const TrainConfig& tc)
    : beta1_(tc.beta1),
      beta2_(tc.beta2),
      eps_(tc.adam_eps),
      weight_decay_(tc.weight_decay),
      grad_clip_(tc.grad_clip) {}

void AdamW::add_group(const std::string& prefix, double base_lr) {
  groups_.emplace_back(prefix, base_lr);
}

AdamW::Slot& AdamW::slot_for(const std::string& name, const Tensor& t) {
  for (auto& [n, s] : slots_)
    if (n == name) return s;
  Slot s;
  s.m.assign(t.data().size(), 0.0);
  s.v.assign(t.data().size(), 0.0);
  std::size_t best_len = 0;
  for (const auto& [prefix, lr] : groups_) {
    if (name.rfind(prefix, 0) == 0 && prefix.size() >= best_len) {
      s.base_lr = lr;
      s.matched = true;
      best_len = prefix.size();
    }
  }
  slots_.emplace_back(name, std::move(s));
  return slots_.back().second;
}

void AdamW::step(const GradientReport& grads, ParameterSet& params, double lr_mult) {
  double norm2 = 0.0;
  for (const auto& [name, g] : grads.grads)
    for (double v : g.data()) norm2 += v * v;
  double norm = std::sqrt(norm2);
  double clip_mult = (grad_clip_ > 0.0 && norm > grad_clip_) ? grad_clip_ / norm : 1.0;

  ++updates_;
  double bc1 = 1.0 - std::pow(beta1_, updates_);
  double bc2 = 1.0 - std::pow(beta2_, updates_);

  for (const auto& [name, g] : grads.grads) {
    bool skip = false;
    for (const auto& d : grads.disconnected)
      if (d == name) skip = true;
    if (skip) continue;
    Slot& s = slot_for(name, g);
    if (!s.matched) continue;
    double lr = s.base_lr * lr_mult;
    Tensor p = params.get(name);
    auto& pd = p.mutable_data();
    const auto& gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      double gi = gd[i] * clip_mult;
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
      double mh = s.m[i] / bc1;
      double vh = s.v[i] / bc2;
      pd[i] -= lr * (mh / (std::sqrt(vh) + eps_) + weight_decay_ * pd[i]);
    }
  }
}

std::vector<const FrameRecord*> flatten_frames(const std::vector<Episode>& episodes) {
  std::vector<const FrameRecord*> out;
  for (const auto& ep : episodes)
    for (const auto& fr : ep.frames) out.push_back(&fr);
  return out;
}

void split_frames(const std::vector<const FrameRecord*>& all, double val_fraction,
                  std::uint64_t seed, std::vector<const FrameRecord*>* train,
                  std::vector<const FrameRecord*>* val) {
  std::vector<int> idx(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng(seed);
  deterministic_shuffle(idx, rng);
  int n_val = static_cast<int>(std::floor(all.size() * val_fraction));
  if (val_fraction > 0.0 && n_val == 0 && all.size() > 1) n_val = 1;
  train->clear();
  val->clear();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (static_cast<int>(i) < static_cast<int>(all.size()) - n_val)
      train->push_back(all[idx[i]]);
    else
      val->push_back(all[idx[i]]);
  }
}

ValLosses eval_losses(const DrivingModel& model, const std::vector<const FrameRecord*>& frames) {
  NoGradGuard ng;
  ValLosses out;
  LossWeights w;  // unweighted standard mix
  int n_eye = 0, n_hb = 0;
  for (const FrameRecord* fr : frames) {
    ModelInput in{image_tensor(*fr, model.cfg), bev_tensor(*fr, model.cfg), fr->history,
                  fr->goal};
    PredictionBundle pred = model.forward(in);
    LossTerms t = compute_loss(pred, fr->targets, w);
    out.pt += t.pt.item();
    out.map += t.map.item();
    out.tf += t.tf.item();
    out.total += t.total.item();
    if (t.eye.defined()) {
      out.eye += t.eye.item();
      ++n_eye;
    }
    if (t.hb.defined()) {
      out.hb += t.hb.item();
      ++n_hb;
    }
  }
  out.frames = static_cast<int>(frames.size());
  if (out.frames > 0) {
    out.pt /= out.frames;
    out.map /= out.frames;
    out.tf /= out.frames;
    out.total /= out.frames;
  }
  if (n_eye > 0) out.eye /= n_eye;
  if (n_hb > 0) out.hb /= n_hb;
  return out;
}

namespace {

TrainStats run_training(DrivingModel& model, const RunConfig& cfg, const LossWeights& weights,
                        bool fake_intention, bool use_augment,
                        const std::vector<const FrameRecord*>& train_set,
                        const std::vector<const FrameRecord*>& val_set, AdamW& opt,
                        const std::unordered_map<const FrameRecord*, Tensor>* token_cache,
                        Rng& rng, const EpochCallback& on_epoch) {
  const TrainConfig& tc = cfg.train;
  EpochPlan plan = plan_epochs(static_cast<int>(train_set.size()), tc);

  TrainStats stats;
  stats.epochs = tc.epochs;
  int step = 0;
  std::vector<int> idx(train_set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    deterministic_shuffle(idx, rng);
    TrainLogRow row;
    row.epoch = epoch;
    double n_frames = plan.steps_per_epoch * static_cast<double>(tc.batch);
    for (int b = 0; b < plan.steps_per_epoch; ++b) {
      double lr_mult = lr_schedule(step, plan.total_steps, plan.warmup_steps);
      try {
        std::vector<Tensor> losses;
        for (int k = 0; k < tc.batch; ++k) {
          int fi = idx[(b * tc.batch + k) % idx.size()];
          const FrameRecord* fr = train_set[fi];
          const Tensor* cached = token_cache ? &token_cache->at(fr) : nullptr;
          LossTerms t;
          if (use_augment && tc.augment) {
            FrameRecord af = augment_frame(*fr, model.cfg, tc, rng);
            t = frame_terms(model, af, weights, fake_intention, nullptr);
          } else {
            t = frame_terms(model, *fr, weights, fake_intention, cached);
          }
          losses.push_back(t.total);
          if (t.pt.defined()) row.pt += t.pt.item() / n_frames;
          if (t.map.defined()) row.map += t.map.item() / n_frames;
          if (t.eye.defined()) row.eye += t.eye.item() / n_frames;
          if (t.tf.defined()) row.tf += t.tf.item() / n_frames;
          if (t.hb.defined()) row.hb += t.hb.item() / n_frames;
        }
        Tensor batch_loss = losses[0];
        for (std::size_t k = 1; k < losses.size(); ++k) batch_loss = add(batch_loss, losses[k]);
        batch_loss = scale(batch_loss, 1.0 / tc.batch);

        GradientReport rep = grad(batch_loss, model.params);
        opt.step(rep, model.params, lr_mult);
        row.total += batch_loss.item() / plan.steps_per_epoch;
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                             ": " + e.what());
      }
      row.lr = lr_mult;
      ++step;
    }
    if (!val_set.empty()) {
      row.val_total = eval_losses(model, val_set).total;
      stats.epoch_val_loss.push_back(row.val_total);
    }
    stats.epoch_train_loss.push_back(row.total);
    stats.log.push_back(row);
    if (on_epoch) on_epoch(epoch, model);
  }
  stats.steps = step;
  stats.val = val_set.empty() ? eval_losses(model, train_set) : eval_losses(model, val_set);
  return stats;
}

}  // namespace

std::string train_log_to_text(const std::vector<TrainLogRow>& log) {
  std::string out = "epoch lr pt map eye tf hb total val_total\n";
  char buf[192];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d %.8g %.8g %.8g %.8g %.8g %.8g %.8g %.8g\n", r.epoch,
                  r.lr, r.pt, r.map, r.eye, r.tf, r.hb, r.total, r.val_total);
    out += buf;
  }
  return out;
}

TrainStats pretrain(DrivingModel& model, const RunConfig& cfg,
                    const std::vector<Episode>& machine_data, const EpochCallback& on_epoch) {
  auto all = flatten_frames(machine_data);
  if (all.empty()) throw std::runtime_error("pretrain: no frames");
  std::vector<const FrameRecord*> train_set, val_set;
  split_frames(all, cfg.train.val_fraction, Rng(cfg.seed).derive("pretrain.split").seed(),
               &train_set, &val_set);

  LossWeights w = cfg.train.weights;
  w.eye = 0.0;  // no gaze/intention supervision in stage 1
  w.hb = 0.0;

  double scale = static_cast<double>(cfg.train.batch) / 512.0;
  double lr_dec = cfg.train.lr_override > 0.0 ? cfg.train.lr_override
                                              : cfg.train.base_lr_decision * scale;
  double lr_enc = cfg.train.lr_override > 0.0 ? cfg.train.lr_override
                                              : cfg.train.base_lr_encoder * scale;
  AdamW opt(cfg.train);
  opt.add_group("perception.", lr_enc);
  opt.add_group("decision.", lr_dec);
  opt.add_group("heads.", lr_dec);

  Rng rng = Rng(cfg.seed).derive("pretrain");
  return run_training(model, cfg, w, false, true, train_set, val_set, opt, nullptr, rng,
                      on_epoch);
}

TrainStats finetune(DrivingModel& model, const RunConfig& cfg,
                    const std::vector<Episode>& human_data, const EpochCallback& on_epoch) {
  auto all = flatten_frames(human_data);
  if (all.empty()) throw std::runtime_error("finetune: no frames");
  std::vector<const FrameRecord*> train_set, val_set;
  split_frames(all, cfg.train.val_fraction, Rng(cfg.seed).derive("finetune.split").seed(),
               &train_set, &val_set);

  bool fake_intention = false;
  LossWeights w = guidance_weights(cfg.train, &fake_intention);

  bool any_gaze = false, any_intention = false;
  for (const FrameRecord* fr : all) {
    any_gaze = any_gaze || fr->targets.has_gaze;
    any_intention = any_intention || fr->targets.has_intention;
  }
  if (w.eye > 0.0 && !any_gaze)
    throw ConfigError("guidance '" + cfg.train.guidance + "' needs the gaze channel");
  if (w.hb > 0.0 && !any_intention)
    throw ConfigError("guidance '" + cfg.train.guidance + "' needs the eeg/brake channels");

  std::uint64_t frozen_sig = params_signature(model.params, "perception.");

  // The encoder never updates in stage 2, so each frame's tokens are fixed:
  // compute them once and train the decoder/heads against the cache.
  std::unordered_map<const FrameRecord*, Tensor> cache;
  {
    NoGradGuard ng;
    for (const FrameRecord* fr : all)
      cache.emplace(fr, model.encode(image_tensor(*fr, model.cfg), bev_tensor(*fr, model.cfg)));
  }

  double scale = static_cast<double>(cfg.train.batch) / 512.0;
  double lr = cfg.train.lr_override > 0.0 ? cfg.train.lr_override
                                          : cfg.train.base_lr_finetune * scale;
  AdamW opt(cfg.train);
  opt.add_group("decision.", lr);
  opt.add_group("heads.", lr);

  Rng rng = Rng(cfg.seed).derive("finetune");
  TrainStats stats = run_training(model, cfg, w, fake_intention, false, train_set, val_set, opt,
                                  &cache, rng, on_epoch);

  if (params_signature(model.params, "perception.") != frozen_sig)
    throw std::logic_error("finetune: frozen encoder parameters changed");
  return stats;
}

void copy_parameters(const ParameterSet& src, ParameterSet& dst) {
  for (const auto& [name, t] : src.entries()) {
    if (!dst.has(name)) throw std::runtime_error("copy_parameters: missing '" + name + "'");
    Tensor d = dst.get(name);
    if (d.shape() != t.shape())
      throw ShapeError("copy_parameters: shape mismatch for '" + name + "'");
    d.mutable_data() = t.data();
  }
}

}  // namespace hgd
