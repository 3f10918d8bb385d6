#include "hgdrive/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <utility>
#include <vector>

#include "hgdrive/binio.hpp"
#include "hgdrive/rng.hpp"
#include "json.hpp"

namespace hgd {
namespace {

using nlohmann::json;

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

template <typename C>
using FieldMap = std::vector<std::pair<const char*, std::function<void(const json&, C&)>>>;

template <typename C>
void apply_section(const json& j, C& cfg, const FieldMap<C>& fields, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& f : fields) {
      if (it.key() == f.first) {
        try {
          f.second(it.value(), cfg);
        } catch (const json::exception& e) {
          throw ConfigError("bad value for " + section + "." + it.key() + ": " + e.what());
        }
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + section);
  }
}

#define HGD_FIELD(name) \
  { #name, [](const json& v, auto& c) { v.get_to(c.name); } }

template <typename C>
const FieldMap<C>& fields();

template <>
const FieldMap<LossWeights>& fields<LossWeights>() {
  static const FieldMap<LossWeights> f = {
      HGD_FIELD(pt),       HGD_FIELD(map),     HGD_FIELD(eye),
      HGD_FIELD(tf),       HGD_FIELD(hb),      HGD_FIELD(tf_light),
      HGD_FIELD(tf_stop),  HGD_FIELD(tf_junction),
      HGD_FIELD(hb_eeg),   HGD_FIELD(hb_brake),
  };
  return f;
}

template <>
const FieldMap<ModelConfig>& fields<ModelConfig>() {
  static const FieldMap<ModelConfig> f = {
      HGD_FIELD(image_channels),
      HGD_FIELD(image_h),
      HGD_FIELD(image_w),
      HGD_FIELD(camera_fov_deg),
      HGD_FIELD(bev_channels),
      HGD_FIELD(bev_cells),
      HGD_FIELD(bev_span_m),
      HGD_FIELD(stage1_factor),
      HGD_FIELD(stage2_factor),
      HGD_FIELD(image_stage1_ch),
      HGD_FIELD(image_stage2_ch),
      HGD_FIELD(bev_stage1_ch),
      HGD_FIELD(bev_stage2_ch),
      HGD_FIELD(mbt_dim),
      HGD_FIELD(mbt_heads),
      HGD_FIELD(mbt_mediate_layers),
      HGD_FIELD(mbt_fusion_layers),
      HGD_FIELD(polar_depth_cells),
      HGD_FIELD(polar_max_depth_m),
      HGD_FIELD(polar_enc_dim),
      HGD_FIELD(patch_size),
      HGD_FIELD(enc_dim),
      HGD_FIELD(enc_layers),
      HGD_FIELD(enc_heads),
      HGD_FIELD(dec_dim),
      HGD_FIELD(dec_layers),
      HGD_FIELD(dec_heads),
      HGD_FIELD(ffn_mult),
      HGD_FIELD(density_cells),
      HGD_FIELD(density_span_m),
      HGD_FIELD(history_len),
      HGD_FIELD(goal_clamp_m),
      HGD_FIELD(eye_stride),
  };
  return f;
}

template <>
const FieldMap<SimConfig>& fields<SimConfig>() {
  static const FieldMap<SimConfig> f = {
      HGD_FIELD(frame_rate_hz),
      HGD_FIELD(episode_frames),
      HGD_FIELD(route_min_m),
      HGD_FIELD(route_max_m),
      HGD_FIELD(route_turn_max_deg),
      HGD_FIELD(agents_min),
      HGD_FIELD(agents_max),
      HGD_FIELD(lights_max),
      HGD_FIELD(signs_max),
      HGD_FIELD(cruise_speed),
      HGD_FIELD(v_max),
      HGD_FIELD(accel),
      HGD_FIELD(decel),
      HGD_FIELD(gaze_sigma_frac),
      HGD_FIELD(eeg_accuracy),
      HGD_FIELD(eeg_shift_frames),
      HGD_FIELD(machine_frames),
      HGD_FIELD(human_frames),
      HGD_FIELD(stuck_limit_s),
  };
  return f;
}

template <>
const FieldMap<EvalConfig>& fields<EvalConfig>() {
  static const FieldMap<EvalConfig> f = {
      HGD_FIELD(routes),
      HGD_FIELD(seeds),
      HGD_FIELD(penalty_collision),
      HGD_FIELD(penalty_red_light),
      HGD_FIELD(penalty_stop_sign),
      HGD_FIELD(penalty_off_route),
      HGD_FIELD(off_route_m),
      HGD_FIELD(blocked_timeout_s),
      HGD_FIELD(max_duration_s),
      HGD_FIELD(empty_world),
  };
  return f;
}

template <>
const FieldMap<TrainConfig>& fields<TrainConfig>() {
  static const FieldMap<TrainConfig> f = {
      HGD_FIELD(batch),
      HGD_FIELD(epochs),
      HGD_FIELD(warmup_epochs),
      HGD_FIELD(base_lr_decision),
      HGD_FIELD(base_lr_encoder),
      HGD_FIELD(base_lr_finetune),
      HGD_FIELD(lr_override),
      HGD_FIELD(weight_decay),
      HGD_FIELD(grad_clip),
      HGD_FIELD(beta1),
      HGD_FIELD(beta2),
      HGD_FIELD(adam_eps),
      HGD_FIELD(guidance),
      HGD_FIELD(augment),
      HGD_FIELD(aug_scale_lo),
      HGD_FIELD(aug_scale_hi),
      HGD_FIELD(aug_color_jitter),
      HGD_FIELD(aug_rot_deg),
      HGD_FIELD(val_fraction),
      {"weights",
       [](const json& v, TrainConfig& c) {
         apply_section(v, c.weights, fields<LossWeights>(), "train.weights");
       }},
  };
  return f;
}

#undef HGD_FIELD

json weights_to_json(const LossWeights& w) {
  return json{{"pt", w.pt},
              {"map", w.map},
              {"eye", w.eye},
              {"tf", w.tf},
              {"hb", w.hb},
              {"tf_light", w.tf_light},
              {"tf_stop", w.tf_stop},
              {"tf_junction", w.tf_junction},
              {"hb_eeg", w.hb_eeg},
              {"hb_brake", w.hb_brake}};
}

json model_to_json(const ModelConfig& m) {
  return json{{"image_channels", m.image_channels},
              {"image_h", m.image_h},
              {"image_w", m.image_w},
              {"camera_fov_deg", m.camera_fov_deg},
              {"bev_channels", m.bev_channels},
              {"bev_cells", m.bev_cells},
              {"bev_span_m", m.bev_span_m},
              {"stage1_factor", m.stage1_factor},
              {"stage2_factor", m.stage2_factor},
              {"image_stage1_ch", m.image_stage1_ch},
              {"image_stage2_ch", m.image_stage2_ch},
              {"bev_stage1_ch", m.bev_stage1_ch},
              {"bev_stage2_ch", m.bev_stage2_ch},
              {"mbt_dim", m.mbt_dim},
              {"mbt_heads", m.mbt_heads},
              {"mbt_mediate_layers", m.mbt_mediate_layers},
              {"mbt_fusion_layers", m.mbt_fusion_layers},
              {"polar_depth_cells", m.polar_depth_cells},
              {"polar_max_depth_m", m.polar_max_depth_m},
              {"polar_enc_dim", m.polar_enc_dim},
              {"patch_size", m.patch_size},
              {"enc_dim", m.enc_dim},
              {"enc_layers", m.enc_layers},
              {"enc_heads", m.enc_heads},
              {"dec_dim", m.dec_dim},
              {"dec_layers", m.dec_layers},
              {"dec_heads", m.dec_heads},
              {"ffn_mult", m.ffn_mult},
              {"density_cells", m.density_cells},
              {"density_span_m", m.density_span_m},
              {"history_len", m.history_len},
              {"goal_clamp_m", m.goal_clamp_m},
              {"eye_stride", m.eye_stride}};
}

json sim_to_json(const SimConfig& s) {
  return json{{"frame_rate_hz", s.frame_rate_hz},
              {"episode_frames", s.episode_frames},
              {"route_min_m", s.route_min_m},
              {"route_max_m", s.route_max_m},
              {"route_turn_max_deg", s.route_turn_max_deg},
              {"agents_min", s.agents_min},
              {"agents_max", s.agents_max},
              {"lights_max", s.lights_max},
              {"signs_max", s.signs_max},
              {"cruise_speed", s.cruise_speed},
              {"v_max", s.v_max},
              {"accel", s.accel},
              {"decel", s.decel},
              {"gaze_sigma_frac", s.gaze_sigma_frac},
              {"eeg_accuracy", s.eeg_accuracy},
              {"eeg_shift_frames", s.eeg_shift_frames},
              {"machine_frames", s.machine_frames},
              {"human_frames", s.human_frames},
              {"stuck_limit_s", s.stuck_limit_s}};
}

json eval_to_json(const EvalConfig& e) {
  return json{{"routes", e.routes},
              {"seeds", e.seeds},
              {"penalty_collision", e.penalty_collision},
              {"penalty_red_light", e.penalty_red_light},
              {"penalty_stop_sign", e.penalty_stop_sign},
              {"penalty_off_route", e.penalty_off_route},
              {"off_route_m", e.off_route_m},
              {"blocked_timeout_s", e.blocked_timeout_s},
              {"max_duration_s", e.max_duration_s},
              {"empty_world", e.empty_world}};
}

json train_to_json(const TrainConfig& t) {
  return json{{"batch", t.batch},
              {"epochs", t.epochs},
              {"warmup_epochs", t.warmup_epochs},
              {"base_lr_decision", t.base_lr_decision},
              {"base_lr_encoder", t.base_lr_encoder},
              {"base_lr_finetune", t.base_lr_finetune},
              {"lr_override", t.lr_override},
              {"weight_decay", t.weight_decay},
              {"grad_clip", t.grad_clip},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"adam_eps", t.adam_eps},
              {"weights", weights_to_json(t.weights)},
              {"guidance", t.guidance},
              {"augment", t.augment},
              {"aug_scale_lo", t.aug_scale_lo},
              {"aug_scale_hi", t.aug_scale_hi},
              {"aug_color_jitter", t.aug_color_jitter},
              {"aug_rot_deg", t.aug_rot_deg},
              {"val_fraction", t.val_fraction}};
}

}  // namespace

void ModelConfig::validate() const {
  check(image_channels > 0 && image_h > 0 && image_w > 0, "image dims must be positive");
  check(camera_fov_deg > 0.0 && camera_fov_deg < 180.0, "camera_fov_deg must be in (0,180)");
  check(bev_channels > 0 && bev_cells > 0 && bev_span_m > 0.0, "bev dims must be positive");
  check(power_of_two(stage1_factor) && power_of_two(stage2_factor),
        "downsample factors must be powers of two");
  check(stage2_factor > stage1_factor, "stage2_factor must exceed stage1_factor");
  check(image_h % stage2_factor == 0 && image_w % stage2_factor == 0,
        "image dims must be divisible by stage2_factor");
  check(bev_cells % stage2_factor == 0, "bev_cells must be divisible by stage2_factor");
  check(image_stage1_ch > 0 && image_stage2_ch > 0 && bev_stage1_ch > 0 && bev_stage2_ch > 0,
        "stage channel counts must be positive");
  check(mbt_dim > 0 && mbt_heads > 0 && mbt_dim % mbt_heads == 0,
        "mbt_dim must be divisible by mbt_heads");
  check(mbt_mediate_layers >= 0 && mbt_fusion_layers >= 1, "mbt layer counts out of range");
  check(polar_depth_cells >= 1 && polar_max_depth_m > 0.0, "polar grid dims must be positive");
  check(polar_enc_dim >= 4 && polar_enc_dim % 4 == 0, "polar_enc_dim must be a multiple of 4");
  check(patch_size >= 1 && image_s2_h() % patch_size == 0 && image_s2_w() % patch_size == 0,
        "patch_size must divide the final image map");
  check(bev_s2_cells() % patch_size == 0, "patch_size must divide the final bev map");
  check(enc_dim > 0 && enc_heads > 0 && enc_dim % enc_heads == 0,
        "enc_dim must be divisible by enc_heads");
  check(enc_layers >= 1, "enc_layers must be at least 1");
  check(dec_dim > 0 && dec_heads > 0 && dec_dim % dec_heads == 0,
        "dec_dim must be divisible by dec_heads");
  check(dec_layers >= 1, "dec_layers must be at least 1");
  check(ffn_mult >= 1, "ffn_mult must be at least 1");
  check(density_cells >= 1 && density_span_m > 0.0, "density map dims must be positive");
  check(history_len >= 1, "history_len must be at least 1");
  check(goal_clamp_m > 0.0, "goal_clamp_m must be positive");
  check(eye_stride >= 1 && image_h % eye_stride == 0 && image_w % eye_stride == 0,
        "eye_stride must divide the image dims");
}

void SimConfig::validate() const {
  check(frame_rate_hz > 0.0, "frame_rate_hz must be positive");
  check(episode_frames >= 2, "episode_frames must be at least 2");
  check(route_min_m > 0.0 && route_max_m >= route_min_m, "route length range is empty");
  check(route_turn_max_deg >= 0.0 && route_turn_max_deg < 90.0,
        "route_turn_max_deg must be in [0,90)");
  check(agents_min >= 0 && agents_max >= agents_min, "agent count range is empty");
  check(lights_max >= 0 && signs_max >= 0, "lights_max/signs_max must be non-negative");
  check(cruise_speed > 0.0 && v_max >= cruise_speed, "speed limits out of range");
  check(accel > 0.0 && decel > 0.0, "accel/decel must be positive");
  check(gaze_sigma_frac > 0.0, "gaze_sigma_frac must be positive");
  check(eeg_accuracy > 0.0 && eeg_accuracy <= 1.0, "eeg_accuracy must be in (0,1]");
  check(eeg_shift_frames >= 0, "eeg_shift_frames must be non-negative");
  check(machine_frames >= 0 && human_frames >= 0, "split sizes must be non-negative");
  check(stuck_limit_s > 0.0, "stuck_limit_s must be positive");
}

void EvalConfig::validate() const {
  check(routes >= 1 && seeds >= 1, "routes and seeds must be at least 1");
  for (double p : {penalty_collision, penalty_red_light, penalty_stop_sign, penalty_off_route})
    check(p > 0.0 && p <= 1.0, "penalty multipliers must be in (0,1]");
  check(off_route_m > 0.0, "off_route_m must be positive");
  check(blocked_timeout_s > 0.0 && max_duration_s > 0.0, "eval timeouts must be positive");
}

void TrainConfig::validate() const {
  check(batch >= 1, "batch must be at least 1");
  check(epochs >= 1 && warmup_epochs >= 0 && warmup_epochs <= epochs,
        "epoch counts out of range");
  check(base_lr_decision > 0.0 && base_lr_encoder > 0.0 && base_lr_finetune > 0.0,
        "base learning rates must be positive");
  check(lr_override >= 0.0, "lr_override must be non-negative");
  check(weight_decay >= 0.0, "weight_decay must be non-negative");
  check(grad_clip > 0.0, "grad_clip must be positive");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0,1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
  check(guidance == "none" || guidance == "eye" || guidance == "intention" ||
            guidance == "eye+intention" || guidance == "eye+fake-intention",
        "guidance must be one of none|eye|intention|eye+intention|eye+fake-intention");
  check(aug_scale_lo > 0.0 && aug_scale_hi >= aug_scale_lo, "aug scale range is empty");
  check(aug_color_jitter >= 0.0, "aug_color_jitter must be non-negative");
  check(aug_rot_deg >= 0.0 && aug_rot_deg < 180.0, "aug_rot_deg must be in [0,180)");
  check(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must be in [0,1)");
  for (double w : {weights.pt, weights.map, weights.eye, weights.tf, weights.hb,
                   weights.tf_light, weights.tf_stop, weights.tf_junction, weights.hb_eeg,
                   weights.hb_brake})
    check(w >= 0.0, "loss weights must be non-negative");
}

void RunConfig::validate() const {
  check(jobs >= 1, "jobs must be at least 1");
  model.validate();
  sim.validate();
  eval.validate();
  train.validate();
}

RunConfig make_run_config(const std::string& preset) {
  RunConfig cfg;
  cfg.preset = preset;
  if (preset == "desk") {
    // struct defaults
  } else if (preset == "toy") {
    cfg.model.image_stage1_ch = 4;
    cfg.model.image_stage2_ch = 8;
    cfg.model.bev_stage1_ch = 4;
    cfg.model.bev_stage2_ch = 8;
    cfg.model.mbt_dim = 16;
    cfg.model.polar_depth_cells = 4;
    cfg.model.polar_max_depth_m = 16.0;
    cfg.model.polar_enc_dim = 8;
    cfg.model.enc_dim = 16;
    cfg.model.dec_dim = 16;
    cfg.model.dec_layers = 2;
    cfg.model.density_cells = 4;
    cfg.sim.episode_frames = 30;
    cfg.sim.machine_frames = 240;
    cfg.sim.human_frames = 24;
    cfg.eval.routes = 3;
    cfg.eval.seeds = 2;
    cfg.train.epochs = 4;
    cfg.train.warmup_epochs = 1;
  } else if (preset == "paper-dims") {
    cfg.model.image_h = 160;
    cfg.model.image_w = 704;
    cfg.model.camera_fov_deg = 120.0;
    cfg.model.bev_channels = 33;
    cfg.model.bev_cells = 256;
    cfg.model.bev_span_m = 64.0;
    cfg.model.image_stage1_ch = 72;
    cfg.model.image_stage2_ch = 216;
    cfg.model.bev_stage1_ch = 72;
    cfg.model.bev_stage2_ch = 216;
    cfg.model.mbt_dim = 512;
    cfg.model.mbt_fusion_layers = 2;
    cfg.model.polar_depth_cells = 32;
    cfg.model.polar_max_depth_m = 30.5;
    cfg.model.polar_enc_dim = 64;
    cfg.model.patch_size = 4;
    cfg.model.enc_dim = 512;
    cfg.model.enc_layers = 4;
    cfg.model.dec_dim = 256;
    cfg.model.dec_layers = 6;
    cfg.model.density_cells = 20;
    cfg.model.density_span_m = 40.0;
    cfg.train.batch = 512;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected toy|desk|paper-dims)");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  std::string preset = "desk";
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("preset must be a string");
    preset = j.at("preset").get<std::string>();
  }
  RunConfig cfg = make_run_config(preset);

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "preset") {
      continue;
    } else if (key == "seed") {
      cfg.seed = it.value().get<std::uint64_t>();
    } else if (key == "out_dir") {
      cfg.out_dir = it.value().get<std::string>();
    } else if (key == "jobs") {
      cfg.jobs = it.value().get<int>();
    } else if (key == "model") {
      apply_section(it.value(), cfg.model, fields<ModelConfig>(), "model");
    } else if (key == "sim") {
      apply_section(it.value(), cfg.sim, fields<SimConfig>(), "sim");
    } else if (key == "eval") {
      apply_section(it.value(), cfg.eval, fields<EvalConfig>(), "eval");
    } else if (key == "train") {
      apply_section(it.value(), cfg.train, fields<TrainConfig>(), "train");
    } else {
      throw ConfigError("unknown key '" + key + "' at config root");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
  return load_run_config_json(read_text_file(path));
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j{{"preset", cfg.preset},     {"seed", cfg.seed},
         {"out_dir", cfg.out_dir},   {"jobs", cfg.jobs},
         {"model", model_to_json(cfg.model)}, {"sim", sim_to_json(cfg.sim)},
         {"eval", eval_to_json(cfg.eval)},    {"train", train_to_json(cfg.train)}};
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(run_config_to_json(cfg)); }

std::uint64_t data_config_hash(const RunConfig& cfg) {
  return fnv1a64(model_to_json(cfg.model).dump() + sim_to_json(cfg.sim).dump());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace hgd
