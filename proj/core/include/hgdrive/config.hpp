#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hgd {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// Scalar weights of the training objective:
//   L = pt*L_pt + map*L_map + eye*L_eye + tf*L_tf + hb*L_hb
// with sub-weights inside the traffic term (light/stop/junction) and the
// intention term (eeg/brake).
struct LossWeights {
  double pt = 1.0;
  double map = 1.0;
  double eye = 1.0;
  double tf = 1.0;
  double hb = 1.0;
  double tf_light = 1.0;
  double tf_stop = 1.0;
  double tf_junction = 1.0;
  double hb_eeg = 0.5;
  double hb_brake = 0.5;
};

// Architecture dimensions. Two convolution stages per branch at cumulative
// downsample factors stage1_factor/stage2_factor, a polar cross-attention
// block after each stage, patch tokenization of the two final maps, a shared
// token encoder, and a query-based decoder.
struct ModelConfig {
  int image_channels = 3;
  int image_h = 32;
  int image_w = 64;
  double camera_fov_deg = 90.0;

  int bev_channels = 4;
  int bev_cells = 32;
  double bev_span_m = 32.0;

  int stage1_factor = 4;
  int stage2_factor = 8;
  int image_stage1_ch = 8;
  int image_stage2_ch = 16;
  int bev_stage1_ch = 8;
  int bev_stage2_ch = 16;

  int mbt_dim = 32;
  int mbt_heads = 4;
  int mbt_mediate_layers = 1;
  int mbt_fusion_layers = 1;
  int polar_depth_cells = 8;
  double polar_max_depth_m = 24.0;
  int polar_enc_dim = 16;

  int patch_size = 2;
  int enc_dim = 32;
  int enc_layers = 2;
  int enc_heads = 4;

  int dec_dim = 32;
  int dec_layers = 3;
  int dec_heads = 4;
  int ffn_mult = 2;

  int density_cells = 8;  // density map is density_cells x density_cells x 7
  double density_span_m = 20.0;
  int history_len = 3;
  double goal_clamp_m = 30.0;
  int eye_stride = 16;  // eye query grid stride and upsample factor

  double bev_res_m() const { return bev_span_m / bev_cells; }
  int image_s1_h() const { return image_h / stage1_factor; }
  int image_s1_w() const { return image_w / stage1_factor; }
  int image_s2_h() const { return image_h / stage2_factor; }
  int image_s2_w() const { return image_w / stage2_factor; }
  int bev_s1_cells() const { return bev_cells / stage1_factor; }
  int bev_s2_cells() const { return bev_cells / stage2_factor; }
  int image_tokens() const { return (image_s2_h() / patch_size) * (image_s2_w() / patch_size); }
  int bev_tokens() const { return (bev_s2_cells() / patch_size) * (bev_s2_cells() / patch_size); }
  int token_count() const { return image_tokens() + bev_tokens(); }
  int eye_rows() const { return image_h / eye_stride; }
  int eye_cols() const { return image_w / eye_stride; }
  int query_count() const {
    return history_len + density_cells * density_cells + eye_rows() * eye_cols() + 2;
  }

  void validate() const;
};

// Synthetic-world generation and the scripted expert.
struct SimConfig {
  double frame_rate_hz = 2.0;
  int episode_frames = 40;
  double route_min_m = 80.0;
  double route_max_m = 140.0;
  double route_turn_max_deg = 35.0;
  int agents_min = 1;
  int agents_max = 3;
  int lights_max = 1;
  int signs_max = 1;
  double cruise_speed = 6.0;
  double v_max = 10.0;
  double accel = 3.0;
  double decel = 6.0;
  double gaze_sigma_frac = 0.05;  // gaze blob sigma as a fraction of image width
  double eeg_accuracy = 0.65;
  int eeg_shift_frames = 0;
  int machine_frames = 3000;
  int human_frames = 120;
  double stuck_limit_s = 25.0;

  void validate() const;
};

// Closed-loop evaluation: penalty multipliers per infraction type and episode
// termination limits.
struct EvalConfig {
  int routes = 4;
  int seeds = 3;
  double penalty_collision = 0.50;
  double penalty_red_light = 0.70;
  double penalty_stop_sign = 0.80;
  double penalty_off_route = 0.70;
  double off_route_m = 3.0;
  double blocked_timeout_s = 30.0;
  double max_duration_s = 120.0;
  bool empty_world = false;  // benchmark routes without agents/lights/signs

  void validate() const;
};

struct TrainConfig {
  int batch = 8;
  int epochs = 35;
  int warmup_epochs = 5;
  // Base rates at reference batch 512; effective rate scales by batch/512.
  double base_lr_decision = 5e-4;
  double base_lr_encoder = 2e-4;
  double base_lr_finetune = 1e-4;
  // When positive, replaces the scaled base rates for every group (the
  // warmup/cosine shape still applies). Meant for small-batch experiments.
  double lr_override = 0.0;
  double weight_decay = 0.07;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  // none | eye | intention | eye+intention | eye+fake-intention
  std::string guidance = "none";
  bool augment = true;
  double aug_scale_lo = 0.9;
  double aug_scale_hi = 1.1;
  double aug_color_jitter = 0.1;
  double aug_rot_deg = 20.0;
  double val_fraction = 0.25;

  void validate() const;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::string out_dir;
  int jobs = 1;
  ModelConfig model;
  SimConfig sim;
  EvalConfig eval;
  TrainConfig train;

  void validate() const;
};

// Presets: "toy" (smallest dims that satisfy every shape law), "desk"
// (default; trains in minutes on a CPU), "paper-dims" (full-scale
// architecture dimensions, for shape arithmetic rather than training).
RunConfig make_run_config(const std::string& preset);

// Strict parse: unknown keys anywhere are errors. The file may name a preset;
// explicit values override the preset's.
RunConfig load_run_config_json(const std::string& json_text);
RunConfig load_run_config_file(const std::string& path);

std::string run_config_to_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);
// Hash over the model and sim sections only: what generated data depends on.
std::uint64_t data_config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

}  // namespace hgd
