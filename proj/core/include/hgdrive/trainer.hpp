#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/model.hpp"
#include "hgdrive/params.hpp"
#include "hgdrive/simdata.hpp"

namespace hgd {

// Warmup/decay multiplier in [0,1]: linear ramp over the warmup steps, then
// a half cosine down to zero at total_steps.
double lr_schedule(int step, int total_steps, int warmup_steps);

// Decoupled-weight-decay Adam over named parameter groups. Gradients are
// taken from a GradientReport; parameters update in place.
class AdamW {
 public:
  AdamW(const TrainConfig& tc);
  // Every parameter whose name starts with `prefix` trains at base_lr.
  // Longest matching prefix wins. Unmatched parameters are not updated.
  void add_group(const std::string& prefix, double base_lr);
  void step(const GradientReport& grads, ParameterSet& params, double lr_mult);
  int updates() const { return updates_; }

 private:
  struct Slot {
    std::vector<double> m, v;
    double base_lr = 0.0;
    bool matched = false;
  };
  Slot& slot_for(const std::string& name, const Tensor& t);
  std::vector<std::pair<std::string, double>> groups_;
  std::vector<std::pair<std::string, Slot>> slots_;
  double beta1_, beta2_, eps_, weight_decay_, grad_clip_;
  int updates_ = 0;
};

// Mean unweighted loss terms over a frame set (all heads, standard
// sub-weights), for comparable validation numbers across guidance settings.
struct ValLosses {
  double pt = 0.0, map = 0.0, eye = 0.0, tf = 0.0, hb = 0.0, total = 0.0;
  int frames = 0;
};

// One structured log row per epoch: raw component means over the trained
// batches, the optimized (weighted) total, and the rate at the last step.
struct TrainLogRow {
  int epoch = 0;
  double lr = 0.0;
  double pt = 0.0, map = 0.0, eye = 0.0, tf = 0.0, hb = 0.0;
  double total = 0.0;
  double val_total = 0.0;  // 0 when no validation split
};

struct TrainStats {
  int epochs = 0;
  int steps = 0;
  std::vector<TrainLogRow> log;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;
  ValLosses val;  // final validation losses
};

std::string train_log_to_text(const std::vector<TrainLogRow>& log);

// Called after each epoch (checkpointing, progress reporting).
using EpochCallback = std::function<void(int epoch, const DrivingModel& model)>;

std::vector<const FrameRecord*> flatten_frames(const std::vector<Episode>& episodes);

// Split by a derived shuffle of the frame order: the trailing val_fraction
// becomes the validation set.
void split_frames(const std::vector<const FrameRecord*>& all, double val_fraction,
                  std::uint64_t seed, std::vector<const FrameRecord*>* train,
                  std::vector<const FrameRecord*>* val);

ValLosses eval_losses(const DrivingModel& model, const std::vector<const FrameRecord*>& frames);

// Stage 1: every parameter trains on machine frames (no gaze/intention
// terms), with input augmentation when configured.
TrainStats pretrain(DrivingModel& model, const RunConfig& cfg,
                    const std::vector<Episode>& machine_data,
                    const EpochCallback& on_epoch = {});

// Stage 2: the perception encoder is frozen (verified bit-identical at the
// end) and its token outputs are computed once per frame; the decoder and
// heads train on human frames with the configured guidance terms. Guidance
// needing a label channel the data lacks is rejected.
TrainStats finetune(DrivingModel& model, const RunConfig& cfg,
                    const std::vector<Episode>& human_data,
                    const EpochCallback& on_epoch = {});

void copy_parameters(const ParameterSet& src, ParameterSet& dst);

// ---------------------------------------------------------------- ablation

struct AblationRow {
  std::string name;
  double ds_mean = 0.0, ds_std = 0.0;
  double rc_mean = 0.0, rc_std = 0.0;
  double is_mean = 0.0, is_std = 0.0;
  int runs = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  int seeds_per_variant = 0;
};

// Scripted baselines plus the five guidance variants, each run
// seeds_per_variant times end to end (data, pretrain, finetune, closed-loop
// eval) on derived seeds.
AblationReport run_ablation(const RunConfig& cfg, int seeds_per_variant);
std::string ablation_to_json(const AblationReport& report);

struct SweepPoint {
  double accuracy = 0.0;
  int shift = 0;
  double driving_score = 0.0;
  double val_hb = 0.0;
};

// Two one-dimensional sweeps over the emulated anticipatory signal: label
// accuracy at zero shift, then shift at the base accuracy.
std::vector<SweepPoint> run_eeg_sweep(const RunConfig& cfg);
std::string sweep_to_json(const std::vector<SweepPoint>& points);

}  // namespace hgd
