#include <cmath>
#include <memory>

#include "hgdrive/evaluate.hpp"
#include "hgdrive/trainer.hpp"

#include "json.hpp"

namespace hgd {
namespace {

struct VariantSpec {
  std::string name;
  std::string guidance;  // empty for non-model policies
};

const std::vector<VariantSpec> kVariants = {
    {"expert", ""},
    {"random", ""},
    {"none", "none"},
    {"eye", "eye"},
    {"intention", "intention"},
    {"eye+intention", "eye+intention"},
    {"eye+fake-intention", "eye+fake-intention"},
};

struct RunScores {
  double ds = 0.0, rc = 0.0, is = 0.0;
};

void accumulate(AblationRow& row, const std::vector<RunScores>& runs) {
  row.runs = static_cast<int>(runs.size());
  double n = runs.size();
  for (const auto& r : runs) {
    row.ds_mean += r.ds / n;
    row.rc_mean += r.rc / n;
    row.is_mean += r.is / n;
  }
  for (const auto& r : runs) {
    row.ds_std += (r.ds - row.ds_mean) * (r.ds - row.ds_mean) / n;
    row.rc_std += (r.rc - row.rc_mean) * (r.rc - row.rc_mean) / n;
    row.is_std += (r.is - row.is_mean) * (r.is - row.is_mean) / n;
  }
  row.ds_std = std::sqrt(row.ds_std);
  row.rc_std = std::sqrt(row.rc_std);
  row.is_std = std::sqrt(row.is_std);
}

RunScores scores_of(const EvalReport& rep) {
  return {rep.driving_score, rep.route_completion, rep.infraction_score};
}

}  // namespace

AblationReport run_ablation(const RunConfig& cfg, int seeds_per_variant) {
  AblationReport report;
  report.seeds_per_variant = seeds_per_variant;

  std::vector<std::vector<RunScores>> scores(kVariants.size());

  for (int s = 0; s < seeds_per_variant; ++s) {
    RunConfig rcfg = cfg;
    rcfg.seed = Rng(cfg.seed).derive("ablate.run" + std::to_string(s)).seed();

    auto machine = generate_split(rcfg, "machine", rcfg.jobs);
    auto human = generate_split(rcfg, "human", rcfg.jobs);

    DrivingModel base(rcfg.model, rcfg.seed);
    pretrain(base, rcfg, machine);

    for (std::size_t v = 0; v < kVariants.size(); ++v) {
      const auto& spec = kVariants[v];
      if (spec.guidance.empty()) {
        PolicyFactory f = spec.name == "expert" ? expert_policy_factory(rcfg.sim)
                                                : random_policy_factory();
        scores[v].push_back(scores_of(evaluate_policy(rcfg, spec.name, f)));
        continue;
      }
      DrivingModel model(rcfg.model, rcfg.seed);
      copy_parameters(base.params, model.params);
      RunConfig vcfg = rcfg;
      vcfg.train.guidance = spec.guidance;
      finetune(model, vcfg, human);
      scores[v].push_back(
          scores_of(evaluate_policy(vcfg, spec.name, model_policy_factory(model))));
    }
  }

  for (std::size_t v = 0; v < kVariants.size(); ++v) {
    AblationRow row;
    row.name = kVariants[v].name;
    accumulate(row, scores[v]);
    report.rows.push_back(row);
  }
  return report;
}

std::string ablation_to_json(const AblationReport& report) {
  nlohmann::json j;
  j["seeds_per_variant"] = report.seeds_per_variant;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["name"] = r.name;
    row["driving_score_mean"] = r.ds_mean;
    row["driving_score_std"] = r.ds_std;
    row["route_completion_mean"] = r.rc_mean;
    row["route_completion_std"] = r.rc_std;
    row["infraction_score_mean"] = r.is_mean;
    row["infraction_score_std"] = r.is_std;
    row["runs"] = r.runs;
    j["rows"].push_back(row);
  }
  return j.dump(2) + "\n";
}

std::vector<SweepPoint> run_eeg_sweep(const RunConfig& cfg) {
  // One-dimensional slices: signal accuracy at zero lag, then lag at the
  // default accuracy. The machine split and the pretrained base do not depend
  // on either knob, so both are shared across all points.
  struct Point {
    double accuracy;
    int shift;
  };
  const std::vector<Point> grid = {
      {0.60, 0}, {0.65, 0}, {0.70, 0}, {0.80, 0}, {0.90, 0},
      {1.00, 0}, {0.65, 1}, {0.65, 2},
  };

  auto machine = generate_split(cfg, "machine", cfg.jobs);
  DrivingModel base(cfg.model, cfg.seed);
  pretrain(base, cfg, machine);

  std::vector<SweepPoint> points;
  for (const auto& p : grid) {
    RunConfig pcfg = cfg;
    pcfg.sim.eeg_accuracy = p.accuracy;
    pcfg.sim.eeg_shift_frames = p.shift;
    pcfg.train.guidance = "eye+intention";

    auto human = generate_split(pcfg, "human", pcfg.jobs);
    DrivingModel model(pcfg.model, pcfg.seed);
    copy_parameters(base.params, model.params);
    TrainStats stats = finetune(model, pcfg, human);
    EvalReport ev = evaluate_policy(pcfg, "model", model_policy_factory(model));

    SweepPoint sp;
    sp.accuracy = p.accuracy;
    sp.shift = p.shift;
    sp.driving_score = ev.driving_score;
    sp.val_hb = stats.val.hb;
    points.push_back(sp);
  }
  return points;
}

std::string sweep_to_json(const std::vector<SweepPoint>& points) {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json row;
    row["accuracy"] = p.accuracy;
    row["shift_frames"] = p.shift;
    row["driving_score"] = p.driving_score;
    row["val_intention_loss"] = p.val_hb;
    j["points"].push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace hgd
