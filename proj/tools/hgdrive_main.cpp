#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgdrive/binio.hpp"
#include "hgdrive/checkpoint.hpp"
#include "hgdrive/evaluate.hpp"
#include "hgdrive/gradcheck.hpp"
#include "hgdrive/trainer.hpp"

namespace fs = std::filesystem;
using namespace hgd;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::int64_t seed = -1;
  std::string out;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run configuration file (json)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "base preset when no config file is given")
      ->check(CLI::IsMember({"toy", "desk", "paper-dims"}));
  cmd->add_option("--seed", o.seed, "root seed (overrides config)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "worker cap (overrides config)");
}

// Config file governs when present; flags override scalar fields on top.
RunConfig resolve(const CommonOpts& o, const std::string& cmd_name) {
  if (!o.config_path.empty() && !o.preset.empty())
    throw ConfigError("--preset conflicts with --config; set \"preset\" inside the file");
  RunConfig cfg = o.config_path.empty()
                      ? make_run_config(o.preset.empty() ? "desk" : o.preset)
                      : load_run_config_file(o.config_path);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.jobs > 0) cfg.jobs = o.jobs;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (cfg.out_dir.empty()) {
    const char* root = std::getenv("HG_E2E_OUT");
    cfg.out_dir = (root && *root ? std::string(root) : std::string("out")) + "/" + cmd_name;
  }
  cfg.validate();
  return cfg;
}

void write_resolved(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/config.json", run_config_to_json(cfg));
}

std::string map_guidance(const std::string& g) {
  if (g == "both") return "eye+intention";
  if (g == "fake") return "eye+fake-intention";
  return g;
}

std::vector<Episode> load_or_generate(const RunConfig& cfg, const std::string& split,
                                      const std::string& data_dir) {
  if (data_dir.empty()) {
    std::printf("generating %s split in memory (%d target frames)\n", split.c_str(),
                split == "machine" ? cfg.sim.machine_frames : cfg.sim.human_frames);
    return generate_split(cfg, split, cfg.jobs);
  }
  DatasetInfo info = read_manifest(data_dir);
  if (info.split != split)
    throw ConfigError("dataset at " + data_dir + " holds the '" + info.split +
                      "' split, expected '" + split + "'");
  if (info.config_hash != hex64(data_config_hash(cfg)))
    throw ConfigError("dataset at " + data_dir +
                      " was generated under a different model/sim config");
  return load_episodes(info, cfg.model);
}

EpochCallback checkpoint_each_epoch(const std::string& out_dir) {
  return [out_dir](int epoch, const DrivingModel& model) {
    char name[32];
    std::snprintf(name, sizeof(name), "/ckpt_epoch_%03d.bin", epoch);
    save_checkpoint(out_dir + name, model.params);
  };
}

void print_stats(const TrainStats& stats) {
  std::fputs(train_log_to_text(stats.log).c_str(), stdout);
  std::printf("final val: pt %.6g map %.6g eye %.6g tf %.6g hb %.6g total %.6g (%d frames)\n",
              stats.val.pt, stats.val.map, stats.val.eye, stats.val.tf, stats.val.hb,
              stats.val.total, stats.val.frames);
}

int cmd_gen_data(const CommonOpts& o, const std::string& split) {
  RunConfig cfg = resolve(o, "gen-data");
  write_resolved(cfg);
  std::vector<std::string> splits =
      split == "both" ? std::vector<std::string>{"machine", "human"}
                      : std::vector<std::string>{split};
  for (const auto& s : splits) {
    DatasetInfo info = generate_dataset(cfg, s, cfg.out_dir + "/" + s, cfg.jobs);
    std::printf("dataset %s: %d episodes, %d frames, config %s\n", info.dir.c_str(),
                info.episodes, info.frames, info.config_hash.c_str());
  }
  return 0;
}

int cmd_pretrain(const CommonOpts& o, const std::string& data_dir) {
  RunConfig cfg = resolve(o, "pretrain");
  write_resolved(cfg);
  auto data = load_or_generate(cfg, "machine", data_dir);
  DrivingModel model(cfg.model, cfg.seed);
  TrainStats stats = pretrain(model, cfg, data, checkpoint_each_epoch(cfg.out_dir));
  save_checkpoint(cfg.out_dir + "/checkpoint.bin", model.params);
  write_text_file(cfg.out_dir + "/train_log.txt", train_log_to_text(stats.log));
  print_stats(stats);
  std::printf("checkpoint %s/checkpoint.bin\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_finetune(const CommonOpts& o, const std::string& ckpt, const std::string& data_dir,
                 const std::string& guidance) {
  RunConfig cfg = resolve(o, "finetune");
  if (!guidance.empty()) cfg.train.guidance = map_guidance(guidance);
  cfg.validate();
  write_resolved(cfg);
  auto data = load_or_generate(cfg, "human", data_dir);
  DrivingModel model(cfg.model, cfg.seed);
  load_checkpoint(ckpt, model.params);
  TrainStats stats = finetune(model, cfg, data, checkpoint_each_epoch(cfg.out_dir));
  save_checkpoint(cfg.out_dir + "/checkpoint.bin", model.params);
  write_text_file(cfg.out_dir + "/train_log.txt", train_log_to_text(stats.log));
  print_stats(stats);
  std::printf("checkpoint %s/checkpoint.bin\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& policy, const std::string& ckpt,
                 int routes, bool empty_world) {
  RunConfig cfg = resolve(o, "evaluate");
  if (routes > 0) cfg.eval.routes = routes;
  if (empty_world) cfg.eval.empty_world = true;
  cfg.validate();
  write_resolved(cfg);

  PolicyFactory factory;
  DrivingModel model(cfg.model, cfg.seed);
  if (policy == "expert") {
    factory = expert_policy_factory(cfg.sim);
  } else if (policy == "random") {
    factory = random_policy_factory();
  } else {
    if (ckpt.empty()) throw ConfigError("--policy model needs --ckpt");
    load_checkpoint(ckpt, model.params);
    factory = model_policy_factory(model);
  }
  EvalReport rep = evaluate_policy(cfg, policy, factory);
  write_text_file(cfg.out_dir + "/report.json", report_to_json(rep));
  std::printf("policy %s: route_completion %.4f infraction_score %.4f driving_score %.4f\n",
              policy.c_str(), rep.route_completion, rep.infraction_score, rep.driving_score);
  std::printf("report %s/report.json\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& o, int runs, bool sweep) {
  RunConfig cfg = resolve(o, "ablate");
  write_resolved(cfg);
  AblationReport rep = run_ablation(cfg, runs);
  write_text_file(cfg.out_dir + "/ablation.json", ablation_to_json(rep));
  std::printf("%-22s %14s %14s %14s\n", "variant", "DS", "RC", "IS");
  for (const auto& r : rep.rows)
    std::printf("%-22s %6.2f ± %5.2f %6.2f ± %5.2f %6.3f ± %5.3f\n", r.name.c_str(), r.ds_mean,
                r.ds_std, r.rc_mean, r.rc_std, r.is_mean, r.is_std);
  if (sweep) {
    auto points = run_eeg_sweep(cfg);
    write_text_file(cfg.out_dir + "/eeg_sweep.json", sweep_to_json(points));
    std::printf("%-10s %-6s %14s %14s\n", "accuracy", "shift", "DS", "val_intention");
    for (const auto& p : points)
      std::printf("%-10.2f %-6d %14.4f %14.6f\n", p.accuracy, p.shift, p.driving_score,
                  p.val_hb);
  }
  std::printf("reports in %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const CommonOpts& o, const std::string& module, const std::string& dims) {
  RunConfig cfg = resolve(o, "gradcheck");
  ModelConfig m = make_run_config(dims).model;
  auto rows = run_gradcheck(module, m, cfg.seed == 0 ? 7 : cfg.seed);
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-10s max_rel_err %.3e checked %d skipped_kinks %zu\n", r.name.c_str(),
                r.result.max_rel_err, r.result.checked, r.result.non_differentiable.size());
    ok = ok && r.result.max_rel_err < 1e-4 && r.result.checked > 0;
  }
  std::printf("gradcheck %s\n", ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

void print_tensor_stats(const char* name, const std::vector<double>& v) {
  double lo = 0.0, hi = 0.0, sum = 0.0;
  if (!v.empty()) {
    lo = hi = v[0];
    for (double e : v) {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      sum += e;
    }
  }
  std::printf("  %-9s n %-6zu min %.4f max %.4f mean %.4f\n", name, v.size(), lo, hi,
              v.empty() ? 0.0 : sum / v.size());
}

int cmd_inspect(const CommonOpts& o, const std::string& data_dir, int episode, int frame) {
  RunConfig cfg = resolve(o, "inspect");
  std::vector<Episode> eps;
  if (data_dir.empty()) {
    auto seeds = dataset_episode_seeds(cfg, "human");
    if (episode >= static_cast<int>(seeds.size()))
      throw ConfigError("episode index out of range (split has " +
                        std::to_string(seeds.size()) + ")");
    eps.push_back(generate_episode(cfg, seeds[episode], true));
    episode = 0;
  } else {
    DatasetInfo info = read_manifest(data_dir);
    eps = load_episodes(info, cfg.model);
    if (episode >= static_cast<int>(eps.size()))
      throw ConfigError("episode index out of range (dataset has " +
                        std::to_string(eps.size()) + ")");
  }
  const Episode& ep = eps[episode];
  if (frame >= static_cast<int>(ep.frames.size()))
    throw ConfigError("frame index out of range (episode has " +
                      std::to_string(ep.frames.size()) + ")");
  const FrameRecord& fr = ep.frames[frame];
  const ModelConfig& m = cfg.model;

  std::printf("episode seed %s, frame %d of %zu\n", hex64(ep.seed).c_str(), frame,
              ep.frames.size());
  std::printf("image (%d,%d,%d)\n", m.image_channels, m.image_h, m.image_w);
  print_tensor_stats("image", fr.image);
  std::printf("bev (%d,%d,%d)\n", m.bev_channels, m.bev_cells, m.bev_cells);
  print_tensor_stats("bev", fr.bev);
  std::printf("history");
  for (const auto& p : fr.history) std::printf(" (%.2f, %.2f)", p.x, p.y);
  std::printf("\ngoal (%.2f, %.2f)  speed %.2f\n", fr.goal.x, fr.goal.y, fr.speed);
  std::printf("waypoints");
  for (std::size_t k = 0; k + 1 < fr.targets.waypoints.size(); k += 2)
    std::printf(" (%.2f, %.2f)", fr.targets.waypoints[k], fr.targets.waypoints[k + 1]);
  int positives = 0;
  for (std::size_t i = 0; i < fr.targets.density.size(); i += 7)
    positives += fr.targets.density[i] > 0.5 ? 1 : 0;
  std::printf("\ndensity (%d,%d,7): %d positive cells\n", m.density_cells, m.density_cells,
              positives);
  std::printf("traffic light %.0f stop %.0f junction %.0f\n", fr.targets.light,
              fr.targets.stop, fr.targets.junction);
  if (fr.targets.has_gaze) {
    std::size_t arg = 0;
    for (std::size_t i = 0; i < fr.targets.gaze.size(); ++i)
      if (fr.targets.gaze[i] > fr.targets.gaze[arg]) arg = i;
    print_tensor_stats("gaze", fr.targets.gaze);
    std::printf("  gaze peak at row %zu col %zu\n", arg / m.image_w, arg % m.image_w);
  } else {
    std::printf("gaze: absent\n");
  }
  if (fr.targets.has_intention)
    std::printf("eeg %.0f brake %.0f\n", fr.targets.eeg, fr.targets.brake);
  else
    std::printf("intention: absent\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic end-to-end driving pipeline"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string split = "both", data_dir, ckpt, guidance, policy = "expert";
  std::string module = "all", dims = "toy";
  int routes = 0, runs = 3, episode = 0, frame = 0;
  bool empty_world = false, no_sweep = false;

  CLI::App* gen = app.add_subcommand("gen-data", "write dataset splits");
  add_common(gen, o);
  gen->add_option("--split", split, "machine | human | both")
      ->check(CLI::IsMember({"machine", "human", "both"}));

  CLI::App* pre = app.add_subcommand("pretrain", "stage-1 training on the machine split");
  add_common(pre, o);
  pre->add_option("--data", data_dir, "existing machine dataset dir (else generated)");

  CLI::App* fin = app.add_subcommand("finetune", "stage-2 training on the human split");
  add_common(fin, o);
  fin->add_option("--ckpt", ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  fin->add_option("--data", data_dir, "existing human dataset dir (else generated)");
  fin->add_option("--guidance", guidance, "none | eye | intention | both | fake")
      ->check(CLI::IsMember(
          {"none", "eye", "intention", "both", "fake", "eye+intention", "eye+fake-intention"}));

  CLI::App* ev = app.add_subcommand("evaluate", "closed-loop benchmark");
  add_common(ev, o);
  ev->add_option("--policy", policy, "expert | random | model")
      ->check(CLI::IsMember({"expert", "random", "model"}));
  ev->add_option("--ckpt", ckpt, "model checkpoint (for --policy model)");
  ev->add_option("--routes", routes, "route count override");
  ev->add_flag("--empty-world", empty_world, "benchmark without agents, lights, or signs");

  CLI::App* ab = app.add_subcommand("ablate", "guidance-variant comparison table");
  add_common(ab, o);
  ab->add_option("--runs", runs, "seeds per variant")->check(CLI::PositiveNumber);
  ab->add_flag("--no-sweep", no_sweep, "skip the intention-label sweep");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference backward validation");
  add_common(gc, o);
  gc->add_option("--module", module, "attention | encoder | decoder | heads | all")
      ->check(CLI::IsMember({"attention", "encoder", "decoder", "heads", "all"}));
  gc->add_option("--dims", dims, "model dims preset")
      ->check(CLI::IsMember({"toy", "desk", "paper-dims"}));

  CLI::App* ins = app.add_subcommand("inspect", "dump one dataset frame");
  add_common(ins, o);
  ins->add_option("--data", data_dir, "dataset dir (else one episode is generated)");
  ins->add_option("--episode", episode, "episode index");
  ins->add_option("--frame", frame, "frame index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(o, split);
    if (pre->parsed()) return cmd_pretrain(o, data_dir);
    if (fin->parsed()) return cmd_finetune(o, ckpt, data_dir, guidance);
    if (ev->parsed()) return cmd_evaluate(o, policy, ckpt, routes, empty_world);
    if (ab->parsed()) return cmd_ablate(o, runs, !no_sweep);
    if (gc->parsed()) return cmd_gradcheck(o, module, dims);
    if (ins->parsed()) return cmd_inspect(o, data_dir, episode, frame);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
