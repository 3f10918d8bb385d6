#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "hgdrive/binio.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

fs::path make_tmp(const std::string& name) {
  fs::path root = fs::temp_directory_path() / "hgd_cli_tests" / name;
  fs::remove_all(root);
  fs::create_directories(root);
  return root;
}

CliResult run_cli(const fs::path& dir, const std::string& args) {
  fs::path out_file = dir / "__out.txt";
  std::string cmd = "cd '" + dir.string() + "' && '" + HGDRIVE_CLI + "' " + args + " > '" +
                    out_file.string() + "' 2>&1";
  int st = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.out = hgd::read_text_file(out_file.string());
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Small enough to train and evaluate in seconds, big enough to be nontrivial.
const char* kTinyConfig = R"({
  "preset": "toy",
  "seed": 11,
  "sim": {"machine_frames": 48, "human_frames": 24, "episode_frames": 12},
  "train": {"epochs": 1, "batch": 4, "warmup_epochs": 0, "val_fraction": 0.25}
})";

std::string write_tiny_config(const fs::path& dir) {
  fs::path p = dir / "cfg.json";
  hgd::write_text_file(p.string(), kTinyConfig);
  return p.string();
}

std::vector<std::string> bin_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".bin") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST_CASE("help exits cleanly") {
  fs::path tmp = make_tmp("help");
  CliResult r = run_cli(tmp, "--help");
  CHECK(r.code == 0);
  CHECK_MESSAGE(contains(r.out, "gen-data"), r.out);
  CHECK_MESSAGE(contains(r.out, "evaluate"), r.out);
}

TEST_CASE("gen-data writes both splits with manifests") {
  fs::path tmp = make_tmp("gen_data");
  std::string cfg = write_tiny_config(tmp);
  CliResult r = run_cli(tmp, "gen-data --config '" + cfg + "' --out data");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK_MESSAGE(contains(r.out, "dataset "), r.out);
  CHECK(fs::exists(tmp / "data/config.json"));
  CHECK(fs::exists(tmp / "data/machine/manifest.json"));
  CHECK(fs::exists(tmp / "data/human/manifest.json"));
  CHECK(!bin_files(tmp / "data/machine").empty());
  CHECK(!bin_files(tmp / "data/human").empty());
}

TEST_CASE("gen-data is byte reproducible across runs") {
  fs::path tmp = make_tmp("gen_repro");
  std::string cfg = write_tiny_config(tmp);
  REQUIRE(run_cli(tmp, "gen-data --config '" + cfg + "' --out a --split machine").code == 0);
  REQUIRE(run_cli(tmp, "gen-data --config '" + cfg + "' --out b --split machine").code == 0);
  auto names_a = bin_files(tmp / "a/machine");
  auto names_b = bin_files(tmp / "b/machine");
  REQUIRE(!names_a.empty());
  REQUIRE(names_a == names_b);
  for (const auto& n : names_a)
    CHECK(hgd::read_file((tmp / "a/machine" / n).string()) ==
          hgd::read_file((tmp / "b/machine" / n).string()));
}

TEST_CASE("pretrain then finetune produce checkpoints and logs") {
  fs::path tmp = make_tmp("train_chain");
  std::string cfg = write_tiny_config(tmp);

  CliResult pre = run_cli(tmp, "pretrain --config '" + cfg + "' --out pre");
  REQUIRE_MESSAGE(pre.code == 0, pre.out);
  CHECK_MESSAGE(contains(pre.out, "epoch lr pt map eye tf hb total val_total"), pre.out);
  CHECK_MESSAGE(contains(pre.out, "final val:"), pre.out);
  CHECK_MESSAGE(contains(pre.out, "checkpoint "), pre.out);
  REQUIRE(fs::exists(tmp / "pre/checkpoint.bin"));
  CHECK(fs::exists(tmp / "pre/train_log.txt"));
  CHECK(fs::exists(tmp / "pre/ckpt_epoch_000.bin"));

  CliResult fin = run_cli(tmp, "finetune --config '" + cfg + "' --out fin --ckpt pre/checkpoint.bin --guidance both");
  REQUIRE_MESSAGE(fin.code == 0, fin.out);
  CHECK_MESSAGE(contains(fin.out, "final val:"), fin.out);
  REQUIRE(fs::exists(tmp / "fin/checkpoint.bin"));

  CliResult ev = run_cli(tmp, "evaluate --config '" + cfg +
                                  "' --out ev --policy model --ckpt fin/checkpoint.bin --routes 1 --empty-world");
  REQUIRE_MESSAGE(ev.code == 0, ev.out);
  CHECK_MESSAGE(contains(ev.out, "policy model:"), ev.out);
  CHECK(fs::exists(tmp / "ev/report.json"));
}

TEST_CASE("expert clears an empty benchmark at full score") {
  fs::path tmp = make_tmp("eval_expert");
  CliResult r = run_cli(tmp, "evaluate --preset toy --seed 3 --policy expert --routes 2 --empty-world --out ev");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK_MESSAGE(contains(r.out, "route_completion 100.0000"), r.out);
  CHECK_MESSAGE(contains(r.out, "infraction_score 1.0000"), r.out);
  CHECK_MESSAGE(contains(r.out, "driving_score 100.0000"), r.out);
  CHECK(fs::exists(tmp / "ev/report.json"));
  CHECK(fs::exists(tmp / "ev/config.json"));
}

TEST_CASE("gradcheck validates the attention backward") {
  fs::path tmp = make_tmp("gradcheck");
  CliResult r = run_cli(tmp, "gradcheck --module attention --dims toy --out gc");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK_MESSAGE(contains(r.out, "attention"), r.out);
  CHECK_MESSAGE(contains(r.out, "max_rel_err"), r.out);
  CHECK_MESSAGE(contains(r.out, "gradcheck ok"), r.out);
}

TEST_CASE("inspect dumps a generated frame") {
  fs::path tmp = make_tmp("inspect");
  CliResult r = run_cli(tmp, "inspect --preset toy --seed 5 --out ins");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK_MESSAGE(contains(r.out, "episode seed"), r.out);
  CHECK_MESSAGE(contains(r.out, "waypoints"), r.out);
  CHECK_MESSAGE(contains(r.out, "gaze peak at row"), r.out);
}

TEST_CASE("unknown config keys are a hard error") {
  fs::path tmp = make_tmp("bad_key");
  fs::path p = tmp / "bad.json";
  hgd::write_text_file(p.string(), R"({"preset": "toy", "sim": {"episode_seconds": 20}})");
  CliResult r = run_cli(tmp, "gen-data --config '" + p.string() + "' --out data");
  CHECK(r.code == 1);
  CHECK_MESSAGE(contains(r.out, "error: unknown key"), r.out);
}

TEST_CASE("preset flag conflicts with a config file") {
  fs::path tmp = make_tmp("conflict");
  std::string cfg = write_tiny_config(tmp);
  CliResult r = run_cli(tmp, "gen-data --config '" + cfg + "' --preset toy --out data");
  CHECK(r.code == 1);
  CHECK_MESSAGE(contains(r.out, "error:"), r.out);
  CHECK_MESSAGE(contains(r.out, "conflicts"), r.out);
}

TEST_CASE("model evaluation without a checkpoint is rejected") {
  fs::path tmp = make_tmp("no_ckpt");
  CliResult r = run_cli(tmp, "evaluate --preset toy --policy model --out ev");
  CHECK(r.code == 1);
  CHECK_MESSAGE(contains(r.out, "error:"), r.out);
}

TEST_CASE("argument parsing rejects bad invocations") {
  fs::path tmp = make_tmp("bad_args");
  CHECK(run_cli(tmp, "").code != 0);                          // subcommand required
  CHECK(run_cli(tmp, "finetune --out fin").code != 0);        // --ckpt required
  CHECK(run_cli(tmp, "gen-data --split bogus").code != 0);    // bad split value
  CHECK(run_cli(tmp, "gradcheck --module bogus").code != 0);  // bad module value
}
