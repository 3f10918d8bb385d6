#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "hgdrive/config.hpp"

using namespace hgd;

TEST_CASE("presets build and validate") {
  for (const char* name : {"toy", "desk", "paper-dims"}) {
    RunConfig cfg = make_run_config(name);
    CHECK(cfg.preset == name);
    CHECK_NOTHROW(cfg.validate());
  }
  CHECK_THROWS_AS(make_run_config("huge"), ConfigError);
}

TEST_CASE("full scale dims tokenize to 174 and decode with 6 layers at 256") {
  ModelConfig m = make_run_config("paper-dims").model;
  CHECK(m.image_s2_h() == 20);
  CHECK(m.image_s2_w() == 88);
  CHECK(m.bev_s2_cells() == 32);
  CHECK(m.patch_size == 4);
  CHECK(m.image_tokens() == 110);
  CHECK(m.bev_tokens() == 64);
  CHECK(m.token_count() == 174);
  CHECK(m.dec_layers == 6);
  CHECK(m.dec_dim == 256);
  CHECK(m.query_count() == 845);
}

TEST_CASE("derived dimension laws hold on every preset") {
  for (const char* name : {"toy", "desk", "paper-dims"}) {
    ModelConfig m = make_run_config(name).model;
    CHECK(m.image_s1_h() * m.stage1_factor == m.image_h);
    CHECK(m.image_s2_w() * m.stage2_factor == m.image_w);
    CHECK(m.bev_s2_cells() * m.stage2_factor == m.bev_cells);
    CHECK(m.token_count() == m.image_tokens() + m.bev_tokens());
    CHECK(m.query_count() == m.history_len + m.density_cells * m.density_cells +
                                 m.eye_rows() * m.eye_cols() + 2);
    CHECK(m.bev_res_m() * m.bev_cells == m.bev_span_m);
  }
  CHECK(make_run_config("desk").model.token_count() == 12);
  CHECK(make_run_config("desk").model.query_count() == 77);
  CHECK(make_run_config("toy").model.query_count() == 29);
}

TEST_CASE("json config round trips through text") {
  RunConfig cfg = make_run_config("toy");
  cfg.seed = 99;
  cfg.train.guidance = "eye+intention";
  cfg.sim.eeg_accuracy = 0.8;
  RunConfig back = load_run_config_json(run_config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.seed == 99);
  CHECK(back.train.guidance == "eye+intention");
  CHECK(back.sim.eeg_accuracy == 0.8);
}

TEST_CASE("unknown keys are rejected everywhere") {
  CHECK_THROWS_AS(load_run_config_json(R"({"sed": 3})"), ConfigError);
  CHECK_THROWS_AS(load_run_config_json(R"({"model": {"image_hh": 32}})"), ConfigError);
  CHECK_THROWS_AS(load_run_config_json(R"({"train": {"weights": {"ptt": 1}}})"), ConfigError);
  CHECK_THROWS_AS(load_run_config_json(R"({"preset": "nope"})"), ConfigError);
  CHECK_THROWS_AS(load_run_config_json("not json"), ConfigError);
  CHECK_THROWS_AS(load_run_config_json("[1,2]"), ConfigError);
}

TEST_CASE("file values override the named preset") {
  RunConfig cfg = load_run_config_json(
      R"({"preset": "toy", "seed": 5, "model": {"dec_dim": 32}, "train": {"epochs": 2}})");
  CHECK(cfg.preset == "toy");
  CHECK(cfg.seed == 5);
  CHECK(cfg.model.dec_dim == 32);
  CHECK(cfg.train.epochs == 2);
  // Untouched fields keep the preset's values.
  CHECK(cfg.model.enc_dim == make_run_config("toy").model.enc_dim);
}

TEST_CASE("config hash tracks content not identity") {
  RunConfig a = make_run_config("desk");
  RunConfig b = make_run_config("desk");
  CHECK(config_hash(a) == config_hash(b));
  b.train.epochs += 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("data hash covers generation inputs only") {
  RunConfig a = make_run_config("desk");
  RunConfig b = a;
  b.train.epochs += 3;
  b.eval.routes += 1;
  CHECK(data_config_hash(a) == data_config_hash(b));
  b.sim.machine_frames += 1;
  CHECK(data_config_hash(a) != data_config_hash(b));
  RunConfig c = a;
  c.model.image_w = 128;
  CHECK(data_config_hash(a) != data_config_hash(c));
}

TEST_CASE("hex64 is fixed width lowercase") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
  CHECK(hex64(~0ull) == "ffffffffffffffff");
}

TEST_CASE("validation rejects inconsistent dimensions") {
  RunConfig cfg = make_run_config("toy");
  cfg.model.image_h = 33;  // not divisible by stage2_factor
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = make_run_config("toy");
  cfg.model.enc_dim = 15;  // not divisible by heads
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = make_run_config("toy");
  cfg.train.guidance = "telepathy";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = make_run_config("toy");
  cfg.sim.eeg_accuracy = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = make_run_config("toy");
  cfg.train.val_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = make_run_config("toy");
  cfg.jobs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
