#include <benchmark/benchmark.h>

#include "hgdrive/evaluate.hpp"
#include "hgdrive/model.hpp"
#include "hgdrive/ops.hpp"
#include "hgdrive/simdata.hpp"

using namespace hgd;

namespace {

RunConfig toy_cfg() { return make_run_config("toy"); }

void bm_matmul(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<double> av(static_cast<std::size_t>(n) * n), bv(av.size());
  for (double& v : av) v = rng.uniform(-1, 1);
  for (double& v : bv) v = rng.uniform(-1, 1);
  Tensor a = Tensor::from({n, n}, av), b = Tensor::from({n, n}, bv);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(128);

void bm_forward(benchmark::State& state) {
  RunConfig cfg = toy_cfg();
  DrivingModel model(cfg.model, 1);
  Rng rng(3);
  World w = make_world(cfg.sim, rng);
  ModelInput in{render_image(w, cfg.model), render_bev(w, cfg.model),
                std::vector<Vec2>(cfg.model.history_len, Vec2{0, 0}),
                w.to_ego(w.route.end())};
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(in));
}
BENCHMARK(bm_forward);

void bm_forward_backward(benchmark::State& state) {
  RunConfig cfg = toy_cfg();
  DrivingModel model(cfg.model, 1);
  Episode ep = generate_episode(cfg, 11, true);
  const FrameRecord& fr = ep.frames[0];
  ModelInput in{Tensor::from({cfg.model.image_channels, cfg.model.image_h, cfg.model.image_w},
                             fr.image),
                Tensor::from({cfg.model.bev_channels, cfg.model.bev_cells, cfg.model.bev_cells},
                             fr.bev),
                fr.history, fr.goal};
  LossWeights w;
  for (auto _ : state) {
    model.params.zero_grads();
    LossTerms t = compute_loss(model.forward(in), fr.targets, w);
    backward(t.total);
    benchmark::DoNotOptimize(t.total.item());
  }
}
BENCHMARK(bm_forward_backward);

void bm_render(benchmark::State& state) {
  RunConfig cfg = toy_cfg();
  Rng rng(5);
  World w = make_world(cfg.sim, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_image(w, cfg.model));
    benchmark::DoNotOptimize(render_bev(w, cfg.model));
  }
}
BENCHMARK(bm_render);

void bm_episode(benchmark::State& state) {
  RunConfig cfg = toy_cfg();
  for (auto _ : state) benchmark::DoNotOptimize(generate_episode(cfg, 21, true));
}
BENCHMARK(bm_episode);

}  // namespace

BENCHMARK_MAIN();
