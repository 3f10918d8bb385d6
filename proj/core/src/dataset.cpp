#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "hgdrive/binio.hpp"
#include "hgdrive/simdata.hpp"
#include "json.hpp"

namespace hgd {
namespace {

constexpr char kEpisodeMagic[8] = {'H', 'G', 'D', 'S', 'E', 'P', '0', '1'};
constexpr int kManifestVersion = 1;
constexpr int kHorizon = 3;  // future positions per frame

std::string episode_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%05d.bin", i);
  return std::string(buf);
}

}  // namespace

std::vector<double> synthesize_eeg_labels(const std::vector<double>& brake_labels,
                                          double accuracy, int shift_frames, Rng& rng) {
  if (accuracy <= 0.5 || accuracy > 1.0)
    throw ConfigError("eeg accuracy must be in (0.5, 1]");
  if (shift_frames < 0) throw ConfigError("eeg shift_frames must be >= 0");
  std::vector<double> out(brake_labels.size(), 0.0);
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::int64_t src = static_cast<std::int64_t>(t) - shift_frames;
    double v = (src >= 0 && src < static_cast<std::int64_t>(brake_labels.size()))
                   ? brake_labels[src]
                   : 0.0;
    if (rng.bernoulli(1.0 - accuracy)) v = 1.0 - v;
    out[t] = v;
  }
  return out;
}

Episode generate_episode(const RunConfig& cfg, std::uint64_t seed, bool human_split) {
  Rng rng(seed);
  World w = make_world(cfg.sim, rng);
  double dt = 1.0 / cfg.sim.frame_rate_hz;
  int T = cfg.sim.episode_frames;

  std::vector<World> snaps;
  std::vector<double> brake_label(T, 0.0);
  snaps.reserve(T);
  for (int t = 0; t < T; ++t) {
    snaps.push_back(w);
    ExpertDecision d = expert_drive(w, cfg.sim);
    brake_label[t] = d.braking ? 1.0 : 0.0;
    step_world(w, cfg.sim, d.u, dt);
  }

  Rng eeg_rng = rng.derive("eeg");
  std::vector<double> eeg_label = synthesize_eeg_labels(brake_label, cfg.sim.eeg_accuracy,
                                                        cfg.sim.eeg_shift_frames, eeg_rng);

  Episode ep;
  ep.seed = seed;
  int usable = T - kHorizon;
  for (int t = 0; t < usable; ++t) {
    const World& fw = snaps[t];
    FrameRecord fr;
    fr.image = render_image(fw, cfg.model).data();
    fr.bev = render_bev(fw, cfg.model).data();
    for (int k = cfg.model.history_len; k >= 1; --k) {
      int idx = t - k;
      fr.history.push_back(idx < 0 ? Vec2{0.0, 0.0} : fw.to_ego(snaps[idx].ego.pos));
    }
    fr.goal = fw.to_ego(fw.route.end());
    fr.speed = fw.ego.v;

    fr.targets.waypoints.reserve(6);
    for (int k = 1; k <= kHorizon; ++k) {
      Vec2 p = fw.to_ego(snaps[t + k].ego.pos);
      fr.targets.waypoints.push_back(p.x);
      fr.targets.waypoints.push_back(p.y);
    }
    fr.targets.density = density_targets(fw, cfg.model);
    TrafficFlags tf = traffic_flags(fw);
    fr.targets.light = tf.light;
    fr.targets.stop = tf.stop;
    fr.targets.junction = tf.junction;
    if (human_split) {
      fr.targets.gaze = gaze_targets(fw, cfg.model, cfg.sim.gaze_sigma_frac);
      fr.targets.has_gaze = true;
      fr.targets.eeg = eeg_label[t];
      fr.targets.brake = brake_label[t];
      fr.targets.has_intention = true;
    }
    ep.frames.push_back(std::move(fr));
  }
  return ep;
}

std::vector<std::uint8_t> encode_episode(const Episode& ep, const ModelConfig& m) {
  (void)m;  // sizes are implicit in the frame vectors; kept for symmetry
  BinWriter wr;
  wr.raw(kEpisodeMagic, 8);
  wr.u64(ep.seed);
  wr.u32(static_cast<std::uint32_t>(ep.frames.size()));
  for (const auto& fr : ep.frames) {
    wr.f64s(fr.image);
    wr.f64s(fr.bev);
    wr.u32(static_cast<std::uint32_t>(fr.history.size()));
    for (const Vec2& p : fr.history) {
      wr.f64(p.x);
      wr.f64(p.y);
    }
    wr.f64(fr.goal.x);
    wr.f64(fr.goal.y);
    wr.f64(fr.speed);
    wr.f64s(fr.targets.waypoints);
    wr.f64s(fr.targets.density);
    wr.f64(fr.targets.light);
    wr.f64(fr.targets.stop);
    wr.f64(fr.targets.junction);
    wr.u8(fr.targets.has_gaze ? 1 : 0);
    if (fr.targets.has_gaze) wr.f64s(fr.targets.gaze);
    wr.u8(fr.targets.has_intention ? 1 : 0);
    if (fr.targets.has_intention) {
      wr.f64(fr.targets.eeg);
      wr.f64(fr.targets.brake);
    }
  }
  std::uint32_t crc = crc32(wr.bytes().data(), wr.size());
  BinWriter out;
  out.raw(wr.bytes().data(), wr.size());
  out.u32(crc);
  return out.bytes();
}

Episode decode_episode(const std::vector<std::uint8_t>& bytes, const ModelConfig& m) {
  if (bytes.size() < 12) throw IoError("episode file too small");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw IoError("episode file failed its checksum");
  BinReader rd(bytes.data(), bytes.size() - 4);
  char magic[8];
  for (int i = 0; i < 8; ++i) magic[i] = static_cast<char>(rd.u8());
  if (std::memcmp(magic, kEpisodeMagic, 8) != 0) throw IoError("not an episode file");

  std::size_t img_n = static_cast<std::size_t>(m.image_channels) * m.image_h * m.image_w;
  std::size_t bev_n = static_cast<std::size_t>(m.bev_channels) * m.bev_cells * m.bev_cells;
  std::size_t dens_n = static_cast<std::size_t>(m.density_cells) * m.density_cells * 7;
  std::size_t gaze_n = static_cast<std::size_t>(m.image_h) * m.image_w;

  Episode ep;
  ep.seed = rd.u64();
  std::uint32_t frames = rd.u32();
  ep.frames.reserve(frames);
  for (std::uint32_t i = 0; i < frames; ++i) {
    FrameRecord fr;
    fr.image = rd.f64s(img_n);
    fr.bev = rd.f64s(bev_n);
    std::uint32_t hist = rd.u32();
    if (hist != static_cast<std::uint32_t>(m.history_len))
      throw IoError("episode history length does not match the model config");
    for (std::uint32_t k = 0; k < hist; ++k) {
      double x = rd.f64(), y = rd.f64();
      fr.history.push_back({x, y});
    }
    fr.goal.x = rd.f64();
    fr.goal.y = rd.f64();
    fr.speed = rd.f64();
    fr.targets.waypoints = rd.f64s(6);
    fr.targets.density = rd.f64s(dens_n);
    fr.targets.light = rd.f64();
    fr.targets.stop = rd.f64();
    fr.targets.junction = rd.f64();
    fr.targets.has_gaze = rd.u8() != 0;
    if (fr.targets.has_gaze) fr.targets.gaze = rd.f64s(gaze_n);
    fr.targets.has_intention = rd.u8() != 0;
    if (fr.targets.has_intention) {
      fr.targets.eeg = rd.f64();
      fr.targets.brake = rd.f64();
    }
    ep.frames.push_back(std::move(fr));
  }
  if (!rd.done()) throw IoError("episode file has trailing bytes");
  return ep;
}

std::vector<std::uint64_t> dataset_episode_seeds(const RunConfig& cfg, const std::string& split) {
  if (split != "machine" && split != "human")
    throw ConfigError("split must be 'machine' or 'human'");
  int target = (split == "human") ? cfg.sim.human_frames : cfg.sim.machine_frames;
  int per_ep = cfg.sim.episode_frames - kHorizon;
  if (per_ep < 1) throw ConfigError("episode_frames too small to leave any labeled frames");
  int n_ep = std::max(1, (target + per_ep - 1) / per_ep);
  Rng base = Rng(cfg.seed).derive("dataset." + split);
  std::vector<std::uint64_t> seeds(n_ep);
  for (int i = 0; i < n_ep; ++i) seeds[i] = base.derive("ep" + std::to_string(i)).seed();
  return seeds;
}

std::vector<Episode> generate_split(const RunConfig& cfg, const std::string& split, int jobs) {
  std::vector<std::uint64_t> seeds = dataset_episode_seeds(cfg, split);
  bool human = split == "human";
  int n_ep = static_cast<int>(seeds.size());
  std::vector<Episode> eps(n_ep);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n_ep) return;
      eps[i] = generate_episode(cfg, seeds[i], human);
    }
  };
  int n_workers = std::max(1, std::min(jobs, n_ep));
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return eps;
}

DatasetInfo generate_dataset(const RunConfig& cfg, const std::string& split,
                             const std::string& out_dir, int jobs) {
  std::vector<Episode> eps = generate_split(cfg, split, jobs);
  int n_ep = static_cast<int>(eps.size());
  std::vector<std::vector<std::uint8_t>> blobs(n_ep);
  std::vector<int> frame_counts(n_ep, 0);
  for (int i = 0; i < n_ep; ++i) {
    frame_counts[i] = static_cast<int>(eps[i].frames.size());
    blobs[i] = encode_episode(eps[i], cfg.model);
  }

  std::filesystem::create_directories(out_dir);
  DatasetInfo info;
  info.dir = out_dir;
  info.split = split;
  info.seed = cfg.seed;
  info.config_hash = hex64(data_config_hash(cfg));
  info.episodes = n_ep;
  for (int i = 0; i < n_ep; ++i) {
    std::string name = episode_file_name(i);
    write_file(out_dir + "/" + name, blobs[i]);
    info.files.push_back(name);
    info.frames += frame_counts[i];
  }

  nlohmann::json j{{"format_version", kManifestVersion},
                   {"split", info.split},
                   {"seed", info.seed},
                   {"config_hash", info.config_hash},
                   {"episodes", info.episodes},
                   {"frames", info.frames},
                   {"files", info.files}};
  write_text_file(out_dir + "/manifest.json", j.dump(2) + "\n");
  return info;
}

DatasetInfo read_manifest(const std::string& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad manifest: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "format_version" && k != "split" && k != "seed" && k != "config_hash" &&
        k != "episodes" && k != "frames" && k != "files")
      throw IoError("unknown key '" + k + "' in manifest");
  }
  if (j.at("format_version").get<int>() != kManifestVersion)
    throw IoError("unsupported manifest format version");
  DatasetInfo info;
  info.dir = dir;
  info.split = j.at("split").get<std::string>();
  info.seed = j.at("seed").get<std::uint64_t>();
  info.config_hash = j.at("config_hash").get<std::string>();
  info.episodes = j.at("episodes").get<int>();
  info.frames = j.at("frames").get<int>();
  info.files = j.at("files").get<std::vector<std::string>>();
  if (static_cast<int>(info.files.size()) != info.episodes)
    throw IoError("manifest episode count does not match its file list");
  return info;
}

std::vector<Episode> load_episodes(const DatasetInfo& info, const ModelConfig& m) {
  std::vector<Episode> eps;
  eps.reserve(info.files.size());
  for (const auto& name : info.files)
    eps.push_back(decode_episode(read_file(info.dir + "/" + name), m));
  return eps;
}

}  // namespace hgd
