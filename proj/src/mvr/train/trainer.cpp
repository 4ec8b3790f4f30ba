#include "mvr/train/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mvr/synth/dataset.hpp"
#include "mvr/train/checkpoint.hpp"
#include "mvr/train/optim.hpp"

namespace fs = std::filesystem;

namespace mvr {

StepSample prepare_step_sample(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                               int step) {
  Rng rng(hash_mix(cfg.seed, 0xbead0000ULL + static_cast<uint64_t>(step)));
  const SceneSample& scene = scenes[rng.below(scenes.size())];

  // frame subset: the reference frame stays first, the rest are drawn
  // without replacement in random order
  const int want = cfg.frames_min + static_cast<int>(rng.below(cfg.frames_max - cfg.frames_min + 1));
  const int n = std::min(want, scene.N);
  std::vector<int> rest;
  for (int f = 1; f < scene.N; ++f) rest.push_back(f);
  for (size_t i = 0; i + 1 < rest.size(); ++i)
    std::swap(rest[i], rest[i + rng.below(rest.size() - i)]);
  std::vector<int> frames{0};
  for (int i = 0; i < n - 1; ++i) frames.push_back(rest[i]);

  StepSample out;
  out.n = n;
  out.H = scene.H;
  out.W = scene.W;
  const size_t fstride = static_cast<size_t>(3) * scene.H * scene.W;
  const size_t hw = static_cast<size_t>(scene.H) * scene.W;
  out.images.resize(n * fstride);
  for (int i = 0; i < n; ++i) {
    const float* src = scene.images.data() + frames[i] * fstride;
    float* dst = out.images.data() + i * fstride;
    for (int c = 0; c < 3; ++c) {
      // independent per-frame color jitter
      const float gain = static_cast<float>(1.0 + rng.uniform(-cfg.jitter, cfg.jitter));
      const float offs = static_cast<float>(rng.uniform(-cfg.jitter, cfg.jitter) * 0.5);
      for (size_t p = 0; p < hw; ++p)
        dst[c * hw + p] = std::clamp(src[c * hw + p] * gain + offs, 0.0f, 1.0f);
    }
    out.cams.push_back(scene.cams[frames[i]]);
    out.depth.push_back(scene.depth[frames[i]]);
    out.pmap.push_back(scene.pmap[frames[i]]);
    out.mask.push_back(scene.mask[frames[i]]);
  }
  // the stored scene is normalized for all frames; the subset gets its own
  // canonicalization (same first frame, slightly different scale)
  normalize_scene(out.cams, out.pmap, out.depth, out.mask);

  out.track_pos.resize(static_cast<size_t>(scene.M) * n * 2);
  out.track_vis.resize(static_cast<size_t>(scene.M) * n);
  for (int q = 0; q < scene.M; ++q) {
    out.queries.push_back({scene.query_x(q), scene.query_y(q)});
    for (int i = 0; i < n; ++i) {
      const size_t src = static_cast<size_t>(q) * scene.N + frames[i];
      const size_t dst = static_cast<size_t>(q) * n + i;
      out.track_pos[2 * dst] = scene.track_pos[2 * src];
      out.track_pos[2 * dst + 1] = scene.track_pos[2 * src + 1];
      out.track_vis[dst] = scene.track_vis[src];
    }
  }
  return out;
}

TrainResult train_run(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                      const std::string& out_dir, const std::string& resume_ckpt) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("train: dataset is empty");
  fs::create_directories(out_dir);

  Model<float> model(cfg.model);
  AdamW<float> opt;
  int start_step = 0;
  if (resume_ckpt.empty()) {
    model.init(cfg.seed);
    opt.init(model.params());
  } else {
    const auto info = load_checkpoint(resume_ckpt, model.params(), &opt);
    if (info.config_hash != cfg.hash())
      throw std::runtime_error("train: resume checkpoint config hash " +
                               std::to_string(info.config_hash) + " does not match this config (" +
                               std::to_string(cfg.hash()) + ")");
    if (!info.has_optimizer) opt.init(model.params());
    start_step = static_cast<int>(info.step);
  }
  model.params().set_requires_grad(true);

  const fs::path log_path = fs::path(out_dir) / "loss_log.csv";
  std::ofstream log(log_path, start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("train: cannot open " + log_path.string());
  if (start_step == 0) log << "step,camera,depth,pmap,track,visibility,total\n";

  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.mvck").string();

  for (int step = start_step; step < cfg.total_steps; ++step) {
    const StepSample s = prepare_step_sample(cfg, scenes, step);
    SceneTargets gt;
    gt.cams = &s.cams;
    gt.depth = &s.depth;
    gt.pmap = &s.pmap;
    gt.mask = &s.mask;
    gt.track_pos = &s.track_pos;
    gt.track_vis = &s.track_vis;

    Tape<float> tape;
    const auto fo = model.forward(tape, s.images.data(), s.n, s.H, s.W, s.queries);
    const LossIds ids = total_loss(tape, fo, gt, cfg.loss);
    const LossBreakdown b = read_breakdown(tape, ids, cfg.loss);
    if (!std::isfinite(b.total))
      throw std::runtime_error(
          "train: non-finite loss at step " + std::to_string(step) + " (camera " +
          std::to_string(b.camera) + ", depth " + std::to_string(b.depth) + ", pmap " +
          std::to_string(b.pmap) + ", track " + std::to_string(b.track) + ", visibility " +
          std::to_string(b.visibility) + ")");

    model.params().zero_grads();
    tape.backward(ids.total);
    clip_global_norm(model.params(), cfg.clip_norm);
    opt.step(model.params(), cfg, lr_at(cfg, step));

    log << step << "," << b.camera << "," << b.depth << "," << b.pmap << "," << b.track << ","
        << b.visibility << "," << b.total << "\n";
    if (step == 0 || (result.steps_run == 0 && step == start_step)) result.first = b;
    result.last = b;
    ++result.steps_run;

    if ((step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.total_steps)
      save_checkpoint((fs::path(out_dir) / ("ckpt_step" + std::to_string(step + 1) + ".mvck")).string(),
                      model.params(), &opt, cfg.serialize(), static_cast<uint32_t>(step + 1));
  }
  save_checkpoint(result.checkpoint_path, model.params(), &opt, cfg.serialize(),
                  static_cast<uint32_t>(cfg.total_steps));
  return result;
}

TrainResult train_dir(const TrainConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir, const std::string& resume_ckpt) {
  std::vector<SceneSample> scenes = read_dataset(data_dir);
  if (cfg.max_scenes > 0 && static_cast<int>(scenes.size()) > cfg.max_scenes)
    scenes.resize(cfg.max_scenes);
  return train_run(cfg, scenes, out_dir, resume_ckpt);
}

}  // namespace mvr
