#pragma once

#include <string>
#include <vector>

#include "mvr/loss/losses.hpp"
#include "mvr/model/model.hpp"
#include "mvr/synth/generate.hpp"
#include "mvr/train/config.hpp"

namespace mvr {

struct TrainResult {
  LossBreakdown first;
  LossBreakdown last;
  std::string checkpoint_path;
  int steps_run = 0;
};

// Deterministic training loop: per step, draw a scene and a frame subset
// (frame 1 always kept as the reference), renormalize the ground truth for
// that subset, apply per-frame color jitter, run the forward pass and the
// multi-task loss, clip the global gradient norm, and take one AdamW step
// with warmup+cosine learning rate. Per-step randomness is derived
// statelessly from (seed, step), so a resumed run reproduces an
// uninterrupted one bit-for-bit.
TrainResult train_run(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                      const std::string& out_dir, const std::string& resume_ckpt = "");

// Convenience wrapper reading the dataset directory.
TrainResult train_dir(const TrainConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir, const std::string& resume_ckpt = "");

// One prepared training sample (shared with tests and the ablation runner).
struct StepSample {
  std::vector<float> images;  // jittered, n*3*H*W
  int n = 0, H = 0, W = 0;
  std::vector<CameraParams> cams;
  std::vector<DepthMap> depth;
  std::vector<PointMap> pmap;
  std::vector<MaskMap> mask;
  std::vector<double> track_pos;
  std::vector<uint8_t> track_vis;
  std::vector<std::array<double, 2>> queries;
};
StepSample prepare_step_sample(const TrainConfig& cfg, const std::vector<SceneSample>& scenes,
                               int step);

}  // namespace mvr
