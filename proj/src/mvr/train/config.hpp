#pragma once

#include <cstdint>
#include <string>

#include "mvr/loss/losses.hpp"
#include "mvr/model/config.hpp"

namespace mvr {

// Full training-run configuration. Serialized as line-based `key = value`
// text; parsing rejects unknown keys. The canonical serialization feeds the
// config hash stored in checkpoints (resume refuses a mismatch).
struct TrainConfig {
  ModelConfig model;

  double lr = 1e-3;          // toy peak learning rate
  int warmup_steps = -1;     // -1: 5% of total_steps
  int total_steps = 3000;
  bool cosine = true;
  double clip_norm = 1.0;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int max_scenes = 0;  // 0 = use every scene in the dataset
  int frames_min = 2;
  int frames_max = 4;
  double jitter = 0.15;  // per-frame color jitter amplitude

  LossConfig loss;
  uint64_t seed = 1;
  int checkpoint_every = 1000;

  int effective_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : std::max(1, total_steps / 20);
  }

  void validate() const;
  std::string serialize() const;
  uint64_t hash() const;  // FNV-1a over the canonical serialization

  static TrainConfig parse(const std::string& text);
  static TrainConfig parse_file(const std::string& path);
};

uint64_t fnv1a64(const std::string& text);

}  // namespace mvr
