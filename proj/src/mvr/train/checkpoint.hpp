#pragma once

#include <optional>
#include <string>

#include "mvr/model/params.hpp"
#include "mvr/train/optim.hpp"

namespace mvr {

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary checkpoint ("MVCK"): version, config hash, canonical config text,
// step, named f32 parameter tensors in creation order, then (optionally) the
// AdamW moments. Reload reproduces parameters bit-identically; resume
// refuses a config-hash mismatch.
void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const AdamW<float>* opt, const std::string& config_text, uint32_t step);

struct CheckpointInfo {
  uint32_t step = 0;
  uint64_t config_hash = 0;
  std::string config_text;
  bool has_optimizer = false;
};

// Reads only the header (config text etc.), without needing a model.
CheckpointInfo peek_checkpoint(const std::string& path);

// Loads parameters (and moments when available and opt != nullptr) into an
// already-built model; shapes and names must match exactly.
CheckpointInfo load_checkpoint(const std::string& path, ParamStore<float>& params,
                               AdamW<float>* opt);

}  // namespace mvr
