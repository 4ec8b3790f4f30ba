#pragma once

#include <stdexcept>
#include <string>

namespace mvr {

enum class AttentionVariant {
  kAlternating,      // frame-wise + global self-attention pairs
  kGlobalOnly,       // every layer attends globally (2L global layers)
  kCrossAlternating  // frame-wise self-attention + cross-attention to other frames
};

inline std::string attention_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kAlternating: return "alternating";
    case AttentionVariant::kGlobalOnly: return "global";
    case AttentionVariant::kCrossAlternating: return "cross";
  }
  return "?";
}

inline AttentionVariant attention_from_name(const std::string& s) {
  if (s == "alternating") return AttentionVariant::kAlternating;
  if (s == "global") return AttentionVariant::kGlobalOnly;
  if (s == "cross") return AttentionVariant::kCrossAlternating;
  throw std::invalid_argument("unknown attention variant '" + s + "'");
}

// Toy-scale defaults: CPU-trainable in minutes while exercising every
// mechanism of the full architecture.
struct ModelConfig {
  int depth = 4;    // L: number of (frame-wise, global) layer pairs
  int dim = 64;     // token width
  int heads = 4;
  int patch = 14;   // patch edge in pixels
  int track_dim = 16;   // C: tracking feature channels
  int dense_dim = 32;   // C'': dense head working width
  double layerscale_init = 0.01;
  int mlp_ratio = 4;
  int camera_layers = 4;
  int track_layers = 2;
  int track_attn_dim = 64;
  double sigma_floor = 1e-3;
  double softargmax_temp = 1.0;
  AttentionVariant attention = AttentionVariant::kAlternating;

  int head_dim() const { return dim / heads; }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("model: depth must be >= 1");
    if (dim % heads != 0) throw std::invalid_argument("model: dim must be divisible by heads");
    if (dim % 4 != 0) throw std::invalid_argument("model: dim must be divisible by 4 (2-D posemb)");
    if (patch < 1 || patch % 2 != 0)
      throw std::invalid_argument("model: patch must be a positive even number");
    if (track_dim < 1 || dense_dim < 1) throw std::invalid_argument("model: head widths must be >= 1");
    if (sigma_floor <= 0 || sigma_floor >= 1)
      throw std::invalid_argument("model: sigma_floor must lie in (0, 1)");
    if (softargmax_temp <= 0) throw std::invalid_argument("model: softargmax_temp must be positive");
  }
};

}  // namespace mvr
