#pragma once

#include <cstdint>
#include <vector>

#include "mvr/core/tape.hpp"
#include "mvr/geom/camera.hpp"
#include "mvr/model/model.hpp"

namespace mvr {

struct LossConfig {
  double lambda = 0.05;     // tracking down-weight
  double alpha = 0.2;       // uncertainty regularizer weight
  double huber_delta = 1.0; // camera-loss transition point
  bool l2_residuals = false;  // L1 (default) or per-pixel L2 over channels
  // term toggles for the multi-task ablation; a dropped term reports 0
  bool use_camera = true;
  bool use_depth = true;
  bool use_track = true;
};

// Tape ids of every component; total = camera + depth + pmap + lambda*(track + visibility).
struct LossIds {
  int camera = -1, depth = -1, pmap = -1, track = -1, visibility = -1, total = -1;
};

struct LossBreakdown {
  double camera = 0, depth = 0, pmap = 0, track = 0, visibility = 0, total = 0;
  double lambda = 0, alpha = 0, huber_delta = 0;
};

// Huber on the 9-vector residuals, summed over frames. Frame 1 contributes
// only its fov residual (extrinsics are hard-set to the identity). Ground
// truth must already be normalized and hemisphere-aligned.
template <class T>
int camera_loss(Tape<T>& tape, int pred9, const std::vector<CameraParams>& gt, double huber_delta) {
  const auto& pv = tape.val(pred9);
  if (pv.shape.size() != 2 || pv.shape[1] != 9 ||
      pv.shape[0] != static_cast<int>(gt.size()))
    throw std::invalid_argument("camera_loss: prediction " + shape_str(pv.shape) + " vs " +
                                std::to_string(gt.size()) + " ground-truth frames");
  const int N = static_cast<int>(gt.size());
  Tensor<T> gtt = Tensor<T>::zeros({N, 9});
  Tensor<T> mask = Tensor<T>::full({N, 9}, T(1));
  for (int f = 0; f < N; ++f) {
    const auto v = gt[f].as_vec9();
    for (int i = 0; i < 9; ++i) gtt.data[static_cast<size_t>(f) * 9 + i] = static_cast<T>(v[i]);
  }
  for (int i = 0; i < 7; ++i) mask.data[i] = T(0);  // frame-1 extrinsics carry no residual
  const int diff = tape.mul(tape.sub(pred9, tape.input(std::move(gtt))), tape.input(std::move(mask)));
  return tape.huber_sum(diff, static_cast<T>(huber_delta));
}

// Confidence-weighted map loss, used for both depth (1 channel) and point
// maps (3 channels): per valid pixel
//   sigma * |X^ - X|  +  sigma * |grad X^ - grad X|  -  alpha * log sigma,
// summed and divided by the valid-pixel count. Gradients are forward
// differences; a difference touching an invalid or out-of-range pixel is
// masked out. The residual norm over channels is L1 by default, L2 with
// cfg.l2_residuals.
template <class T>
int aleatoric_map_loss(Tape<T>& tape, int pred, const std::vector<double>& gt_flat, int sigma,
                       const MaskMap& mask, int H, int W, double alpha, bool l2) {
  const auto& pv = tape.val(pred);
  const int C = pv.shape[0];
  if (pv.shape[1] != H * W || gt_flat.size() != pv.numel())
    throw std::invalid_argument("aleatoric_map_loss: prediction " + shape_str(pv.shape) +
                                " does not match ground truth / image size");
  const size_t hw = static_cast<size_t>(H) * W;
  const size_t valid = mask.valid_count();
  if (valid == 0) throw std::invalid_argument("aleatoric_map_loss: no valid pixels");

  Tensor<T> gtt({C, H * W}, std::vector<T>(gt_flat.size()));
  for (size_t i = 0; i < gt_flat.size(); ++i) gtt.data[i] = static_cast<T>(gt_flat[i]);
  Tensor<T> m({H * W}, std::vector<T>(hw));
  for (size_t i = 0; i < hw; ++i) m.data[i] = mask.m[i] ? T(1) : T(0);
  // per-direction gradient validity
  Tensor<T> gm = Tensor<T>::zeros({2 * C, H * W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const size_t p = static_cast<size_t>(i) * W + j;
      const bool gx = j + 1 < W && mask.m[p] && mask.m[p + 1];
      const bool gy = i + 1 < H && mask.m[p] && mask.m[p + W];
      for (int ch = 0; ch < C; ++ch) {
        gm.data[ch * hw + p] = gx ? T(1) : T(0);
        gm.data[(static_cast<size_t>(C) + ch) * hw + p] = gy ? T(1) : T(0);
      }
    }

  const int mask_id = tape.input(std::move(m));
  const int diff = tape.sub(pred, tape.input(std::move(gtt)));
  const int grad_diff = tape.mul(tape.spatial_gradient(diff, H, W), tape.input(std::move(gm)));

  auto channel_norm = [&](int x, int channels) {
    if (!l2) {
      if (channels == 1) return tape.abs(x);
      // L1 over channels: ones [1 x C] * |x|
      return tape.matmul(tape.input(Tensor<T>::full({1, channels}, T(1))), tape.abs(x));
    }
    const int sq = tape.mul(x, x);
    const int ss = channels == 1 ? sq : tape.matmul(tape.input(Tensor<T>::full({1, channels}, T(1))), sq);
    return tape.sqrt_guard(ss);
  };

  // sigma has shape [1 x H*W]; mul_rowvec broadcasts it over rows.
  const int res = tape.mul_rowvec(tape.mul_rowvec(channel_norm(diff, C), sigma), mask_id);
  const int gx_part = channel_norm(tape.slice_rows(grad_diff, 0, C), C);
  const int gy_part = channel_norm(tape.slice_rows(grad_diff, C, C), C);
  const int grad_res = tape.mul_rowvec(tape.add(gx_part, gy_part), sigma);
  const int logterm = tape.mul_rowvec(tape.log(sigma), mask_id);

  const int acc = tape.add(tape.add(tape.sum(res), tape.sum(grad_res)),
                           tape.scale(tape.sum(logterm), static_cast<T>(-alpha)));
  return tape.scale(acc, T(1) / static_cast<T>(valid));
}

// Coordinate term: mean Euclidean error over ground-truth-visible pairs
// (0 when no pair is visible). Visibility term: mean binary cross-entropy
// over all pairs.
template <class T>
struct TrackLossIds {
  int coord = -1;
  int visibility = -1;
};

template <class T>
TrackLossIds<T> track_loss(Tape<T>& tape, int pred_pos, int vis_logit,
                           const std::vector<double>& gt_pos, const std::vector<uint8_t>& gt_vis) {
  const auto& pv = tape.val(pred_pos);
  const int pairs = pv.shape[0];
  if (pv.shape[1] != 2 || gt_pos.size() != static_cast<size_t>(pairs) * 2 ||
      gt_vis.size() != static_cast<size_t>(pairs))
    throw std::invalid_argument("track_loss: shape mismatch (pred " + shape_str(pv.shape) + ", gt " +
                                std::to_string(gt_pos.size() / 2) + " pairs)");
  Tensor<T> gtt({pairs, 2}, std::vector<T>(gt_pos.size()));
  for (size_t i = 0; i < gt_pos.size(); ++i) gtt.data[i] = static_cast<T>(gt_pos[i]);
  Tensor<T> vm = Tensor<T>::zeros({pairs, 1});
  size_t visible = 0;
  for (int i = 0; i < pairs; ++i) {
    vm.data[i] = gt_vis[i] ? T(1) : T(0);
    visible += gt_vis[i] ? 1 : 0;
  }
  Tensor<T> labels = vm;

  TrackLossIds<T> out;
  const int diff = tape.sub(pred_pos, tape.input(std::move(gtt)));
  const int ss = tape.matmul(tape.mul(diff, diff), tape.input(Tensor<T>::full({2, 1}, T(1))));
  const int norms = tape.sqrt_guard(ss);
  const int masked = tape.mul(norms, tape.input(std::move(vm)));
  out.coord = tape.scale(tape.sum(masked), visible ? T(1) / static_cast<T>(visible) : T(0));
  out.visibility = tape.bce_logits_mean(vis_logit, tape.input(std::move(labels)));
  return out;
}

// Normalized ground truth for one training sample.
struct SceneTargets {
  const std::vector<CameraParams>* cams = nullptr;
  const std::vector<DepthMap>* depth = nullptr;
  const std::vector<PointMap>* pmap = nullptr;
  const std::vector<MaskMap>* mask = nullptr;
  const std::vector<double>* track_pos = nullptr;   // M*N*2, query-major
  const std::vector<uint8_t>* track_vis = nullptr;  // M*N
};

// Multi-task objective. Depth and point-map terms are per-valid-pixel means
// averaged over frames; the camera term is the plain Huber sum over frames;
// tracking terms are per-pair means folded under the lambda weight.
template <class T>
LossIds total_loss(Tape<T>& tape, const typename Model<T>::ForwardOut& fo,
                   const SceneTargets& gt, const LossConfig& cfg) {
  const int N = static_cast<int>(gt.cams->size());
  const int H = fo.H, W = fo.W;

  LossIds ids;
  ids.camera = cfg.use_camera ? camera_loss(tape, fo.camera, *gt.cams, cfg.huber_delta)
                              : tape.scalar_input(T(0));

  int pmap_acc = -1, depth_acc = -1;
  for (int f = 0; f < N; ++f) {
    if (cfg.use_depth) {
      const int dl = aleatoric_map_loss(tape, fo.dense.depth[f], (*gt.depth)[f].d,
                                        fo.dense.sigma_d[f], (*gt.mask)[f], H, W, cfg.alpha,
                                        cfg.l2_residuals);
      depth_acc = depth_acc < 0 ? dl : tape.add(depth_acc, dl);
    }
    const int pl = aleatoric_map_loss(tape, fo.dense.pmap[f], (*gt.pmap)[f].p, fo.dense.sigma_p[f],
                                      (*gt.mask)[f], H, W, cfg.alpha, cfg.l2_residuals);
    pmap_acc = pmap_acc < 0 ? pl : tape.add(pmap_acc, pl);
  }
  ids.depth = cfg.use_depth ? tape.scale(depth_acc, T(1) / static_cast<T>(N)) : tape.scalar_input(T(0));
  ids.pmap = tape.scale(pmap_acc, T(1) / static_cast<T>(N));

  if (cfg.use_track && fo.track.pos >= 0 && gt.track_pos && !gt.track_pos->empty()) {
    const auto tl = track_loss(tape, fo.track.pos, fo.track.vis, *gt.track_pos, *gt.track_vis);
    ids.track = tl.coord;
    ids.visibility = tl.visibility;
  } else {
    ids.track = tape.scalar_input(T(0));
    ids.visibility = tape.scalar_input(T(0));
  }

  ids.total = tape.add(tape.add(ids.camera, tape.add(ids.depth, ids.pmap)),
                       tape.scale(tape.add(ids.track, ids.visibility), static_cast<T>(cfg.lambda)));
  return ids;
}

template <class T>
LossBreakdown read_breakdown(const Tape<T>& tape, const LossIds& ids, const LossConfig& cfg) {
  LossBreakdown b;
  b.camera = tape.val(ids.camera).data[0];
  b.depth = tape.val(ids.depth).data[0];
  b.pmap = tape.val(ids.pmap).data[0];
  b.track = tape.val(ids.track).data[0];
  b.visibility = tape.val(ids.visibility).data[0];
  b.total = tape.val(ids.total).data[0];
  b.lambda = cfg.lambda;
  b.alpha = cfg.alpha;
  b.huber_delta = cfg.huber_delta;
  return b;
}

}  // namespace mvr
