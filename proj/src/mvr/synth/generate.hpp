#pragma once

#include <cstdint>
#include <vector>

#include "mvr/geom/camera.hpp"
#include "mvr/synth/surfaces.hpp"

namespace mvr {

// One multi-view training/eval scene with analytically exact ground truth.
// Geometry arrays are f64 (the consistency identities are asserted at 1e-9);
// images are f32. Cameras, depths and point maps are already canonicalized
// by normalize_scene: frame 1 has identity extrinsics and the mean point
// distance to the origin is 1.
struct SceneSample {
  uint64_t seed = 0;
  int N = 0, H = 0, W = 0;
  std::vector<float> images;  // N*3*H*W in [0,1]
  std::vector<CameraParams> cams;
  std::vector<DepthMap> depth;
  std::vector<PointMap> pmap;
  std::vector<MaskMap> mask;

  int M = 0;                        // query count
  std::vector<double> queries;      // M*2, (x, y) on frame 1
  std::vector<double> track_pos;    // M*N*2, (x, y), clamped to the image
  std::vector<double> track_depth;  // M*N, reprojected depth in the target frame
  std::vector<uint8_t> track_vis;   // M*N

  float image_at(int f, int c, int i, int j) const {
    return images[((static_cast<size_t>(f) * 3 + c) * H + i) * W + j];
  }
  double query_x(int m) const { return queries[2 * static_cast<size_t>(m)]; }
  double query_y(int m) const { return queries[2 * static_cast<size_t>(m) + 1]; }
};

// Raw (pre-normalization) scene: world-frame surfaces and cameras.
struct RawScene {
  uint64_t seed = 0;
  std::vector<Surface> surfaces;
  std::vector<CameraParams> cams;
  Eigen::Vector3d light = Eigen::Vector3d::UnitZ();
};

struct GenerateOptions {
  int queries = 16;
  double track_tol = 0.02;  // relative depth tolerance for track retention
  int max_camera_retries = 100;
  double min_valid_fraction = 0.5;
  double min_foreground_fraction = 0.02;
};

// Deterministic in seed. Samples 1-4 primitives plus a backdrop, places N
// cameras on a jittered orbit facing the scene, ray-casts exact depth/point
// maps, shades procedural textures, normalizes, and builds ground-truth
// tracks. Throws after max_camera_retries failed placements.
SceneSample generate_scene(uint64_t seed, int n_frames, int H, int W, GenerateOptions opt = {});

// Pieces exposed for tests and for the scale-invariance property: sampling,
// rendering + normalization, and track construction run separately.
RawScene sample_raw_scene(uint64_t seed, int n_frames, int H, int W, GenerateOptions opt = {});
// Ray-cast render with ground truth kept in raw world units (no normalization).
SceneSample render_raw(const RawScene& raw, int H, int W);
SceneSample render_and_normalize(const RawScene& raw, int H, int W);

// Samples M query pixels on frame 1's valid mask, unprojects them through
// the frame-1 depth, reprojects into every frame and retains correspondences
// whose reprojected depth matches the target depth map within a relative
// tolerance. Overwrites the track fields of `sample`.
void build_tracks(SceneSample& sample, int n_queries, uint64_t seed, double rel_tol = 0.02);

// Bilinear depth lookup used by track construction; false when any of the
// four touched pixels is invalid.
bool sample_depth_bilinear(const DepthMap& D, const MaskMap& mask, double x, double y, double* out);

}  // namespace mvr
