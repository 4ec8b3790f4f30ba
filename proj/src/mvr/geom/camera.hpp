#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <vector>

namespace mvr {

// Camera parametrization g = [q, t, f]: scalar-last unit quaternion
// [x, y, z, w], world-to-camera translation, and per-axis field of view in
// radians. The principal point sits at the image center; focal lengths in
// pixels are derived from the fov and the current image size at projection
// time. Identity extrinsics are q = [0,0,0,1], t = 0.
struct CameraParams {
  std::array<double, 4> q{0, 0, 0, 1};
  std::array<double, 3> t{0, 0, 0};
  std::array<double, 2> fov{1.0, 1.0};

  Eigen::Vector3d translation() const { return {t[0], t[1], t[2]}; }

  // Flat 9-vector [qx qy qz qw tx ty tz fovx fovy] (the loss target layout).
  std::array<double, 9> as_vec9() const {
    return {q[0], q[1], q[2], q[3], t[0], t[1], t[2], fov[0], fov[1]};
  }
  static CameraParams from_vec9(const double* v);
};

// Normalizes and canonicalizes onto the w >= 0 hemisphere; throws on a
// near-zero quaternion or fov outside (0, pi).
CameraParams make_camera(const std::array<double, 4>& q, const std::array<double, 3>& t,
                         const std::array<double, 2>& fov);

Eigen::Matrix3d quat_to_rotmat(const std::array<double, 4>& q);
std::array<double, 4> rotmat_to_quat(const Eigen::Matrix3d& R);
std::array<double, 4> quat_mul(const std::array<double, 4>& a, const std::array<double, 4>& b);
std::array<double, 4> quat_conj(const std::array<double, 4>& q);
std::array<double, 4> quat_hemisphere(const std::array<double, 4>& q);

// gamma: world point -> camera-frame point, p' = R(q) p + t.
Eigen::Vector3d world_to_cam(const CameraParams& g, const Eigen::Vector3d& p);
// Inverse rigid transform: camera-frame point -> world point.
Eigen::Vector3d cam_to_world(const CameraParams& g, const Eigen::Vector3d& p);

struct Projection {
  Eigen::Vector2d pix;  // (x, y), pixel (i, j) maps to (x=j, y=i) exactly
  double depth;         // camera-frame z
};

double focal_px(double fov, int extent);

// pi / pi^D: pinhole projection; throws when the point is at or behind the
// camera plane (z <= 0).
Projection project(const CameraParams& g, const Eigen::Vector3d& p, int W, int H);

// Back-projects pixel (x, y) at the given camera-frame depth and returns the
// point in the world (frame-1) coordinate system.
Eigen::Vector3d unproject_pixel(const CameraParams& g, double x, double y, double depth, int W,
                                int H);

// ---- dense per-frame maps ----

struct DepthMap {
  int H = 0, W = 0;
  std::vector<double> d;  // H*W, row-major
  double at(int i, int j) const { return d[static_cast<size_t>(i) * W + j]; }
};

struct PointMap {
  int H = 0, W = 0;
  std::vector<double> p;  // 3*H*W planar: channel c at c*H*W + i*W + j
  Eigen::Vector3d at(int i, int j) const {
    const size_t hw = static_cast<size_t>(H) * W, o = static_cast<size_t>(i) * W + j;
    return {p[o], p[hw + o], p[2 * hw + o]};
  }
  void set(int i, int j, const Eigen::Vector3d& v) {
    const size_t hw = static_cast<size_t>(H) * W, o = static_cast<size_t>(i) * W + j;
    p[o] = v.x();
    p[hw + o] = v.y();
    p[2 * hw + o] = v.z();
  }
};

struct MaskMap {
  int H = 0, W = 0;
  std::vector<uint8_t> m;  // 1 = valid
  bool at(int i, int j) const { return m[static_cast<size_t>(i) * W + j] != 0; }
  size_t valid_count() const;
};

// Back-projects a full depth map through g and expresses the points in the
// frame-1 coordinate system (g is the world->camera transform with the world
// taken as frame 1). Throws on a non-positive depth at a valid pixel.
PointMap unproject_depth(const CameraParams& g, const DepthMap& D, const MaskMap& mask, int W,
                         int H);

// Canonicalizes ground truth: re-expresses every quantity in the frame of
// camera 1 and divides translations, points and depths by the mean distance
// of all valid 3D points to the origin. Applied to ground truth only.
struct NormalizeInfo {
  double sigma = 1.0;
};
NormalizeInfo normalize_scene(std::vector<CameraParams>& cams, std::vector<PointMap>& pmaps,
                              std::vector<DepthMap>& depths, const std::vector<MaskMap>& masks);

}  // namespace mvr
