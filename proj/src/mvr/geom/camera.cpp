#include "mvr/geom/camera.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mvr {

CameraParams CameraParams::from_vec9(const double* v) {
  // Trusted layout (checkpoints, datasets): no renormalization, so that a
  // round trip through the 9-vector is bit-exact.
  CameraParams g;
  g.q = {v[0], v[1], v[2], v[3]};
  g.t = {v[4], v[5], v[6]};
  g.fov = {v[7], v[8]};
  return g;
}

CameraParams make_camera(const std::array<double, 4>& q, const std::array<double, 3>& t,
                         const std::array<double, 2>& fov) {
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (n < 1e-12) throw std::invalid_argument("camera: degenerate zero quaternion");
  if (!(fov[0] > 0 && fov[0] < M_PI) || !(fov[1] > 0 && fov[1] < M_PI))
    throw std::invalid_argument("camera: fov must lie in (0, pi), got " + std::to_string(fov[0]) +
                                ", " + std::to_string(fov[1]));
  CameraParams g;
  for (int i = 0; i < 4; ++i) g.q[i] = q[i] / n;
  g.q = quat_hemisphere(g.q);
  g.t = t;
  g.fov = fov;
  return g;
}

std::array<double, 4> quat_hemisphere(const std::array<double, 4>& q) {
  if (q[3] < 0) return {-q[0], -q[1], -q[2], -q[3]};
  return q;
}

Eigen::Matrix3d quat_to_rotmat(const std::array<double, 4>& q) {
  double x = q[0], y = q[1], z = q[2], w = q[3];
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  if (n < 1e-12) throw std::invalid_argument("quat_to_rotmat: degenerate zero quaternion");
  x /= n;
  y /= n;
  z /= n;
  w /= n;
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),  //
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),   //
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return R;
}

std::array<double, 4> rotmat_to_quat(const Eigen::Matrix3d& R) {
  // Shepperd's method, branch on the largest diagonal combination.
  const double tr = R.trace();
  double x, y, z, w;
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    w = 0.25 * s;
    x = (R(2, 1) - R(1, 2)) / s;
    y = (R(0, 2) - R(2, 0)) / s;
    z = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
    w = (R(2, 1) - R(1, 2)) / s;
    x = 0.25 * s;
    y = (R(0, 1) + R(1, 0)) / s;
    z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
    w = (R(0, 2) - R(2, 0)) / s;
    x = (R(0, 1) + R(1, 0)) / s;
    y = 0.25 * s;
    z = (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
    w = (R(1, 0) - R(0, 1)) / s;
    x = (R(0, 2) + R(2, 0)) / s;
    y = (R(1, 2) + R(2, 1)) / s;
    z = 0.25 * s;
  }
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  return quat_hemisphere({x / n, y / n, z / n, w / n});
}

std::array<double, 4> quat_mul(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  // Hamilton product, scalar-last layout.
  const double ax = a[0], ay = a[1], az = a[2], aw = a[3];
  const double bx = b[0], by = b[1], bz = b[2], bw = b[3];
  return {aw * bx + ax * bw + ay * bz - az * by,  //
          aw * by - ax * bz + ay * bw + az * bx,  //
          aw * bz + ax * by - ay * bx + az * bw,  //
          aw * bw - ax * bx - ay * by - az * bz};
}

std::array<double, 4> quat_conj(const std::array<double, 4>& q) { return {-q[0], -q[1], -q[2], q[3]}; }

Eigen::Vector3d world_to_cam(const CameraParams& g, const Eigen::Vector3d& p) {
  return quat_to_rotmat(g.q) * p + g.translation();
}

Eigen::Vector3d cam_to_world(const CameraParams& g, const Eigen::Vector3d& p) {
  return quat_to_rotmat(g.q).transpose() * (p - g.translation());
}

double focal_px(double fov, int extent) { return (extent / 2.0) / std::tan(fov / 2.0); }

Projection project(const CameraParams& g, const Eigen::Vector3d& p, int W, int H) {
  const Eigen::Vector3d pc = world_to_cam(g, p);
  if (pc.z() <= 0)
    throw std::invalid_argument("project: point behind camera (z = " + std::to_string(pc.z()) + ")");
  const double fx = focal_px(g.fov[0], W);
  const double fy = focal_px(g.fov[1], H);
  Projection out;
  out.pix = {fx * pc.x() / pc.z() + W / 2.0, fy * pc.y() / pc.z() + H / 2.0};
  out.depth = pc.z();
  return out;
}

Eigen::Vector3d unproject_pixel(const CameraParams& g, double x, double y, double depth, int W,
                                int H) {
  const double fx = focal_px(g.fov[0], W);
  const double fy = focal_px(g.fov[1], H);
  const Eigen::Vector3d pc{(x - W / 2.0) / fx * depth, (y - H / 2.0) / fy * depth, depth};
  return cam_to_world(g, pc);
}

size_t MaskMap::valid_count() const {
  size_t n = 0;
  for (uint8_t b : m) n += b != 0;
  return n;
}

PointMap unproject_depth(const CameraParams& g, const DepthMap& D, const MaskMap& mask, int W,
                         int H) {
  PointMap P;
  P.H = H;
  P.W = W;
  P.p.assign(static_cast<size_t>(3) * H * W, 0.0);
  const double fx = focal_px(g.fov[0], W);
  const double fy = focal_px(g.fov[1], H);
  const Eigen::Matrix3d Rt = quat_to_rotmat(g.q).transpose();
  const Eigen::Vector3d t = g.translation();
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      if (!mask.at(i, j)) continue;
      const double d = D.at(i, j);
      if (d <= 0)
        throw std::invalid_argument("unproject_depth: non-positive depth " + std::to_string(d) +
                                    " at valid pixel (" + std::to_string(i) + "," + std::to_string(j) +
                                    ")");
      const Eigen::Vector3d pc{(j - W / 2.0) / fx * d, (i - H / 2.0) / fy * d, d};
      P.set(i, j, Rt * (pc - t));
    }
  }
  return P;
}

NormalizeInfo normalize_scene(std::vector<CameraParams>& cams, std::vector<PointMap>& pmaps,
                              std::vector<DepthMap>& depths, const std::vector<MaskMap>& masks) {
  if (cams.empty() || cams.size() != pmaps.size() || cams.size() != depths.size() ||
      cams.size() != masks.size())
    throw std::invalid_argument("normalize_scene: mismatched frame counts");

  // Re-express everything in the frame of camera 1: R_i' = R_i R_1^T,
  // t_i' = t_i - R_i' t_1, P' = R_1 P + t_1. Depths are invariant.
  const CameraParams g1 = cams[0];
  const Eigen::Matrix3d R1 = quat_to_rotmat(g1.q);
  const Eigen::Vector3d t1 = g1.translation();
  const std::array<double, 4> q1_inv = quat_conj(g1.q);
  for (auto& g : cams) {
    const Eigen::Matrix3d Ri_new = quat_to_rotmat(g.q) * R1.transpose();
    const Eigen::Vector3d ti_new = g.translation() - Ri_new * t1;
    g.q = quat_hemisphere(quat_mul(g.q, q1_inv));
    g.t = {ti_new.x(), ti_new.y(), ti_new.z()};
  }
  size_t valid = 0;
  double dist_sum = 0.0;
  for (size_t f = 0; f < pmaps.size(); ++f) {
    PointMap& P = pmaps[f];
    for (int i = 0; i < P.H; ++i)
      for (int j = 0; j < P.W; ++j) {
        if (!masks[f].at(i, j)) {
          P.set(i, j, Eigen::Vector3d::Zero());  // canonical fill for invalid pixels
          continue;
        }
        const Eigen::Vector3d p = R1 * P.at(i, j) + t1;
        P.set(i, j, p);
        dist_sum += p.norm();
        ++valid;
      }
  }
  if (valid == 0) throw std::invalid_argument("normalize_scene: no valid 3D points in scene");
  const double sigma = dist_sum / static_cast<double>(valid);
  if (sigma <= 0) throw std::invalid_argument("normalize_scene: degenerate zero scale");
  for (auto& g : cams)
    for (auto& x : g.t) x /= sigma;
  for (auto& P : pmaps)
    for (auto& x : P.p) x /= sigma;
  for (auto& D : depths)
    for (auto& x : D.d) x /= sigma;
  return {sigma};
}

}  // namespace mvr
