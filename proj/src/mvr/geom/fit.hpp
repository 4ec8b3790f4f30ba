#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mvr/geom/camera.hpp"

namespace mvr {

// Similarity transform y = s R x + u.
struct SimilarityTransform {
  double s = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d u = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return s * (R * x) + u; }
};

// Closed-form least-squares similarity aligning X onto Y (equal sizes >= 3),
// SVD of the cross-covariance with the reflection guard. Throws on a
// rank-deficient covariance.
SimilarityTransform umeyama_align(const std::vector<Eigen::Vector3d>& X,
                                  const std::vector<Eigen::Vector3d>& Y);

struct PnpResult {
  CameraParams cam;
  double reproj_rms = 0.0;
};

// Recovers the camera from a point map by a direct linear transform on the
// pixel <-> 3D correspondences (principal point fixed at the image center),
// followed by orthonormalization and fov extraction. Plain least squares, no
// robust estimation. Needs >= 6 valid pixels in a non-degenerate
// configuration.
PnpResult camera_from_pointmap(const PointMap& P, const MaskMap& mask, int W, int H);

// ASCII PLY export (x y z [r g b]); colors optional, values in [0,1].
void write_ply(const std::string& path, const std::vector<Eigen::Vector3d>& pts,
               const std::vector<Eigen::Vector3d>* colors = nullptr);

}  // namespace mvr
