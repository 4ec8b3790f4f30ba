#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

namespace mvr {

// Parametric scene primitives with procedural albedo. Texture coordinates
// are intrinsic to the surface (sphere angles, rectangle-local fractions), so
// uniformly scaling a scene leaves its appearance unchanged.
struct Surface {
  enum class Kind { kSphere, kRect };
  Kind kind = Kind::kSphere;

  // sphere
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;

  // rectangle: center, orthonormal in-plane axes, half extents; normal = ux x uy
  Eigen::Vector3d ux = Eigen::Vector3d::UnitX();
  Eigen::Vector3d uy = Eigen::Vector3d::UnitY();
  double hx = 1.0, hy = 1.0;

  uint64_t tex_seed = 0;
  double tex_freq = 4.0;

  void scale_by(double s) {
    center *= s;
    radius *= s;
    hx *= s;
    hy *= s;
  }
};

struct RayHit {
  double t = 0.0;            // ray parameter == camera-frame depth for z=1 rays
  Eigen::Vector3d point;     // world-space hit
  Eigen::Vector3d normal;    // unit, oriented toward the ray origin
  double u = 0.0, v = 0.0;   // intrinsic texture coordinates
  int surface = -1;
};

// Nearest intersection of the ray o + t*d (t > tmin) with the surface;
// std::nullopt on a miss. d need not be unit length.
std::optional<RayHit> intersect(const Surface& s, const Eigen::Vector3d& o,
                                const Eigen::Vector3d& d, double tmin = 1e-6);

std::optional<RayHit> intersect_scene(const std::vector<Surface>& surfaces,
                                      const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                      double tmin = 1e-6);

// Multi-octave value noise in [0, 1]; C1-continuous across lattice cells.
double fbm_noise(double u, double v, uint64_t seed, int octaves = 3);

// Procedural RGB albedo at intrinsic coordinates (u, v).
Eigen::Vector3d surface_albedo(const Surface& s, double u, double v);

}  // namespace mvr
