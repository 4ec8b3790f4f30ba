#include "mvr/synth/surfaces.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "mvr/core/rng.hpp"

namespace mvr {

namespace {

double lattice_value(int64_t ix, int64_t iy, uint64_t seed) {
  const uint64_t h = hash_mix(hash_mix(seed, static_cast<uint64_t>(ix) * 0x8da6b343ULL),
                              static_cast<uint64_t>(iy) * 0xd8163841ULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double u, double v, uint64_t seed) {
  const double fu = std::floor(u), fv = std::floor(v);
  const int64_t iu = static_cast<int64_t>(fu), iv = static_cast<int64_t>(fv);
  const double tu = smoothstep(u - fu), tv = smoothstep(v - fv);
  const double a = lattice_value(iu, iv, seed), b = lattice_value(iu + 1, iv, seed);
  const double c = lattice_value(iu, iv + 1, seed), d = lattice_value(iu + 1, iv + 1, seed);
  return (a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv;
}

}  // namespace

double fbm_noise(double u, double v, uint64_t seed, int octaves) {
  double acc = 0.0, amp = 1.0, norm = 0.0, f = 1.0;
  for (int o = 0; o < octaves; ++o) {
    acc += amp * value_noise(u * f, v * f, hash_mix(seed, 0xabcdef00ULL + o));
    norm += amp;
    amp *= 0.5;
    f *= 2.0;
  }
  return acc / norm;
}

Eigen::Vector3d surface_albedo(const Surface& s, double u, double v) {
  Eigen::Vector3d rgb;
  for (int c = 0; c < 3; ++c)
    rgb[c] = 0.15 + 0.85 * fbm_noise(u * s.tex_freq, v * s.tex_freq, hash_mix(s.tex_seed, c));
  return rgb;
}

std::optional<RayHit> intersect(const Surface& s, const Eigen::Vector3d& o,
                                const Eigen::Vector3d& d, double tmin) {
  if (s.kind == Surface::Kind::kSphere) {
    const Eigen::Vector3d oc = o - s.center;
    const double a = d.squaredNorm();
    const double b = 2.0 * d.dot(oc);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / (2 * a);
    if (t <= tmin) t = (-b + sq) / (2 * a);  // origin inside the sphere
    if (t <= tmin) return std::nullopt;
    RayHit h;
    h.t = t;
    h.point = o + t * d;
    h.normal = (h.point - s.center) / s.radius;
    // intrinsic spherical coordinates, invariant to scene scale
    h.u = std::atan2(h.normal.y(), h.normal.x()) / (2 * M_PI) + 0.5;
    h.v = std::acos(std::clamp(h.normal.z(), -1.0, 1.0)) / M_PI;
    if (h.normal.dot(d) > 0) h.normal = -h.normal;  // face the viewer
    return h;
  }
  const Eigen::Vector3d n = s.ux.cross(s.uy);
  const double denom = d.dot(n);
  if (std::abs(denom) < 1e-14) return std::nullopt;
  const double t = (s.center - o).dot(n) / denom;
  if (t <= tmin) return std::nullopt;
  const Eigen::Vector3d q = o + t * d - s.center;
  const double su = q.dot(s.ux), sv = q.dot(s.uy);
  if (std::abs(su) > s.hx || std::abs(sv) > s.hy) return std::nullopt;
  RayHit h;
  h.t = t;
  h.point = o + t * d;
  h.normal = denom < 0 ? n : Eigen::Vector3d(-n);
  h.u = su / s.hx * 0.5 + 0.5;
  h.v = sv / s.hy * 0.5 + 0.5;
  return h;
}

std::optional<RayHit> intersect_scene(const std::vector<Surface>& surfaces,
                                      const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                      double tmin) {
  std::optional<RayHit> best;
  for (size_t i = 0; i < surfaces.size(); ++i) {
    auto h = intersect(surfaces[i], o, d, tmin);
    if (h && (!best || h->t < best->t)) {
      h->surface = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

}  // namespace mvr
