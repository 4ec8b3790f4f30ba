#include "mvr/synth/generate.hpp"

#include <cmath>
#include <stdexcept>

#include "mvr/core/kernels.hpp"
#include "mvr/core/rng.hpp"

namespace mvr {

namespace {

Eigen::Vector3d random_unit(Rng& rng) {
  while (true) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

// world->camera rotation with row 3 = forward (camera looks along +z).
Eigen::Matrix3d look_at(const Eigen::Vector3d& pos, const Eigen::Vector3d& target, Rng& rng) {
  const Eigen::Vector3d f = (target - pos).normalized();
  Eigen::Vector3d up(0, 1, 0);
  if (std::abs(f.dot(up)) > 0.95) up = Eigen::Vector3d(1, 0, 0);
  // tiny roll jitter keeps the up-axis from being globally constant
  const double roll = rng.uniform(-0.15, 0.15);
  const Eigen::Vector3d right0 = up.cross(f).normalized();
  const Eigen::Vector3d down0 = f.cross(right0);
  const Eigen::Vector3d right = std::cos(roll) * right0 + std::sin(roll) * down0;
  const Eigen::Vector3d down = f.cross(right);
  Eigen::Matrix3d R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = f.transpose();
  return R;
}

CameraParams camera_at(const Eigen::Vector3d& pos, const Eigen::Vector3d& target,
                       const std::array<double, 2>& fov, Rng& rng) {
  const Eigen::Matrix3d R = look_at(pos, target, rng);
  const Eigen::Vector3d t = -R * pos;
  return make_camera(rotmat_to_quat(R), {t.x(), t.y(), t.z()}, fov);
}

struct FrameRender {
  DepthMap depth;
  PointMap pmap_world;
  MaskMap mask;
  std::vector<float> image;    // 3*H*W
  size_t valid = 0;
  size_t foreground = 0;  // pixels not on surface 0 (the backdrop)
};

FrameRender render_frame(const RawScene& raw, const CameraParams& cam, int H, int W) {
  FrameRender fr;
  fr.depth = DepthMap{H, W, std::vector<double>(static_cast<size_t>(H) * W, 0.0)};
  fr.pmap_world = PointMap{H, W, std::vector<double>(static_cast<size_t>(3) * H * W, 0.0)};
  fr.mask = MaskMap{H, W, std::vector<uint8_t>(static_cast<size_t>(H) * W, 0)};
  fr.image.assign(static_cast<size_t>(3) * H * W, 0.0f);

  const double fx = focal_px(cam.fov[0], W);
  const double fy = focal_px(cam.fov[1], H);
  const Eigen::Matrix3d Rt = quat_to_rotmat(cam.q).transpose();
  const Eigen::Vector3d origin = -(Rt * cam.translation());
  const size_t hw = static_cast<size_t>(H) * W;

  size_t valid = 0, fg = 0;
#pragma omp parallel for schedule(static) reduction(+ : valid, fg) if (kern::parallel_enabled())
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      // camera-frame direction with z = 1 makes the ray parameter equal the depth
      const Eigen::Vector3d dir_cam((j - W / 2.0) / fx, (i - H / 2.0) / fy, 1.0);
      const Eigen::Vector3d d = Rt * dir_cam;
      const auto hit = intersect_scene(raw.surfaces, origin, d);
      if (!hit) continue;
      const size_t p = static_cast<size_t>(i) * W + j;
      fr.depth.d[p] = hit->t;
      fr.mask.m[p] = 1;
      fr.pmap_world.set(i, j, hit->point);
      const Eigen::Vector3d albedo = surface_albedo(raw.surfaces[hit->surface], hit->u, hit->v);
      const double shade = 0.3 + 0.7 * std::abs(hit->normal.dot(raw.light));
      for (int c = 0; c < 3; ++c)
        fr.image[c * hw + p] = static_cast<float>(std::clamp(albedo[c] * shade, 0.0, 1.0));
      ++valid;
      if (hit->surface != 0) ++fg;
    }
  }
  fr.valid = valid;
  fr.foreground = fg;
  return fr;
}

}  // namespace

RawScene sample_raw_scene(uint64_t seed, int n_frames, int H, int W, GenerateOptions opt) {
  if (n_frames < 1) throw std::invalid_argument("generate_scene: need at least one frame");
  Rng rng(hash_mix(seed, 0x5ce9e));

  RawScene raw;
  raw.seed = seed;
  raw.light = random_unit(rng);

  const bool room = rng.uniform() < 0.6;
  Eigen::Vector3d sector = Eigen::Vector3d::UnitZ();  // camera cone axis for open scenes
  {
    Surface bg;
    if (room) {
      bg.kind = Surface::Kind::kSphere;
      bg.center = 0.4 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
      bg.radius = rng.uniform(6.0, 9.0);
    } else {
      sector = random_unit(rng);
      bg.kind = Surface::Kind::kRect;
      bg.center = -1.4 * sector;
      Eigen::Vector3d n = (sector + 0.25 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()))
                              .normalized();
      Eigen::Vector3d any = std::abs(n.x()) < 0.8 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
      bg.ux = n.cross(any).normalized();
      bg.uy = n.cross(bg.ux);
      bg.hx = rng.uniform(4.0, 6.5);
      bg.hy = rng.uniform(4.0, 6.5);
    }
    bg.tex_seed = rng.next_u64();
    bg.tex_freq = rng.uniform(3.0, 7.0);
    raw.surfaces.push_back(bg);
  }

  const int n_spheres = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < n_spheres; ++k) {
    Surface s;
    s.kind = Surface::Kind::kSphere;
    s.center = Eigen::Vector3d(rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1));
    s.radius = rng.uniform(0.3, 0.8);
    s.tex_seed = rng.next_u64();
    s.tex_freq = rng.uniform(2.0, 6.0);
    raw.surfaces.push_back(s);
  }
  if (rng.uniform() < 0.4) {
    Surface r;
    r.kind = Surface::Kind::kRect;
    r.center = Eigen::Vector3d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const Eigen::Vector3d n = random_unit(rng);
    Eigen::Vector3d any = std::abs(n.x()) < 0.8 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    r.ux = n.cross(any).normalized();
    r.uy = n.cross(r.ux);
    r.hx = rng.uniform(0.4, 0.9);
    r.hy = rng.uniform(0.4, 0.9);
    r.tex_seed = rng.next_u64();
    r.tex_freq = rng.uniform(2.0, 6.0);
    raw.surfaces.push_back(r);
  }

  const double fovx = rng.uniform(0.9, 1.25);
  const std::array<double, 2> fov{fovx, std::clamp(fovx * rng.uniform(0.92, 1.08), 0.5, 3.0)};

  for (int attempt = 0;; ++attempt) {
    if (attempt >= opt.max_camera_retries)
      throw std::runtime_error("generate_scene: camera placement failed visibility check after " +
                               std::to_string(opt.max_camera_retries) + " retries (seed " +
                               std::to_string(seed) + ")");
    std::vector<CameraParams> cams;
    for (int f = 0; f < n_frames; ++f) {
      Eigen::Vector3d pos;
      if (room) {
        const double az = 2 * M_PI * f / n_frames + rng.uniform(-0.35, 0.35);
        const double el = rng.uniform(-0.5, 0.5);
        const double rad = rng.uniform(2.6, 3.8);
        pos = rad * Eigen::Vector3d(std::cos(el) * std::cos(az), std::sin(el),
                                    std::cos(el) * std::sin(az));
      } else {
        // cone of directions around the backdrop axis
        Eigen::Vector3d dev = random_unit(rng);
        pos = (sector + 0.55 * dev).normalized() * rng.uniform(2.6, 3.8);
      }
      const Eigen::Vector3d target =
          0.15 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
      cams.push_back(camera_at(pos, target, fov, rng));
    }
    bool ok = true;
    for (const auto& cam : cams) {
      const FrameRender fr = render_frame(raw, cam, H, W);
      const double total = static_cast<double>(H) * W;
      if (fr.valid < opt.min_valid_fraction * total ||
          fr.foreground < opt.min_foreground_fraction * total) {
        ok = false;
        break;
      }
    }
    if (ok) {
      raw.cams = std::move(cams);
      return raw;
    }
  }
}

SceneSample render_raw(const RawScene& raw, int H, int W) {
  SceneSample s;
  s.seed = raw.seed;
  s.N = static_cast<int>(raw.cams.size());
  s.H = H;
  s.W = W;
  s.cams = raw.cams;
  s.images.reserve(static_cast<size_t>(s.N) * 3 * H * W);
  for (const auto& cam : raw.cams) {
    FrameRender fr = render_frame(raw, cam, H, W);
    s.depth.push_back(std::move(fr.depth));
    s.pmap.push_back(std::move(fr.pmap_world));
    s.mask.push_back(std::move(fr.mask));
    s.images.insert(s.images.end(), fr.image.begin(), fr.image.end());
  }
  return s;
}

SceneSample render_and_normalize(const RawScene& raw, int H, int W) {
  SceneSample s = render_raw(raw, H, W);
  normalize_scene(s.cams, s.pmap, s.depth, s.mask);
  return s;
}

SceneSample generate_scene(uint64_t seed, int n_frames, int H, int W, GenerateOptions opt) {
  const RawScene raw = sample_raw_scene(seed, n_frames, H, W, opt);
  SceneSample s = render_and_normalize(raw, H, W);
  build_tracks(s, opt.queries, hash_mix(seed, 0x7ac5), opt.track_tol);
  return s;
}

bool sample_depth_bilinear(const DepthMap& D, const MaskMap& mask, double x, double y,
                           double* out) {
  if (x < 0 || y < 0 || x > D.W - 1 || y > D.H - 1) return false;
  int x0 = std::min(static_cast<int>(x), D.W >= 2 ? D.W - 2 : 0);
  int y0 = std::min(static_cast<int>(y), D.H >= 2 ? D.H - 2 : 0);
  const int x1 = D.W >= 2 ? x0 + 1 : 0, y1 = D.H >= 2 ? y0 + 1 : 0;
  if (!mask.at(y0, x0) || !mask.at(y0, x1) || !mask.at(y1, x0) || !mask.at(y1, x1)) return false;
  const double wx = D.W >= 2 ? x - x0 : 0.0, wy = D.H >= 2 ? y - y0 : 0.0;
  *out = (1 - wy) * ((1 - wx) * D.at(y0, x0) + wx * D.at(y0, x1)) +
         wy * ((1 - wx) * D.at(y1, x0) + wx * D.at(y1, x1));
  return true;
}

void build_tracks(SceneSample& sample, int n_queries, uint64_t seed, double rel_tol) {
  if (n_queries < 1) throw std::invalid_argument("build_tracks: need at least one query");
  const int N = sample.N, H = sample.H, W = sample.W;
  Rng rng(seed);

  // query pixels drawn from frame 1's valid mask
  std::vector<std::pair<int, int>> valid_px;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      if (sample.mask[0].at(i, j)) valid_px.emplace_back(i, j);
  if (valid_px.empty()) throw std::runtime_error("build_tracks: frame 1 has no valid pixels");

  sample.M = n_queries;
  sample.queries.assign(static_cast<size_t>(n_queries) * 2, 0.0);
  sample.track_pos.assign(static_cast<size_t>(n_queries) * N * 2, 0.0);
  sample.track_depth.assign(static_cast<size_t>(n_queries) * N, 0.0);
  sample.track_vis.assign(static_cast<size_t>(n_queries) * N, 0);

  for (int q = 0; q < n_queries; ++q) {
    const auto [qi, qj] = valid_px[rng.below(valid_px.size())];
    sample.queries[2 * q] = qj;
    sample.queries[2 * q + 1] = qi;
    const Eigen::Vector3d X =
        unproject_pixel(sample.cams[0], qj, qi, sample.depth[0].at(qi, qj), W, H);
    for (int f = 0; f < N; ++f) {
      const size_t idx = static_cast<size_t>(q) * N + f;
      const Eigen::Vector3d pc = world_to_cam(sample.cams[f], X);
      if (pc.z() <= 0) {
        // behind the camera: keep a clamped placeholder position
        sample.track_pos[2 * idx] = 0;
        sample.track_pos[2 * idx + 1] = 0;
        continue;
      }
      const auto pr = project(sample.cams[f], X, W, H);
      // tolerate f64 roundoff for queries sitting exactly on the border
      constexpr double kBoundsEps = 1e-9;
      const bool inside = pr.pix.x() >= -kBoundsEps && pr.pix.x() <= W - 1 + kBoundsEps &&
                          pr.pix.y() >= -kBoundsEps && pr.pix.y() <= H - 1 + kBoundsEps;
      sample.track_pos[2 * idx] = std::clamp(pr.pix.x(), 0.0, static_cast<double>(W - 1));
      sample.track_pos[2 * idx + 1] = std::clamp(pr.pix.y(), 0.0, static_cast<double>(H - 1));
      sample.track_depth[idx] = pr.depth;
      if (!inside) continue;
      double dmap;
      if (!sample_depth_bilinear(sample.depth[f], sample.mask[f], sample.track_pos[2 * idx],
                                 sample.track_pos[2 * idx + 1], &dmap))
        continue;
      if (std::abs(pr.depth - dmap) < rel_tol * pr.depth) sample.track_vis[idx] = 1;
    }
  }
}

}  // namespace mvr
