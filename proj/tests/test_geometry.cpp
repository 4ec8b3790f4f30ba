#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mvr/core/rng.hpp"
#include "mvr/geom/camera.hpp"
#include "mvr/geom/fit.hpp"

using namespace mvr;

namespace {

CameraParams random_camera(Rng& rng) {
  std::array<double, 4> q;
  for (auto& x : q) x = rng.normal();
  return make_camera(q, {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)},
                     {rng.uniform(0.6, 2.0), rng.uniform(0.6, 2.0)});
}

double rot_err_deg(const CameraParams& a, const CameraParams& b) {
  const Eigen::Matrix3d D = quat_to_rotmat(a.q).transpose() * quat_to_rotmat(b.q);
  const double c = std::clamp((D.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

// Random positive depth map; unprojecting it yields a noise-free point map
// with points spread over a non-degenerate (non-coplanar) configuration.
std::pair<PointMap, MaskMap> synthetic_pointmap(const CameraParams& g, int W, int H, Rng& rng,
                                                DepthMap* depth_out = nullptr) {
  DepthMap D{H, W, std::vector<double>(static_cast<size_t>(H) * W)};
  for (auto& d : D.d) d = rng.uniform(1.0, 4.0);
  MaskMap mask{H, W, std::vector<uint8_t>(static_cast<size_t>(H) * W, 1)};
  PointMap P = unproject_depth(g, D, mask, W, H);
  if (depth_out) *depth_out = D;
  return {P, mask};
}

}  // namespace

TEST_CASE("quaternion to rotation matrix") {
  CHECK(quat_to_rotmat({0, 0, 0, 1}).isApprox(Eigen::Matrix3d::Identity(), 1e-15));

  const double s = std::sin(M_PI / 4), c = std::cos(M_PI / 4);
  Eigen::Matrix3d Rz90;
  Rz90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((quat_to_rotmat({0, 0, s, c}) - Rz90).norm() < 1e-12);

  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    std::array<double, 4> q;
    for (auto& x : q) x = rng.normal();
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& x : q) x /= n;
    std::array<double, 4> nq{-q[0], -q[1], -q[2], -q[3]};
    CHECK((quat_to_rotmat(q) - quat_to_rotmat(nq)).norm() < 1e-12);  // double cover
    const Eigen::Matrix3d R = quat_to_rotmat(q);
    CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    // round trip through rotmat_to_quat
    const auto q2 = rotmat_to_quat(R);
    CHECK((quat_to_rotmat(q2) - R).norm() < 1e-9);
  }

  CHECK_THROWS_AS(quat_to_rotmat({0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("world_to_cam matches the homogeneous-matrix oracle") {
  CameraParams id;
  const Eigen::Vector3d p(0.3, -0.7, 2.0);
  CHECK((world_to_cam(id, p) - p).norm() == 0.0);

  CameraParams g;
  g.t = {0, 0, 1};
  CHECK((world_to_cam(g, {0, 0, 0}) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);

  Rng rng(7);
  for (int k = 0; k < 50; ++k) {
    const CameraParams cam = random_camera(rng);
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.block<3, 3>(0, 0) = quat_to_rotmat(cam.q);
    T.block<3, 1>(0, 3) = cam.translation();
    const Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector4d hx(x.x(), x.y(), x.z(), 1.0);
    CHECK((world_to_cam(cam, x) - (T * hx).head<3>()).norm() < 1e-12);

    // gamma preserves distances
    const Eigen::Vector3d y(rng.normal(), rng.normal(), rng.normal());
    CHECK(std::abs((world_to_cam(cam, x) - world_to_cam(cam, y)).norm() - (x - y).norm()) < 1e-9);
    // cam_to_world inverts
    CHECK((cam_to_world(cam, world_to_cam(cam, x)) - x).norm() < 1e-12);
  }
}

TEST_CASE("pinhole projection") {
  CameraParams id;
  id.fov = {1.2, 0.9};
  const auto pr = project(id, {0, 0, 2}, 64, 48);
  CHECK(pr.pix.x() == doctest::Approx(32.0));
  CHECK(pr.pix.y() == doctest::Approx(24.0));
  CHECK(pr.depth == doctest::Approx(2.0));

  CameraParams fov90;
  fov90.fov = {M_PI / 2, M_PI / 2};
  const auto pr2 = project(fov90, {1, 0, 1}, 100, 100);
  CHECK(pr2.pix.x() == doctest::Approx(100.0));
  CHECK(pr2.pix.y() == doctest::Approx(50.0));
  CHECK(pr2.depth == doctest::Approx(1.0));

  CHECK_THROWS_AS(project(id, {0, 0, -1}, 64, 64), std::invalid_argument);

  // project and unproject are mutually inverse over a pixel grid
  Rng rng(11);
  const CameraParams cam = random_camera(rng);
  const int W = 16, H = 16;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double d = rng.uniform(0.5, 5.0);
      const Eigen::Vector3d p = unproject_pixel(cam, j, i, d, W, H);
      const auto back = project(cam, p, W, H);
      CHECK((back.pix - Eigen::Vector2d(j, i)).norm() < 1e-9);
      CHECK(std::abs(back.depth - d) < 1e-9);
    }
}

TEST_CASE("unproject_depth basics") {
  CameraParams id;
  id.fov = {1.0, 1.0};
  const int W = 4, H = 4;
  DepthMap D{H, W, std::vector<double>(16, 1.0)};
  MaskMap mask{H, W, std::vector<uint8_t>(16, 1)};
  const PointMap P = unproject_depth(id, D, mask, W, H);
  CHECK((P.at(2, 2) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);  // optical axis

  // camera shifted back by 1 along z: points gain +1 in z vs identity
  CameraParams shifted = id;
  shifted.t = {0, 0, -1};
  const PointMap P2 = unproject_depth(shifted, D, mask, W, H);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      CHECK((P2.at(i, j) - (P.at(i, j) + Eigen::Vector3d(0, 0, 1))).norm() < 1e-12);

  DepthMap bad = D;
  bad.d[5] = 0.0;
  CHECK_THROWS_AS(unproject_depth(id, bad, mask, W, H), std::invalid_argument);
}

TEST_CASE("camera_from_pointmap recovers poses") {
  Rng rng(13);
  {
    CameraParams id;
    id.fov = {1.1, 0.8};
    auto [P, mask] = synthetic_pointmap(id, 12, 10, rng);
    const auto fit = camera_from_pointmap(P, mask, 12, 10);
    CHECK(rot_err_deg(fit.cam, id) < 1e-6);
    CHECK((fit.cam.translation() - id.translation()).norm() < 1e-8);
    CHECK(fit.reproj_rms < 1e-8);
  }
  for (int k = 0; k < 10; ++k) {
    const CameraParams g = random_camera(rng);
    auto [P, mask] = synthetic_pointmap(g, 12, 10, rng);
    const auto fit = camera_from_pointmap(P, mask, 12, 10);
    CHECK(rot_err_deg(fit.cam, g) < 0.01);
    CHECK((fit.cam.translation() - g.translation()).norm() < 1e-6);
    CHECK(std::abs(fit.cam.fov[0] - g.fov[0]) < 1e-6);
  }
}

TEST_CASE("camera_from_pointmap under 1% noise stays inside the measured envelope") {
  // Envelope from a 40-run Monte-Carlo at these settings: worst rotation
  // error 0.67 deg, worst |dt| 0.027. Frozen bounds keep a 3x/9x margin.
  Rng rng(17);
  for (int k = 0; k < 10; ++k) {
    const CameraParams g = random_camera(rng);
    auto [P, mask] = synthetic_pointmap(g, 16, 16, rng);
    for (auto& x : P.p) x += 0.01 * rng.normal();
    const auto fit = camera_from_pointmap(P, mask, 16, 16);
    CHECK(fit.reproj_rms > 0.0);
    CHECK(rot_err_deg(fit.cam, g) < 2.0);
    CHECK((fit.cam.translation() - g.translation()).norm() < 0.25);
  }
}

TEST_CASE("camera_from_pointmap rejects degenerate input") {
  CameraParams id;
  const int W = 8, H = 8;
  // All points on one plane z = 2: coplanar -> rank deficient.
  PointMap P{H, W, std::vector<double>(static_cast<size_t>(3) * H * W)};
  MaskMap mask{H, W, std::vector<uint8_t>(static_cast<size_t>(H) * W, 1)};
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) P.set(i, j, {0.3 * j, 0.3 * i, 2.0});
  CHECK_THROWS_AS(camera_from_pointmap(P, mask, W, H), std::invalid_argument);

  MaskMap tiny{H, W, std::vector<uint8_t>(static_cast<size_t>(H) * W, 0)};
  tiny.m[0] = tiny.m[1] = tiny.m[2] = 1;
  CHECK_THROWS_AS(camera_from_pointmap(P, tiny, W, H), std::invalid_argument);
}

TEST_CASE("normalize_scene canonicalization") {
  // Single point at (3,0,0) seen by an identity camera: sigma = 3.
  {
    std::vector<CameraParams> cams{CameraParams{}};
    PointMap P{1, 1, {3, 0, 0}};
    DepthMap D{1, 1, {3.0}};
    std::vector<PointMap> ps{P};
    std::vector<DepthMap> ds{D};
    std::vector<MaskMap> ms{MaskMap{1, 1, {1}}};
    const auto info = normalize_scene(cams, ps, ds, ms);
    CHECK(info.sigma == doctest::Approx(3.0));
    CHECK((ps[0].at(0, 0) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
    CHECK(ds[0].d[0] == doctest::Approx(1.0));
  }
  // Two points at distances 1 and 3: sigma = 2.
  {
    std::vector<CameraParams> cams{CameraParams{}};
    PointMap P{1, 2, {1, 3, 0, 0, 0, 0}};
    DepthMap D{1, 2, {1.0, 1.0}};
    std::vector<PointMap> ps{P};
    std::vector<DepthMap> ds{D};
    std::vector<MaskMap> ms{MaskMap{1, 2, {1, 1}}};
    CHECK(normalize_scene(cams, ps, ds, ms).sigma == doctest::Approx(2.0));
  }
  // Empty scene
  {
    std::vector<CameraParams> cams{CameraParams{}};
    std::vector<PointMap> ps{PointMap{1, 1, {0, 0, 0}}};
    std::vector<DepthMap> ds{DepthMap{1, 1, {1.0}}};
    std::vector<MaskMap> ms{MaskMap{1, 1, {0}}};
    CHECK_THROWS_AS(normalize_scene(cams, ps, ds, ms), std::invalid_argument);
  }
}

TEST_CASE("normalize_scene is idempotent and similarity-invariant") {
  Rng rng(23);
  const int W = 6, H = 5, N = 3;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<CameraParams> cams;
    std::vector<PointMap> ps;
    std::vector<DepthMap> ds;
    std::vector<MaskMap> ms;
    for (int f = 0; f < N; ++f) {
      const CameraParams g = random_camera(rng);
      DepthMap D;
      auto [P, mask] = synthetic_pointmap(g, W, H, rng, &D);
      // knock out a few pixels to exercise masking
      mask.m[f] = 0;
      cams.push_back(g);
      ps.push_back(P);
      ds.push_back(D);
      ms.push_back(mask);
    }

    // Reference normalization.
    auto c1 = cams;
    auto p1 = ps;
    auto d1 = ds;
    normalize_scene(c1, p1, d1, ms);

    // Idempotence.
    auto c2 = c1;
    auto p2 = p1;
    auto d2 = d1;
    normalize_scene(c2, p2, d2, ms);
    for (int f = 0; f < N; ++f) {
      for (int i = 0; i < 4; ++i) CHECK(std::abs(c2[f].q[i] - c1[f].q[i]) < 1e-9);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(c2[f].t[i] - c1[f].t[i]) < 1e-9);
      for (size_t i = 0; i < p1[f].p.size(); ++i) CHECK(std::abs(p2[f].p[i] - p1[f].p[i]) < 1e-9);
      for (size_t i = 0; i < d1[f].d.size(); ++i) CHECK(std::abs(d2[f].d[i] - d1[f].d[i]) < 1e-9);
    }

    // Invariance to a global similarity transform of the raw scene.
    const double s = rng.uniform(0.2, 8.0);
    const CameraParams rigid = random_camera(rng);
    const Eigen::Matrix3d Rw = quat_to_rotmat(rigid.q);
    const Eigen::Vector3d tw = rigid.translation();
    auto c3 = cams;
    auto p3 = ps;
    auto d3 = ds;
    for (int f = 0; f < N; ++f) {
      // world' = s (Rw world + tw); cameras compose accordingly.
      const Eigen::Matrix3d Ri = quat_to_rotmat(cams[f].q);
      const Eigen::Matrix3d Ri_new = Ri * Rw.transpose();
      const Eigen::Vector3d ti_new = s * cams[f].translation() - Ri_new * (s * tw);
      c3[f].q = rotmat_to_quat(Ri_new);
      c3[f].t = {ti_new.x(), ti_new.y(), ti_new.z()};
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) p3[f].set(i, j, s * (Rw * ps[f].at(i, j) + tw));
      for (auto& d : d3[f].d) d *= s;
    }
    normalize_scene(c3, p3, d3, ms);
    for (int f = 0; f < N; ++f) {
      for (int i = 0; i < 4; ++i) CHECK(std::abs(c3[f].q[i] - c1[f].q[i]) < 1e-9);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(c3[f].t[i] - c1[f].t[i]) < 1e-9);
      for (size_t i = 0; i < p1[f].p.size(); ++i) CHECK(std::abs(p3[f].p[i] - p1[f].p[i]) < 1e-9);
      for (size_t i = 0; i < d1[f].d.size(); ++i) CHECK(std::abs(d3[f].d[i] - d1[f].d[i]) < 1e-9);
    }
  }
}

TEST_CASE("umeyama alignment") {
  std::vector<Eigen::Vector3d> X;
  Rng rng(31);
  for (int i = 0; i < 100; ++i) X.emplace_back(rng.normal(), rng.normal(), rng.normal());

  {
    const auto tf = umeyama_align(X, X);
    CHECK(tf.s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((tf.R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK(tf.u.norm() < 1e-9);
  }
  {
    std::vector<Eigen::Vector3d> Y = X;
    for (auto& y : Y) y += Eigen::Vector3d(1, 2, 3);
    const auto tf = umeyama_align(X, Y);
    CHECK(tf.s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((tf.R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK((tf.u - Eigen::Vector3d(1, 2, 3)).norm() < 1e-9);
  }
  {
    Eigen::Matrix3d Rz90;
    Rz90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Eigen::Vector3d u0(0.4, -1.1, 2.2);
    std::vector<Eigen::Vector3d> Y(X.size());
    for (size_t i = 0; i < X.size(); ++i) Y[i] = 2.0 * (Rz90 * X[i]) + u0;
    const auto tf = umeyama_align(X, Y);
    CHECK(std::abs(tf.s - 2.0) < 1e-6);
    CHECK((tf.R - Rz90).norm() < 1e-6);
    CHECK((tf.u - u0).norm() < 1e-6);
    for (size_t i = 0; i < X.size(); ++i) CHECK((tf.apply(X[i]) - Y[i]).norm() < 1e-6);
  }
  // Degenerate: all source points identical.
  std::vector<Eigen::Vector3d> Z(5, Eigen::Vector3d(1, 1, 1));
  CHECK_THROWS_AS(umeyama_align(Z, Z), std::invalid_argument);
}

TEST_CASE("ascii ply export") {
  const auto path = std::filesystem::temp_directory_path() / "mvr_test_cloud.ply";
  std::vector<Eigen::Vector3d> pts{{0, 0, 0}, {1, 2, 3}};
  std::vector<Eigen::Vector3d> cols{{1, 0, 0}, {0, 0.5, 1}};
  write_ply(path.string(), pts, &cols);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "ply");
  int lines = 1;
  bool saw_vertex = false;
  while (std::getline(f, line)) {
    if (line.find("element vertex 2") != std::string::npos) saw_vertex = true;
    ++lines;
  }
  CHECK(saw_vertex);
  CHECK(lines >= 10);
  std::filesystem::remove(path);
}
