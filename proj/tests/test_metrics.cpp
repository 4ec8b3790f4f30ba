#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "mvr/core/rng.hpp"
#include "mvr/metrics/metrics.hpp"
#include "mvr/metrics/report.hpp"

using namespace mvr;

namespace {

CameraParams random_camera(Rng& rng) {
  std::array<double, 4> q;
  for (auto& x : q) x = rng.normal();
  return make_camera(q, {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}, {1.0, 1.0});
}

std::vector<CameraParams> random_cameras(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<CameraParams> cams;
  for (int i = 0; i < n; ++i) cams.push_back(random_camera(rng));
  return cams;
}

}  // namespace

TEST_CASE("relative pose errors: exact cases") {
  const auto gt = random_cameras(4, 1);
  const auto errs = relative_pose_errors(gt, gt);
  CHECK(errs.size() == 6);
  for (const auto& e : errs) {
    // acos near 1 amplifies f64 roundoff into ~1e-6 degrees; harmless for
    // any thresholding, so assert an absolute bound
    CHECK(e.rot_deg < 1e-5);
    CHECK(e.trans_deg < 1e-5);
  }

  // antipodal: flip one camera's rotation by 180 degrees about z
  auto pred = gt;
  const Eigen::Matrix3d Rz180 = Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  pred[1] = make_camera(rotmat_to_quat(Rz180 * quat_to_rotmat(gt[1].q)), gt[1].t, gt[1].fov);
  const auto errs2 = relative_pose_errors(pred, gt);
  for (const auto& e : errs2)
    if (e.i == 1 || e.j == 1) CHECK(e.rot_deg == doctest::Approx(180.0).epsilon(1e-9));

  std::vector<CameraParams> three(3);
  CHECK_THROWS_AS(relative_pose_errors(pred, three), std::invalid_argument);
  std::vector<CameraParams> one(1);
  CHECK_THROWS_AS(relative_pose_errors(one, one), std::invalid_argument);
}

TEST_CASE("relative pose errors match the matrix-logarithm oracle") {
  const auto gt = random_cameras(5, 2);
  const auto pred = random_cameras(5, 3);
  const auto errs = relative_pose_errors(pred, gt);
  for (const auto& e : errs) {
    const Eigen::Matrix3d Rg =
        quat_to_rotmat(gt[e.j].q) * quat_to_rotmat(gt[e.i].q).transpose();
    const Eigen::Matrix3d Rp =
        quat_to_rotmat(pred[e.j].q) * quat_to_rotmat(pred[e.i].q).transpose();
    const Eigen::AngleAxisd aa(Eigen::Matrix3d(Rp.transpose() * Rg));  // the matrix log
    CHECK(std::abs(e.rot_deg - aa.angle() * 180.0 / M_PI) < 1e-9);
  }
}

TEST_CASE("relative pose errors are invariant to a global rigid transform") {
  const auto gt = random_cameras(4, 4);
  const auto pred = random_cameras(4, 5);
  Rng rng(6);
  const CameraParams g = random_camera(rng);
  auto compose = [&](const std::vector<CameraParams>& cams) {
    std::vector<CameraParams> out;
    const Eigen::Matrix3d Rw = quat_to_rotmat(g.q);
    for (const auto& c : cams) {
      const Eigen::Matrix3d R = quat_to_rotmat(c.q) * Rw.transpose();
      const Eigen::Vector3d t = c.translation() - R * g.translation();
      out.push_back(make_camera(rotmat_to_quat(R), {t.x(), t.y(), t.z()}, c.fov));
    }
    return out;
  };
  const auto e0 = relative_pose_errors(pred, gt);
  const auto e1 = relative_pose_errors(compose(pred), compose(gt));
  for (size_t k = 0; k < e0.size(); ++k) {
    CHECK(std::abs(e0[k].rot_deg - e1[k].rot_deg) < 1e-9);
    CHECK(std::abs(e0[k].trans_deg - e1[k].trans_deg) < 1e-7);
  }
}

TEST_CASE("auc: trivial bounds, discrete-sum oracle, monotonicity") {
  PoseErrorSet zeros(10);
  CHECK(auc_at(zeros, 30) == 1.0);

  PoseErrorSet bad(10);
  for (auto& e : bad) e.rot_deg = 90;
  CHECK(auc_at(bad, 30) == 0.0);

  // {5, 15, 45} degrees: brute-force threshold sweep
  PoseErrorSet mixed(3);
  mixed[0].rot_deg = 5;
  mixed[1].rot_deg = 15;
  mixed[2].rot_deg = 45;
  double expect = 0;
  for (int tau = 1; tau <= 30; ++tau) {
    int hits = (5 < tau) + (15 < tau) + (45 < tau);
    expect += hits / 3.0;
  }
  expect /= 30.0;
  CHECK(auc_at(mixed, 30) == doctest::Approx(expect).epsilon(1e-15));

  // max(rot, trans) per pair
  PoseErrorSet both(1);
  both[0].rot_deg = 2;
  both[0].trans_deg = 50;
  CHECK(auc_at(both, 30) == 0.0);

  // decreasing any error never decreases the AUC
  Rng rng(7);
  PoseErrorSet rnd(20);
  for (auto& e : rnd) {
    e.rot_deg = rng.uniform(0, 60);
    e.trans_deg = rng.uniform(0, 60);
  }
  const double base = auc_at(rnd, 30);
  for (int k = 0; k < 20; ++k) {
    PoseErrorSet better = rnd;
    better[k].rot_deg *= 0.5;
    better[k].trans_deg *= 0.5;
    CHECK(auc_at(better, 30) >= base);
  }

  CHECK_THROWS_AS(auc_at(PoseErrorSet{}, 30), std::invalid_argument);
}

TEST_CASE("chamfer: trivial cases and quadratic-scan oracle") {
  std::vector<Eigen::Vector3d> x;
  Rng rng(8);
  for (int i = 0; i < 500; ++i) x.emplace_back(rng.normal(), rng.normal(), rng.normal());

  const auto same = chamfer(x, x);
  CHECK(same.accuracy == 0.0);
  CHECK(same.completeness == 0.0);
  CHECK(same.overall == 0.0);

  std::vector<Eigen::Vector3d> a{{0, 0, 0}}, b{{3, 4, 0}};
  const auto single = chamfer(a, b);
  CHECK(single.accuracy == doctest::Approx(5.0));
  CHECK(single.completeness == doctest::Approx(5.0));
  CHECK(single.overall == doctest::Approx(5.0));

  std::vector<Eigen::Vector3d> y;
  for (int i = 0; i < 500; ++i) y.emplace_back(rng.normal(), rng.normal(), rng.normal());
  const auto fast = chamfer(x, y);
  // serial O(n^2) oracle
  auto nearest_mean = [](const std::vector<Eigen::Vector3d>& from,
                         const std::vector<Eigen::Vector3d>& to) {
    double s = 0;
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      s += std::sqrt(best);
    }
    return s / from.size();
  };
  CHECK(fast.accuracy == nearest_mean(x, y));
  CHECK(fast.completeness == nearest_mean(y, x));

  // swap symmetry
  const auto sw = chamfer(y, x);
  CHECK(sw.accuracy == fast.completeness);
  CHECK(sw.completeness == fast.accuracy);

  CHECK_THROWS_AS(chamfer({}, x), std::invalid_argument);
}

TEST_CASE("tracking metrics: exact cases and counting oracle") {
  const int M = 3, N = 4;
  const size_t pairs = M * N;
  Rng rng(9);
  std::vector<double> gt_pos(pairs * 2);
  for (auto& v : gt_pos) v = rng.uniform(0, 50);
  std::vector<uint8_t> gt_vis(pairs, 1);
  gt_vis[5] = 0;
  gt_vis[10] = 0;

  {
    // perfect tracks and visibility -> (1, 1, 1)
    std::vector<double> logits(pairs);
    for (size_t p = 0; p < pairs; ++p) logits[p] = gt_vis[p] ? 10.0 : -10.0;
    const auto m = tracking_metrics(gt_pos, logits, gt_pos, gt_vis, M, N);
    CHECK(m.delta_avg_vis == 1.0);
    CHECK(m.oa == 1.0);
    CHECK(m.aj == 1.0);
  }
  {
    // everything 100 px off with correct visibility -> delta 0, OA 1, AJ 0
    std::vector<double> off = gt_pos;
    for (size_t p = 0; p < pairs; ++p) off[2 * p] += 100.0;
    std::vector<double> logits(pairs);
    for (size_t p = 0; p < pairs; ++p) logits[p] = gt_vis[p] ? 10.0 : -10.0;
    const auto m = tracking_metrics(off, logits, gt_pos, gt_vis, M, N);
    CHECK(m.delta_avg_vis == 0.0);
    CHECK(m.oa == 1.0);
    CHECK(m.aj == 0.0);
  }
  {
    // randomized case against a hand-rolled per-threshold counter
    std::vector<double> pred = gt_pos;
    std::vector<double> logits(pairs);
    for (size_t p = 0; p < pairs; ++p) {
      pred[2 * p] += rng.uniform(-6, 6);
      pred[2 * p + 1] += rng.uniform(-6, 6);
      logits[p] = rng.uniform(-1, 1);
    }
    const std::vector<double> taus{1, 2, 4, 8, 16};
    const auto m = tracking_metrics(pred, logits, gt_pos, gt_vis, M, N, taus);

    double delta = 0, aj = 0;
    size_t correct = 0, nvis = 0;
    for (size_t p = 0; p < pairs; ++p) {
      nvis += gt_vis[p];
      correct += (logits[p] > 0) == (gt_vis[p] != 0);
    }
    for (double tau : taus) {
      size_t within = 0, tp = 0, fp = 0, fn = 0;
      for (size_t p = 0; p < pairs; ++p) {
        const double dx = pred[2 * p] - gt_pos[2 * p], dy = pred[2 * p + 1] - gt_pos[2 * p + 1];
        const bool in = std::sqrt(dx * dx + dy * dy) < tau;
        const bool gv = gt_vis[p], pv = logits[p] > 0;
        if (gv && in) ++within;
        if (pv && gv && in) ++tp;
        if (pv && !(gv && in)) ++fp;
        if (gv && !(pv && in)) ++fn;
      }
      delta += static_cast<double>(within) / nvis;
      aj += (tp + fp + fn) ? static_cast<double>(tp) / (tp + fp + fn) : 1.0;
    }
    CHECK(m.delta_avg_vis == delta / taus.size());
    CHECK(m.oa == static_cast<double>(correct) / pairs);
    CHECK(m.aj == aj / taus.size());
  }
  CHECK_THROWS_AS(tracking_metrics({1.0}, {1.0}, {1.0}, {1}, M, N), std::invalid_argument);
}

TEST_CASE("metric report: registry, json round trip, table") {
  MetricReport r;
  r.seed = 77;
  r.config_hash = 0xabcdef;
  r.wall_time_s = 1.5;
  r.set("camera.auc@30", 0.91);
  r.set("depth.absrel", 0.034);
  r.set("track.oa", 0.75);
  CHECK_THROWS_AS(r.set("bogus.metric", 1.0), std::invalid_argument);
  CHECK_THROWS_AS(r.set("camera.auc@30", std::nan("")), std::invalid_argument);

  const auto loaded = MetricReport::from_json(r.to_json());
  CHECK(loaded.seed == 77);
  CHECK(loaded.metrics() == r.metrics());
  CHECK(loaded.metrics_json() == r.metrics_json());

  const auto table = r.to_table();
  CHECK(table.find("camera.auc@30") != std::string::npos);
  CHECK(table.find("0.910000") != std::string::npos);
}
