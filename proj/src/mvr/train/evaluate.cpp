#include "mvr/train/evaluate.hpp"

#include <cmath>
#include <stdexcept>

#include "mvr/geom/fit.hpp"
#include "mvr/metrics/metrics.hpp"

namespace mvr {

EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "pointhead") return EvalMode::kPointHead;
  if (s == "depthcam") return EvalMode::kDepthCam;
  if (s == "both") return EvalMode::kBoth;
  throw std::invalid_argument("eval: unknown mode '" + s + "' (pointhead|depthcam|both)");
}

ScenePredictions predict_scene(Model<float>& model, const SceneSample& scene) {
  std::vector<std::array<double, 2>> queries(scene.M);
  for (int q = 0; q < scene.M; ++q) queries[q] = {scene.query_x(q), scene.query_y(q)};
  Tape<float> tape;
  const auto fo = model.forward(tape, scene.images.data(), scene.N, scene.H, scene.W, queries);
  return decode_predictions(tape, fo, scene.N, scene.M);
}

ScenePredictions oracle_predictions(const SceneSample& scene) {
  ScenePredictions p;
  p.N = scene.N;
  p.H = scene.H;
  p.W = scene.W;
  p.M = scene.M;
  p.cams = scene.cams;
  p.depth = scene.depth;
  p.pmap = scene.pmap;
  // invalid pixels carry depth 0 in ground truth; the depth+cam route needs
  // positive values there (they are masked out of every metric anyway)
  for (auto& D : p.depth)
    for (auto& d : D.d)
      if (d <= 0) d = 1.0;
  p.track_pos = scene.track_pos;
  p.track_vis_logit.resize(scene.track_vis.size());
  for (size_t i = 0; i < scene.track_vis.size(); ++i)
    p.track_vis_logit[i] = scene.track_vis[i] ? 10.0 : -10.0;
  return p;
}

namespace {

// Pixel-aligned subsample of valid pixels shared by prediction and ground
// truth, so the Umeyama alignment has true correspondences.
std::vector<size_t> subsample_valid(const SceneSample& scene, int max_points, uint64_t seed) {
  std::vector<size_t> valid;  // global index: frame * H*W + pixel
  const size_t hw = static_cast<size_t>(scene.H) * scene.W;
  for (int f = 0; f < scene.N; ++f)
    for (size_t p = 0; p < hw; ++p)
      if (scene.mask[f].m[p]) valid.push_back(f * hw + p);
  if (static_cast<int>(valid.size()) <= max_points) return valid;
  Rng rng(seed);
  for (int i = 0; i < max_points; ++i)
    std::swap(valid[i], valid[i + rng.below(valid.size() - i)]);
  valid.resize(max_points);
  return valid;
}

Eigen::Vector3d pmap_point(const std::vector<PointMap>& maps, size_t idx, size_t hw) {
  const size_t f = idx / hw, p = idx % hw;
  const auto& P = maps[f];
  return {P.p[p], P.p[hw + p], P.p[2 * hw + p]};
}

ChamferResult aligned_chamfer(const std::vector<Eigen::Vector3d>& pred,
                              const std::vector<Eigen::Vector3d>& gt) {
  std::vector<Eigen::Vector3d> aligned = pred;
  try {
    const SimilarityTransform tf = umeyama_align(pred, gt);
    for (auto& p : aligned) p = tf.apply(p);
  } catch (const std::invalid_argument&) {
    // degenerate cloud: fall back to the unaligned comparison
  }
  return chamfer(aligned, gt);
}

}  // namespace

MetricReport evaluate_predictions(const std::vector<ScenePredictions>& preds,
                                  const std::vector<SceneSample>& scenes, const EvalOptions& opt) {
  if (preds.size() != scenes.size() || scenes.empty())
    throw std::invalid_argument("evaluate: prediction/scene count mismatch");

  MetricReport report;
  double auc30 = 0, auc15 = 0, rra15 = 0, rta15 = 0;
  int pose_scenes = 0;
  double absrel_sum = 0;
  size_t absrel_count = 0;
  ChamferResult point_sum, depthcam_sum;
  double delta = 0, oa = 0, aj = 0;
  int track_scenes = 0;

  for (size_t si = 0; si < scenes.size(); ++si) {
    const SceneSample& scene = scenes[si];
    const ScenePredictions& pr = preds[si];
    const size_t hw = static_cast<size_t>(scene.H) * scene.W;

    if (scene.N >= 2) {
      const auto errs = relative_pose_errors(pr.cams, scene.cams);
      auc30 += auc_at(errs, 30);
      auc15 += auc_at(errs, 15);
      rra15 += rra_at(errs, 15);
      rta15 += rta_at(errs, 15);
      ++pose_scenes;
    }

    for (int f = 0; f < scene.N; ++f)
      for (size_t p = 0; p < hw; ++p)
        if (scene.mask[f].m[p]) {
          absrel_sum += std::abs(pr.depth[f].d[p] - scene.depth[f].d[p]) / scene.depth[f].d[p];
          ++absrel_count;
        }

    const auto idx = subsample_valid(scene, opt.max_cloud_points,
                                     hash_mix(opt.subsample_seed, scene.seed));
    std::vector<Eigen::Vector3d> gt_cloud;
    gt_cloud.reserve(idx.size());
    for (size_t i : idx) gt_cloud.push_back(pmap_point(scene.pmap, i, hw));

    if (opt.mode != EvalMode::kDepthCam) {
      std::vector<Eigen::Vector3d> cloud;
      cloud.reserve(idx.size());
      for (size_t i : idx) cloud.push_back(pmap_point(pr.pmap, i, hw));
      const auto c = aligned_chamfer(cloud, gt_cloud);
      point_sum.accuracy += c.accuracy;
      point_sum.completeness += c.completeness;
      point_sum.overall += c.overall;
    }
    if (opt.mode != EvalMode::kPointHead) {
      // compose the depth head with the camera head
      std::vector<PointMap> composed;
      for (int f = 0; f < scene.N; ++f)
        composed.push_back(unproject_depth(pr.cams[f], pr.depth[f], scene.mask[f], scene.W, scene.H));
      std::vector<Eigen::Vector3d> cloud;
      cloud.reserve(idx.size());
      for (size_t i : idx) cloud.push_back(pmap_point(composed, i, hw));
      const auto c = aligned_chamfer(cloud, gt_cloud);
      depthcam_sum.accuracy += c.accuracy;
      depthcam_sum.completeness += c.completeness;
      depthcam_sum.overall += c.overall;
    }

    if (scene.M > 0) {
      const auto tm = tracking_metrics(pr.track_pos, pr.track_vis_logit, scene.track_pos,
                                       scene.track_vis, scene.M, scene.N);
      delta += tm.delta_avg_vis;
      oa += tm.oa;
      aj += tm.aj;
      ++track_scenes;
    }
  }

  const double ns = static_cast<double>(scenes.size());
  report.set("scenes.count", ns);
  if (pose_scenes) {
    report.set("camera.auc@30", auc30 / pose_scenes);
    report.set("camera.auc@15", auc15 / pose_scenes);
    report.set("camera.rra@15", rra15 / pose_scenes);
    report.set("camera.rta@15", rta15 / pose_scenes);
  }
  if (absrel_count) report.set("depth.absrel", absrel_sum / static_cast<double>(absrel_count));
  if (opt.mode != EvalMode::kDepthCam) {
    report.set("pmap.point.accuracy", point_sum.accuracy / ns);
    report.set("pmap.point.completeness", point_sum.completeness / ns);
    report.set("pmap.point.overall", point_sum.overall / ns);
  }
  if (opt.mode != EvalMode::kPointHead) {
    report.set("pmap.depthcam.accuracy", depthcam_sum.accuracy / ns);
    report.set("pmap.depthcam.completeness", depthcam_sum.completeness / ns);
    report.set("pmap.depthcam.overall", depthcam_sum.overall / ns);
  }
  if (track_scenes) {
    report.set("track.delta_avg_vis", delta / track_scenes);
    report.set("track.oa", oa / track_scenes);
    report.set("track.aj", aj / track_scenes);
  }
  return report;
}

MetricReport evaluate_model(Model<float>& model, const std::vector<SceneSample>& scenes,
                            const EvalOptions& opt) {
  model.params().set_requires_grad(false);
  std::vector<ScenePredictions> preds;
  preds.reserve(scenes.size());
  for (const auto& s : scenes) preds.push_back(predict_scene(model, s));
  return evaluate_predictions(preds, scenes, opt);
}

}  // namespace mvr
