#include "mvr/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "mvr/core/kernels.hpp"

namespace mvr {

namespace {
double angle_deg(double cosv) { return std::acos(std::clamp(cosv, -1.0, 1.0)) * 180.0 / M_PI; }
}  // namespace

PoseErrorSet relative_pose_errors(const std::vector<CameraParams>& pred,
                                  const std::vector<CameraParams>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("relative_pose_errors: frame counts differ (" +
                                std::to_string(pred.size()) + " vs " + std::to_string(gt.size()) + ")");
  if (pred.size() < 2) throw std::invalid_argument("relative_pose_errors: need >= 2 frames");

  const int N = static_cast<int>(pred.size());
  std::vector<Eigen::Matrix3d> Rp(N), Rg(N);
  for (int f = 0; f < N; ++f) {
    Rp[f] = quat_to_rotmat(pred[f].q);
    Rg[f] = quat_to_rotmat(gt[f].q);
  }
  PoseErrorSet out;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      const Eigen::Matrix3d Rrel_p = Rp[j] * Rp[i].transpose();
      const Eigen::Matrix3d Rrel_g = Rg[j] * Rg[i].transpose();
      PairError e;
      e.i = i;
      e.j = j;
      e.rot_deg = angle_deg(((Rrel_p.transpose() * Rrel_g).trace() - 1.0) / 2.0);
      const Eigen::Vector3d tp = pred[j].translation() - Rrel_p * pred[i].translation();
      const Eigen::Vector3d tg = gt[j].translation() - Rrel_g * gt[i].translation();
      // direction-only comparison; near-zero relative translations count as 0
      e.trans_deg = (tp.norm() < 1e-9 || tg.norm() < 1e-9)
                        ? 0.0
                        : angle_deg(tp.dot(tg) / (tp.norm() * tg.norm()));
      out.push_back(e);
    }
  return out;
}

double auc_at(const PoseErrorSet& errors, int tau_max) {
  if (errors.empty()) throw std::invalid_argument("auc_at: empty error set");
  if (tau_max <= 0) throw std::invalid_argument("auc_at: tau_max must be positive");
  double acc_sum = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    size_t hits = 0;
    for (const auto& e : errors) hits += std::max(e.rot_deg, e.trans_deg) < tau;
    acc_sum += static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return acc_sum / tau_max;
}

double rra_at(const PoseErrorSet& errors, double tau) {
  if (errors.empty()) throw std::invalid_argument("rra_at: empty error set");
  size_t hits = 0;
  for (const auto& e : errors) hits += e.rot_deg < tau;
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

double rta_at(const PoseErrorSet& errors, double tau) {
  if (errors.empty()) throw std::invalid_argument("rta_at: empty error set");
  size_t hits = 0;
  for (const auto& e : errors) hits += e.trans_deg < tau;
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

namespace {
// Per-point distances land in a buffer (one writer per element) and are
// summed serially in index order, so the result is independent of the thread
// count and bit-identical to a serial scan.
double mean_nearest(const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to) {
  const int n = static_cast<int>(from.size());
  std::vector<double> nearest(n);
#pragma omp parallel for schedule(static) if (kern::parallel_enabled() && n > 64)
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (from[i] - q).squaredNorm());
    nearest[i] = std::sqrt(best);
  }
  double total = 0.0;
  for (double d : nearest) total += d;
  return total / n;
}
}  // namespace

ChamferResult chamfer(const std::vector<Eigen::Vector3d>& pred,
                      const std::vector<Eigen::Vector3d>& gt) {
  if (pred.empty() || gt.empty()) throw std::invalid_argument("chamfer: empty point cloud");
  ChamferResult r;
  r.accuracy = mean_nearest(pred, gt);
  r.completeness = mean_nearest(gt, pred);
  r.overall = (r.accuracy + r.completeness) / 2.0;
  return r;
}

TrackingMetrics tracking_metrics(const std::vector<double>& pred_pos,
                                 const std::vector<double>& pred_vis_logit,
                                 const std::vector<double>& gt_pos,
                                 const std::vector<uint8_t>& gt_vis, int M, int N,
                                 const std::vector<double>& thresholds) {
  const size_t pairs = static_cast<size_t>(M) * N;
  if (pred_pos.size() != pairs * 2 || gt_pos.size() != pairs * 2 ||
      pred_vis_logit.size() != pairs || gt_vis.size() != pairs)
    throw std::invalid_argument("tracking_metrics: shape mismatch for " + std::to_string(M) + "x" +
                                std::to_string(N) + " tracks");
  if (thresholds.empty()) throw std::invalid_argument("tracking_metrics: no thresholds");

  std::vector<double> err(pairs);
  size_t gt_visible = 0, vis_correct = 0;
  for (size_t p = 0; p < pairs; ++p) {
    const double dx = pred_pos[2 * p] - gt_pos[2 * p];
    const double dy = pred_pos[2 * p + 1] - gt_pos[2 * p + 1];
    err[p] = std::sqrt(dx * dx + dy * dy);
    gt_visible += gt_vis[p] ? 1 : 0;
    const bool pv = pred_vis_logit[p] > 0.0;
    vis_correct += (pv == (gt_vis[p] != 0)) ? 1 : 0;
  }

  TrackingMetrics out;
  out.oa = static_cast<double>(vis_correct) / static_cast<double>(pairs);
  double delta_sum = 0.0, aj_sum = 0.0;
  for (double tau : thresholds) {
    size_t within_vis = 0, tp = 0, fp = 0, fn = 0;
    for (size_t p = 0; p < pairs; ++p) {
      const bool within = err[p] < tau;
      const bool gv = gt_vis[p] != 0;
      const bool pv = pred_vis_logit[p] > 0.0;
      if (gv && within) ++within_vis;
      if (pv && gv && within) ++tp;
      if (pv && !(gv && within)) ++fp;
      if (gv && !(pv && within)) ++fn;
    }
    delta_sum += gt_visible ? static_cast<double>(within_vis) / static_cast<double>(gt_visible) : 0.0;
    const size_t denom = tp + fp + fn;
    aj_sum += denom ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
  }
  out.delta_avg_vis = delta_sum / thresholds.size();
  out.aj = aj_sum / thresholds.size();
  return out;
}

}  // namespace mvr
