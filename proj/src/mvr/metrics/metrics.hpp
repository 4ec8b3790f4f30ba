#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "mvr/geom/camera.hpp"

namespace mvr {

// Relative rotation / translation-direction errors for every unordered frame
// pair, in degrees within [0, 180].
struct PairError {
  int i = 0, j = 0;
  double rot_deg = 0.0;
  double trans_deg = 0.0;
};
using PoseErrorSet = std::vector<PairError>;

PoseErrorSet relative_pose_errors(const std::vector<CameraParams>& pred,
                                  const std::vector<CameraParams>& gt);

// Area under the accuracy-threshold curve: per pair e = max(rot, trans),
// accuracy(tau) = fraction of pairs with e < tau, averaged over the integer
// thresholds tau = 1..tau_max.
double auc_at(const PoseErrorSet& errors, int tau_max);

// Fraction of pairs with rotation (resp. translation) error below tau.
double rra_at(const PoseErrorSet& errors, double tau);
double rta_at(const PoseErrorSet& errors, double tau);

struct ChamferResult {
  double accuracy = 0.0;      // mean nearest-gt distance over predicted points
  double completeness = 0.0;  // mean nearest-pred distance over gt points
  double overall = 0.0;       // (accuracy + completeness) / 2
};

// Exact brute-force nearest neighbours (OpenMP across points; per-point scan
// order fixed, so results match the serial reference bit-for-bit).
ChamferResult chamfer(const std::vector<Eigen::Vector3d>& pred,
                      const std::vector<Eigen::Vector3d>& gt);

struct TrackingMetrics {
  double delta_avg_vis = 0.0;  // mean over thresholds of visible-point accuracy
  double oa = 0.0;             // binary visibility accuracy
  double aj = 0.0;             // average Jaccard
};

// pred_vis are logits; the visibility decision threshold is probability 0.5
// (logit 0). Thresholds default to {1,2,4,8,16} pixels.
TrackingMetrics tracking_metrics(const std::vector<double>& pred_pos,
                                 const std::vector<double>& pred_vis_logit,
                                 const std::vector<double>& gt_pos,
                                 const std::vector<uint8_t>& gt_vis, int M, int N,
                                 const std::vector<double>& thresholds = {1, 2, 4, 8, 16});

}  // namespace mvr
