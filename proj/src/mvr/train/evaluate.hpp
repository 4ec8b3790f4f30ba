#pragma once

#include <string>
#include <vector>

#include "mvr/metrics/report.hpp"
#include "mvr/model/model.hpp"
#include "mvr/synth/generate.hpp"

namespace mvr {

enum class EvalMode { kPointHead, kDepthCam, kBoth };

EvalMode eval_mode_from_name(const std::string& s);

struct EvalOptions {
  EvalMode mode = EvalMode::kBoth;
  int max_cloud_points = 20000;  // per-scene cap before Chamfer
  uint64_t subsample_seed = 1234;
};

// Runs the model on one scene (queries taken from the sample).
ScenePredictions predict_scene(Model<float>& model, const SceneSample& scene);

// Metric protocol: pose AUC over frame pairs (scenes with >= 2 frames),
// pooled depth absolute-relative error on valid pixels, Umeyama-aligned
// Chamfer for the point-map head and/or the depth+camera composition, and
// tracking delta/OA/AJ. Per-scene values are averaged. Separated from the
// model so that oracle predictions can be injected.
MetricReport evaluate_predictions(const std::vector<ScenePredictions>& preds,
                                  const std::vector<SceneSample>& scenes,
                                  const EvalOptions& opt = {});

MetricReport evaluate_model(Model<float>& model, const std::vector<SceneSample>& scenes,
                            const EvalOptions& opt = {});

// GT-as-prediction oracle (upper bound; used by tests and the acceptance suite).
ScenePredictions oracle_predictions(const SceneSample& scene);

}  // namespace mvr
