#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mvr/metrics/report.hpp"
#include "mvr/synth/generate.hpp"
#include "mvr/train/config.hpp"

namespace mvr {

struct AblationRow {
  std::string name;
  size_t param_count = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  MetricReport report;
};

// Trains the three attention variants (alternating / global-only / cross)
// under identical seeds and budgets and evaluates each on the given scenes.
// The variants share one parameter layout; the count equality is asserted.
std::vector<AblationRow> ablate_attention(const TrainConfig& base,
                                          const std::vector<SceneSample>& scenes,
                                          const std::string& out_dir);

// Multi-task rows: the full loss and the runs dropping the camera, depth and
// tracking terms in turn.
std::vector<AblationRow> ablate_losses(const TrainConfig& base,
                                       const std::vector<SceneSample>& scenes,
                                       const std::string& out_dir);

void write_ablation_outputs(const std::vector<AblationRow>& rows, const std::string& json_path,
                            std::ostream& table_out);

}  // namespace mvr
