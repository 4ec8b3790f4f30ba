#include "mvr/train/ablate.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mvr/train/checkpoint.hpp"
#include "mvr/train/evaluate.hpp"
#include "mvr/train/trainer.hpp"

namespace fs = std::filesystem;

namespace mvr {

namespace {

AblationRow run_variant(const std::string& name, const TrainConfig& cfg,
                        const std::vector<SceneSample>& scenes, const std::string& out_dir) {
  const std::string dir = (fs::path(out_dir) / name).string();
  const TrainResult tr = train_run(cfg, scenes, dir);

  Model<float> model(cfg.model);
  AdamW<float> opt;
  load_checkpoint(tr.checkpoint_path, model.params(), nullptr);

  AblationRow row;
  row.name = name;
  row.param_count = model.params().total_parameters();
  row.initial_loss = tr.first.total;
  row.final_loss = tr.last.total;
  row.report = evaluate_model(model, scenes);
  row.report.seed = cfg.seed;
  row.report.config_hash = cfg.hash();
  row.report.set("params.count", static_cast<double>(row.param_count));
  row.report.set("train.loss.initial", row.initial_loss);
  row.report.set("train.loss.final", row.final_loss);
  return row;
}

}  // namespace

std::vector<AblationRow> ablate_attention(const TrainConfig& base,
                                          const std::vector<SceneSample>& scenes,
                                          const std::string& out_dir) {
  std::vector<AblationRow> rows;
  for (auto v : {AttentionVariant::kAlternating, AttentionVariant::kGlobalOnly,
                 AttentionVariant::kCrossAlternating}) {
    TrainConfig cfg = base;
    cfg.model.attention = v;
    rows.push_back(run_variant(attention_name(v), cfg, scenes, out_dir));
  }
  for (const auto& r : rows)
    if (r.param_count != rows[0].param_count)
      throw std::logic_error("ablate: attention variants must share one parameter count (" +
                             rows[0].name + "=" + std::to_string(rows[0].param_count) + ", " + r.name +
                             "=" + std::to_string(r.param_count) + ")");
  return rows;
}

std::vector<AblationRow> ablate_losses(const TrainConfig& base,
                                       const std::vector<SceneSample>& scenes,
                                       const std::string& out_dir) {
  std::vector<AblationRow> rows;
  {
    rows.push_back(run_variant("full", base, scenes, out_dir));
  }
  {
    TrainConfig cfg = base;
    cfg.loss.use_camera = false;
    rows.push_back(run_variant("wo_camera", cfg, scenes, out_dir));
  }
  {
    TrainConfig cfg = base;
    cfg.loss.use_depth = false;
    rows.push_back(run_variant("wo_depth", cfg, scenes, out_dir));
  }
  {
    TrainConfig cfg = base;
    cfg.loss.use_track = false;
    rows.push_back(run_variant("wo_track", cfg, scenes, out_dir));
  }
  return rows;
}

void write_ablation_outputs(const std::vector<AblationRow>& rows, const std::string& json_path,
                            std::ostream& table_out) {
  nlohmann::json j;
  for (const auto& r : rows) {
    nlohmann::json row;
    row["name"] = r.name;
    row["params"] = r.param_count;
    row["train"]["initial_loss"] = r.initial_loss;
    row["train"]["final_loss"] = r.final_loss;
    row["metrics"] = r.report.metrics();
    j["rows"].push_back(row);
  }
  std::ofstream f(json_path);
  if (!f) throw std::runtime_error("ablate: cannot write " + json_path);
  f << j.dump(2) << "\n";

  std::vector<std::string> cols{"camera.auc@30", "depth.absrel", "pmap.point.overall",
                                "pmap.depthcam.overall", "track.delta_avg_vis"};
  table_out << std::left << std::setw(14) << "variant" << std::setw(12) << "params";
  for (const auto& c : cols) table_out << std::setw(24) << c;
  table_out << "\n" << std::string(14 + 12 + 24 * cols.size(), '-') << "\n";
  for (const auto& r : rows) {
    table_out << std::left << std::setw(14) << r.name << std::setw(12) << r.param_count;
    for (const auto& c : cols) {
      if (r.report.has(c))
        table_out << std::setw(24) << std::setprecision(5) << std::fixed << r.report.get(c);
      else
        table_out << std::setw(24) << "-";
    }
    table_out << "\n";
  }
}

}  // namespace mvr
