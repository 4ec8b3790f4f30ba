#include "mvr/metrics/report.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mvr {

namespace {
const std::set<std::string>& registry() {
  static const std::set<std::string> names{
      "camera.auc@30",  "camera.auc@15",  "camera.rra@15",          "camera.rta@15",
      "depth.absrel",   "track.delta_avg_vis", "track.oa",          "track.aj",
      "pmap.point.accuracy",    "pmap.point.completeness",    "pmap.point.overall",
      "pmap.depthcam.accuracy", "pmap.depthcam.completeness", "pmap.depthcam.overall",
      "params.count",   "train.loss.initial", "train.loss.final",  "scenes.count",
  };
  return names;
}
}  // namespace

bool MetricReport::known_metric(const std::string& name) { return registry().count(name) != 0; }

void MetricReport::set(const std::string& name, double value) {
  if (!known_metric(name))
    throw std::invalid_argument("MetricReport: unknown metric name '" + name + "'");
  if (!std::isfinite(value))
    throw std::invalid_argument("MetricReport: non-finite value for '" + name + "'");
  metrics_[name] = value;
}

double MetricReport::get(const std::string& name) const {
  auto it = metrics_.find(name);
  if (it == metrics_.end())
    throw std::invalid_argument("MetricReport: metric '" + name + "' not present");
  return it->second;
}

std::string MetricReport::metrics_json() const {
  nlohmann::json j = metrics_;
  return j.dump();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["meta"]["seed"] = seed;
  j["meta"]["config_hash"] = config_hash;
  j["meta"]["wall_time_s"] = wall_time_s;
  j["metrics"] = metrics_;
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  r.seed = j.at("meta").at("seed").get<uint64_t>();
  r.config_hash = j.at("meta").at("config_hash").get<uint64_t>();
  r.wall_time_s = j.at("meta").at("wall_time_s").get<double>();
  for (const auto& [k, v] : j.at("metrics").items()) r.set(k, v.get<double>());
  return r;
}

std::string MetricReport::to_table() const {
  size_t width = 6;
  for (const auto& [k, _] : metrics_) width = std::max(width, k.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width) + 2) << "metric" << "value\n";
  os << std::string(width + 12, '-') << "\n";
  for (const auto& [k, v] : metrics_)
    os << std::left << std::setw(static_cast<int>(width) + 2) << k << std::setprecision(6)
       << std::fixed << v << "\n";
  return os.str();
}

}  // namespace mvr
