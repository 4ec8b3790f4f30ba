#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace mvr {

// Named scalar metrics plus run metadata. Metric names are restricted to a
// fixed registry so that reports stay schema-stable; values must be finite.
class MetricReport {
 public:
  static bool known_metric(const std::string& name);

  void set(const std::string& name, double value);
  double get(const std::string& name) const;
  bool has(const std::string& name) const { return metrics_.count(name) != 0; }
  const std::map<std::string, double>& metrics() const { return metrics_; }

  uint64_t seed = 0;
  uint64_t config_hash = 0;
  double wall_time_s = 0.0;

  // JSON: {"meta": {...}, "metrics": {...}} with sorted keys (bit-stable for
  // identical metric payloads).
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  std::string metrics_json() const;  // metrics section only (determinism checks)

  // Aligned plain-text table.
  std::string to_table() const;

 private:
  std::map<std::string, double> metrics_;
};

}  // namespace mvr
