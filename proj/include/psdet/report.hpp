#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psdet/assigner.hpp"
#include "psdet/geometry.hpp"
#include "psdet/ps_metric.hpp"

namespace psdet {

inline constexpr int kReportSchemaVersion = 1;

enum class AssignMode { pooled, per_level };

std::string to_string(AssignMode mode);
AssignMode parse_assign_mode(const std::string& name);

// Everything cmd_assign writes. Contains no timestamps or paths so that
// identical inputs serialize to identical bytes.
struct AssignReport {
  std::string dataset_hash;
  std::string anchor_spec_hash;
  AnchorGridSpec anchor_spec;
  AssignMode mode = AssignMode::pooled;
  // Unset when the dataset has no gts (nothing for the normalizers to average).
  std::optional<DatasetNormalizers> normalizers;
  std::uint64_t pair_count = 0;
  AssignThresholds thresholds;
  std::vector<double> bucket_edges;
  std::vector<StatsReport> metrics;
};

nlohmann::json to_json(const AssignReport& report);

// One row per (metric, bucket); run-level totals repeat on every row.
std::string to_csv(const AssignReport& report);

extern const char* const kCsvHeader;

}  // namespace psdet
