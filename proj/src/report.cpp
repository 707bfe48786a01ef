#include "psdet/report.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "psdet/config_io.hpp"
#include "psdet/errors.hpp"

namespace psdet {

using nlohmann::json;

const char* const kCsvHeader =
    "metric,bucket,area_lo,area_hi,gt_count,positive_anchors,mean_positives_per_gt,"
    "gts_without_positive,images,anchors,positive,negative,ignore";

std::string to_string(AssignMode mode) {
  return mode == AssignMode::pooled ? "pooled" : "per-level";
}

AssignMode parse_assign_mode(const std::string& name) {
  if (name == "pooled") {
    return AssignMode::pooled;
  }
  if (name == "per-level") {
    return AssignMode::per_level;
  }
  throw UsageError(fmt::format("unknown assign mode '{}' (expected pooled or per-level)", name));
}

namespace {

json thresholds_json(const AssignThresholds& thr) {
  return {{"pos_thr", thr.pos_thr}, {"neg_thr", thr.neg_thr}, {"min_pos_thr", thr.min_pos_thr}};
}

json bucket_json(const BucketStats& b) {
  return {{"name", b.name},
          {"area_lo", b.area_lo},
          {"area_hi", std::isinf(b.area_hi) ? json(nullptr) : json(b.area_hi)},
          {"gt_count", b.gt_count},
          {"positive_anchors", b.positive_anchors},
          {"mean_positives_per_gt", b.mean_positives_per_gt()},
          {"gts_without_positive", b.gts_without_positive}};
}

}  // namespace

json to_json(const AssignReport& report) {
  json metrics = json::array();
  for (const auto& s : report.metrics) {
    json buckets = json::array();
    for (const auto& b : s.buckets) {
      buckets.push_back(bucket_json(b));
    }
    metrics.push_back({{"metric", s.metric},
                       {"images", s.images},
                       {"anchors", s.anchors},
                       {"positive", s.positive},
                       {"negative", s.negative},
                       {"ignore", s.ignore},
                       {"buckets", buckets}});
  }
  json norm = nullptr;
  if (report.normalizers) {
    norm = {{"m", report.normalizers->m}, {"n", report.normalizers->n}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"dataset_hash", report.dataset_hash},
          {"anchor_spec_hash", report.anchor_spec_hash},
          {"anchor_spec", anchor_spec_to_json(report.anchor_spec)},
          {"assign_mode", to_string(report.mode)},
          {"normalizers", norm},
          {"pair_count", report.pair_count},
          {"thresholds", thresholds_json(report.thresholds)},
          {"bucket_edges", report.bucket_edges},
          {"metrics", metrics}};
}

std::string to_csv(const AssignReport& report) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& s : report.metrics) {
    for (const auto& b : s.buckets) {
      // {} formats doubles as the shortest round-trip representation.
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", s.metric, b.name, b.area_lo,
                         b.area_hi, b.gt_count, b.positive_anchors, b.mean_positives_per_gt(),
                         b.gts_without_positive, s.images, s.anchors, s.positive, s.negative,
                         s.ignore);
    }
  }
  return out.str();
}

}  // namespace psdet
