#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psdet/geometry.hpp"
#include "psdet/ps_metric.hpp"

namespace psdet {

struct AssignThresholds {
  double pos_thr = 0.7;
  double neg_thr = 0.3;
  double min_pos_thr = 0.3;
};

void validate(const AssignThresholds& thr);

enum class Label : std::uint8_t { negative = 0, positive = 1, ignore = 2 };

struct AssignResult {
  std::vector<Label> labels;
  // Set exactly for positive anchors.
  std::vector<std::optional<std::uint32_t>> gt_index;
  std::vector<double> best_score;

  std::size_t size() const { return labels.size(); }
  friend bool operator==(const AssignResult&, const AssignResult&) = default;
};

// Max-overlap assignment over a [gts x anchors] score matrix:
//   1. best_score[a] = max_g score(g, a), 0 without gts
//   2. best_score < neg_thr              -> negative
//   3. best_score >= pos_thr             -> positive, assigned to argmax gt
//   4. otherwise                         -> ignore
//   5. for g in order, g's argmax anchor becomes positive for g when its
//      score >= min_pos_thr, overriding 2-4 (and earlier rescues).
// Every argmax breaks ties toward the lowest index.
AssignResult assign(const ScoreMatrix& score, const AssignThresholds& thr);

enum class Metric { ps, iou };

std::string to_string(Metric metric);
Metric parse_metric(const std::string& name);

ScoreMatrix score_matrix(std::span<const Box> gts, std::span<const Box> anchors,
                         const DatasetNormalizers& norm, Metric metric);

AssignResult assign_with_metric(std::span<const Box> gts, std::span<const Box> anchors,
                                const DatasetNormalizers& norm, const AssignThresholds& thr,
                                Metric metric);

// Assigns each pyramid level independently and concatenates the results in
// anchor order. Rescue then runs once per (gt, level).
AssignResult assign_per_level(std::span<const Box> gts, const AnchorSet& anchors,
                              const DatasetNormalizers& norm, const AssignThresholds& thr,
                              Metric metric);

// Bucketing on gt area. `edges` are the interior boundaries, ascending; bucket
// i covers [edges[i-1], edges[i]).
struct Bucketing {
  std::vector<double> edges{32.0 * 32.0, 96.0 * 96.0};

  std::size_t bucket_count() const { return edges.size() + 1; }
  std::size_t bucket_of(double area) const;
  std::string name(std::size_t bucket) const;
};

void validate(const Bucketing& bucketing);

struct BucketStats {
  std::string name;
  double area_lo = 0.0;
  double area_hi = 0.0;  // +inf for the last bucket
  std::uint64_t gt_count = 0;
  std::uint64_t positive_anchors = 0;  // positives assigned to gts in this bucket
  std::uint64_t gts_without_positive = 0;

  double mean_positives_per_gt() const {
    return gt_count == 0 ? 0.0
                         : static_cast<double>(positive_anchors) / static_cast<double>(gt_count);
  }
  friend bool operator==(const BucketStats&, const BucketStats&) = default;
};

struct StatsReport {
  std::string metric;
  AssignThresholds thresholds;
  std::uint64_t images = 0;
  std::uint64_t anchors = 0;
  std::uint64_t positive = 0;
  std::uint64_t negative = 0;
  std::uint64_t ignore = 0;
  std::vector<BucketStats> buckets;
};

// Integer-only accumulation, so merge order never changes the report.
class StatsAccumulator {
 public:
  StatsAccumulator(std::string metric, AssignThresholds thr, Bucketing bucketing);

  // gt_areas[g] is the area of gt g of the image the result belongs to.
  void add_image(const AssignResult& result, std::span<const double> gt_areas);
  StatsAccumulator& merge(const StatsAccumulator& other);

  StatsReport report() const;

 private:
  StatsReport report_;
  Bucketing bucketing_;
};

struct ImageAssignment {
  AssignResult result;
  std::vector<double> gt_areas;
};

StatsReport assignment_stats(std::span<const ImageAssignment> images, const Bucketing& bucketing,
                             const std::string& metric = "ps",
                             const AssignThresholds& thr = {});

}  // namespace psdet
