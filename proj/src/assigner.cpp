#include "psdet/assigner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace psdet {

void validate(const AssignThresholds& thr) {
  const bool ok = std::isfinite(thr.pos_thr) && std::isfinite(thr.neg_thr) &&
                  std::isfinite(thr.min_pos_thr) && thr.pos_thr > 0.0 && thr.pos_thr <= 1.0 &&
                  thr.neg_thr >= 0.0 && thr.neg_thr < 1.0 && thr.min_pos_thr >= 0.0 &&
                  thr.min_pos_thr <= 1.0 && thr.neg_thr <= thr.pos_thr;
  if (!ok) {
    throw std::invalid_argument(fmt::format(
        "invalid thresholds pos={} neg={} min_pos={}: need 0 <= neg <= pos <= 1, pos > 0, "
        "neg < 1, min_pos in [0, 1]",
        thr.pos_thr, thr.neg_thr, thr.min_pos_thr));
  }
}

AssignResult assign(const ScoreMatrix& score, const AssignThresholds& thr) {
  validate(thr);
  for (double s : score.values()) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw std::invalid_argument(fmt::format("assign: score {} outside [0, 1]", s));
    }
  }

  const std::size_t num_gts = score.rows();
  const std::size_t num_anchors = score.cols();

  AssignResult out;
  out.labels.assign(num_anchors, Label::negative);
  out.gt_index.assign(num_anchors, std::nullopt);
  out.best_score.assign(num_anchors, 0.0);
  if (num_gts == 0) {
    return out;
  }

  // Column max/argmax in one row-major sweep; strict '>' keeps the lowest gt.
  std::vector<std::uint32_t> best_gt(num_anchors, 0);
  {
    auto first = score.row(0);
    std::copy(first.begin(), first.end(), out.best_score.begin());
  }
  for (std::size_t g = 1; g < num_gts; ++g) {
    auto row = score.row(g);
    for (std::size_t a = 0; a < num_anchors; ++a) {
      if (row[a] > out.best_score[a]) {
        out.best_score[a] = row[a];
        best_gt[a] = static_cast<std::uint32_t>(g);
      }
    }
  }

  for (std::size_t a = 0; a < num_anchors; ++a) {
    const double best = out.best_score[a];
    if (best >= thr.pos_thr) {
      out.labels[a] = Label::positive;
      out.gt_index[a] = best_gt[a];
    } else if (best >= thr.neg_thr) {
      out.labels[a] = Label::ignore;
    }
  }

  if (num_anchors == 0) {
    return out;
  }
  for (std::size_t g = 0; g < num_gts; ++g) {
    auto row = score.row(g);
    const auto it = std::max_element(row.begin(), row.end());  // first maximum
    if (*it >= thr.min_pos_thr) {
      const auto a = static_cast<std::size_t>(it - row.begin());
      out.labels[a] = Label::positive;
      out.gt_index[a] = static_cast<std::uint32_t>(g);
    }
  }
  return out;
}

std::string to_string(Metric metric) { return metric == Metric::ps ? "ps" : "iou"; }

Metric parse_metric(const std::string& name) {
  if (name == "ps") {
    return Metric::ps;
  }
  if (name == "iou") {
    return Metric::iou;
  }
  throw std::invalid_argument(fmt::format("unknown metric '{}' (expected ps or iou)", name));
}

ScoreMatrix score_matrix(std::span<const Box> gts, std::span<const Box> anchors,
                         const DatasetNormalizers& norm, Metric metric) {
  return metric == Metric::ps ? ps_matrix(gts, anchors, norm) : iou_matrix(gts, anchors);
}

AssignResult assign_with_metric(std::span<const Box> gts, std::span<const Box> anchors,
                                const DatasetNormalizers& norm, const AssignThresholds& thr,
                                Metric metric) {
  return assign(score_matrix(gts, anchors, norm, metric), thr);
}

AssignResult assign_per_level(std::span<const Box> gts, const AnchorSet& anchors,
                              const DatasetNormalizers& norm, const AssignThresholds& thr,
                              Metric metric) {
  AssignResult out;
  out.labels.reserve(anchors.boxes.size());
  out.gt_index.reserve(anchors.boxes.size());
  out.best_score.reserve(anchors.boxes.size());
  for (std::size_t lv = 0; lv < anchors.level_count(); ++lv) {
    AssignResult part = assign_with_metric(gts, anchors.level(lv), norm, thr, metric);
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    out.gt_index.insert(out.gt_index.end(), part.gt_index.begin(), part.gt_index.end());
    out.best_score.insert(out.best_score.end(), part.best_score.begin(), part.best_score.end());
  }
  return out;
}

void validate(const Bucketing& bucketing) {
  double prev = 0.0;
  for (double e : bucketing.edges) {
    if (!std::isfinite(e) || !(e > prev)) {
      throw std::invalid_argument("bucket edges must be positive, finite and strictly increasing");
    }
    prev = e;
  }
}

std::size_t Bucketing::bucket_of(double area) const {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), area) -
                                  edges.begin());
}

std::string Bucketing::name(std::size_t bucket) const {
  if (edges.size() == 2) {
    static constexpr const char* kCoco[] = {"small", "medium", "large"};
    return kCoco[bucket];
  }
  return fmt::format("bucket{}", bucket);
}

StatsAccumulator::StatsAccumulator(std::string metric, AssignThresholds thr, Bucketing bucketing)
    : bucketing_(std::move(bucketing)) {
  validate(bucketing_);
  report_.metric = std::move(metric);
  report_.thresholds = thr;
  const std::size_t n = bucketing_.bucket_count();
  report_.buckets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& b = report_.buckets[i];
    b.name = bucketing_.name(i);
    b.area_lo = i == 0 ? 0.0 : bucketing_.edges[i - 1];
    b.area_hi = i + 1 == n ? std::numeric_limits<double>::infinity() : bucketing_.edges[i];
  }
}

void StatsAccumulator::add_image(const AssignResult& result, std::span<const double> gt_areas) {
  std::vector<std::uint64_t> per_gt(gt_areas.size(), 0);
  for (std::size_t a = 0; a < result.size(); ++a) {
    switch (result.labels[a]) {
      case Label::positive: {
        ++report_.positive;
        const auto g = result.gt_index[a].value();
        if (g >= per_gt.size()) {
          throw std::invalid_argument("assignment references a gt index past gt_areas");
        }
        ++per_gt[g];
        break;
      }
      case Label::negative:
        ++report_.negative;
        break;
      case Label::ignore:
        ++report_.ignore;
        break;
    }
  }
  for (std::size_t g = 0; g < gt_areas.size(); ++g) {
    auto& b = report_.buckets[bucketing_.bucket_of(gt_areas[g])];
    ++b.gt_count;
    b.positive_anchors += per_gt[g];
    if (per_gt[g] == 0) {
      ++b.gts_without_positive;
    }
  }
  ++report_.images;
  report_.anchors += result.size();
}

StatsAccumulator& StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.bucketing_.edges != bucketing_.edges || other.report_.metric != report_.metric) {
    throw std::invalid_argument("cannot merge statistics with different metric or buckets");
  }
  report_.images += other.report_.images;
  report_.anchors += other.report_.anchors;
  report_.positive += other.report_.positive;
  report_.negative += other.report_.negative;
  report_.ignore += other.report_.ignore;
  for (std::size_t i = 0; i < report_.buckets.size(); ++i) {
    auto& b = report_.buckets[i];
    const auto& o = other.report_.buckets[i];
    b.gt_count += o.gt_count;
    b.positive_anchors += o.positive_anchors;
    b.gts_without_positive += o.gts_without_positive;
  }
  return *this;
}

StatsReport StatsAccumulator::report() const { return report_; }

StatsReport assignment_stats(std::span<const ImageAssignment> images, const Bucketing& bucketing,
                             const std::string& metric, const AssignThresholds& thr) {
  StatsAccumulator acc(metric, thr, bucketing);
  for (const auto& img : images) {
    acc.add_image(img.result, img.gt_areas);
  }
  return acc.report();
}

}  // namespace psdet
