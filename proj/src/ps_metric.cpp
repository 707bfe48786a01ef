#include "psdet/ps_metric.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace psdet {

namespace {

constexpr double kMinScore = std::numeric_limits<double>::min();

inline double position_term(const Box& g, const Box& a, double m, double n) {
  const double dx = m * (g.cx - a.cx) / (g.w + a.w);
  const double dy = n * (g.cy - a.cy) / (g.h + a.h);
  return std::sqrt(dx * dx + dy * dy);
}

inline double shape_term(const Box& g, const Box& a, double m, double n) {
  const double dw = m * (g.w - a.w) / (g.w + a.w);
  const double dh = n * (g.h - a.h) / (g.h + a.h);
  return std::sqrt(dw * dw + dh * dh);
}

inline double ps_score(const Box& g, const Box& a, double m, double n) {
  const double s = std::exp(-(position_term(g, a, m, n) + shape_term(g, a, m, n)));
  return s < kMinScore ? kMinScore : s;
}

}  // namespace

void validate(const DatasetNormalizers& norm) {
  if (!std::isfinite(norm.m) || !std::isfinite(norm.n) || norm.m < 0.0 || norm.n < 0.0) {
    throw std::invalid_argument("normalizers m, n must be finite and non-negative");
  }
}

double position_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm) {
  return position_term(gt, anchor, norm.m, norm.n);
}

double shape_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm) {
  return shape_term(gt, anchor, norm.m, norm.n);
}

double pairwise_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm) {
  return ps_score(gt, anchor, norm.m, norm.n);
}

NormalizerAccumulator accumulate(NormalizerAccumulator acc, std::span<const Box> gts,
                                 std::span<const Box> anchors) {
  // The image total is formed first and added once, so accumulating an image
  // into `acc` equals merging a fresh accumulator of that image into `acc`.
  double image_x = 0.0;
  double image_y = 0.0;
  for (const Box& g : gts) {
    double sx = 0.0;
    double sy = 0.0;
    for (const Box& a : anchors) {
      sx += std::abs(g.cx - a.cx) / (g.w + a.w);
      sy += std::abs(g.cy - a.cy) / (g.h + a.h);
    }
    image_x += sx;
    image_y += sy;
  }
  acc.sum_x += image_x;
  acc.sum_y += image_y;
  acc.pair_count += static_cast<std::uint64_t>(gts.size()) * anchors.size();
  return acc;
}

DatasetNormalizers finalize(const NormalizerAccumulator& acc) {
  if (acc.pair_count == 0) {
    throw std::domain_error("cannot compute normalizers: dataset has no gt/anchor pairs");
  }
  const auto count = static_cast<double>(acc.pair_count);
  return {acc.sum_x / count, acc.sum_y / count};
}

ScoreMatrix ps_matrix(std::span<const Box> gts, std::span<const Box> anchors,
                      const DatasetNormalizers& norm) {
  validate(norm);
  ScoreMatrix out(gts.size(), anchors.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box gt = gts[g];
    auto row = out.row(g);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      row[a] = ps_score(gt, anchors[a], norm.m, norm.n);
    }
  }
  return out;
}

}  // namespace psdet
