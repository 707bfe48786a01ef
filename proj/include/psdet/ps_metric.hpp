#pragma once

#include <cstdint>
#include <span>

#include "psdet/geometry.hpp"

namespace psdet {

// Dataset-wide scalars m (x / width terms) and n (y / height terms).
struct DatasetNormalizers {
  double m = 0.0;
  double n = 0.0;
};

void validate(const DatasetNormalizers& norm);

// Running sums for the normalizers over (gt, anchor) pairs of every image.
// Merging is field-wise addition.
struct NormalizerAccumulator {
  double sum_x = 0.0;
  double sum_y = 0.0;
  std::uint64_t pair_count = 0;

  NormalizerAccumulator& merge(const NormalizerAccumulator& other) {
    sum_x += other.sum_x;
    sum_y += other.sum_y;
    pair_count += other.pair_count;
    return *this;
  }
  friend bool operator==(const NormalizerAccumulator&, const NormalizerAccumulator&) = default;
};

// sqrt((m (x_g - x) / (w_g + w))^2 + (n (y_g - y) / (h_g + h))^2)
double position_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm);

// sqrt((m (w_g - w) / (w_g + w))^2 + (n (h_g - h) / (h_g + h))^2)
double shape_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm);

// exp(-(position + shape)), floored at the smallest normal double so the
// score stays strictly positive where the exponential would underflow.
double pairwise_similarity(const Box& gt, const Box& anchor, const DatasetNormalizers& norm);

// Adds every (gt, anchor) pair of one image.
NormalizerAccumulator accumulate(NormalizerAccumulator acc, std::span<const Box> gts,
                                 std::span<const Box> anchors);

// Throws std::domain_error when no pairs were accumulated.
DatasetNormalizers finalize(const NormalizerAccumulator& acc);

// Entry (g, a) is bit-identical to pairwise_similarity(gts[g], anchors[a], norm).
ScoreMatrix ps_matrix(std::span<const Box> gts, std::span<const Box> anchors,
                      const DatasetNormalizers& norm);

}  // namespace psdet
