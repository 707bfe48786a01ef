#pragma once

#include <cstddef>

#include "psdet/contrast.hpp"

namespace psdet {

struct GradCheckReport {
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Central differences of spatial_loss + semantic_loss, one entry at a time.
// Per-entry relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor):
// a pure relative error except where both values are below `floor`.
GradCheckReport check_contrast_grad(const EmbeddingBatch& batch, const ContrastConfig& cfg,
                                    double step = 1e-4, double tolerance = 1e-5,
                                    double floor = 1e-3);

}  // namespace psdet
