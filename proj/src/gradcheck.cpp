#include "psdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace psdet {

GradCheckReport check_contrast_grad(const EmbeddingBatch& batch, const ContrastConfig& cfg,
                                    double step, double tolerance, double floor) {
  const EmbeddingBatch analytic = contrast_grad(batch, cfg);
  auto objective = [&cfg](const EmbeddingBatch& b) {
    return spatial_loss(b, cfg) + semantic_loss(b, cfg);
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  EmbeddingBatch probe = batch;
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    const auto family = static_cast<Family>(f);
    auto& values = probe.data(family);
    const auto& grad = analytic.data(family);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = objective(probe);
      values[i] = saved - step;
      const double down = objective(probe);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double abs_err = std::abs(grad[i] - numeric);
      const double scale = std::max({std::abs(grad[i]), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / scale);
      ++report.entries;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace psdet
