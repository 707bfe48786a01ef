#include "psdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace psdet {

bool is_valid(const Box& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0;
}

Box make_box(double cx, double cy, double w, double h) {
  Box b{cx, cy, w, h};
  if (!is_valid(b)) {
    throw std::invalid_argument(
        fmt::format("invalid box (cx={}, cy={}, w={}, h={})", cx, cy, w, h));
  }
  return b;
}

Box from_topleft(double x, double y, double w, double h) {
  return make_box(x + w / 2.0, y + h / 2.0, w, h);
}

namespace {

struct Corners {
  double x1, y1, x2, y2;
};

inline Corners corners(const Box& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline double iou_corners(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  // Areas use the same corner arithmetic as the intersection so identical
  // boxes give inter == area and the ratio is exactly 1.
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  const double inter = iw * ih;
  return inter / ((area_a + area_b) - inter);
}

}  // namespace

double iou(const Box& a, const Box& b) { return iou_corners(corners(a), corners(b)); }

ScoreMatrix iou_matrix(std::span<const Box> gts, std::span<const Box> anchors) {
  ScoreMatrix out(gts.size(), anchors.size());
  std::vector<Corners> ac(anchors.size());
  std::transform(anchors.begin(), anchors.end(), ac.begin(), corners);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Corners gc = corners(gts[g]);
    auto row = out.row(g);
    for (std::size_t a = 0; a < ac.size(); ++a) {
      row[a] = iou_corners(gc, ac[a]);
    }
  }
  return out;
}

void validate(const AnchorGridSpec& spec) {
  if (spec.levels.empty() || spec.ratios.empty() || spec.scales.empty()) {
    throw std::invalid_argument("anchor spec needs at least one level, ratio and scale");
  }
  if (!(spec.image_w > 0.0) || !(spec.image_h > 0.0) || !std::isfinite(spec.image_w) ||
      !std::isfinite(spec.image_h)) {
    throw std::invalid_argument("anchor spec image size must be positive");
  }
  double prev = 0.0;
  for (const auto& lv : spec.levels) {
    if (!(lv.stride > prev) || !std::isfinite(lv.stride)) {
      throw std::invalid_argument("anchor strides must be positive and strictly increasing");
    }
    if (!(lv.base_size > 0.0) || !std::isfinite(lv.base_size)) {
      throw std::invalid_argument("anchor base_size must be positive");
    }
    prev = lv.stride;
  }
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!std::all_of(spec.ratios.begin(), spec.ratios.end(), positive) ||
      !std::all_of(spec.scales.begin(), spec.scales.end(), positive)) {
    throw std::invalid_argument("anchor ratios and scales must be positive");
  }
}

std::size_t expected_anchor_count(const AnchorGridSpec& spec) {
  std::size_t total = 0;
  for (const auto& lv : spec.levels) {
    const auto nx = static_cast<std::size_t>(std::ceil(spec.image_w / lv.stride));
    const auto ny = static_cast<std::size_t>(std::ceil(spec.image_h / lv.stride));
    total += nx * ny * spec.ratios.size() * spec.scales.size();
  }
  return total;
}

namespace {

Box clip_to_image(const Box& b, double image_w, double image_h) {
  const double x1 = std::clamp(b.cx - b.w / 2.0, 0.0, image_w);
  const double x2 = std::clamp(b.cx + b.w / 2.0, 0.0, image_w);
  const double y1 = std::clamp(b.cy - b.h / 2.0, 0.0, image_h);
  const double y2 = std::clamp(b.cy + b.h / 2.0, 0.0, image_h);
  return Box{(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
}

}  // namespace

AnchorSet generate_anchors(const AnchorGridSpec& spec) {
  validate(spec);
  const std::size_t count = expected_anchor_count(spec);
  if (count == 0) {
    throw std::invalid_argument("anchor spec produces zero anchors");
  }

  struct Shape {
    double w, h;
  };

  AnchorSet out;
  out.boxes.reserve(count);
  out.level_offsets.reserve(spec.levels.size() + 1);
  out.level_offsets.push_back(0);

  for (const auto& lv : spec.levels) {
    std::vector<Shape> shapes;
    shapes.reserve(spec.ratios.size() * spec.scales.size());
    for (double ratio : spec.ratios) {
      for (double scale : spec.scales) {
        const double side = lv.base_size * scale;
        shapes.push_back({side * std::sqrt(1.0 / ratio), side * std::sqrt(ratio)});
      }
    }
    const auto nx = static_cast<std::size_t>(std::ceil(spec.image_w / lv.stride));
    const auto ny = static_cast<std::size_t>(std::ceil(spec.image_h / lv.stride));
    for (std::size_t row = 0; row < ny; ++row) {
      const double cy = (static_cast<double>(row) + 0.5) * lv.stride;
      for (std::size_t col = 0; col < nx; ++col) {
        const double cx = (static_cast<double>(col) + 0.5) * lv.stride;
        for (const Shape& s : shapes) {
          Box b{cx, cy, s.w, s.h};
          if (spec.clip) {
            b = clip_to_image(b, spec.image_w, spec.image_h);
            // Only cells whose center lies past the image edge can collapse.
            if (!(b.w > 0.0) || !(b.h > 0.0)) {
              continue;
            }
          }
          out.boxes.push_back(b);
        }
      }
    }
    out.level_offsets.push_back(out.boxes.size());
  }
  if (out.boxes.empty()) {
    throw std::invalid_argument("anchor spec produces zero anchors after clipping");
  }
  return out;
}

AnchorGridSpec default_anchor_spec(double image_w, double image_h) {
  AnchorGridSpec spec;
  for (double stride : {4.0, 8.0, 16.0, 32.0, 64.0}) {
    spec.levels.push_back({stride, 8.0 * stride});
  }
  spec.ratios = {0.5, 1.0, 2.0};
  spec.scales = {1.0};
  spec.image_w = image_w;
  spec.image_h = image_h;
  return spec;
}

}  // namespace psdet
