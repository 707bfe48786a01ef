#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace psdet {

// Center-form axis-aligned box in pixels. Construct through make_box or
// from_topleft so that w > 0, h > 0 and all fields are finite.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

Box make_box(double cx, double cy, double w, double h);

// COCO [x, y, w, h] convention.
Box from_topleft(double x, double y, double w, double h);

bool is_valid(const Box& b);

// Intersection over union. iou(a, a) == 1 exactly and iou(a, b) == iou(b, a).
double iou(const Box& a, const Box& b);

// Dense row-major matrix, rows = ground truths, cols = anchors.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> values() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

ScoreMatrix iou_matrix(std::span<const Box> gts, std::span<const Box> anchors);

struct PyramidLevel {
  double stride = 8.0;
  double base_size = 32.0;
};

struct AnchorGridSpec {
  std::vector<PyramidLevel> levels;
  std::vector<double> ratios;  // h / w
  std::vector<double> scales;
  double image_w = 0.0;
  double image_h = 0.0;
  // Clip anchors to the image rectangle; anchors that collapse to zero extent
  // are dropped, so expected_anchor_count only holds with clip off.
  bool clip = false;
};

// Throws std::invalid_argument on an unusable spec.
void validate(const AnchorGridSpec& spec);

struct AnchorSet {
  std::vector<Box> boxes;
  // level_offsets[i]..level_offsets[i+1] is the slice of level i; size L + 1.
  std::vector<std::size_t> level_offsets;

  std::size_t level_count() const {
    return level_offsets.empty() ? 0 : level_offsets.size() - 1;
  }
  std::span<const Box> level(std::size_t i) const {
    return std::span<const Box>(boxes).subspan(level_offsets[i],
                                               level_offsets[i + 1] - level_offsets[i]);
  }
};

// Level-major, then row, column, ratio, scale. Cell (col, row) is centered at
// ((col + 0.5) * stride, (row + 0.5) * stride).
AnchorSet generate_anchors(const AnchorGridSpec& spec);

std::size_t expected_anchor_count(const AnchorGridSpec& spec);

// Five-level RPN layout: strides 4..64, base size 8 * stride, ratios 0.5/1/2.
AnchorGridSpec default_anchor_spec(double image_w, double image_h);

}  // namespace psdet
