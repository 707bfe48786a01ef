#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psdet/geometry.hpp"

namespace psdet {

struct ImageInfo {
  std::int64_t id = 0;
  double width = 0.0;
  double height = 0.0;
};

struct GroundTruth {
  Box box;
  std::int64_t category_id = 0;
  bool iscrowd = false;
  double area = 0.0;  // "area" field of the record, w * h when absent
};

// Images sorted by id; gts_by_image[i] belongs to images[i], in file order.
struct DatasetIndex {
  std::vector<ImageInfo> images;
  std::vector<std::vector<GroundTruth>> gts_by_image;
  std::size_t dropped_degenerate = 0;  // zero-width / zero-height boxes skipped at load

  std::size_t image_count() const { return images.size(); }
  std::size_t gt_count() const;
  std::size_t crowd_count() const;

  // Non-crowd boxes of image i; crowd regions never enter scoring.
  std::vector<Box> boxes(std::size_t image) const;
};

// Throws DataError naming the source and the offending record.
DatasetIndex parse_coco(const nlohmann::json& doc, const std::string& source = "<memory>");
DatasetIndex load_coco(const std::string& path);

nlohmann::json to_coco_json(const DatasetIndex& index);

// Content hash over image sizes and non-crowd boxes, in index order.
std::string dataset_hash(const DatasetIndex& index);

// Seeded scene generator: square images with uniformly placed boxes whose
// sides are drawn independently from [min_side, max_side].
struct SmallObjectSuite {
  std::size_t images = 50;
  std::size_t gts_per_image = 20;
  double image_size = 800.0;
  double min_side = 4.0;
  double max_side = 16.0;
  std::uint64_t seed = 2024;
};

DatasetIndex synth_small_object_suite(const SmallObjectSuite& suite);

}  // namespace psdet
