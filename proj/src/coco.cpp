#include "psdet/coco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "psdet/counter_rng.hpp"
#include "psdet/errors.hpp"
#include "psdet/fnv.hpp"

namespace psdet {

using nlohmann::json;

const char* to_string(DataErrorKind kind) {
  switch (kind) {
    case DataErrorKind::unreadable:
      return "unreadable";
    case DataErrorKind::malformed:
      return "malformed";
    case DataErrorKind::dangling_image_id:
      return "dangling_image_id";
    case DataErrorKind::empty_dataset:
      return "empty_dataset";
  }
  return "unknown";
}

std::size_t DatasetIndex::gt_count() const {
  return std::accumulate(gts_by_image.begin(), gts_by_image.end(), std::size_t{0},
                         [](std::size_t n, const auto& v) { return n + v.size(); });
}

std::size_t DatasetIndex::crowd_count() const {
  std::size_t n = 0;
  for (const auto& gts : gts_by_image) {
    n += static_cast<std::size_t>(
        std::count_if(gts.begin(), gts.end(), [](const GroundTruth& g) { return g.iscrowd; }));
  }
  return n;
}

std::vector<Box> DatasetIndex::boxes(std::size_t image) const {
  std::vector<Box> out;
  out.reserve(gts_by_image[image].size());
  for (const auto& g : gts_by_image[image]) {
    if (!g.iscrowd) {
      out.push_back(g.box);
    }
  }
  return out;
}

namespace {

[[noreturn]] void malformed(const std::string& source, const std::string& where,
                            const std::string& what) {
  throw DataError(DataErrorKind::malformed, fmt::format("{}: {}: {}", source, where, what));
}

double number_field(const json& rec, const char* key, const std::string& source,
                    const std::string& where) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_number()) {
    malformed(source, where, fmt::format("missing or non-numeric \"{}\"", key));
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    malformed(source, where, fmt::format("non-finite \"{}\"", key));
  }
  return v;
}

std::int64_t id_field(const json& rec, const char* key, const std::string& source,
                      const std::string& where) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_number_integer()) {
    malformed(source, where, fmt::format("missing or non-integer \"{}\"", key));
  }
  return it->get<std::int64_t>();
}

}  // namespace

DatasetIndex parse_coco(const json& doc, const std::string& source) {
  if (!doc.is_object()) {
    malformed(source, "document", "top level is not an object");
  }
  const auto images_it = doc.find("images");
  if (images_it == doc.end() || !images_it->is_array()) {
    malformed(source, "document", "missing \"images\" array");
  }
  const auto anns_it = doc.find("annotations");
  if (anns_it != doc.end() && !anns_it->is_array()) {
    malformed(source, "document", "\"annotations\" is not an array");
  }

  DatasetIndex index;
  for (std::size_t i = 0; i < images_it->size(); ++i) {
    const json& rec = (*images_it)[i];
    const std::string where = fmt::format("images[{}]", i);
    if (!rec.is_object()) {
      malformed(source, where, "record is not an object");
    }
    ImageInfo info{id_field(rec, "id", source, where), number_field(rec, "width", source, where),
                   number_field(rec, "height", source, where)};
    if (!(info.width > 0.0) || !(info.height > 0.0)) {
      malformed(source, where, "image width and height must be positive");
    }
    index.images.push_back(info);
  }
  std::stable_sort(index.images.begin(), index.images.end(),
                   [](const ImageInfo& a, const ImageInfo& b) { return a.id < b.id; });

  std::unordered_map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    if (!slot.emplace(index.images[i].id, i).second) {
      malformed(source, "images", fmt::format("duplicate image id {}", index.images[i].id));
    }
  }
  index.gts_by_image.resize(index.images.size());

  if (anns_it == doc.end()) {
    return index;
  }
  for (std::size_t i = 0; i < anns_it->size(); ++i) {
    const json& rec = (*anns_it)[i];
    const std::string where = fmt::format("annotations[{}]", i);
    if (!rec.is_object()) {
      malformed(source, where, "record is not an object");
    }
    const std::int64_t image_id = id_field(rec, "image_id", source, where);
    const auto found = slot.find(image_id);
    if (found == slot.end()) {
      throw DataError(DataErrorKind::dangling_image_id,
                      fmt::format("{}: {}: image_id {} does not match any image", source, where,
                                  image_id));
    }
    const auto bbox = rec.find("bbox");
    if (bbox == rec.end() || !bbox->is_array() || bbox->size() != 4 ||
        !std::all_of(bbox->begin(), bbox->end(), [](const json& v) { return v.is_number(); })) {
      malformed(source, where, "\"bbox\" must be an array of 4 numbers [x, y, w, h]");
    }
    const double x = (*bbox)[0].get<double>();
    const double y = (*bbox)[1].get<double>();
    const double w = (*bbox)[2].get<double>();
    const double h = (*bbox)[3].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
      malformed(source, where, "non-finite bbox value");
    }
    if (!(w > 0.0) || !(h > 0.0)) {
      ++index.dropped_degenerate;
      continue;
    }

    GroundTruth gt;
    gt.box = from_topleft(x, y, w, h);
    if (const auto cat = rec.find("category_id"); cat != rec.end()) {
      if (!cat->is_number_integer()) {
        malformed(source, where, "non-integer \"category_id\"");
      }
      gt.category_id = cat->get<std::int64_t>();
    }
    if (const auto crowd = rec.find("iscrowd"); crowd != rec.end()) {
      if (crowd->is_boolean()) {
        gt.iscrowd = crowd->get<bool>();
      } else if (crowd->is_number_integer()) {
        gt.iscrowd = crowd->get<std::int64_t>() != 0;
      } else {
        malformed(source, where, "\"iscrowd\" must be 0/1");
      }
    }
    gt.area = rec.contains("area") ? number_field(rec, "area", source, where) : w * h;
    index.gts_by_image[found->second].push_back(gt);
  }

  if (index.dropped_degenerate > 0) {
    spdlog::warn("{}: dropped {} annotation(s) with zero width or height", source,
                 index.dropped_degenerate);
  }
  if (const std::size_t crowd = index.crowd_count(); crowd > 0) {
    spdlog::info("{}: {} crowd annotation(s) excluded from scoring", source, crowd);
  }
  return index;
}

DatasetIndex load_coco(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataErrorKind::unreadable, fmt::format("{}: cannot open file", path));
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(DataErrorKind::malformed,
                    fmt::format("{}: invalid JSON at byte {}: {}", path, e.byte, e.what()));
  }
  return parse_coco(doc, path);
}

json to_coco_json(const DatasetIndex& index) {
  json images = json::array();
  json anns = json::array();
  std::int64_t ann_id = 1;
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    const auto& img = index.images[i];
    images.push_back({{"id", img.id}, {"width", img.width}, {"height", img.height}});
    for (const auto& g : index.gts_by_image[i]) {
      const Box& b = g.box;
      anns.push_back({{"id", ann_id++},
                      {"image_id", img.id},
                      {"category_id", g.category_id},
                      {"iscrowd", g.iscrowd ? 1 : 0},
                      {"area", g.area},
                      {"bbox", {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.w, b.h}}});
    }
  }
  return {{"images", images}, {"annotations", anns}, {"categories", json::array({{{"id", 1}, {"name", "object"}}})}};
}

std::string dataset_hash(const DatasetIndex& index) {
  Fnv1a64 h;
  h.str("dataset/v1").u64(index.images.size());
  for (std::size_t i = 0; i < index.images.size(); ++i) {
    const auto& img = index.images[i];
    h.f64(img.width).f64(img.height);
    const auto boxes = index.boxes(i);
    h.u64(boxes.size());
    for (const Box& b : boxes) {
      h.f64(b.cx).f64(b.cy).f64(b.w).f64(b.h);
    }
  }
  return h.hex();
}

DatasetIndex synth_small_object_suite(const SmallObjectSuite& suite) {
  if (!(suite.min_side > 0.0) || suite.max_side < suite.min_side || !(suite.image_size > 0.0)) {
    throw std::invalid_argument("small-object suite needs 0 < min_side <= max_side and a positive image size");
  }
  DatasetIndex index;
  for (std::size_t i = 0; i < suite.images; ++i) {
    index.images.push_back({static_cast<std::int64_t>(i + 1), suite.image_size, suite.image_size});
    CounterStream rng(suite.seed, i);
    std::vector<GroundTruth> gts;
    for (std::size_t k = 0; k < suite.gts_per_image; ++k) {
      const double w = rng.uniform(suite.min_side, suite.max_side);
      const double h = rng.uniform(suite.min_side, suite.max_side);
      const double x = rng.uniform(0.0, suite.image_size - w);
      const double y = rng.uniform(0.0, suite.image_size - h);
      gts.push_back({from_topleft(x, y, w, h), 1, false, w * h});
    }
    index.gts_by_image.push_back(std::move(gts));
  }
  return index;
}

}  // namespace psdet
