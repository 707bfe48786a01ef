#include "psdet/config_io.hpp"

#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "psdet/errors.hpp"
#include "psdet/fnv.hpp"

namespace psdet {

using nlohmann::json;

namespace {

std::vector<double> number_list(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) {
    throw UsageError(fmt::format("anchor spec: \"{}\" must be an array of numbers", key));
  }
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) {
      throw UsageError(fmt::format("anchor spec: \"{}\" must be an array of numbers", key));
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

AnchorGridSpec anchor_spec_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw UsageError("anchor spec must be a JSON object");
  }
  AnchorGridSpec spec;
  const auto levels = doc.find("levels");
  if (levels == doc.end() || !levels->is_array()) {
    throw UsageError("anchor spec: \"levels\" must be an array");
  }
  for (const auto& lv : *levels) {
    if (!lv.is_object() || !lv.contains("stride") || !lv.contains("base_size") ||
        !lv["stride"].is_number() || !lv["base_size"].is_number()) {
      throw UsageError("anchor spec: each level needs numeric \"stride\" and \"base_size\"");
    }
    spec.levels.push_back({lv["stride"].get<double>(), lv["base_size"].get<double>()});
  }
  spec.ratios = number_list(doc, "ratios");
  spec.scales = number_list(doc, "scales");
  spec.clip = doc.value("clip", false);
  // Placeholder size so the remaining fields can be validated now.
  spec.image_w = spec.image_h = 1.0;
  try {
    validate(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(fmt::format("anchor spec: {}", e.what()));
  }
  spec.image_w = spec.image_h = 0.0;
  return spec;
}

json anchor_spec_to_json(const AnchorGridSpec& spec) {
  json levels = json::array();
  for (const auto& lv : spec.levels) {
    levels.push_back({{"stride", lv.stride}, {"base_size", lv.base_size}});
  }
  return {{"levels", levels}, {"ratios", spec.ratios}, {"scales", spec.scales}, {"clip", spec.clip}};
}

AnchorGridSpec load_anchor_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError(fmt::format("cannot open anchor spec {}", path));
  }
  try {
    return anchor_spec_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
}

std::string anchor_spec_hash(const AnchorGridSpec& spec) {
  Fnv1a64 h;
  h.str("anchors/v1").u64(spec.levels.size());
  for (const auto& lv : spec.levels) {
    h.f64(lv.stride).f64(lv.base_size);
  }
  h.u64(spec.ratios.size());
  for (double r : spec.ratios) {
    h.f64(r);
  }
  h.u64(spec.scales.size());
  for (double s : spec.scales) {
    h.f64(s);
  }
  h.u64(spec.clip ? 1 : 0);
  return h.hex();
}

json to_json(const NormalizerCache& cache) {
  return {{"m", cache.normalizers.m},
          {"n", cache.normalizers.n},
          {"pair_count", cache.pair_count},
          {"dataset_hash", cache.dataset_hash},
          {"anchor_spec_hash", cache.anchor_spec_hash}};
}

NormalizerCache normalizer_cache_from_json(const json& doc) {
  try {
    NormalizerCache cache;
    cache.normalizers.m = doc.at("m").get<double>();
    cache.normalizers.n = doc.at("n").get<double>();
    cache.pair_count = doc.at("pair_count").get<std::uint64_t>();
    cache.dataset_hash = doc.at("dataset_hash").get<std::string>();
    cache.anchor_spec_hash = doc.at("anchor_spec_hash").get<std::string>();
    validate(cache.normalizers);
    return cache;
  } catch (const json::exception& e) {
    throw DataError(DataErrorKind::malformed, fmt::format("normalizer cache: {}", e.what()));
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorKind::malformed, fmt::format("normalizer cache: {}", e.what()));
  }
}

void write_normalizer_cache(const NormalizerCache& cache, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream out(path);
  if (!out) {
    throw UsageError(fmt::format("cannot write normalizer cache {}", path));
  }
  out << to_json(cache).dump(2) << '\n';
}

std::optional<NormalizerCache> read_normalizer_cache(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    return std::nullopt;
  }
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataErrorKind::unreadable, fmt::format("{}: cannot open file", path));
  }
  try {
    return normalizer_cache_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(DataErrorKind::malformed, fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
}

}  // namespace psdet
