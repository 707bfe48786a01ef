#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "psdet/assigner.hpp"
#include "psdet/geometry.hpp"
#include "psdet/ps_metric.hpp"

namespace psdet {

// Anchor config files hold {"levels": [{"stride", "base_size"}...], "ratios",
// "scales", "clip"}; image size comes from each dataset image.
AnchorGridSpec anchor_spec_from_json(const nlohmann::json& doc);
nlohmann::json anchor_spec_to_json(const AnchorGridSpec& spec);
AnchorGridSpec load_anchor_spec(const std::string& path);

// Hash of every anchor setting except the image size.
std::string anchor_spec_hash(const AnchorGridSpec& spec);

struct NormalizerCache {
  DatasetNormalizers normalizers;
  std::uint64_t pair_count = 0;
  std::string dataset_hash;
  std::string anchor_spec_hash;
};

nlohmann::json to_json(const NormalizerCache& cache);
NormalizerCache normalizer_cache_from_json(const nlohmann::json& doc);

void write_normalizer_cache(const NormalizerCache& cache, const std::string& path);
// Empty when the file does not exist; throws DataError when it exists but is unusable.
std::optional<NormalizerCache> read_normalizer_cache(const std::string& path);

}  // namespace psdet
