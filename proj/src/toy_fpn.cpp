#include "psdet/toy_fpn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "psdet/counter_rng.hpp"

namespace psdet {

namespace {

constexpr std::uint64_t kOffsetPixel = std::numeric_limits<std::uint64_t>::max();

// Domain tags keep the seeded streams of different purposes apart.
constexpr std::uint64_t kTagFeature = 0x46454154;    // "FEAT"
constexpr std::uint64_t kTagReduce = 0x52454455;     // "REDU"
constexpr std::uint64_t kTagProject = 0x50524f4a;    // "PROJ"

}  // namespace

void validate(const ToyPyramidConfig& cfg) {
  if (cfg.levels < 2) {
    throw std::invalid_argument("toy pyramid needs at least 2 levels");
  }
  if (cfg.batch < 1 || cfg.fused_channels < 1 || cfg.base_resolution < 1) {
    throw std::invalid_argument("toy pyramid batch, fused channels and resolution must be >= 1");
  }
  if (cfg.levels > 31 || cfg.base_resolution % (std::size_t{1} << (cfg.levels - 1)) != 0) {
    throw std::invalid_argument(fmt::format(
        "base resolution {} cannot be halved {} times", cfg.base_resolution, cfg.levels - 1));
  }
  if (!cfg.lateral_channels.empty()) {
    if (cfg.lateral_channels.size() != cfg.levels) {
      throw std::invalid_argument(fmt::format("{} lateral channel counts given for {} levels",
                                              cfg.lateral_channels.size(), cfg.levels));
    }
    for (std::size_t c : cfg.lateral_channels) {
      if (c < 1) {
        throw std::invalid_argument("lateral channel counts must be >= 1");
      }
    }
  }
}

std::size_t lateral_channels_at(const ToyPyramidConfig& cfg, std::size_t level) {
  return cfg.lateral_channels.empty() ? 16 + 8 * level : cfg.lateral_channels[level];
}

std::size_t resolution_at(const ToyPyramidConfig& cfg, std::size_t level) {
  return cfg.base_resolution >> level;
}

LateralPyramids synth_pyramid(const ToyPyramidConfig& cfg) {
  validate(cfg);
  LateralPyramids out(cfg.batch);
  for (std::size_t j = 0; j < cfg.batch; ++j) {
    out[j].reserve(cfg.levels);
    for (std::size_t i = 0; i < cfg.levels; ++i) {
      const std::size_t res = resolution_at(cfg, i);
      FeatureMap map(lateral_channels_at(cfg, i), res, res);
      for (std::size_t c = 0; c < map.channels; ++c) {
        const double offset =
            0.5 * to_symmetric(counter_hash(cfg.seed, {kTagFeature, i, j, c, kOffsetPixel}));
        for (std::size_t p = 0; p < map.pixels(); ++p) {
          map.data[c * map.pixels() + p] =
              offset + to_symmetric(counter_hash(cfg.seed, {kTagFeature, i, j, c, p}));
        }
      }
      out[j].push_back(std::move(map));
    }
  }
  return out;
}

Weights make_reduction(std::uint64_t seed, std::size_t level, std::size_t out_channels,
                       std::size_t in_channels) {
  Weights w{out_channels, in_channels, std::vector<double>(out_channels * in_channels)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_channels));
  for (std::size_t r = 0; r < out_channels; ++r) {
    for (std::size_t c = 0; c < in_channels; ++c) {
      w.data[r * in_channels + c] =
          scale * to_symmetric(counter_hash(seed, {kTagReduce, level, in_channels, r, c}));
    }
  }
  return w;
}

namespace {

FeatureMap reduce(const FeatureMap& in, const Weights& w) {
  if (w.cols != in.channels) {
    throw std::invalid_argument(fmt::format("reduction expects {} input channels, map has {}",
                                            w.cols, in.channels));
  }
  FeatureMap out(w.rows, in.height, in.width);
  const std::size_t px = in.pixels();
  for (std::size_t r = 0; r < w.rows; ++r) {
    double* dst = out.data.data() + r * px;
    for (std::size_t c = 0; c < in.channels; ++c) {
      const double k = w(r, c);
      const double* src = in.data.data() + c * px;
      for (std::size_t p = 0; p < px; ++p) {
        dst[p] += k * src[p];
      }
    }
  }
  return out;
}

}  // namespace

std::vector<FeatureMap> fuse_topdown(const std::vector<FeatureMap>& laterals,
                                     const std::vector<Weights>& reductions) {
  if (laterals.empty()) {
    throw std::invalid_argument("fuse_topdown needs at least one level");
  }
  if (reductions.size() != laterals.size()) {
    throw std::invalid_argument("fuse_topdown needs one reduction per level");
  }
  const std::size_t fused = reductions.front().rows;
  for (std::size_t i = 0; i < laterals.size(); ++i) {
    if (reductions[i].rows != fused) {
      throw std::invalid_argument("all reductions must produce the same channel count");
    }
    if (i + 1 < laterals.size()) {
      const auto& lo = laterals[i];
      const auto& hi = laterals[i + 1];
      if (lo.height != 2 * hi.height || lo.width != 2 * hi.width) {
        throw std::invalid_argument(fmt::format(
            "level {} is {}x{} but level {} is {}x{}; resolutions must halve per level", i,
            lo.height, lo.width, i + 1, hi.height, hi.width));
      }
    }
  }

  std::vector<FeatureMap> out(laterals.size());
  const std::size_t top = laterals.size() - 1;
  out[top] = reduce(laterals[top], reductions[top]);
  for (std::size_t i = top; i-- > 0;) {
    FeatureMap p = reduce(laterals[i], reductions[i]);
    const FeatureMap& upper = out[i + 1];
    for (std::size_t c = 0; c < p.channels; ++c) {
      for (std::size_t y = 0; y < p.height; ++y) {
        for (std::size_t x = 0; x < p.width; ++x) {
          p.at(c, y, x) += upper.at(c, y / 2, x / 2);
        }
      }
    }
    out[i] = std::move(p);
  }
  return out;
}

std::vector<FeatureMap> fuse_topdown(const std::vector<FeatureMap>& laterals,
                                     std::size_t fused_channels, std::uint64_t reduction_seed) {
  std::vector<Weights> reductions;
  reductions.reserve(laterals.size());
  for (std::size_t i = 0; i < laterals.size(); ++i) {
    reductions.push_back(make_reduction(reduction_seed, i, fused_channels, laterals[i].channels));
  }
  return fuse_topdown(laterals, reductions);
}

Weights make_projection(std::uint64_t seed, std::size_t dim, std::size_t channels) {
  Weights w{dim, channels, std::vector<double>(dim * channels)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      w.data[r * channels + c] =
          scale * to_symmetric(counter_hash(seed, {kTagProject, dim, channels, r, c}));
    }
  }
  return w;
}

std::vector<double> encode(const FeatureMap& map, const Weights& projection) {
  if (projection.cols != map.channels) {
    throw std::invalid_argument(fmt::format("projection expects {} channels, map has {}",
                                            projection.cols, map.channels));
  }
  std::vector<double> pooled(map.channels, 0.0);
  const std::size_t px = map.pixels();
  for (std::size_t c = 0; c < map.channels; ++c) {
    double sum = 0.0;
    for (std::size_t p = 0; p < px; ++p) {
      sum += map.data[c * px + p];
    }
    pooled[c] = sum / static_cast<double>(px);
  }
  std::vector<double> out(projection.rows, 0.0);
  for (std::size_t r = 0; r < projection.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < map.channels; ++c) {
      acc += projection(r, c) * pooled[c];
    }
    out[r] = acc;
  }
  return out;
}

std::vector<double> encode(const FeatureMap& map, std::uint64_t projection_seed, std::size_t dim) {
  return encode(map, make_projection(projection_seed, dim, map.channels));
}

EmbeddingBatch build_embedding_batch(const ToyPyramidConfig& cfg, std::size_t dim) {
  if (dim < 1) {
    throw std::invalid_argument("embedding dimension must be >= 1");
  }
  const LateralPyramids laterals = synth_pyramid(cfg);
  const std::uint64_t reduction_seed = counter_hash(cfg.seed, {kTagReduce});
  std::array<std::uint64_t, kFamilyCount> encoder_seed{};
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    encoder_seed[f] = counter_hash(cfg.seed, {kTagProject, f});
  }

  EmbeddingBatch batch(cfg.levels, cfg.batch, dim);
  auto store = [&](Family f, std::size_t level, std::size_t image, const FeatureMap& map) {
    const auto v = encode(map, encoder_seed[static_cast<std::size_t>(f)], dim);
    std::copy(v.begin(), v.end(), batch.at(f, level, image).begin());
  };
  for (std::size_t j = 0; j < cfg.batch; ++j) {
    const auto fused = fuse_topdown(laterals[j], cfg.fused_channels, reduction_seed);
    for (std::size_t i = 0; i < cfg.levels; ++i) {
      store(Family::spatial_lateral, i, j, laterals[j][i]);
      store(Family::semantic_lateral, i, j, laterals[j][i]);
      store(Family::spatial_fused, i, j, fused[i]);
      store(Family::semantic_fused, i, j, fused[i]);
    }
  }
  return batch;
}

}  // namespace psdet
