#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "psdet/contrast.hpp"

namespace psdet {

// Channel-major feature map: data[(c * height + y) * width + x].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::size_t pixels() const { return height * width; }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// Row-major [rows x cols] weight matrix.
struct Weights {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct ToyPyramidConfig {
  std::size_t levels = 4;
  std::size_t batch = 3;
  // Level 0 is base x base, halving per level; must be divisible by 2^(L-1).
  std::size_t base_resolution = 16;
  // One entry per level; empty means 16 + 8 * level.
  std::vector<std::size_t> lateral_channels;
  std::size_t fused_channels = 8;
  std::uint64_t seed = 7;
};

void validate(const ToyPyramidConfig& cfg);

std::size_t lateral_channels_at(const ToyPyramidConfig& cfg, std::size_t level);
std::size_t resolution_at(const ToyPyramidConfig& cfg, std::size_t level);

// result[image][level] = C_{level,image}
using LateralPyramids = std::vector<std::vector<FeatureMap>>;

// Every value is a pure function of (seed, level, image, channel, pixel):
// a per-(image, level, channel) offset plus uniform noise in [-1, 1).
LateralPyramids synth_pyramid(const ToyPyramidConfig& cfg);

// Seeded [out x in] reduction, entries uniform in [-1, 1) / sqrt(in).
Weights make_reduction(std::uint64_t seed, std::size_t level, std::size_t out_channels,
                       std::size_t in_channels);

// P_top = R_top C_top; P_i = R_i C_i + up2(P_{i+1}) with nearest-neighbor
// upsampling. reductions[i] maps level i's channels to the fused width.
std::vector<FeatureMap> fuse_topdown(const std::vector<FeatureMap>& laterals,
                                     const std::vector<Weights>& reductions);

std::vector<FeatureMap> fuse_topdown(const std::vector<FeatureMap>& laterals,
                                     std::size_t fused_channels, std::uint64_t reduction_seed);

// Seeded [dim x channels] projection, entries uniform in [-1, 1) / sqrt(channels).
Weights make_projection(std::uint64_t seed, std::size_t dim, std::size_t channels);

// Global average pool followed by projection.
std::vector<double> encode(const FeatureMap& map, const Weights& projection);
std::vector<double> encode(const FeatureMap& map, std::uint64_t projection_seed, std::size_t dim);

// synth -> fuse -> encode, one projection seed per (family, level).
EmbeddingBatch build_embedding_batch(const ToyPyramidConfig& cfg, std::size_t dim);

}  // namespace psdet
