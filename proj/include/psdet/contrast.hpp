#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace psdet {

// The four embedding families, in storage order.
enum class Family : std::size_t {
  spatial_lateral = 0,   // spatial encoder on the lateral map C
  semantic_lateral = 1,  // semantic encoder on C
  spatial_fused = 2,     // spatial encoder on the fused map P
  semantic_fused = 3,    // semantic encoder on P
};

inline constexpr std::size_t kFamilyCount = 4;

// Four [levels][images][dim] arrays stored level-major, image-major,
// component-minor.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  EmbeddingBatch(std::size_t levels, std::size_t images, std::size_t dim);

  std::size_t levels() const { return levels_; }
  std::size_t images() const { return images_; }
  std::size_t dim() const { return dim_; }

  std::span<double> at(Family f, std::size_t level, std::size_t image);
  std::span<const double> at(Family f, std::size_t level, std::size_t image) const;

  std::vector<double>& data(Family f) { return data_[static_cast<std::size_t>(f)]; }
  const std::vector<double>& data(Family f) const { return data_[static_cast<std::size_t>(f)]; }

  friend bool operator==(const EmbeddingBatch&, const EmbeddingBatch&) = default;

 private:
  std::size_t levels_ = 0;
  std::size_t images_ = 0;
  std::size_t dim_ = 0;
  std::array<std::vector<double>, kFamilyCount> data_;
};

// Throws std::invalid_argument unless levels >= 2, images >= 1, dim >= 1 and
// every entry is finite.
void validate(const EmbeddingBatch& batch);

struct ContrastConfig {
  double tau = 0.07;
  // Spatial negatives also take the same image's embeddings at other levels.
  bool include_same_image_other_levels = false;
  // L2-normalize every embedding before the dot products.
  bool normalize = false;
};

void validate(const ContrastConfig& cfg);

using VectorList = std::vector<std::span<const double>>;

// {s^c_{i,j}, s^p_{i,j} : every level i, every image j != image}, level-major,
// image-minor, lateral before fused. With the same-image flag, s^c and s^p of
// `image` at every level != `level` follow.
VectorList spatial_negatives(const EmbeddingBatch& batch, std::size_t level, std::size_t image,
                             const ContrastConfig& cfg);

// {ŝ^c_{i,j}, ŝ^p_{i,j} : every level i, every image j != image}; level < L - 1.
VectorList semantic_negatives(const EmbeddingBatch& batch, std::size_t level, std::size_t image);

// -log(exp(q.k/tau) / (exp(q.k/tau) + sum_s exp(q.s/tau))), evaluated with a
// max-shifted log-sum-exp.
double info_nce(std::span<const double> q, std::span<const double> k_pos,
                const VectorList& negatives, double tau);

struct InfoNceGrad {
  double loss = 0.0;
  std::vector<double> d_query;
  std::vector<double> d_positive;
  std::vector<std::vector<double>> d_negatives;
};

InfoNceGrad info_nce_backward(std::span<const double> q, std::span<const double> k_pos,
                              const VectorList& negatives, double tau);

// Mean over levels 0..L-1 and images of info_nce(s^p, s^c, spatial negatives).
double spatial_loss(const EmbeddingBatch& batch, const ContrastConfig& cfg);

// Mean over levels 0..L-2 and images of info_nce(ŝ^p_x, ŝ^p_{x+1}, semantic negatives).
double semantic_loss(const EmbeddingBatch& batch, const ContrastConfig& cfg);

// Gradient of spatial_loss + semantic_loss with respect to every entry.
EmbeddingBatch contrast_grad(const EmbeddingBatch& batch, const ContrastConfig& cfg);

struct LossComponents {
  double spatial_loss = 0.0;
  double semantic_loss = 0.0;
  double psrpn_loss = 0.0;  // RPN classification + regression, supplied by the caller
  double alpha = 0.1;
};

// alpha * (spatial + semantic) + psrpn
double total_loss(const LossComponents& c);

// Flat little-endian file: "NTFB", u32 levels, images, dim, then the four
// families in storage order as f64.
void write_batch(const EmbeddingBatch& batch, const std::string& path);
EmbeddingBatch read_batch(const std::string& path);

std::vector<unsigned char> encode_batch(const EmbeddingBatch& batch);
EmbeddingBatch decode_batch(std::span<const unsigned char> bytes);

}  // namespace psdet
