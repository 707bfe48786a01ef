#include "psdet/contrast.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace psdet {

EmbeddingBatch::EmbeddingBatch(std::size_t levels, std::size_t images, std::size_t dim)
    : levels_(levels), images_(images), dim_(dim) {
  for (auto& d : data_) {
    d.assign(levels * images * dim, 0.0);
  }
}

std::span<double> EmbeddingBatch::at(Family f, std::size_t level, std::size_t image) {
  return {data(f).data() + (level * images_ + image) * dim_, dim_};
}

std::span<const double> EmbeddingBatch::at(Family f, std::size_t level, std::size_t image) const {
  return {data(f).data() + (level * images_ + image) * dim_, dim_};
}

void validate(const EmbeddingBatch& batch) {
  if (batch.levels() < 2 || batch.images() < 1 || batch.dim() < 1) {
    throw std::invalid_argument(
        fmt::format("embedding batch needs L >= 2, N >= 1, D >= 1 (got L={}, N={}, D={})",
                    batch.levels(), batch.images(), batch.dim()));
  }
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    const auto& d = batch.data(static_cast<Family>(f));
    if (d.size() != batch.levels() * batch.images() * batch.dim()) {
      throw std::invalid_argument("embedding batch array size does not match its shape");
    }
    if (!std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); })) {
      throw std::invalid_argument("embedding batch contains non-finite values");
    }
  }
}

void validate(const ContrastConfig& cfg) {
  if (!std::isfinite(cfg.tau) || !(cfg.tau > 0.0)) {
    throw std::invalid_argument(fmt::format("temperature must be finite and > 0 (got {})", cfg.tau));
  }
}

namespace {

struct Slot {
  Family family;
  std::size_t level;
  std::size_t image;
};

struct Term {
  Slot query;
  Slot positive;
  std::vector<Slot> negatives;
};

void check_index(const EmbeddingBatch& batch, std::size_t level, std::size_t level_limit,
                 std::size_t image) {
  if (level >= level_limit || image >= batch.images()) {
    throw std::out_of_range(fmt::format("embedding index (level={}, image={}) out of range",
                                        level, image));
  }
}

std::vector<Slot> spatial_negative_slots(const EmbeddingBatch& batch, std::size_t level,
                                         std::size_t image, const ContrastConfig& cfg) {
  check_index(batch, level, batch.levels(), image);
  std::vector<Slot> out;
  for (std::size_t i = 0; i < batch.levels(); ++i) {
    for (std::size_t j = 0; j < batch.images(); ++j) {
      if (j == image) {
        continue;
      }
      out.push_back({Family::spatial_lateral, i, j});
      out.push_back({Family::spatial_fused, i, j});
    }
  }
  if (cfg.include_same_image_other_levels) {
    for (std::size_t i = 0; i < batch.levels(); ++i) {
      if (i == level) {
        continue;
      }
      out.push_back({Family::spatial_lateral, i, image});
      out.push_back({Family::spatial_fused, i, image});
    }
  }
  return out;
}

std::vector<Slot> semantic_negative_slots(const EmbeddingBatch& batch, std::size_t level,
                                          std::size_t image) {
  check_index(batch, level, batch.levels() - 1, image);
  std::vector<Slot> out;
  for (std::size_t i = 0; i < batch.levels(); ++i) {
    for (std::size_t j = 0; j < batch.images(); ++j) {
      if (j == image) {
        continue;
      }
      out.push_back({Family::semantic_lateral, i, j});
      out.push_back({Family::semantic_fused, i, j});
    }
  }
  return out;
}

VectorList resolve(const EmbeddingBatch& batch, const std::vector<Slot>& slots) {
  VectorList out;
  out.reserve(slots.size());
  for (const Slot& s : slots) {
    out.push_back(batch.at(s.family, s.level, s.image));
  }
  return out;
}

std::vector<Term> spatial_terms(const EmbeddingBatch& batch, const ContrastConfig& cfg) {
  std::vector<Term> terms;
  for (std::size_t x = 0; x < batch.levels(); ++x) {
    for (std::size_t y = 0; y < batch.images(); ++y) {
      terms.push_back({{Family::spatial_fused, x, y},
                       {Family::spatial_lateral, x, y},
                       spatial_negative_slots(batch, x, y, cfg)});
    }
  }
  return terms;
}

std::vector<Term> semantic_terms(const EmbeddingBatch& batch) {
  std::vector<Term> terms;
  for (std::size_t x = 0; x + 1 < batch.levels(); ++x) {
    for (std::size_t y = 0; y < batch.images(); ++y) {
      terms.push_back({{Family::semantic_fused, x, y},
                       {Family::semantic_fused, x + 1, y},
                       semantic_negative_slots(batch, x, y)});
    }
  }
  return terms;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_vector(std::span<const double> v, std::size_t dim, const char* what) {
  if (v.size() != dim) {
    throw std::invalid_argument(
        fmt::format("info_nce: {} has dimension {}, expected {}", what, v.size(), dim));
  }
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
    throw std::invalid_argument(fmt::format("info_nce: {} has non-finite entries", what));
  }
}

struct Logits {
  double positive = 0.0;
  std::vector<double> negatives;
  double top = 0.0;
  double log1p_rest = 0.0;
  double lse = 0.0;  // log-sum-exp over the positive and all negatives
};

Logits compute_logits(std::span<const double> q, std::span<const double> k_pos,
                      const VectorList& negatives, double tau) {
  if (!std::isfinite(tau) || !(tau > 0.0)) {
    throw std::invalid_argument(fmt::format("info_nce: temperature must be > 0 (got {})", tau));
  }
  check_vector(q, q.size(), "query");
  check_vector(k_pos, q.size(), "positive key");
  for (const auto& s : negatives) {
    check_vector(s, q.size(), "negative");
  }

  Logits out;
  out.positive = dot(q, k_pos) / tau;
  out.negatives.reserve(negatives.size());
  double top = out.positive;
  std::size_t top_index = negatives.size();  // sentinel: the positive
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    out.negatives.push_back(dot(q, negatives[i]) / tau);
    if (out.negatives.back() > top) {
      top = out.negatives.back();
      top_index = i;
    }
  }
  // log(sum exp(l)) = top + log1p(sum over the non-top terms of exp(l - top))
  double rest = top_index == negatives.size() ? 0.0 : std::exp(out.positive - top);
  for (std::size_t i = 0; i < out.negatives.size(); ++i) {
    if (i != top_index) {
      rest += std::exp(out.negatives[i] - top);
    }
  }
  out.top = top;
  out.log1p_rest = std::log1p(rest);
  out.lse = top + out.log1p_rest;
  return out;
}

// (top - positive) is exact when the positive is the top logit, so large
// logits do not cancel against lse.
double nce_from_logits(const Logits& l) { return (l.top - l.positive) + l.log1p_rest; }

InfoNceGrad backward_from_logits(const Logits& l, std::span<const double> q,
                                 std::span<const double> k_pos, const VectorList& negatives,
                                 double tau) {
  const std::size_t dim = q.size();
  InfoNceGrad g;
  g.loss = nce_from_logits(l);
  g.d_query.assign(dim, 0.0);
  g.d_positive.assign(dim, 0.0);
  g.d_negatives.assign(negatives.size(), std::vector<double>(dim, 0.0));

  // dL/dl_pos = p_pos - 1 = -(sum of negative probabilities)
  double neg_mass = 0.0;
  std::vector<double> p(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    p[i] = std::exp(l.negatives[i] - l.lse);
    neg_mass += p[i];
  }
  const double d_pos_logit = -neg_mass;

  for (std::size_t c = 0; c < dim; ++c) {
    g.d_query[c] = d_pos_logit * k_pos[c] / tau;
    g.d_positive[c] = d_pos_logit * q[c] / tau;
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const auto s = negatives[i];
    for (std::size_t c = 0; c < dim; ++c) {
      g.d_query[c] += p[i] * s[c] / tau;
      g.d_negatives[i][c] = p[i] * q[c] / tau;
    }
  }
  return g;
}

EmbeddingBatch normalized(const EmbeddingBatch& batch) {
  EmbeddingBatch out = batch;
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    for (std::size_t i = 0; i < batch.levels(); ++i) {
      for (std::size_t j = 0; j < batch.images(); ++j) {
        auto v = out.at(static_cast<Family>(f), i, j);
        const double len = std::sqrt(dot(v, v));
        if (!(len > 0.0)) {
          throw std::invalid_argument("cannot L2-normalize a zero embedding");
        }
        for (double& x : v) {
          x /= len;
        }
      }
    }
  }
  return out;
}

double mean_loss(const EmbeddingBatch& batch, const std::vector<Term>& terms, double tau) {
  if (terms.empty()) {
    return 0.0;
  }
  double total = 0.0;
  for (const Term& t : terms) {
    const VectorList negs = resolve(batch, t.negatives);
    total += info_nce(batch.at(t.query.family, t.query.level, t.query.image),
                      batch.at(t.positive.family, t.positive.level, t.positive.image), negs, tau);
  }
  return total / static_cast<double>(terms.size());
}

void accumulate_grad(const EmbeddingBatch& batch, const std::vector<Term>& terms, double tau,
                     EmbeddingBatch& grad) {
  if (terms.empty()) {
    return;
  }
  const double weight = 1.0 / static_cast<double>(terms.size());
  auto add = [&](const Slot& s, const std::vector<double>& d) {
    auto dst = grad.at(s.family, s.level, s.image);
    for (std::size_t c = 0; c < dst.size(); ++c) {
      dst[c] += weight * d[c];
    }
  };
  for (const Term& t : terms) {
    const VectorList negs = resolve(batch, t.negatives);
    const auto q = batch.at(t.query.family, t.query.level, t.query.image);
    const auto k = batch.at(t.positive.family, t.positive.level, t.positive.image);
    const InfoNceGrad g = info_nce_backward(q, k, negs, tau);
    add(t.query, g.d_query);
    add(t.positive, g.d_positive);
    for (std::size_t i = 0; i < t.negatives.size(); ++i) {
      add(t.negatives[i], g.d_negatives[i]);
    }
  }
}

// Chain rule through v / |v|: d_in = (d_out - u (u . d_out)) / |v|.
void backprop_normalization(const EmbeddingBatch& raw, EmbeddingBatch& grad) {
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    for (std::size_t i = 0; i < raw.levels(); ++i) {
      for (std::size_t j = 0; j < raw.images(); ++j) {
        const auto v = raw.at(static_cast<Family>(f), i, j);
        auto d = grad.at(static_cast<Family>(f), i, j);
        const double len = std::sqrt(dot(v, v));
        double proj = 0.0;
        for (std::size_t c = 0; c < v.size(); ++c) {
          proj += (v[c] / len) * d[c];
        }
        for (std::size_t c = 0; c < v.size(); ++c) {
          d[c] = (d[c] - (v[c] / len) * proj) / len;
        }
      }
    }
  }
}

}  // namespace

VectorList spatial_negatives(const EmbeddingBatch& batch, std::size_t level, std::size_t image,
                             const ContrastConfig& cfg) {
  return resolve(batch, spatial_negative_slots(batch, level, image, cfg));
}

VectorList semantic_negatives(const EmbeddingBatch& batch, std::size_t level, std::size_t image) {
  return resolve(batch, semantic_negative_slots(batch, level, image));
}

double info_nce(std::span<const double> q, std::span<const double> k_pos,
                const VectorList& negatives, double tau) {
  return nce_from_logits(compute_logits(q, k_pos, negatives, tau));
}

InfoNceGrad info_nce_backward(std::span<const double> q, std::span<const double> k_pos,
                              const VectorList& negatives, double tau) {
  return backward_from_logits(compute_logits(q, k_pos, negatives, tau), q, k_pos, negatives, tau);
}

double spatial_loss(const EmbeddingBatch& batch, const ContrastConfig& cfg) {
  validate(batch);
  validate(cfg);
  if (cfg.normalize) {
    const EmbeddingBatch unit = normalized(batch);
    return mean_loss(unit, spatial_terms(unit, cfg), cfg.tau);
  }
  return mean_loss(batch, spatial_terms(batch, cfg), cfg.tau);
}

double semantic_loss(const EmbeddingBatch& batch, const ContrastConfig& cfg) {
  validate(batch);
  validate(cfg);
  if (cfg.normalize) {
    const EmbeddingBatch unit = normalized(batch);
    return mean_loss(unit, semantic_terms(unit), cfg.tau);
  }
  return mean_loss(batch, semantic_terms(batch), cfg.tau);
}

EmbeddingBatch contrast_grad(const EmbeddingBatch& batch, const ContrastConfig& cfg) {
  validate(batch);
  validate(cfg);
  const EmbeddingBatch& input = batch;
  const EmbeddingBatch unit = cfg.normalize ? normalized(batch) : EmbeddingBatch{};
  const EmbeddingBatch& used = cfg.normalize ? unit : input;

  EmbeddingBatch grad(batch.levels(), batch.images(), batch.dim());
  accumulate_grad(used, spatial_terms(used, cfg), cfg.tau, grad);
  accumulate_grad(used, semantic_terms(used), cfg.tau, grad);
  if (cfg.normalize) {
    backprop_normalization(batch, grad);
  }
  return grad;
}

double total_loss(const LossComponents& c) {
  for (double v : {c.spatial_loss, c.semantic_loss, c.psrpn_loss, c.alpha}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("loss components and alpha must be finite and non-negative");
    }
  }
  return c.alpha * (c.spatial_loss + c.semantic_loss) + c.psrpn_loss;
}

// Binary batch format.

namespace {

constexpr std::array<unsigned char, 4> kMagic{'N', 'T', 'F', 'B'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
  }
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
  }
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  }
  return v;
}

double get_f64(std::span<const unsigned char> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  }
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<unsigned char> encode_batch(const EmbeddingBatch& batch) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  const std::size_t per_family = batch.levels() * batch.images() * batch.dim();
  out.reserve(kHeaderBytes + kFamilyCount * per_family * 8);
  put_u32(out, static_cast<std::uint32_t>(batch.levels()));
  put_u32(out, static_cast<std::uint32_t>(batch.images()));
  put_u32(out, static_cast<std::uint32_t>(batch.dim()));
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    for (double v : batch.data(static_cast<Family>(f))) {
      put_f64(out, v);
    }
  }
  return out;
}

EmbeddingBatch decode_batch(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw std::runtime_error("not an embedding batch file (missing NTFB header)");
  }
  const std::uint64_t levels = get_u32(bytes, 4);
  const std::uint64_t images = get_u32(bytes, 8);
  const std::uint64_t dim = get_u32(bytes, 12);
  const std::uint64_t per_family = levels * images * dim;  // each factor < 2^32
  if (per_family > (bytes.size() - kHeaderBytes) / 8 ||
      kHeaderBytes + kFamilyCount * per_family * 8 != bytes.size()) {
    throw std::runtime_error(fmt::format(
        "embedding batch size mismatch: header says L={} N={} D={}, payload is {} bytes", levels,
        images, dim, bytes.size() - kHeaderBytes));
  }
  EmbeddingBatch batch(levels, images, dim);
  std::size_t at = kHeaderBytes;
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    for (double& v : batch.data(static_cast<Family>(f))) {
      v = get_f64(bytes, at);
      at += 8;
    }
  }
  validate(batch);
  return batch;
}

void write_batch(const EmbeddingBatch& batch, const std::string& path) {
  const auto bytes = encode_batch(batch);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot open {} for writing", path));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing {}", path));
  }
}

EmbeddingBatch read_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open {}", path));
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_batch(bytes);
}

}  // namespace psdet
