#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook definitions with no attempt at speed or numerical care.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "psdet/assigner.hpp"
#include "psdet/contrast.hpp"
#include "psdet/geometry.hpp"

namespace psdet::oracle {

// Brute-force rule enumeration: each anchor is decided on its own column,
// then each gt's rescue is applied in gt order.
inline AssignResult assign(const std::vector<std::vector<double>>& score, std::size_t anchors,
                           const AssignThresholds& thr) {
  AssignResult r;
  r.labels.resize(anchors);
  r.gt_index.resize(anchors);
  r.best_score.resize(anchors);
  for (std::size_t a = 0; a < anchors; ++a) {
    double best = 0.0;
    std::optional<std::uint32_t> arg;
    for (std::size_t g = 0; g < score.size(); ++g) {
      if (!arg || score[g][a] > best) {
        best = score[g][a];
        arg = static_cast<std::uint32_t>(g);
      }
    }
    r.best_score[a] = best;
    if (!arg || best < thr.neg_thr) {
      r.labels[a] = Label::negative;
    } else if (best >= thr.pos_thr) {
      r.labels[a] = Label::positive;
      r.gt_index[a] = arg;
    } else {
      r.labels[a] = Label::ignore;
    }
  }
  for (std::size_t g = 0; g < score.size(); ++g) {
    std::size_t arg = 0;
    for (std::size_t a = 1; a < anchors; ++a) {
      if (score[g][a] > score[g][arg]) {
        arg = a;
      }
    }
    if (anchors > 0 && score[g][arg] >= thr.min_pos_thr) {
      r.labels[arg] = Label::positive;
      r.gt_index[arg] = static_cast<std::uint32_t>(g);
    }
  }
  return r;
}

inline ScoreMatrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  ScoreMatrix m(rows.size(), cols);
  for (std::size_t g = 0; g < rows.size(); ++g) {
    for (std::size_t a = 0; a < cols; ++a) {
      m(g, a) = rows[g][a];
    }
  }
  return m;
}

// Unstabilized InfoNCE evaluated in long double.
inline double info_nce(const std::vector<double>& q, const std::vector<double>& k,
                       const std::vector<std::vector<double>>& negatives, double tau) {
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      s += static_cast<long double>(a[i]) * b[i];
    }
    return s;
  };
  const long double pos = std::exp(dot(q, k) / tau);
  long double denom = pos;
  for (const auto& s : negatives) {
    denom += std::exp(dot(q, s) / tau);
  }
  return static_cast<double>(-std::log(pos / denom));
}

inline std::vector<double> vec(const EmbeddingBatch& b, Family f, std::size_t level,
                               std::size_t image) {
  const auto s = b.at(f, level, image);
  return {s.begin(), s.end()};
}

// Direct double loops over the loss definitions.
inline double spatial_loss(const EmbeddingBatch& b, double tau) {
  const std::size_t L = b.levels(), N = b.images();
  double total = 0.0;
  for (std::size_t x = 0; x < L; ++x) {
    for (std::size_t y = 0; y < N; ++y) {
      std::vector<std::vector<double>> negs;
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          if (j != y) {
            negs.push_back(vec(b, Family::spatial_lateral, i, j));
            negs.push_back(vec(b, Family::spatial_fused, i, j));
          }
        }
      }
      total += info_nce(vec(b, Family::spatial_fused, x, y), vec(b, Family::spatial_lateral, x, y),
                        negs, tau);
    }
  }
  return total / static_cast<double>(L * N);
}

inline double semantic_loss(const EmbeddingBatch& b, double tau) {
  const std::size_t L = b.levels(), N = b.images();
  double total = 0.0;
  for (std::size_t x = 0; x + 1 < L; ++x) {
    for (std::size_t y = 0; y < N; ++y) {
      std::vector<std::vector<double>> negs;
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          if (j != y) {
            negs.push_back(vec(b, Family::semantic_lateral, i, j));
            negs.push_back(vec(b, Family::semantic_fused, i, j));
          }
        }
      }
      total += info_nce(vec(b, Family::semantic_fused, x, y),
                        vec(b, Family::semantic_fused, x + 1, y), negs, tau);
    }
  }
  return total / static_cast<double>((L - 1) * N);
}

inline EmbeddingBatch random_batch(std::size_t L, std::size_t N, std::size_t D, std::uint64_t seed,
                                   double scale = 0.25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  EmbeddingBatch b(L, N, D);
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    for (double& v : b.data(static_cast<Family>(f))) {
      v = u(rng);
    }
  }
  return b;
}

// Central finite differences of an arbitrary scalar function of the batch.
template <typename Fn>
EmbeddingBatch finite_difference(const EmbeddingBatch& batch, Fn&& fn, double h) {
  EmbeddingBatch probe = batch;
  EmbeddingBatch out(batch.levels(), batch.images(), batch.dim());
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    auto& v = probe.data(static_cast<Family>(f));
    auto& g = out.data(static_cast<Family>(f));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = fn(probe);
      v[i] = keep - h;
      const double down = fn(probe);
      v[i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace psdet::oracle
