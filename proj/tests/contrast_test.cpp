#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "psdet/contrast.hpp"
#include "psdet/gradcheck.hpp"

namespace psdet {
namespace {

constexpr Family kAll[] = {Family::spatial_lateral, Family::semantic_lateral,
                           Family::spatial_fused, Family::semantic_fused};

bool contains(const VectorList& list, std::span<const double> v) {
  return std::any_of(list.begin(), list.end(),
                     [&](std::span<const double> s) { return s.data() == v.data(); });
}

TEST(EmbeddingBatch, ShapeAndValidation) {
  EmbeddingBatch b(3, 2, 5);
  EXPECT_EQ(b.data(Family::semantic_fused).size(), 30u);
  EXPECT_EQ(b.at(Family::spatial_fused, 2, 1).size(), 5u);
  EXPECT_NO_THROW(validate(b));
  EXPECT_THROW(validate(EmbeddingBatch(1, 2, 5)), std::invalid_argument);
  EXPECT_THROW(validate(EmbeddingBatch(2, 0, 5)), std::invalid_argument);
  b.at(Family::spatial_lateral, 0, 0)[0] = std::nan("");
  EXPECT_THROW(validate(b), std::invalid_argument);
}

TEST(Negatives, SizesAndMembership) {
  const EmbeddingBatch one = oracle::random_batch(3, 1, 4, 1);
  EXPECT_TRUE(spatial_negatives(one, 0, 0, {}).empty());

  const EmbeddingBatch b = oracle::random_batch(3, 2, 4, 2);
  const VectorList sp = spatial_negatives(b, 1, 0, {});
  EXPECT_EQ(sp.size(), 6u);  // 2 families x 3 levels x 1 other image
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_TRUE(contains(sp, b.at(Family::spatial_lateral, l, 1)));
    EXPECT_TRUE(contains(sp, b.at(Family::spatial_fused, l, 1)));
    EXPECT_FALSE(contains(sp, b.at(Family::spatial_fused, l, 0)));
  }

  ContrastConfig flag;
  flag.include_same_image_other_levels = true;
  const VectorList wide = spatial_negatives(b, 1, 0, flag);
  EXPECT_EQ(wide.size(), 10u);
  EXPECT_TRUE(contains(wide, b.at(Family::spatial_lateral, 0, 0)));
  EXPECT_TRUE(contains(wide, b.at(Family::spatial_fused, 2, 0)));
  EXPECT_FALSE(contains(wide, b.at(Family::spatial_fused, 1, 0)));
  EXPECT_FALSE(contains(wide, b.at(Family::spatial_lateral, 1, 0)));

  const VectorList se = semantic_negatives(b, 0, 1);
  EXPECT_EQ(se.size(), 6u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_TRUE(contains(se, b.at(Family::semantic_lateral, l, 0)));
    EXPECT_TRUE(contains(se, b.at(Family::semantic_fused, l, 0)));
  }
  EXPECT_THROW(semantic_negatives(b, 2, 0), std::out_of_range);
}

TEST(InfoNce, ClosedForms) {
  const std::vector<double> q{0.3, -0.2}, k{0.1, 0.5}, s{0.3, 0.9};
  EXPECT_EQ(info_nce(q, k, {}, 0.07), 0.0);
  const std::vector<double> e1{1, 0}, e2{0, 1}, z{0, 0};
  EXPECT_NEAR(info_nce(e1, e2, {z}, 1.0), std::log(2.0), 1e-12);
  EXPECT_NEAR(info_nce(e1, e2, {e2}, 1.0), std::log(2.0), 1e-12);
  EXPECT_NEAR(info_nce(q, k, {s, k, e1}, 1e6), std::log(4.0), 1e-3);
}

TEST(InfoNce, MatchesLongDoubleOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  auto draw = [&] { return std::vector<double>{u(rng), u(rng), u(rng)}; };
  for (int t = 0; t < 200; ++t) {
    const auto q = draw(), k = draw();
    std::vector<std::vector<double>> negs(1 + t % 5);
    for (auto& n : negs) n = draw();
    const VectorList view(negs.begin(), negs.end());
    EXPECT_NEAR(info_nce(q, k, view, 0.5), oracle::info_nce(q, k, negs, 0.5), 1e-12);
  }
}

TEST(InfoNce, NonNegativeAndMonotoneInNegatives) {
  // Logits stay within +-60 so every loss is representable as a positive double.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  auto draw = [&] { return std::vector<double>{u(rng), u(rng), u(rng), u(rng)}; };
  for (int t = 0; t < 200; ++t) {
    const auto q = draw(), k = draw();
    std::vector<std::vector<double>> negs;
    double prev = info_nce(q, k, {}, 0.07);
    EXPECT_EQ(prev, 0.0);
    for (int i = 0; i < 6; ++i) {
      negs.push_back(draw());
      const double cur = info_nce(q, k, VectorList(negs.begin(), negs.end()), 0.07);
      EXPECT_GT(cur, 0.0);
      EXPECT_GE(cur, prev);
      prev = cur;
    }
  }
}

TEST(InfoNce, StableAtExtremeLogits) {
  const double tau = 0.07;
  // Logits q.k/tau = +-1e4/tau.
  const std::vector<double> q{1e4}, up{1.0}, down{-1.0};
  const double gap = 2e4 / tau;
  double v = info_nce(q, up, {down}, tau);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(v, 0.0);  // log1p(exp(-gap)) underflows to exactly zero
  v = info_nce(q, down, {up}, tau);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_DOUBLE_EQ(v, gap);
  // Equal extreme logits: exactly log(1 + count).
  v = info_nce(q, up, {up, up, up}, tau);
  EXPECT_NEAR(v, std::log(4.0), 1e-15);
  // Moderate gap far from zero: -log(e^a / (e^a + e^b)) = log1p(e^(b - a)).
  const std::vector<double> a{1.0}, b{1.0 + 0.07 * 0.5 / 1e4};
  v = info_nce(q, a, {b}, tau);
  EXPECT_NEAR(v, std::log1p(std::exp(0.5)), 1e-9);
}

TEST(InfoNce, BackwardOrthogonalExample) {
  const std::vector<double> q{1, 0, 0}, k{0, 1, 0}, s{0, 0, 1};
  const InfoNceGrad g = info_nce_backward(q, k, {s}, 1.0);
  EXPECT_NEAR(g.loss, std::log(2.0), 1e-15);
  // p_neg = 1/2: dq = p_neg s - p_neg k
  EXPECT_NEAR(g.d_query[0], 0.0, 1e-15);
  EXPECT_NEAR(g.d_query[1], -0.5, 1e-15);
  EXPECT_NEAR(g.d_query[2], 0.5, 1e-15);
  // dk = (p0 - 1) q, ds = p_neg q
  EXPECT_NEAR(g.d_positive[0], -0.5, 1e-15);
  EXPECT_NEAR(g.d_negatives[0][0], 0.5, 1e-15);

  // Finite-difference cross-check of dq.
  const double h = 1e-6;
  for (std::size_t i = 0; i < 3; ++i) {
    auto up = q, down = q;
    up[i] += h;
    down[i] -= h;
    const double fd = (info_nce(up, k, {s}, 1.0) - info_nce(down, k, {s}, 1.0)) / (2 * h);
    EXPECT_NEAR(g.d_query[i], fd, 1e-9);
  }
}

TEST(Losses, SingleImageIsZero) {
  const EmbeddingBatch b = oracle::random_batch(3, 1, 8, 9);
  EXPECT_EQ(spatial_loss(b, {}), 0.0);
  EXPECT_EQ(semantic_loss(b, {}), 0.0);
  const EmbeddingBatch g = contrast_grad(b, {});
  for (Family f : kAll) {
    for (double v : g.data(f)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Losses, TwoLevelSemanticIsMeanOfTerms) {
  const EmbeddingBatch b = oracle::random_batch(2, 3, 4, 10);
  const ContrastConfig cfg{0.5};
  double sum = 0.0;
  for (std::size_t y = 0; y < 3; ++y) {
    sum += info_nce(b.at(Family::semantic_fused, 0, y), b.at(Family::semantic_fused, 1, y),
                    semantic_negatives(b, 0, y), 0.5);
  }
  EXPECT_NEAR(semantic_loss(b, cfg), sum / 3.0, 1e-15);
}

TEST(Losses, MatchNaiveReference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EmbeddingBatch b = oracle::random_batch(4, 3, 16, seed);
    for (double tau : {0.07, 0.5, 1.0}) {
      ContrastConfig cfg;
      cfg.tau = tau;
      EXPECT_NEAR(spatial_loss(b, cfg), oracle::spatial_loss(b, tau), 1e-12);
      EXPECT_NEAR(semantic_loss(b, cfg), oracle::semantic_loss(b, tau), 1e-12);
    }
  }
}

TEST(Losses, InvariantUnderImagePermutation) {
  const EmbeddingBatch b = oracle::random_batch(4, 5, 6, 11);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  EmbeddingBatch p(b.levels(), b.images(), b.dim());
  for (Family f : kAll) {
    for (std::size_t l = 0; l < b.levels(); ++l) {
      for (std::size_t n = 0; n < b.images(); ++n) {
        const auto src = b.at(f, l, perm[n]);
        std::copy(src.begin(), src.end(), p.at(f, l, n).begin());
      }
    }
  }
  for (bool flag : {false, true}) {
    ContrastConfig cfg;
    cfg.include_same_image_other_levels = flag;
    EXPECT_NEAR(spatial_loss(p, cfg), spatial_loss(b, cfg), 1e-12);
    EXPECT_NEAR(semantic_loss(p, cfg), semantic_loss(b, cfg), 1e-12);
  }
}

TEST(Losses, SameImageFlagOnlyAddsNegatives) {
  const EmbeddingBatch b = oracle::random_batch(3, 3, 6, 12);
  ContrastConfig on;
  on.include_same_image_other_levels = true;
  EXPECT_GT(spatial_loss(b, on), spatial_loss(b, {}));
  EXPECT_EQ(semantic_loss(b, on), semantic_loss(b, {}));
}

void expect_grad_matches_fd(const EmbeddingBatch& b, const ContrastConfig& cfg, double tol) {
  const EmbeddingBatch analytic = contrast_grad(b, cfg);
  const EmbeddingBatch numeric = oracle::finite_difference(
      b, [&](const EmbeddingBatch& x) { return spatial_loss(x, cfg) + semantic_loss(x, cfg); },
      1e-5);
  for (Family f : kAll) {
    const auto& a = analytic.data(f);
    const auto& n = numeric.data(f);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], n[i], tol * std::max(1.0, std::abs(n[i])));
    }
  }
}

TEST(ContrastGrad, MatchesFiniteDifferences) {
  ContrastConfig cfg;
  cfg.tau = 0.2;
  expect_grad_matches_fd(oracle::random_batch(3, 3, 5, 20), cfg, 1e-6);
}

TEST(ContrastGrad, MatchesFiniteDifferencesWithSameImageNegatives) {
  ContrastConfig cfg;
  cfg.tau = 0.2;
  cfg.include_same_image_other_levels = true;
  expect_grad_matches_fd(oracle::random_batch(3, 3, 5, 21), cfg, 1e-6);
}

TEST(ContrastGrad, MatchesFiniteDifferencesWithNormalization) {
  ContrastConfig cfg;
  cfg.tau = 0.5;
  cfg.normalize = true;
  expect_grad_matches_fd(oracle::random_batch(3, 3, 5, 22), cfg, 1e-6);
}

TEST(GradCheck, PassesOnSeededBatch) {
  const GradCheckReport r = check_contrast_grad(oracle::random_batch(4, 3, 16, 30), {});
  EXPECT_EQ(r.entries, 4u * 4 * 3 * 16);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(TotalLoss, Combination) {
  EXPECT_DOUBLE_EQ(total_loss({1.0, 2.0, 5.0, 0.1}), 5.3);
  EXPECT_EQ(total_loss({1.0, 2.0, 5.0, 0.0}), 5.0);
  EXPECT_EQ(total_loss({0.0, 0.0, 0.0, 0.1}), 0.0);
  EXPECT_THROW(total_loss({-1.0, 0.0, 0.0, 0.1}), std::invalid_argument);
  EXPECT_THROW(total_loss({std::nan(""), 0.0, 0.0, 0.1}), std::invalid_argument);
}

TEST(BatchFile, RoundTrip) {
  const EmbeddingBatch b = oracle::random_batch(3, 2, 7, 40);
  const auto bytes = encode_batch(b);
  EXPECT_EQ(bytes.size(), 16u + 4 * 3 * 2 * 7 * 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NTFB");
  EXPECT_EQ(bytes[4], 3);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 7);
  EXPECT_EQ(decode_batch(bytes), b);

  const auto path = (std::filesystem::temp_directory_path() / "psdet_batch_test.ntfb").string();
  write_batch(b, path);
  EXPECT_EQ(read_batch(path), b);
  std::remove(path.c_str());
}

TEST(BatchFile, RejectsCorruptInput) {
  auto bytes = encode_batch(oracle::random_batch(2, 2, 2, 41));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_batch(bad_magic), std::runtime_error);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_batch(truncated), std::runtime_error);
  EXPECT_THROW(decode_batch(std::span<const unsigned char>(bytes.data(), 10)), std::runtime_error);
  EXPECT_THROW(read_batch("/nonexistent/psdet.ntfb"), std::runtime_error);
}

}  // namespace
}  // namespace psdet
