#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "psdet/ps_metric.hpp"

namespace psdet {
namespace {

// Scripted evaluation of the position / shape terms, written out per pair.
double oracle_position(const Box& g, const Box& a, double m, double n) {
  return std::hypot(m * (g.cx - a.cx) / (g.w + a.w), n * (g.cy - a.cy) / (g.h + a.h));
}
double oracle_shape(const Box& g, const Box& a, double m, double n) {
  return std::hypot(m * (g.w - a.w) / (g.w + a.w), n * (g.h - a.h) / (g.h + a.h));
}

TEST(PositionSimilarity, WorkedValues) {
  const Box b{7, -3, 5, 2};
  EXPECT_EQ(position_similarity(b, b, {3.0, 0.4}), 0.0);
  EXPECT_DOUBLE_EQ(position_similarity({10, 10, 4, 4}, {12, 10, 4, 4}, {1, 1}), 0.25);
  EXPECT_DOUBLE_EQ(position_similarity({10, 10, 4, 4}, {10, 13, 2, 4}, {1, 2}), 0.75);
}

TEST(ShapeSimilarity, WorkedValues) {
  EXPECT_EQ(shape_similarity({0, 0, 6, 4}, {90, -4, 6, 4}, {2.0, 3.0}), 0.0);
  EXPECT_DOUBLE_EQ(shape_similarity({0, 0, 6, 4}, {50, 50, 2, 4}, {1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(shape_similarity({0, 0, 4, 6}, {0, 0, 4, 2}, {1, 1}), 0.5);
}

TEST(PairwiseSimilarity, WorkedValues) {
  const Box b{10, 10, 4, 4};
  EXPECT_EQ(pairwise_similarity(b, b, {0.7, 1.3}), 1.0);
  EXPECT_NEAR(pairwise_similarity(b, {12, 10, 4, 4}, {1, 1}), std::exp(-0.25), 1e-15);
  EXPECT_NEAR(pairwise_similarity(b, {12, 10, 4, 4}, {1, 1}), 0.778801, 1e-6);
  EXPECT_NEAR(pairwise_similarity(b, {12, 10, 6, 4}, {1, 1}), std::exp(-0.4), 1e-15);
  EXPECT_NEAR(pairwise_similarity(b, {12, 10, 6, 4}, {1, 1}), 0.670320, 1e-6);
}

TEST(PairwiseSimilarity, DegenerateNormalizersGiveOne) {
  EXPECT_EQ(pairwise_similarity({0, 0, 1, 1}, {500, -80, 30, 2}, {0, 0}), 1.0);
}

TEST(PairwiseSimilarity, StaysPositiveWhenExponentUnderflows) {
  const double s = pairwise_similarity({0, 0, 1, 1}, {1e6, 0, 1, 1}, {10, 10});
  EXPECT_GT(s, 0.0);
  EXPECT_LE(s, 1e-300);
}

TEST(PairwiseSimilarity, Properties) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 800), side(1, 200), norm(0, 3), k(1e-3, 1e3);
  for (int t = 0; t < 5000; ++t) {
    const Box g{pos(rng), pos(rng), side(rng), side(rng)};
    const Box a{pos(rng), pos(rng), side(rng), side(rng)};
    const DatasetNormalizers nm{norm(rng), norm(rng)};

    // Independent scripted formula.
    EXPECT_NEAR(position_similarity(g, a, nm), oracle_position(g, a, nm.m, nm.n), 1e-12);
    EXPECT_NEAR(shape_similarity(g, a, nm), oracle_shape(g, a, nm.m, nm.n), 1e-12);

    // Range.
    const double ps = pairwise_similarity(g, a, nm);
    EXPECT_GT(ps, 0.0);
    EXPECT_LE(ps, 1.0);

    // Symmetry of both terms.
    EXPECT_EQ(position_similarity(g, a, nm), position_similarity(a, g, nm));
    EXPECT_EQ(shape_similarity(g, a, nm), shape_similarity(a, g, nm));

    // Scale invariance.
    const double s = k(rng);
    const Box gs{g.cx * s, g.cy * s, g.w * s, g.h * s};
    const Box as{a.cx * s, a.cy * s, a.w * s, a.h * s};
    const double p0 = position_similarity(g, a, nm), p1 = position_similarity(gs, as, nm);
    const double s0 = shape_similarity(g, a, nm), s1 = shape_similarity(gs, as, nm);
    EXPECT_LE(std::abs(p1 - p0), 1e-9 * std::max(p0, 1e-300));
    EXPECT_LE(std::abs(s1 - s0), 1e-9 * std::max(s0, 1e-300));
    const double ps1 = pairwise_similarity(gs, as, nm);
    EXPECT_LE(std::abs(ps1 - ps), 1e-9 * ps);
  }
}

TEST(PairwiseSimilarity, StrictlyDecreasesWithCenterOffset) {
  const Box g{100, 100, 8, 12};
  for (const DatasetNormalizers nm : {DatasetNormalizers{1, 1}, DatasetNormalizers{0.3, 5}}) {
    double prev = pairwise_similarity(g, g, nm);
    for (int step = 1; step <= 200; ++step) {
      const double cur = pairwise_similarity(g, {100 + 0.5 * step, 100, 8, 12}, nm);
      EXPECT_LT(cur, prev) << "offset " << 0.5 * step;
      prev = cur;
    }
  }
}

TEST(Accumulate, EmptyGtsLeavesAccumulatorUnchanged) {
  const NormalizerAccumulator start{1.5, 2.5, 7};
  const std::vector<Box> anchors{{0, 0, 1, 1}};
  EXPECT_EQ(psdet::accumulate(start, {}, anchors), start);
}

TEST(Accumulate, WorkedExample) {
  const std::vector<Box> gts{{10, 0, 4, 4}};
  const std::vector<Box> anchors{{10, 0, 4, 4}, {14, 0, 4, 4}};
  const NormalizerAccumulator acc = psdet::accumulate(NormalizerAccumulator{}, gts, anchors);
  EXPECT_EQ(acc.sum_x, 0.5);
  EXPECT_EQ(acc.sum_y, 0.0);
  EXPECT_EQ(acc.pair_count, 2u);
  const DatasetNormalizers n = finalize(acc);
  EXPECT_EQ(n.m, 0.25);
  EXPECT_EQ(n.n, 0.0);
}

TEST(Accumulate, MergeEqualsSequentialAccumulation) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pos(0, 300), side(1, 60);
  auto boxes = [&](int n) {
    std::vector<Box> v;
    for (int i = 0; i < n; ++i) v.push_back({pos(rng), pos(rng), side(rng), side(rng)});
    return v;
  };
  const auto g1 = boxes(5), a1 = boxes(40), g2 = boxes(3), a2 = boxes(70);
  const NormalizerAccumulator seed{0.125, 3.5, 11};
  NormalizerAccumulator merged = psdet::accumulate(seed, g1, a1);
  merged.merge(psdet::accumulate(NormalizerAccumulator{}, g2, a2));
  const NormalizerAccumulator sequential = psdet::accumulate(psdet::accumulate(seed, g1, a1), g2, a2);
  EXPECT_EQ(merged, sequential);
  // Bit reproducible.
  EXPECT_EQ(psdet::accumulate(psdet::accumulate(seed, g1, a1), g2, a2), sequential);
}

TEST(Finalize, ZeroSumsAndEmpty) {
  const DatasetNormalizers n = finalize({0.0, 0.0, 5});
  EXPECT_EQ(n.m, 0.0);
  EXPECT_EQ(n.n, 0.0);
  EXPECT_THROW(finalize({}), std::domain_error);
}

TEST(Finalize, InvariantUnderDatasetScaling) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(0, 500), side(2, 80);
  std::vector<Box> gts, anchors;
  for (int i = 0; i < 12; ++i) gts.push_back({pos(rng), pos(rng), side(rng), side(rng)});
  for (int i = 0; i < 90; ++i) anchors.push_back({pos(rng), pos(rng), side(rng), side(rng)});
  const DatasetNormalizers base = finalize(psdet::accumulate(NormalizerAccumulator{}, gts, anchors));
  for (double k : {1e-3, 0.37, 8.0, 1e3}) {
    auto scale = [k](std::vector<Box> v) {
      for (Box& b : v) b = {b.cx * k, b.cy * k, b.w * k, b.h * k};
      return v;
    };
    const DatasetNormalizers s = finalize(psdet::accumulate(NormalizerAccumulator{}, scale(gts), scale(anchors)));
    EXPECT_LE(std::abs(s.m - base.m), 1e-9 * base.m);
    EXPECT_LE(std::abs(s.n - base.n), 1e-9 * base.n);
  }
}

TEST(PsMatrix, ShapesAndBitIdentity) {
  EXPECT_EQ(ps_matrix({}, std::vector<Box>(5, Box{}), {1, 1}).rows(), 0u);
  const Box b{3, 4, 5, 6};
  const ScoreMatrix one = ps_matrix(std::vector<Box>{b}, std::vector<Box>{b}, {2, 2});
  ASSERT_EQ(one.rows(), 1u);
  EXPECT_EQ(one(0, 0), 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0, 100), side(1, 30);
  std::vector<Box> gts, anchors;
  for (int i = 0; i < 8; ++i) gts.push_back({pos(rng), pos(rng), side(rng), side(rng)});
  for (int i = 0; i < 64; ++i) anchors.push_back({pos(rng), pos(rng), side(rng), side(rng)});
  const DatasetNormalizers nm{0.83, 1.21};
  const ScoreMatrix m = ps_matrix(gts, anchors, nm);
  ASSERT_EQ(m.rows(), 8u);
  ASSERT_EQ(m.cols(), 64u);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      EXPECT_EQ(m(g, a), pairwise_similarity(gts[g], anchors[a], nm));
    }
  }
}

TEST(PsMatrix, RejectsInvalidNormalizers) {
  const std::vector<Box> b{{0, 0, 1, 1}};
  EXPECT_THROW(ps_matrix(b, b, {-1, 0}), std::invalid_argument);
  EXPECT_THROW(ps_matrix(b, b, {std::nan(""), 0}), std::invalid_argument);
}

}  // namespace
}  // namespace psdet
