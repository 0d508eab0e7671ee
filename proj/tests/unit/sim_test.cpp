#include <gtest/gtest.h>

#include <cmath>

#include "owtk/sim.hpp"

namespace owtk {
namespace {

// Reference outputs of the published SplitMix64 C implementation.
TEST(SplitMix64, ReferenceVectors) {
  const struct {
    std::uint64_t seed;
    std::uint64_t out[3];
  } cases[] = {
      {0, {0xe220a8397b1dcdafULL, 0x6e789e6aa1b965f4ULL, 0x06c45d188009454fULL}},
      {7, {0x63cbe1e459320dd7ULL, 0x044c3cd7f43c661cULL, 0xe6984080bab12a02ULL}},
      {1234567, {0x599ed017fb08fc85ULL, 0x2c73f08458540fa5ULL, 0x883ebce5a3f27c77ULL}},
  };
  for (const auto& c : cases) {
    SplitMix64 rng(c.seed);
    for (std::uint64_t expected : c.out) EXPECT_EQ(rng.next(), expected) << "seed " << c.seed;
  }
}

TEST(SplitMix64, UniformAndNormalMoments) {
  SplitMix64 rng(99);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(SplitMix64, PoissonMean) {
  SplitMix64 rng(5);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += rng.poisson(3.0);
  EXPECT_NEAR(sum / 100000, 3.0, 0.05);
  EXPECT_EQ(rng.poisson(0.0), 0);
  EXPECT_THROW(rng.poisson(60.0), std::invalid_argument);
}

TEST(SequenceSpec, Validation) {
  SequenceSpec s;
  EXPECT_NO_THROW(s.validate());
  s.drop_rate = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.min_separation = 100;  // five lanes of 28 px cannot hold 80 px boxes
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Simulate, DeterministicForSeed) {
  SequenceSpec s;
  s.seed = 3;
  s.jitter_sigma = 2;
  s.clutter_rate = 1;
  s.drop_rate = 0.2;
  const SimOutput a = simulate(s), b = simulate(s);
  EXPECT_EQ(a.gt, b.gt);
  EXPECT_EQ(a.detections, b.detections);
  s.seed = 4;
  EXPECT_NE(simulate(s).gt, a.gt);
}

TEST(Simulate, NoiselessDetectionsEqualGroundTruth) {
  SequenceSpec s;
  s.seed = 11;
  s.masks = true;
  const SimOutput out = simulate(s);
  ASSERT_EQ(out.gt.annotations.size(), 500u);
  ASSERT_EQ(out.detections.size(), 500u);
  for (const GtAnnotation& a : out.gt.annotations) {
    const auto& dets = out.detections.on_image(a.image_id);
    const Detection& d = dets[static_cast<std::size_t>(a.instance_id - 1)];
    EXPECT_EQ(d.bbox, a.bbox);
    EXPECT_EQ(d.score, 1.0);
    EXPECT_EQ(d.mask, a.mask);
    EXPECT_EQ(d.category_id, a.category_id);
  }
}

TEST(Simulate, BoxesStayInsideImage) {
  SequenceSpec s;
  s.seed = 8;
  s.n_frames = 300;
  s.max_speed = 8;
  s.turn_rate = 0.2;
  s.jitter_sigma = 5;
  s.clutter_rate = 2;
  for (const Detection& d : simulate(s).detections.flatten()) {
    EXPECT_GE(d.bbox.x, 0.0);
    EXPECT_GE(d.bbox.y, 0.0);
    EXPECT_LE(d.bbox.right(), 640.0 + 1e-9);
    EXPECT_LE(d.bbox.bottom(), 480.0 + 1e-9);
    EXPECT_GT(d.bbox.w, 0.0);
  }
}

TEST(Simulate, LanesKeepObjectsApart) {
  SequenceSpec s;
  s.seed = 2;
  s.min_separation = 20;
  s.max_speed = 6;
  const SimOutput out = simulate(s);
  for (const auto& [image, dets] : out.detections.by_image) {
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = i + 1; j < dets.size(); ++j) {
        const double gap = std::max(dets[j].bbox.x - dets[i].bbox.right(),
                                    dets[i].bbox.x - dets[j].bbox.right());
        EXPECT_GE(gap, 20.0 - 1e-9);
      }
    }
  }
}

TEST(Simulate, ClutterCountNearRate) {
  SequenceSpec s;
  s.seed = 21;
  s.n_frames = 400;
  s.clutter_rate = 2.5;
  const SimOutput out = simulate(s);
  const double clutter = static_cast<double>(out.detections.size()) - 5.0 * 400;
  const double expected = 2.5 * 400;
  // Poisson total has variance equal to its mean; allow 3 sigma.
  EXPECT_NEAR(clutter, expected, 3.0 * std::sqrt(expected));
}

TEST(Simulate, DropRateOnlyRemovesDetections) {
  SequenceSpec s;
  s.seed = 9;
  s.jitter_sigma = 1.0;
  const SimOutput full = simulate(s);
  s.drop_rate = 0.5;
  const SimOutput dropped = simulate(s);
  EXPECT_EQ(full.gt, dropped.gt);
  EXPECT_LT(dropped.detections.size(), full.detections.size());
  for (const auto& [image, dets] : dropped.detections.by_image) {
    const auto& all = full.detections.on_image(image);
    for (const Detection& d : dets) EXPECT_NE(std::find(all.begin(), all.end(), d), all.end());
  }
}

TEST(Simulate, EmbeddingsAreUnitNorm) {
  SequenceSpec s;
  s.seed = 1;
  s.embedding_noise = 0.1;
  s.clutter_rate = 1;
  for (const Detection& d : simulate(s).detections.flatten()) {
    ASSERT_TRUE(d.embedding.has_value());
    double sq = 0;
    for (double v : *d.embedding) sq += v * v;
    EXPECT_NEAR(sq, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace owtk
