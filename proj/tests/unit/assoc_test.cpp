#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "owtk/assoc.hpp"

namespace owtk {
namespace {

struct BruteForce {
  int matches = 0;
  double cost = 0.0;
};

// Enumerates every injective map of the smaller side into the larger one.
// Ranks by (feasible matches desc, cost asc).
BruteForce brute_force(const CostMatrix& c) {
  const bool transpose = c.rows() > c.cols();
  const int n = transpose ? c.cols() : c.rows();
  const int m = transpose ? c.rows() : c.cols();
  const auto at = [&](int i, int j) { return transpose ? c(j, i) : c(i, j); };
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  BruteForce best{-1, 0.0};
  do {
    BruteForce cur;
    for (int i = 0; i < n; ++i) {
      const double v = at(i, perm[i]);
      if (CostMatrix::feasible(v)) {
        ++cur.matches;
        cur.cost += v;
      }
    }
    if (cur.matches > best.matches || (cur.matches == best.matches && cur.cost < best.cost)) best = cur;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

CostMatrix random_matrix(std::mt19937_64& rng, int rows, int cols, double p_inf, bool integer) {
  std::uniform_int_distribution<int> ival(0, 20);
  std::uniform_real_distribution<double> rval(0.0, 10.0);
  std::bernoulli_distribution inf(p_inf);
  CostMatrix c(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) c(r, k) = inf(rng) ? kInfeasible : (integer ? ival(rng) : rval(rng));
  }
  return c;
}

void expect_valid(const Assignment& a, const CostMatrix& c) {
  std::vector<int> row_seen(c.rows(), 0), col_seen(c.cols(), 0);
  for (const auto& [r, k] : a.matches) {
    ++row_seen[r];
    ++col_seen[k];
    EXPECT_TRUE(CostMatrix::feasible(c(r, k)));
  }
  for (int r : a.unmatched_rows) ++row_seen[r];
  for (int k : a.unmatched_cols) ++col_seen[k];
  for (int v : row_seen) EXPECT_EQ(v, 1);
  for (int v : col_seen) EXPECT_EQ(v, 1);
  EXPECT_TRUE(std::is_sorted(a.matches.begin(), a.matches.end()));
}

TEST(Hungarian, SmallExample) {
  const CostMatrix c(2, 2, {1, 2, 2, 4});
  const Assignment a = hungarian(c);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{0, 1}, {1, 0}}));
  EXPECT_EQ(a.total_cost(c), 4.0);
}

TEST(Hungarian, EmptyInputs) {
  const Assignment a = hungarian(CostMatrix(0, 3));
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_cols, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(hungarian(CostMatrix(2, 0)).unmatched_rows, (std::vector<int>{0, 1}));
}

TEST(Hungarian, InfeasibleCellsNeverMatched) {
  CostMatrix c(2, 2, kInfeasible);
  c(0, 0) = 5.0;
  const Assignment a = hungarian(c);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{0, 0}}));
  EXPECT_EQ(a.unmatched_rows, (std::vector<int>{1}));
  EXPECT_EQ(a.unmatched_cols, (std::vector<int>{1}));
}

TEST(Hungarian, PrefersMoreMatchesOverCheaperCost) {
  // Matching (0,0) alone costs 0 but blocks row 1; two matches cost 200.
  CostMatrix c(2, 2, kInfeasible);
  c(0, 0) = 0.0;
  c(0, 1) = 100.0;
  c(1, 0) = 100.0;
  EXPECT_EQ(hungarian(c).matches.size(), 2u);
}

TEST(Hungarian, RejectsNan) {
  CostMatrix c(1, 1, std::nan(""));
  EXPECT_THROW(hungarian(c), std::invalid_argument);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 1500; ++trial) {
    const CostMatrix c = random_matrix(rng, dim(rng), dim(rng), trial % 3 == 0 ? 0.3 : 0.0, true);
    const Assignment a = hungarian(c);
    expect_valid(a, c);
    const BruteForce bf = brute_force(c);
    ASSERT_EQ(static_cast<int>(a.matches.size()), bf.matches) << "trial " << trial;
    ASSERT_EQ(a.total_cost(c), bf.cost) << "trial " << trial;
  }
}

TEST(Hungarian, InvariantUnderRowAndColumnConstants) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 5;
    const CostMatrix c = random_matrix(rng, n, n, 0.0, false);
    CostMatrix shifted = c;
    for (int r = 0; r < n; ++r) {
      const double s = shift(rng);
      for (int k = 0; k < n; ++k) shifted(r, k) += s;
    }
    for (int k = 0; k < n; ++k) {
      const double s = shift(rng);
      for (int r = 0; r < n; ++r) shifted(r, k) += s;
    }
    EXPECT_EQ(hungarian(c).matches, hungarian(shifted).matches) << "trial " << trial;
  }
}

TEST(Hungarian, IsDeterministic) {
  const CostMatrix c(3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  const Assignment a = hungarian(c);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(hungarian(c).matches, a.matches);
}

TEST(AppearanceDistance, MinimumOverGallery) {
  const std::vector<Embedding> gallery{{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<double> e{0.6, 0.8};
  EXPECT_NEAR(appearance_distance(gallery, e), 0.2, 1e-15);
  EXPECT_THROW(appearance_distance({}, e), std::invalid_argument);
  const std::vector<double> wrong{1.0, 0.0, 0.0};
  EXPECT_THROW(appearance_distance(gallery, wrong), std::invalid_argument);
}

Track make_track(const BBox& box, const KalmanFilter& kf, std::optional<Embedding> e = {}) {
  Track t;
  t.state = kf.predict(kf.initiate(to_measurement(box)));
  if (e) t.gallery.push_back(*e);
  return t;
}

Detection make_det(const BBox& box, std::optional<Embedding> e = {}) {
  Detection d;
  d.bbox = box;
  d.score = 1.0;
  d.embedding = std::move(e);
  return d;
}

TEST(BuildCost, IouFallbackAndGate) {
  const KalmanFilter kf;
  const Track t = make_track({100, 100, 20, 40}, kf);
  const std::vector<const Track*> rows{&t};
  const std::vector<Detection> cols{make_det({100, 100, 20, 40}), make_det({300, 300, 20, 40})};
  const CostMatrix c = build_cost(rows, cols, AssocWeights{}, kf);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-12);
  EXPECT_FALSE(CostMatrix::feasible(c(0, 1)));
}

TEST(BuildCost, AppearanceBlendAndLimit) {
  const KalmanFilter kf;
  const Track t = make_track({100, 100, 20, 40}, kf, Embedding{1.0, 0.0});
  const std::vector<const Track*> rows{&t};
  const std::vector<Detection> cols{make_det({100, 100, 20, 40}, Embedding{0.96, 0.28}),
                                    make_det({100, 100, 20, 40}, Embedding{0.0, 1.0})};
  AssocWeights w;
  const CostMatrix c = build_cost(rows, cols, w, kf);
  EXPECT_NEAR(c(0, 0), 0.04, 1e-12);
  EXPECT_FALSE(CostMatrix::feasible(c(0, 1)));
  w.lambda = 0.5;
  const CostMatrix blended = build_cost(rows, cols, w, kf);
  EXPECT_NEAR(blended(0, 0), 0.02, 1e-9);
}

TEST(IouCost, ThresholdMakesInfeasible) {
  const KalmanFilter kf;
  const Track t = make_track({0, 0, 10, 10}, kf);
  const std::vector<const Track*> rows{&t};
  const std::vector<Detection> cols{make_det({0, 0, 10, 10}), make_det({8, 8, 10, 10})};
  const CostMatrix c = iou_cost(rows, cols, 0.7);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-12);
  EXPECT_FALSE(CostMatrix::feasible(c(0, 1)));
}

}  // namespace
}  // namespace owtk
