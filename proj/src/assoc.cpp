#include "owtk/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace owtk {

CostMatrix::CostMatrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(std::max(rows, 0)) * static_cast<std::size_t>(std::max(cols, 0)),
            fill) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("negative cost matrix dimension");
}

CostMatrix::CostMatrix(int rows, int cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("negative cost matrix dimension");
  if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw std::invalid_argument("cost data size does not match rows*cols");
  }
}

double Assignment::total_cost(const CostMatrix& c) const {
  double total = 0.0;
  for (const auto& [r, col] : matches) total += c(r, col);
  return total;
}

namespace {

// Two-tier cost: the tier counts infeasible cells used, the value sums the
// finite costs. Ordering is lexicographic, so the solver never trades a
// feasible match for a cheaper total.
struct TieredCost {
  std::int64_t tier = 0;
  double value = 0.0;

  TieredCost operator+(const TieredCost& o) const { return {tier + o.tier, value + o.value}; }
  TieredCost operator-(const TieredCost& o) const { return {tier - o.tier, value - o.value}; }
  TieredCost& operator+=(const TieredCost& o) { return *this = *this + o; }
  TieredCost& operator-=(const TieredCost& o) { return *this = *this - o; }
  bool operator<(const TieredCost& o) const {
    return tier < o.tier || (tier == o.tier && value < o.value);
  }
};

constexpr TieredCost kUnbounded{INT64_MAX / 4, 0.0};

// Shortest augmenting path with potentials, O(n^2 m), n <= m. Returns, for
// each row, its assigned column.
std::vector<int> solve_rows_le_cols(const std::vector<std::vector<TieredCost>>& a, int n, int m) {
  std::vector<TieredCost> u(n + 1), v(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<TieredCost> minv(m + 1, kUnbounded);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      TieredCost delta = kUnbounded;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const TieredCost cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  const int rows = cost.rows();
  const int cols = cost.cols();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = cost(r, c);
      if (std::isnan(v) || v == -std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("cost matrix entries must be finite or kInfeasible");
      }
    }
  }

  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  std::vector<std::vector<TieredCost>> a(n, std::vector<TieredCost>(m));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double v = transposed ? cost(j, i) : cost(i, j);
      a[i][j] = CostMatrix::feasible(v) ? TieredCost{0, v} : TieredCost{1, 0.0};
    }
  }

  Assignment out;
  std::vector<char> row_used(rows, 0), col_used(cols, 0);
  if (n > 0) {
    const std::vector<int> assigned = solve_rows_le_cols(a, n, m);
    for (int i = 0; i < n; ++i) {
      const int r = transposed ? assigned[i] : i;
      const int c = transposed ? i : assigned[i];
      if (r < 0 || c < 0 || !CostMatrix::feasible(cost(r, c))) continue;
      out.matches.emplace_back(r, c);
      row_used[r] = 1;
      col_used[c] = 1;
    }
  }
  std::sort(out.matches.begin(), out.matches.end());
  for (int r = 0; r < rows; ++r) {
    if (!row_used[r]) out.unmatched_rows.push_back(r);
  }
  for (int c = 0; c < cols; ++c) {
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  }
  return out;
}

double appearance_distance(std::span<const Embedding> gallery, std::span<const double> e) {
  if (gallery.empty()) throw std::invalid_argument("appearance gallery is empty");
  double best = 2.0;
  for (const Embedding& g : gallery) {
    if (g.size() != e.size()) {
      throw std::invalid_argument("embedding dimension mismatch: " + std::to_string(g.size()) +
                                  " vs " + std::to_string(e.size()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += g[i] * e[i];
    best = std::min(best, std::clamp(1.0 - dot, 0.0, 2.0));
  }
  return best;
}

CostMatrix build_cost(std::span<const Track* const> tracks, std::span<const Detection> dets,
                      const AssocWeights& weights, const KalmanFilter& kf) {
  CostMatrix cost(static_cast<int>(tracks.size()), static_cast<int>(dets.size()), kInfeasible);
  for (std::size_t c = 0; c < dets.size(); ++c) {
    const Detection& det = dets[c];
    if (!(det.bbox.w > 0.0 && det.bbox.h > 0.0)) continue;
    const Measurement meas = to_measurement(det.bbox);
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      const Track& track = *tracks[r];
      const double gate = kf.gating_distance(track.state, meas);
      if (gate > weights.gate_chi2) continue;
      double value = 0.0;
      if (det.embedding && !track.gallery.empty()) {
        const double app = appearance_distance(track.gallery, *det.embedding);
        if (app > weights.max_appearance) continue;
        value = weights.lambda * (gate / weights.gate_chi2) + (1.0 - weights.lambda) * app;
      } else {
        value = 1.0 - box_iou(from_state(track.state), det.bbox);
        if (value > weights.max_iou_cost) continue;
      }
      cost(static_cast<int>(r), static_cast<int>(c)) = value;
    }
  }
  return cost;
}

CostMatrix iou_cost(std::span<const Track* const> tracks, std::span<const Detection> dets,
                    double max_iou_cost) {
  CostMatrix cost(static_cast<int>(tracks.size()), static_cast<int>(dets.size()), kInfeasible);
  for (std::size_t r = 0; r < tracks.size(); ++r) {
    const BBox predicted = from_state(tracks[r]->state);
    for (std::size_t c = 0; c < dets.size(); ++c) {
      const double value = 1.0 - box_iou(predicted, dets[c].bbox);
      if (value <= max_iou_cost) cost(static_cast<int>(r), static_cast<int>(c)) = value;
    }
  }
  return cost;
}

}  // namespace owtk
