#pragma once

#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "owtk/detset.hpp"
#include "owtk/kalman.hpp"
#include "owtk/track.hpp"

namespace owtk {

// Marks a track/detection pair that must never be matched.
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

// Dense row-major cost matrix; rows are tracks, columns detections.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(int rows, int cols, double fill = 0.0);
  CostMatrix(int rows, int cols, std::vector<double> row_major);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[index(r, c)]; }
  double operator()(int r, int c) const { return data_[index(r, c)]; }
  static bool feasible(double v) { return v != kInfeasible; }

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::pair<int, int>> matches;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;

  double total_cost(const CostMatrix& c) const;
};

// Minimum-cost assignment over the finite cells. Among all assignments the
// solver first maximizes the number of feasible matches, then minimizes
// their total cost. Rectangular inputs are padded internally; padding and
// infeasible cells are reported as unmatched.
Assignment hungarian(const CostMatrix& cost);

// min over the gallery of (1 - cosine similarity), for unit vectors.
double appearance_distance(std::span<const Embedding> gallery, std::span<const double> e);

struct AssocWeights {
  double lambda = 0.0;
  double gate_chi2 = 9.4877;  // chi-square 0.95 quantile, 4 dof
  double max_appearance = 0.2;
  double max_iou_cost = 0.7;
};

// Cell cost for each (track, detection) pair. With an embedding on the
// detection and a non-empty gallery on the track the cost blends motion
// (gating distance / gate_chi2) and appearance by lambda; otherwise it is
// 1 - IoU between the track's predicted box and the detection box. Pairs
// outside the Mahalanobis gate or the appearance/IoU limits are infeasible.
CostMatrix build_cost(std::span<const Track* const> tracks, std::span<const Detection> dets,
                      const AssocWeights& weights, const KalmanFilter& kf);

// Pure 1 - IoU cost with no motion gate, used for the final association pass.
CostMatrix iou_cost(std::span<const Track* const> tracks, std::span<const Detection> dets,
                    double max_iou_cost);

}  // namespace owtk
