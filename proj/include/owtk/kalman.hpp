#pragma once

#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "owtk/geometry.hpp"

namespace owtk {

using StateVector = Eigen::Matrix<double, 8, 1>;
using StateMatrix = Eigen::Matrix<double, 8, 8>;
using MeasurementVector = Eigen::Matrix<double, 4, 1>;
using MeasurementMatrix = Eigen::Matrix<double, 4, 4>;

class SingularCovarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Box observation (center x, center y, aspect w/h, height).
struct Measurement {
  double cx = 0.0;
  double cy = 0.0;
  double aspect = 0.0;
  double height = 0.0;

  MeasurementVector vector() const { return {cx, cy, aspect, height}; }
};

// Mean layout: cx, cy, a, h, then the four per-frame velocities.
struct KalmanState {
  StateVector mean = StateVector::Zero();
  StateMatrix covariance = StateMatrix::Zero();
};

Measurement to_measurement(const BBox& box);
BBox from_state(const KalmanState& state);

// Standard deviations of the noise models scale with the box height.
struct KalmanParams {
  double std_weight_position = 1.0 / 20.0;
  double std_weight_velocity = 1.0 / 160.0;
};

// Squared Mahalanobis distance y^T S^-1 y via Cholesky. Throws
// SingularCovarianceError when S is not positive definite.
template <int M>
double mahalanobis_squared(const Eigen::Matrix<double, M, 1>& y,
                           const Eigen::Matrix<double, M, M>& s) {
  const Eigen::LLT<Eigen::Matrix<double, M, M>> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SingularCovarianceError("innovation covariance is not positive definite");
  }
  const Eigen::Matrix<double, M, 1> z = llt.matrixL().solve(y);
  return z.squaredNorm();
}

// Linear Kalman correction of an N-dim state by an M-dim observation
// z = H x + v, v ~ N(0, R). Uses the Joseph form and re-symmetrizes, so the
// posterior covariance stays symmetric positive semidefinite.
template <int N, int M>
void kalman_correct(Eigen::Matrix<double, N, 1>& mean, Eigen::Matrix<double, N, N>& cov,
                    const Eigen::Matrix<double, M, N>& h, const Eigen::Matrix<double, M, M>& r,
                    const Eigen::Matrix<double, M, 1>& z) {
  const Eigen::Matrix<double, M, M> s = h * cov * h.transpose() + r;
  const Eigen::LLT<Eigen::Matrix<double, M, M>> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SingularCovarianceError("innovation covariance is not positive definite");
  }
  // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
  const Eigen::Matrix<double, N, M> gain = llt.solve(h * cov).transpose();
  const Eigen::Matrix<double, M, 1> innovation = z - h * mean;
  mean += gain * innovation;
  const Eigen::Matrix<double, N, N> i_kh =
      Eigen::Matrix<double, N, N>::Identity() - gain * h;
  Eigen::Matrix<double, N, N> updated =
      i_kh * cov * i_kh.transpose() + gain * r * gain.transpose();
  cov = 0.5 * (updated + updated.transpose());
}

// Constant-velocity filter over (cx, cy, a, h) in image space.
class KalmanFilter {
 public:
  explicit KalmanFilter(KalmanParams params = {});

  const KalmanParams& params() const { return params_; }

  KalmanState initiate(const Measurement& m) const;
  KalmanState predict(const KalmanState& s) const;
  KalmanState update(const KalmanState& s, const Measurement& m) const;

  // Predicted measurement mean and innovation covariance (H P H^T + R).
  std::pair<MeasurementVector, MeasurementMatrix> project(const KalmanState& s) const;

  double gating_distance(const KalmanState& s, const Measurement& m) const;

  static Eigen::Matrix<double, 4, 8> observation_matrix();
  static StateMatrix transition_matrix();
  StateMatrix process_noise(const KalmanState& s) const;
  MeasurementMatrix measurement_noise(const KalmanState& s) const;

 private:
  KalmanParams params_;
};

}  // namespace owtk
