#include "owtk/kalman.hpp"

#include <cmath>
#include <string>

namespace owtk {

Measurement to_measurement(const BBox& box) {
  if (!(box.w > 0.0 && box.h > 0.0) || !box.valid()) {
    throw std::invalid_argument("measurement needs a finite box with positive size");
  }
  return {box.x + box.w / 2.0, box.y + box.h / 2.0, box.w / box.h, box.h};
}

BBox from_state(const KalmanState& state) {
  const double h = state.mean(3);
  const double w = state.mean(2) * h;
  return {state.mean(0) - w / 2.0, state.mean(1) - h / 2.0, w, h};
}

KalmanFilter::KalmanFilter(KalmanParams params) : params_(params) {}

Eigen::Matrix<double, 4, 8> KalmanFilter::observation_matrix() {
  Eigen::Matrix<double, 4, 8> h = Eigen::Matrix<double, 4, 8>::Zero();
  h.leftCols<4>().setIdentity();
  return h;
}

StateMatrix KalmanFilter::transition_matrix() {
  StateMatrix f = StateMatrix::Identity();
  f.topRightCorner<4, 4>().setIdentity();
  return f;
}

StateMatrix KalmanFilter::process_noise(const KalmanState& s) const {
  const double h = s.mean(3);
  const double sp = params_.std_weight_position * h;
  const double sv = params_.std_weight_velocity * h;
  StateVector std_dev;
  std_dev << sp, sp, 1e-2, sp, sv, sv, 1e-5, sv;
  return std_dev.array().square().matrix().asDiagonal();
}

MeasurementMatrix KalmanFilter::measurement_noise(const KalmanState& s) const {
  const double sp = params_.std_weight_position * s.mean(3);
  MeasurementVector std_dev{sp, sp, 1e-1, sp};
  return std_dev.array().square().matrix().asDiagonal();
}

KalmanState KalmanFilter::initiate(const Measurement& m) const {
  KalmanState s;
  s.mean.head<4>() = m.vector();
  s.mean.tail<4>().setZero();
  const double sp = 2.0 * params_.std_weight_position * m.height;
  const double sv = 10.0 * params_.std_weight_velocity * m.height;
  StateVector std_dev;
  std_dev << sp, sp, 1e-2, sp, sv, sv, 1e-5, sv;
  s.covariance = std_dev.array().square().matrix().asDiagonal();
  return s;
}

KalmanState KalmanFilter::predict(const KalmanState& s) const {
  static const StateMatrix f = transition_matrix();
  KalmanState out;
  out.mean = f * s.mean;
  const StateMatrix p = f * s.covariance * f.transpose() + process_noise(s);
  out.covariance = 0.5 * (p + p.transpose());
  return out;
}

KalmanState KalmanFilter::update(const KalmanState& s, const Measurement& m) const {
  static const Eigen::Matrix<double, 4, 8> h = observation_matrix();
  KalmanState out = s;
  kalman_correct<8, 4>(out.mean, out.covariance, h, measurement_noise(s), m.vector());
  return out;
}

std::pair<MeasurementVector, MeasurementMatrix> KalmanFilter::project(const KalmanState& s) const {
  static const Eigen::Matrix<double, 4, 8> h = observation_matrix();
  MeasurementMatrix cov = h * s.covariance * h.transpose() + measurement_noise(s);
  return {h * s.mean, 0.5 * (cov + cov.transpose())};
}

double KalmanFilter::gating_distance(const KalmanState& s, const Measurement& m) const {
  const auto [mean, cov] = project(s);
  const MeasurementVector y = m.vector() - mean;
  return mahalanobis_squared<4>(y, cov);
}

}  // namespace owtk
