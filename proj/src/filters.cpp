#include "owtk/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace owtk {

namespace {

// Indices ordered by descending score; stable so equal scores keep input order.
std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

}  // namespace

FilterPolicy FilterPolicy::threshold(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("threshold tau must lie in [0,1], got " + std::to_string(tau));
  }
  return FilterPolicy(Kind::kThreshold, tau, 0);
}

FilterPolicy FilterPolicy::topk(int k) {
  if (k < 1) throw std::invalid_argument("topk k must be >= 1, got " + std::to_string(k));
  return FilterPolicy(Kind::kTopK, 0.0, k);
}

std::vector<Detection> filter_topk(std::span<const Detection> dets, int k) {
  if (k < 1) throw std::invalid_argument("topk k must be >= 1");
  const auto order = score_order(dets);
  const std::size_t n = std::min(order.size(), static_cast<std::size_t>(k));
  std::vector<Detection> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(dets[order[i]]);
  return out;
}

std::vector<Detection> filter_threshold(std::span<const Detection> dets, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("threshold tau must lie in [0,1]");
  std::vector<Detection> out;
  std::copy_if(dets.begin(), dets.end(), std::back_inserter(out),
               [tau](const Detection& d) { return d.score >= tau; });
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh) {
  if (!(iou_thresh >= 0.0 && iou_thresh <= 1.0)) {
    throw std::invalid_argument("nms iou threshold must lie in [0,1]");
  }
  std::vector<Detection> kept;
  for (const std::size_t i : score_order(dets)) {
    const bool keep = std::all_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return box_iou(k.bbox, dets[i].bbox) < iou_thresh;
    });
    if (keep) kept.push_back(dets[i]);
  }
  return kept;
}

std::vector<Detection> pseudo_label(std::span<const Detection> dets, const FilterPolicy& policy) {
  switch (policy.kind()) {
    case FilterPolicy::Kind::kTopK:
      return filter_topk(dets, policy.k());
    case FilterPolicy::Kind::kThreshold:
      return filter_threshold(dets, policy.tau());
  }
  return {};
}

ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double momentum) {
  if (teacher.values.size() != student.values.size()) {
    throw std::invalid_argument("ema_update: teacher has " + std::to_string(teacher.values.size()) +
                                " entries, student has " + std::to_string(student.values.size()));
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("ema_update: momentum must lie in [0,1]");
  }
  ParamVector out;
  out.values.resize(teacher.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double t = teacher.values[i];
    const double s = student.values[i];
    if (!std::isfinite(t) || !std::isfinite(s)) {
      throw std::invalid_argument("ema_update: non-finite parameter at index " + std::to_string(i));
    }
    // s + m*(t - s) stays inside [min(t,s), max(t,s)] and hits both endpoints exactly.
    out.values[i] = momentum == 1.0 ? t : s + momentum * (t - s);
  }
  return out;
}

}  // namespace owtk
