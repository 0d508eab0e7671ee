#pragma once

#include <span>
#include <vector>

#include "owtk/detset.hpp"

namespace owtk {

// Pseudo-label filtering policy: keep by confidence threshold or keep top-k.
class FilterPolicy {
 public:
  enum class Kind { kThreshold, kTopK };

  static FilterPolicy threshold(double tau);
  static FilterPolicy topk(int k);

  Kind kind() const { return kind_; }
  double tau() const { return tau_; }
  int k() const { return k_; }

  friend bool operator==(const FilterPolicy&, const FilterPolicy&) = default;

 private:
  FilterPolicy(Kind kind, double tau, int k) : kind_(kind), tau_(tau), k_(k) {}
  Kind kind_;
  double tau_;
  int k_;
};

// The k highest-scoring detections, best first. Equal scores keep input order.
std::vector<Detection> filter_topk(std::span<const Detection> dets, int k);

// Detections with score >= tau, in input order.
std::vector<Detection> filter_threshold(std::span<const Detection> dets, double tau);

// Greedy hard NMS on boxes. A detection survives iff its IoU with every
// previously kept detection is strictly below iou_thresh. Output is in keep
// order (descending score, ties by input index).
std::vector<Detection> nms(std::span<const Detection> dets, double iou_thresh);

std::vector<Detection> pseudo_label(std::span<const Detection> dets, const FilterPolicy& policy);

struct ParamVector {
  std::vector<double> values;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// momentum * teacher + (1 - momentum) * student, elementwise.
ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double momentum);

}  // namespace owtk
