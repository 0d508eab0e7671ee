#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "owtk/detset.hpp"
#include "owtk/track.hpp"

namespace owtk {

enum class IouKind { kBox, kMask };

// 0.50, 0.55, ..., 0.95.
std::vector<double> default_iou_thresholds();

struct EvalConfig {
  int max_dets = 100;
  std::vector<double> iou_thresholds = default_iou_thresholds();
  IouKind iou_kind = IouKind::kBox;
  bool class_agnostic = true;

  void validate() const;
};

// Match counts for one image (frame mode) or one video (track mode).
struct UnitCounts {
  std::int64_t id = 0;
  int num_gt = 0;
  std::vector<int> matched;  // per threshold

  friend bool operator==(const UnitCounts&, const UnitCounts&) = default;
};

struct EvalResult {
  int max_dets = 100;
  double ar = 0.0;
  std::vector<std::pair<double, double>> recall_per_threshold;
  std::vector<UnitCounts> per_unit;
};

// Greedy COCO-style matching. `iou` is predictions x GT with predictions
// already in descending score order. Each prediction, in turn, takes the
// unmatched GT with the highest IoU >= threshold (lowest index on ties).
// Returns the number of matched GT.
int greedy_match_count(const std::vector<std::vector<double>>& iou, double threshold);

// Class-agnostic AR@max_dets over frames.
EvalResult ar_at_k(const DetectionSet& preds, const GroundTruth& gt, const EvalConfig& cfg,
                   int jobs = 1);

// Spatio-temporal IoU of two per-frame sequences: sum of per-frame
// intersections over sum of per-frame unions. A frame present on one side
// only adds that side's area to the union.
struct FrameRegion {
  std::int64_t image_id = 0;
  BBox bbox;
  const RleMask* mask = nullptr;
};
double spatio_temporal_iou(std::span<const FrameRegion> a, std::span<const FrameRegion> b,
                           IouKind kind);

// Video AR@max_dets: predicted tracks are the detections of `tracked`
// grouped by (video, track_id); at most max_dets tracks per video, ranked by
// mean score, are matched to GT instance tracks.
EvalResult track_ar(const DetectionSet& tracked, const GroundTruth& gt, const EvalConfig& cfg,
                    int jobs = 1);

enum class ReportFormat { kText, kCsv };

struct ReportRow {
  std::string label;
  EvalResult result;
};

// Text: fixed-width "label  AR@K" table with AR in percent to one decimal.
// CSV: "label,max_dets,ar" with ar in [0,1] to six decimals.
std::string report(std::span<const ReportRow> rows, ReportFormat format = ReportFormat::kText);

nlohmann::json result_to_json(const std::string& label, const EvalResult& result);
ReportRow result_from_json(const nlohmann::json& doc);

}  // namespace owtk
