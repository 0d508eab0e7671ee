#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "owtk/assoc.hpp"
#include "owtk/detset.hpp"
#include "owtk/filters.hpp"
#include "owtk/kalman.hpp"
#include "owtk/track.hpp"

namespace owtk {

struct TrackerConfig {
  double nms_iou = 1.0;
  double score_thresh = 0.3;
  // Extra pre-association filter applied after NMS (none by default).
  std::optional<FilterPolicy> policy;
  int n_init = 3;
  int max_age = 30;
  int gallery_budget = 100;
  AssocWeights assoc;
  KalmanParams kalman;

  // Throws std::invalid_argument on out-of-range knobs.
  void validate() const;
};

struct TrackedDetection {
  std::int64_t track_id = 0;
  Detection detection;
};

// Online tracker for a single sequence: predict, cascade-associate,
// update, manage lifecycles.
class Tracker {
 public:
  explicit Tracker(TrackerConfig config);

  // frame_id must strictly increase between calls. Returns the confirmed
  // tracks matched on this frame, each with the detection it matched,
  // ordered by track id.
  std::vector<TrackedDetection> step(std::int64_t frame_id, std::span<const Detection> dets);

  const std::vector<Track>& live_tracks() const { return tracks_; }
  // All tracks that emitted at least once, live or deleted, by track id.
  std::vector<Track> finished_tracks() const;

 private:
  std::vector<Detection> prefilter(std::span<const Detection> dets) const;
  void match_cascade(std::span<const Detection> dets, std::vector<std::pair<int, int>>& matches,
                     std::vector<int>& unmatched_tracks, std::vector<int>& unmatched_dets) const;
  void apply_update(Track& track, const Detection& det, std::int64_t frame_id);
  void mark_missed(Track& track);
  void start_track(const Detection& det, std::int64_t frame_id);

  TrackerConfig config_;
  KalmanFilter kf_;
  std::vector<Track> tracks_;
  std::vector<Track> retired_;
  std::int64_t next_id_ = 1;
  std::optional<std::int64_t> last_frame_;
};

// Runs one video of `set` frame by frame in its listed order.
std::vector<Track> run_sequence(const TrackerConfig& config, const DetectionSet& set,
                                std::int64_t video_id);

// Tracks every video of `set` (jobs > 1 runs videos concurrently) and returns
// the emitted detections stamped with per-video track ids.
DetectionSet track_all(const TrackerConfig& config, const DetectionSet& set, int jobs = 1);

// Converts finished tracks of one video back into track-stamped detections.
std::vector<Detection> tracks_to_detections(std::span<const Track> tracks);

// CLEAR-MOT identity switches. Per frame, GT instances and predictions are
// matched one-to-one by Hungarian assignment over pairs with IoU >= 0.5; a
// switch is counted whenever a GT instance's matched track id differs from
// the one it was last matched to. Frames follow the video tables of `gt`.
int count_id_switches(const DetectionSet& tracked, const GroundTruth& gt);

}  // namespace owtk
