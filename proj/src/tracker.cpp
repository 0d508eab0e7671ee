#include "owtk/tracker.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>

namespace owtk {

void TrackerConfig::validate() const {
  if (n_init < 1) throw std::invalid_argument("n_init must be >= 1");
  if (max_age < 1) throw std::invalid_argument("max_age must be >= 1");
  if (gallery_budget < 1) throw std::invalid_argument("gallery_budget must be >= 1");
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) throw std::invalid_argument("nms_iou must lie in [0,1]");
  if (!(score_thresh >= 0.0 && score_thresh <= 1.0)) {
    throw std::invalid_argument("score_thresh must lie in [0,1]");
  }
  if (!(assoc.lambda >= 0.0 && assoc.lambda <= 1.0)) {
    throw std::invalid_argument("lambda must lie in [0,1]");
  }
  if (!(assoc.gate_chi2 > 0.0)) throw std::invalid_argument("gate_chi2 must be positive");
}

Tracker::Tracker(TrackerConfig config) : config_(std::move(config)), kf_(config_.kalman) {
  config_.validate();
}

std::vector<Detection> Tracker::prefilter(std::span<const Detection> dets) const {
  std::vector<Detection> kept = filter_threshold(dets, config_.score_thresh);
  // Boxes without area cannot become Kalman measurements.
  std::erase_if(kept, [](const Detection& d) { return !(d.bbox.w > 0.0 && d.bbox.h > 0.0); });
  kept = nms(kept, config_.nms_iou);
  if (config_.policy) kept = pseudo_label(kept, *config_.policy);
  return kept;
}

void Tracker::match_cascade(std::span<const Detection> dets,
                            std::vector<std::pair<int, int>>& matches,
                            std::vector<int>& unmatched_tracks,
                            std::vector<int>& unmatched_dets) const {
  unmatched_dets.resize(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) unmatched_dets[i] = static_cast<int>(i);

  // Fresher tracks get first pick of the detections.
  for (int level = 0; level < config_.max_age && !unmatched_dets.empty(); ++level) {
    std::vector<int> level_tracks;
    for (std::size_t k = 0; k < tracks_.size(); ++k) {
      const Track& t = tracks_[k];
      if (t.status == TrackStatus::kConfirmed && t.time_since_update == level + 1) {
        level_tracks.push_back(static_cast<int>(k));
      }
    }
    if (level_tracks.empty()) continue;

    std::vector<const Track*> rows;
    for (int k : level_tracks) rows.push_back(&tracks_[k]);
    std::vector<Detection> cols;
    for (int d : unmatched_dets) cols.push_back(dets[d]);

    const Assignment a = hungarian(build_cost(rows, cols, config_.assoc, kf_));
    std::vector<char> taken(cols.size(), 0);
    for (const auto& [r, c] : a.matches) {
      matches.emplace_back(level_tracks[r], unmatched_dets[c]);
      taken[c] = 1;
    }
    std::vector<int> remaining;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!taken[c]) remaining.push_back(unmatched_dets[c]);
    }
    unmatched_dets = std::move(remaining);
  }

  std::vector<char> matched(tracks_.size(), 0);
  for (const auto& [t, d] : matches) matched[t] = 1;
  for (std::size_t k = 0; k < tracks_.size(); ++k) {
    if (tracks_[k].status == TrackStatus::kConfirmed && !matched[k]) {
      unmatched_tracks.push_back(static_cast<int>(k));
    }
  }
}

void Tracker::apply_update(Track& track, const Detection& det, std::int64_t frame_id) {
  track.state = kf_.update(track.state, to_measurement(det.bbox));
  ++track.hits;
  track.time_since_update = 0;
  if (det.embedding) {
    track.gallery.push_back(*det.embedding);
    if (track.gallery.size() > static_cast<std::size_t>(config_.gallery_budget)) {
      track.gallery.erase(track.gallery.begin());
    }
  }
  if (track.status == TrackStatus::kTentative && track.hits >= config_.n_init) {
    track.status = TrackStatus::kConfirmed;
  }
  if (track.status == TrackStatus::kConfirmed) {
    track.history.push_back({frame_id, det.image_id, det.bbox, det.mask, det.score, det.category_id});
  }
}

void Tracker::mark_missed(Track& track) {
  if (track.status == TrackStatus::kTentative || track.time_since_update > config_.max_age) {
    track.status = TrackStatus::kDeleted;
  }
}

void Tracker::start_track(const Detection& det, std::int64_t frame_id) {
  Track t;
  t.track_id = next_id_++;
  t.state = kf_.initiate(to_measurement(det.bbox));
  t.age = 1;
  t.hits = 1;
  if (det.embedding) t.gallery.push_back(*det.embedding);
  if (config_.n_init <= 1) {
    t.status = TrackStatus::kConfirmed;
    t.history.push_back({frame_id, det.image_id, det.bbox, det.mask, det.score, det.category_id});
  }
  tracks_.push_back(std::move(t));
}

std::vector<TrackedDetection> Tracker::step(std::int64_t frame_id, std::span<const Detection> input) {
  if (last_frame_ && frame_id <= *last_frame_) {
    throw std::invalid_argument("frame_id " + std::to_string(frame_id) +
                                " does not increase past " + std::to_string(*last_frame_));
  }
  last_frame_ = frame_id;
  const std::vector<Detection> dets = prefilter(input);

  for (Track& t : tracks_) {
    t.state = kf_.predict(t.state);
    ++t.age;
    ++t.time_since_update;
  }

  std::vector<std::pair<int, int>> matches;
  std::vector<int> unmatched_confirmed;
  std::vector<int> unmatched_dets;
  match_cascade(dets, matches, unmatched_confirmed, unmatched_dets);

  // IoU pass: tentative tracks plus confirmed tracks that were updated on the
  // previous frame but lost the cascade.
  std::vector<int> iou_tracks;
  std::vector<int> unmatched_tracks;
  for (std::size_t k = 0; k < tracks_.size(); ++k) {
    if (tracks_[k].status == TrackStatus::kTentative) iou_tracks.push_back(static_cast<int>(k));
  }
  for (int k : unmatched_confirmed) {
    if (tracks_[k].time_since_update == 1) {
      iou_tracks.push_back(k);
    } else {
      unmatched_tracks.push_back(k);
    }
  }
  std::sort(iou_tracks.begin(), iou_tracks.end());
  {
    std::vector<const Track*> rows;
    for (int k : iou_tracks) rows.push_back(&tracks_[k]);
    std::vector<Detection> cols;
    for (int d : unmatched_dets) cols.push_back(dets[d]);
    const Assignment a = hungarian(iou_cost(rows, cols, config_.assoc.max_iou_cost));
    for (const auto& [r, c] : a.matches) matches.emplace_back(iou_tracks[r], unmatched_dets[c]);
    for (int r : a.unmatched_rows) unmatched_tracks.push_back(iou_tracks[r]);
    std::vector<int> remaining;
    for (int c : a.unmatched_cols) remaining.push_back(unmatched_dets[c]);
    unmatched_dets = std::move(remaining);
  }

  std::vector<TrackedDetection> emitted;
  for (const auto& [k, d] : matches) {
    Track& track = tracks_[k];
    apply_update(track, dets[d], frame_id);
    if (track.status == TrackStatus::kConfirmed) {
      Detection out = dets[d];
      out.frame_id = frame_id;
      out.track_id = track.track_id;
      emitted.push_back({track.track_id, std::move(out)});
    }
  }
  for (int k : unmatched_tracks) mark_missed(tracks_[k]);
  for (int d : unmatched_dets) {
    start_track(dets[d], frame_id);
    const Track& track = tracks_.back();
    if (track.status == TrackStatus::kConfirmed) {
      Detection out = dets[d];
      out.frame_id = frame_id;
      out.track_id = track.track_id;
      emitted.push_back({track.track_id, std::move(out)});
    }
  }

  for (Track& t : tracks_) {
    if (t.status == TrackStatus::kDeleted && !t.history.empty()) retired_.push_back(std::move(t));
  }
  std::erase_if(tracks_, [](const Track& t) { return t.status == TrackStatus::kDeleted; });

  std::sort(emitted.begin(), emitted.end(),
            [](const TrackedDetection& a, const TrackedDetection& b) { return a.track_id < b.track_id; });
  return emitted;
}

std::vector<Track> Tracker::finished_tracks() const {
  std::vector<Track> out = retired_;
  for (const Track& t : tracks_) {
    if (!t.history.empty()) out.push_back(t);
  }
  std::sort(out.begin(), out.end(),
            [](const Track& a, const Track& b) { return a.track_id < b.track_id; });
  return out;
}

namespace {

const VideoInfo& require_video(const DetectionSet& set, std::int64_t video_id) {
  const auto it = set.table.videos().find(video_id);
  if (it == set.table.videos().end()) {
    throw FormatError("unknown video id " + std::to_string(video_id));
  }
  if (it->second.image_ids.empty()) {
    throw std::invalid_argument("video " + std::to_string(video_id) + " has an empty frame list");
  }
  return it->second;
}

std::vector<Detection> frame_detections(const DetectionSet& set, std::int64_t image_id,
                                        std::int64_t frame) {
  std::vector<Detection> dets = set.on_image(image_id);
  for (Detection& d : dets) d.frame_id = frame;
  return dets;
}

}  // namespace

std::vector<Track> run_sequence(const TrackerConfig& config, const DetectionSet& set,
                                std::int64_t video_id) {
  const VideoInfo& video = require_video(set, video_id);
  Tracker tracker(config);
  for (std::size_t f = 0; f < video.image_ids.size(); ++f) {
    const auto frame = static_cast<std::int64_t>(f);
    tracker.step(frame, frame_detections(set, video.image_ids[f], frame));
  }
  return tracker.finished_tracks();
}

std::vector<Detection> tracks_to_detections(std::span<const Track> tracks) {
  std::vector<Detection> out;
  for (const Track& t : tracks) {
    for (const HistoryEntry& h : t.history) {
      Detection d;
      d.frame_id = h.frame_id;
      d.image_id = h.image_id;
      d.bbox = h.bbox;
      d.score = h.score;
      d.category_id = h.category_id;
      d.mask = h.mask;
      d.track_id = t.track_id;
      out.push_back(std::move(d));
    }
  }
  return out;
}

DetectionSet track_all(const TrackerConfig& config, const DetectionSet& set, int jobs) {
  config.validate();
  if (!set.table.has_videos()) throw FormatError("tracking needs a video table");
  std::vector<std::int64_t> video_ids;
  for (const auto& [id, v] : set.table.videos()) video_ids.push_back(id);

  std::vector<std::vector<Detection>> per_video(video_ids.size());
  std::vector<std::exception_ptr> errors(video_ids.size());
  const auto work = [&](std::size_t i) {
    try {
      const VideoInfo& video = require_video(set, video_ids[i]);
      Tracker tracker(config);
      for (std::size_t f = 0; f < video.image_ids.size(); ++f) {
        const auto frame = static_cast<std::int64_t>(f);
        for (TrackedDetection& td :
             tracker.step(frame, frame_detections(set, video.image_ids[f], frame))) {
          per_video[i].push_back(std::move(td.detection));
        }
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, video_ids.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < video_ids.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < video_ids.size(); i = next++) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  DetectionSet out;
  out.table = set.table;
  for (auto& dets : per_video) {
    for (Detection& d : dets) out.by_image[d.image_id].push_back(std::move(d));
  }
  return out;
}

int count_id_switches(const DetectionSet& tracked, const GroundTruth& gt) {
  std::map<std::int64_t, std::vector<const GtAnnotation*>> gt_by_image;
  for (const GtAnnotation& a : gt.annotations) gt_by_image[a.image_id].push_back(&a);

  int switches = 0;
  for (const auto& [video_id, video] : gt.table.videos()) {
    std::map<std::int64_t, std::int64_t> last_match;  // instance -> track id
    for (const std::int64_t image_id : video.image_ids) {
      const auto git = gt_by_image.find(image_id);
      if (git == gt_by_image.end()) continue;
      const std::vector<const GtAnnotation*>& gts = git->second;
      std::vector<const Detection*> preds;
      for (const Detection& d : tracked.on_image(image_id)) {
        if (d.track_id) preds.push_back(&d);
      }
      if (preds.empty()) continue;
      CostMatrix cost(static_cast<int>(gts.size()), static_cast<int>(preds.size()), kInfeasible);
      for (std::size_t r = 0; r < gts.size(); ++r) {
        for (std::size_t c = 0; c < preds.size(); ++c) {
          const double iou = box_iou(gts[r]->bbox, preds[c]->bbox);
          if (iou >= 0.5) cost(static_cast<int>(r), static_cast<int>(c)) = 1.0 - iou;
        }
      }
      for (const auto& [r, c] : hungarian(cost).matches) {
        const std::int64_t instance = gts[r]->instance_id;
        const std::int64_t track = *preds[c]->track_id;
        const auto [it, fresh] = last_match.emplace(instance, track);
        if (!fresh && it->second != track) {
          ++switches;
          it->second = track;
        }
      }
    }
  }
  return switches;
}

}  // namespace owtk
