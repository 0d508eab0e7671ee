#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "owtk/detset.hpp"
#include "owtk/kalman.hpp"

namespace owtk {

enum class TrackStatus { kTentative, kConfirmed, kDeleted };

struct HistoryEntry {
  std::int64_t frame_id = 0;
  std::int64_t image_id = 0;
  BBox bbox;
  std::optional<RleMask> mask;
  double score = 0.0;
  std::int64_t category_id = 1;
};

struct Track {
  std::int64_t track_id = 0;
  TrackStatus status = TrackStatus::kTentative;
  KalmanState state;
  // Most recent embeddings, oldest first, capped at the gallery budget.
  std::vector<Embedding> gallery;
  // Number of matched frames; consecutive while tentative.
  int hits = 0;
  int age = 0;
  int time_since_update = 0;
  std::vector<HistoryEntry> history;
};

}  // namespace owtk
