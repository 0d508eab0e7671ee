#include "owtk/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace owtk {

std::vector<double> default_iou_thresholds() {
  std::vector<double> t(10);
  for (int i = 0; i < 10; ++i) t[i] = 0.5 + 0.05 * i;
  return t;
}

void EvalConfig::validate() const {
  if (max_dets < 1) throw std::invalid_argument("max_dets must be >= 1");
  if (iou_thresholds.empty()) throw std::invalid_argument("need at least one IoU threshold");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("IoU thresholds must lie in (0,1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) {
      throw std::invalid_argument("IoU thresholds must be strictly increasing");
    }
  }
}

int greedy_match_count(const std::vector<std::vector<double>>& iou, double threshold) {
  const std::size_t num_gt = iou.empty() ? 0 : iou.front().size();
  std::vector<char> taken(num_gt, 0);
  int matched = 0;
  for (const auto& row : iou) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (taken[g] || !(row[g] >= threshold)) continue;
      if (best < 0 || row[g] > best_iou) {
        best = static_cast<int>(g);
        best_iou = row[g];
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      ++matched;
    }
  }
  return matched;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions propagate
// from the lowest failing index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EvalResult finish(const EvalConfig& cfg, std::vector<UnitCounts> units) {
  EvalResult result;
  result.max_dets = cfg.max_dets;
  long total_gt = 0;
  std::vector<long> matched(cfg.iou_thresholds.size(), 0);
  for (const UnitCounts& u : units) {
    total_gt += u.num_gt;
    for (std::size_t t = 0; t < matched.size(); ++t) matched[t] += u.matched[t];
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < matched.size(); ++t) {
    const double recall =
        total_gt > 0 ? static_cast<double>(matched[t]) / static_cast<double>(total_gt) : 0.0;
    result.recall_per_threshold.emplace_back(cfg.iou_thresholds[t], recall);
    sum += recall;
  }
  result.ar = sum / static_cast<double>(matched.size());
  result.per_unit = std::move(units);
  return result;
}

// Adds greedy match counts for one group of predictions (score-ordered) and GT.
void accumulate(const std::vector<std::vector<double>>& iou, std::size_t num_gt,
                const EvalConfig& cfg, UnitCounts& counts) {
  counts.num_gt += static_cast<int>(num_gt);
  for (std::size_t t = 0; t < cfg.iou_thresholds.size(); ++t) {
    counts.matched[t] += greedy_match_count(iou, cfg.iou_thresholds[t]);
  }
}

std::vector<std::size_t> by_descending_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

EvalResult ar_at_k(const DetectionSet& preds_in, const GroundTruth& gt_in, const EvalConfig& cfg,
                   int jobs) {
  cfg.validate();
  const DetectionSet preds = cfg.class_agnostic ? class_agnostic_merge(preds_in) : preds_in;
  const GroundTruth gt = cfg.class_agnostic ? class_agnostic_merge(gt_in) : gt_in;
  const bool masks = cfg.iou_kind == IouKind::kMask;

  for (const auto& [image_id, dets] : preds.by_image) {
    if (!gt.table.has_image(image_id)) {
      throw FormatError("prediction references unknown image_id " + std::to_string(image_id));
    }
    if (masks) {
      for (const Detection& d : dets) {
        if (!d.mask) throw FormatError("mask evaluation: prediction on image " +
                                       std::to_string(image_id) + " has no mask");
      }
    }
  }
  std::map<std::int64_t, std::vector<const GtAnnotation*>> gt_by_image;
  for (const GtAnnotation& a : gt.annotations) {
    if (masks && !a.mask) {
      throw FormatError("mask evaluation: annotation " + std::to_string(a.id) + " has no mask");
    }
    gt_by_image[a.image_id].push_back(&a);
  }

  std::vector<std::int64_t> image_ids;
  for (const auto& [id, img] : gt.table.images()) image_ids.push_back(id);
  std::vector<UnitCounts> units(image_ids.size());

  parallel_for(image_ids.size(), jobs, [&](std::size_t i) {
    const std::int64_t image_id = image_ids[i];
    UnitCounts& counts = units[i];
    counts.id = image_id;
    counts.matched.assign(cfg.iou_thresholds.size(), 0);

    const std::vector<Detection>& dets = preds.on_image(image_id);
    std::vector<double> scores;
    for (const Detection& d : dets) scores.push_back(d.score);
    std::vector<std::size_t> order = by_descending_score(scores);
    if (order.size() > static_cast<std::size_t>(cfg.max_dets)) order.resize(cfg.max_dets);

    const auto git = gt_by_image.find(image_id);
    static const std::vector<const GtAnnotation*> kNoGt;
    const std::vector<const GtAnnotation*>& gts = git == gt_by_image.end() ? kNoGt : git->second;

    std::set<std::int64_t> categories;
    for (const GtAnnotation* a : gts) categories.insert(a->category_id);
    for (const std::int64_t category : categories) {
      std::vector<const GtAnnotation*> cat_gt;
      for (const GtAnnotation* a : gts) {
        if (a->category_id == category) cat_gt.push_back(a);
      }
      std::vector<std::vector<double>> iou;
      for (const std::size_t p : order) {
        const Detection& d = dets[p];
        if (d.category_id != category) continue;
        std::vector<double> row;
        row.reserve(cat_gt.size());
        for (const GtAnnotation* a : cat_gt) {
          row.push_back(masks ? mask_iou(*d.mask, *a->mask) : box_iou(d.bbox, a->bbox));
        }
        iou.push_back(std::move(row));
      }
      accumulate(iou, cat_gt.size(), cfg, counts);
    }
  });
  return finish(cfg, std::move(units));
}

double spatio_temporal_iou(std::span<const FrameRegion> a, std::span<const FrameRegion> b,
                           IouKind kind) {
  const auto area = [kind](const FrameRegion& r) -> double {
    if (kind == IouKind::kMask) {
      if (r.mask == nullptr) throw FormatError("mask evaluation: region without mask");
      return static_cast<double>(r.mask->area());
    }
    return r.bbox.area();
  };
  std::map<std::int64_t, const FrameRegion*> by_frame;
  double area_sum = 0.0;
  for (const FrameRegion& r : a) {
    if (!by_frame.emplace(r.image_id, &r).second) {
      throw FormatError("track has two regions on image " + std::to_string(r.image_id));
    }
    area_sum += area(r);
  }
  double inter = 0.0;
  std::set<std::int64_t> seen_b;
  for (const FrameRegion& r : b) {
    if (!seen_b.insert(r.image_id).second) {
      throw FormatError("track has two regions on image " + std::to_string(r.image_id));
    }
    area_sum += area(r);
    const auto it = by_frame.find(r.image_id);
    if (it == by_frame.end()) continue;
    if (kind == IouKind::kMask) {
      inter += static_cast<double>(mask_intersection(*it->second->mask, *r.mask));
    } else {
      inter += box_intersection(it->second->bbox, r.bbox);
    }
  }
  const double uni = area_sum - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

struct TrackRegions {
  std::int64_t key = 0;  // track id or instance id
  std::int64_t category_id = 1;
  double score_sum = 0.0;
  std::vector<FrameRegion> regions;

  double mean_score() const {
    return regions.empty() ? 0.0 : score_sum / static_cast<double>(regions.size());
  }
};

}  // namespace

EvalResult track_ar(const DetectionSet& tracked_in, const GroundTruth& gt_in,
                    const EvalConfig& cfg, int jobs) {
  cfg.validate();
  if (!gt_in.table.has_videos()) throw FormatError("track evaluation needs a video table");
  const DetectionSet tracked = cfg.class_agnostic ? class_agnostic_merge(tracked_in) : tracked_in;
  const GroundTruth gt = cfg.class_agnostic ? class_agnostic_merge(gt_in) : gt_in;
  const bool masks = cfg.iou_kind == IouKind::kMask;

  // video -> key -> regions; std::map keeps the grouping canonical.
  std::map<std::int64_t, std::map<std::int64_t, TrackRegions>> gt_tracks;
  for (const GtAnnotation& a : gt.annotations) {
    const std::optional<std::int64_t> video = gt.table.video_of(a.image_id);
    if (!video) continue;
    if (masks && !a.mask) {
      throw FormatError("mask evaluation: annotation " + std::to_string(a.id) + " has no mask");
    }
    TrackRegions& t = gt_tracks[*video][a.instance_id];
    t.key = a.instance_id;
    t.category_id = a.category_id;
    t.regions.push_back({a.image_id, a.bbox, a.mask ? &*a.mask : nullptr});
  }
  std::map<std::int64_t, std::map<std::int64_t, TrackRegions>> pred_tracks;
  for (const auto& [image_id, dets] : tracked.by_image) {
    if (!gt.table.has_image(image_id)) {
      throw FormatError("prediction references unknown image_id " + std::to_string(image_id));
    }
    const std::optional<std::int64_t> video = gt.table.video_of(image_id);
    if (!video) continue;
    for (const Detection& d : dets) {
      if (!d.track_id) {
        throw FormatError("track evaluation: detection on image " + std::to_string(image_id) +
                          " has no track_id");
      }
      if (masks && !d.mask) {
        throw FormatError("mask evaluation: prediction on image " + std::to_string(image_id) +
                          " has no mask");
      }
      TrackRegions& t = pred_tracks[*video][*d.track_id];
      if (t.regions.empty()) t.category_id = d.category_id;
      t.key = *d.track_id;
      t.score_sum += d.score;
      t.regions.push_back({image_id, d.bbox, d.mask ? &*d.mask : nullptr});
    }
  }

  std::vector<std::int64_t> video_ids;
  for (const auto& [id, v] : gt.table.videos()) video_ids.push_back(id);
  std::vector<UnitCounts> units(video_ids.size());

  parallel_for(video_ids.size(), jobs, [&](std::size_t i) {
    const std::int64_t video_id = video_ids[i];
    UnitCounts& counts = units[i];
    counts.id = video_id;
    counts.matched.assign(cfg.iou_thresholds.size(), 0);

    std::vector<const TrackRegions*> preds;
    if (const auto it = pred_tracks.find(video_id); it != pred_tracks.end()) {
      for (const auto& [key, t] : it->second) preds.push_back(&t);
    }
    std::vector<double> scores;
    for (const TrackRegions* t : preds) scores.push_back(t->mean_score());
    std::vector<std::size_t> order = by_descending_score(scores);
    if (order.size() > static_cast<std::size_t>(cfg.max_dets)) order.resize(cfg.max_dets);

    std::vector<const TrackRegions*> gts;
    if (const auto it = gt_tracks.find(video_id); it != gt_tracks.end()) {
      for (const auto& [key, t] : it->second) gts.push_back(&t);
    }
    std::set<std::int64_t> categories;
    for (const TrackRegions* g : gts) categories.insert(g->category_id);
    for (const std::int64_t category : categories) {
      std::vector<const TrackRegions*> cat_gt;
      for (const TrackRegions* g : gts) {
        if (g->category_id == category) cat_gt.push_back(g);
      }
      std::vector<std::vector<double>> iou;
      for (const std::size_t p : order) {
        if (preds[p]->category_id != category) continue;
        std::vector<double> row;
        for (const TrackRegions* g : cat_gt) {
          row.push_back(spatio_temporal_iou(preds[p]->regions, g->regions, cfg.iou_kind));
        }
        iou.push_back(std::move(row));
      }
      accumulate(iou, cat_gt.size(), cfg, counts);
    }
  });
  return finish(cfg, std::move(units));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string report(std::span<const ReportRow> rows, ReportFormat format) {
  const int k = rows.empty() ? 100 : rows.front().result.max_dets;
  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << "label,max_dets,ar\n";
    for (const ReportRow& r : rows) {
      out << csv_field(r.label) << ',' << r.result.max_dets << ',' << fixed(r.result.ar, 6) << '\n';
    }
    return out.str();
  }
  const std::string metric = "AR@" + std::to_string(k);
  std::size_t label_width = 5;
  for (const ReportRow& r : rows) label_width = std::max(label_width, r.label.size());
  const std::size_t value_width = std::max<std::size_t>(metric.size(), 6);
  const auto line = [&](const std::string& label, const std::string& value) {
    out << label << std::string(label_width - label.size() + 2, ' ')
        << std::string(value_width - std::min(value_width, value.size()), ' ') << value << '\n';
  };
  line("label", metric);
  for (const ReportRow& r : rows) line(r.label, fixed(100.0 * r.result.ar, 1));
  return out.str();
}

nlohmann::json result_to_json(const std::string& label, const EvalResult& result) {
  nlohmann::json recall = nlohmann::json::array();
  for (const auto& [t, r] : result.recall_per_threshold) recall.push_back({t, r});
  return {{"label", label},
          {"max_dets", result.max_dets},
          {"ar", result.ar},
          {"recall_per_threshold", std::move(recall)}};
}

ReportRow result_from_json(const nlohmann::json& doc) {
  try {
    ReportRow row;
    row.label = doc.at("label").get<std::string>();
    row.result.max_dets = doc.at("max_dets").get<int>();
    row.result.ar = doc.at("ar").get<double>();
    if (doc.contains("recall_per_threshold")) {
      for (const auto& pair : doc.at("recall_per_threshold")) {
        row.result.recall_per_threshold.emplace_back(pair.at(0).get<double>(),
                                                     pair.at(1).get<double>());
      }
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluation result: ") + e.what());
  }
}

}  // namespace owtk
