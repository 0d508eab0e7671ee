#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "owtk/geometry.hpp"

namespace owtk {

struct ImageInfo {
  std::int64_t id = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

// A video is an explicitly ordered list of image ids.
struct VideoInfo {
  std::int64_t id = 0;
  std::vector<std::int64_t> image_ids;

  friend bool operator==(const VideoInfo&, const VideoInfo&) = default;
};

// Image and video tables shared by ground truth and result files.
class ImageTable {
 public:
  void add_image(const ImageInfo& image);
  // Every image must already be present and belong to no other video.
  void add_video(const VideoInfo& video);

  bool has_image(std::int64_t id) const { return images_.count(id) != 0; }
  const ImageInfo& image(std::int64_t id) const;
  const std::map<std::int64_t, ImageInfo>& images() const { return images_; }
  const std::map<std::int64_t, VideoInfo>& videos() const { return videos_; }
  bool has_videos() const { return !videos_.empty(); }

  // Video containing the image, if any.
  std::optional<std::int64_t> video_of(std::int64_t image_id) const;
  // Position of the image in its video's frame list; 0 for stand-alone images.
  std::int64_t frame_of(std::int64_t image_id) const;

  friend bool operator==(const ImageTable&, const ImageTable&) = default;

 private:
  std::map<std::int64_t, ImageInfo> images_;
  std::map<std::int64_t, VideoInfo> videos_;
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> placement_;
};

using Embedding = std::vector<double>;

struct Detection {
  std::int64_t frame_id = 0;
  std::int64_t image_id = 0;
  BBox bbox;
  double score = 0.0;
  std::int64_t category_id = 1;
  std::optional<RleMask> mask;
  std::optional<Embedding> embedding;
  // Set on tracker output only.
  std::optional<std::int64_t> track_id;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GtAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t instance_id = 0;
  BBox bbox;
  std::int64_t category_id = 1;
  std::optional<RleMask> mask;
  std::optional<std::int64_t> video_id;

  friend bool operator==(const GtAnnotation&, const GtAnnotation&) = default;
};

// Detections grouped by image, plus the image/video tables they refer to.
struct DetectionSet {
  ImageTable table;
  std::map<std::int64_t, std::vector<Detection>> by_image;

  // Validates the detection against the table, fills frame_id, appends.
  void add(Detection det);
  std::size_t size() const;
  std::vector<Detection> flatten() const;
  const std::vector<Detection>& on_image(std::int64_t image_id) const;

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

struct GroundTruth {
  ImageTable table;
  std::vector<GtAnnotation> annotations;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

// Checks score range, box validity, embedding norm and mask size.
void validate_detection(const Detection& det, const ImageTable& table);

// COCO compressed counts string (LEB128-like, 6 bits per char, ASCII 48..111,
// counts after the second delta-coded against counts[i-2]).
std::string rle_to_string(const RleMask& rle);
RleMask rle_from_string(const std::string& counts, int height, int width);

// Parse/serialize. Parse errors are FormatError naming the offending record.
GroundTruth parse_annotations(const nlohmann::json& doc);
// `reference` supplies the image table when the document is a bare COCO
// results array, and is ignored when the document carries its own tables.
DetectionSet parse_results(const nlohmann::json& doc, const ImageTable* reference = nullptr);
nlohmann::json annotations_to_json(const GroundTruth& gt);
nlohmann::json results_to_json(const DetectionSet& set);

GroundTruth load_annotations(const std::filesystem::path& path);
DetectionSet load_results(const std::filesystem::path& path,
                          const ImageTable* reference = nullptr);
void save_annotations(const GroundTruth& gt, const std::filesystem::path& path);
void save_results(const DetectionSet& set, const std::filesystem::path& path);

// Collapses every category to 1. Order and all other fields are unchanged.
std::vector<Detection> class_agnostic_merge(std::vector<Detection> dets);
std::vector<GtAnnotation> class_agnostic_merge(std::vector<GtAnnotation> anns);
DetectionSet class_agnostic_merge(DetectionSet set);
GroundTruth class_agnostic_merge(GroundTruth gt);

}  // namespace owtk
