#include "owtk/detset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace owtk {

using nlohmann::json;

void ImageTable::add_image(const ImageInfo& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw FormatError("image " + std::to_string(image.id) + " has non-positive size");
  }
  if (!images_.emplace(image.id, image).second) {
    throw FormatError("duplicate image id " + std::to_string(image.id));
  }
}

void ImageTable::add_video(const VideoInfo& video) {
  if (videos_.count(video.id)) {
    throw FormatError("duplicate video id " + std::to_string(video.id));
  }
  for (std::size_t i = 0; i < video.image_ids.size(); ++i) {
    const std::int64_t image_id = video.image_ids[i];
    if (!has_image(image_id)) {
      throw FormatError("video " + std::to_string(video.id) + " references unknown image_id " +
                        std::to_string(image_id));
    }
    const auto [it, inserted] =
        placement_.emplace(image_id, std::pair{video.id, static_cast<std::int64_t>(i)});
    if (!inserted) {
      throw FormatError("image " + std::to_string(image_id) + " appears in more than one video slot");
    }
  }
  videos_.emplace(video.id, video);
}

const ImageInfo& ImageTable::image(std::int64_t id) const {
  const auto it = images_.find(id);
  if (it == images_.end()) throw FormatError("unknown image_id " + std::to_string(id));
  return it->second;
}

std::optional<std::int64_t> ImageTable::video_of(std::int64_t image_id) const {
  const auto it = placement_.find(image_id);
  if (it == placement_.end()) return std::nullopt;
  return it->second.first;
}

std::int64_t ImageTable::frame_of(std::int64_t image_id) const {
  const auto it = placement_.find(image_id);
  return it == placement_.end() ? 0 : it->second.second;
}

void validate_detection(const Detection& det, const ImageTable& table) {
  if (!table.has_image(det.image_id)) {
    throw FormatError("unknown image_id " + std::to_string(det.image_id));
  }
  if (!det.bbox.valid()) throw FormatError("invalid bbox");
  if (!(det.score >= 0.0 && det.score <= 1.0)) {
    throw FormatError("score " + std::to_string(det.score) + " outside [0,1]");
  }
  if (det.embedding) {
    double sq = 0.0;
    for (double v : *det.embedding) sq += v * v;
    const double norm = std::sqrt(sq);
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
      throw FormatError("embedding is not unit-norm (norm " + std::to_string(norm) + ")");
    }
  }
  if (det.mask) {
    det.mask->validate();
    const ImageInfo& img = table.image(det.image_id);
    if (det.mask->height != img.height || det.mask->width != img.width) {
      throw FormatError("mask size does not match image " + std::to_string(det.image_id));
    }
  }
}

void DetectionSet::add(Detection det) {
  validate_detection(det, table);
  det.frame_id = table.frame_of(det.image_id);
  by_image[det.image_id].push_back(std::move(det));
}

std::size_t DetectionSet::size() const {
  std::size_t n = 0;
  for (const auto& [id, dets] : by_image) n += dets.size();
  return n;
}

std::vector<Detection> DetectionSet::flatten() const {
  std::vector<Detection> out;
  out.reserve(size());
  for (const auto& [id, dets] : by_image) out.insert(out.end(), dets.begin(), dets.end());
  return out;
}

const std::vector<Detection>& DetectionSet::on_image(std::int64_t image_id) const {
  static const std::vector<Detection> kNone;
  const auto it = by_image.find(image_id);
  return it == by_image.end() ? kNone : it->second;
}

std::string rle_to_string(const RleMask& rle) {
  std::string s;
  const auto& cnts = rle.counts;
  for (std::size_t i = 0; i < cnts.size(); ++i) {
    std::int64_t x = cnts[i];
    if (i > 2) x -= static_cast<std::int64_t>(cnts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

RleMask rle_from_string(const std::string& counts, int height, int width) {
  RleMask rle{height, width, {}};
  std::size_t p = 0;
  while (p < counts.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= counts.size()) throw FormatError("truncated RLE counts string");
      const int c = static_cast<unsigned char>(counts[p]) - 48;
      if (c < 0 || c > 63) throw FormatError("invalid character in RLE counts string");
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= static_cast<std::int64_t>(-1) << (5 * k);
      if (k > 12) throw FormatError("RLE count overflow");
    }
    const std::size_t m = rle.counts.size();
    if (m > 2) x += static_cast<std::int64_t>(rle.counts[m - 2]);
    if (x < 0 || x > static_cast<std::int64_t>(UINT32_MAX)) {
      throw FormatError("RLE count out of range");
    }
    rle.counts.push_back(static_cast<std::uint32_t>(x));
  }
  rle.validate();
  return rle;
}

namespace {

BBox parse_bbox(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("bbox must be [x,y,w,h]");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw FormatError("bbox must be finite with w,h >= 0");
  return b;
}

json bbox_to_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

RleMask parse_segmentation(const json& j) {
  if (!j.is_object() || !j.contains("size") || !j.contains("counts")) {
    throw FormatError("segmentation must be an RLE object {size, counts}");
  }
  const json& size = j.at("size");
  if (!size.is_array() || size.size() != 2) throw FormatError("segmentation size must be [h,w]");
  const int h = size[0].get<int>();
  const int w = size[1].get<int>();
  RleMask rle;
  const json& counts = j.at("counts");
  if (counts.is_string()) {
    rle = rle_from_string(counts.get<std::string>(), h, w);
  } else if (counts.is_array()) {
    rle = RleMask{h, w, {}};
    for (const json& c : counts) {
      const std::int64_t v = c.get<std::int64_t>();
      if (v < 0 || v > static_cast<std::int64_t>(UINT32_MAX)) {
        throw FormatError("RLE count out of range");
      }
      rle.counts.push_back(static_cast<std::uint32_t>(v));
    }
  } else {
    throw FormatError("segmentation counts must be a string or an integer array");
  }
  rle.validate();
  return rle;
}

json segmentation_to_json(const RleMask& rle) {
  return json{{"size", json::array({rle.height, rle.width})}, {"counts", rle_to_string(rle)}};
}

ImageTable parse_tables(const json& doc) {
  ImageTable table;
  const json& images = doc.at("images");
  if (!images.is_array()) throw FormatError("\"images\" must be an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      const json& r = images[i];
      table.add_image({r.at("id").get<std::int64_t>(), r.at("width").get<int>(),
                       r.at("height").get<int>()});
    } catch (const std::exception& e) {
      throw FormatError("images[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (doc.contains("videos")) {
    const json& videos = doc.at("videos");
    if (!videos.is_array()) throw FormatError("\"videos\" must be an array");
    for (std::size_t i = 0; i < videos.size(); ++i) {
      try {
        const json& r = videos[i];
        table.add_video({r.at("id").get<std::int64_t>(),
                         r.at("image_ids").get<std::vector<std::int64_t>>()});
      } catch (const std::exception& e) {
        throw FormatError("videos[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  return table;
}

void tables_to_json(const ImageTable& table, json& doc) {
  json images = json::array();
  for (const auto& [id, img] : table.images()) {
    images.push_back({{"id", img.id}, {"width", img.width}, {"height", img.height}});
  }
  doc["images"] = std::move(images);
  if (table.has_videos()) {
    json videos = json::array();
    for (const auto& [id, v] : table.videos()) {
      videos.push_back({{"id", v.id}, {"image_ids", v.image_ids}});
    }
    doc["videos"] = std::move(videos);
  }
}

std::string record_label(const char* array, std::size_t i, const json& r) {
  std::string label = std::string(array) + "[" + std::to_string(i) + "]";
  if (r.is_object() && r.contains("id") && r.at("id").is_number_integer()) {
    label += " (id " + std::to_string(r.at("id").get<std::int64_t>()) + ")";
  }
  return label;
}

Detection parse_result_record(const json& r) {
  Detection d;
  d.image_id = r.at("image_id").get<std::int64_t>();
  d.bbox = parse_bbox(r.at("bbox"));
  d.score = r.at("score").get<double>();
  d.category_id = r.value("category_id", std::int64_t{1});
  if (r.contains("segmentation") && !r.at("segmentation").is_null()) {
    d.mask = parse_segmentation(r.at("segmentation"));
  }
  if (r.contains("embedding") && !r.at("embedding").is_null()) {
    d.embedding = r.at("embedding").get<Embedding>();
  }
  if (r.contains("track_id") && !r.at("track_id").is_null()) {
    d.track_id = r.at("track_id").get<std::int64_t>();
  }
  return d;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

GroundTruth parse_annotations(const json& doc) {
  if (!doc.is_object() || !doc.contains("images")) {
    throw FormatError("annotation file must be an object with an \"images\" array");
  }
  GroundTruth gt;
  gt.table = parse_tables(doc);
  std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> seen;
  const json empty = json::array();
  const json& anns = doc.contains("annotations") ? doc.at("annotations") : empty;
  if (!anns.is_array()) throw FormatError("\"annotations\" must be an array");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const json& r = anns[i];
    try {
      GtAnnotation a;
      a.id = r.at("id").get<std::int64_t>();
      a.image_id = r.at("image_id").get<std::int64_t>();
      if (!gt.table.has_image(a.image_id)) {
        throw FormatError("unknown image_id " + std::to_string(a.image_id));
      }
      a.bbox = parse_bbox(r.at("bbox"));
      a.category_id = r.value("category_id", std::int64_t{1});
      a.instance_id = r.value("instance_id", a.id);
      if (r.contains("video_id") && !r.at("video_id").is_null()) {
        a.video_id = r.at("video_id").get<std::int64_t>();
      } else {
        a.video_id = gt.table.video_of(a.image_id);
      }
      if (r.contains("segmentation") && !r.at("segmentation").is_null()) {
        a.mask = parse_segmentation(r.at("segmentation"));
        const ImageInfo& img = gt.table.image(a.image_id);
        if (a.mask->height != img.height || a.mask->width != img.width) {
          throw FormatError("mask size does not match image " + std::to_string(a.image_id));
        }
      }
      if (!seen.emplace(a.video_id.value_or(-1), a.image_id, a.instance_id).second) {
        throw FormatError("instance_id " + std::to_string(a.instance_id) +
                          " repeated on image " + std::to_string(a.image_id));
      }
      gt.annotations.push_back(std::move(a));
    } catch (const std::exception& e) {
      throw FormatError(record_label("annotations", i, r) + ": " + e.what());
    }
  }
  return gt;
}

DetectionSet parse_results(const json& doc, const ImageTable* reference) {
  DetectionSet set;
  const json* records = nullptr;
  if (doc.is_array()) {
    if (reference == nullptr) {
      throw FormatError("bare results array needs an image table (supply the annotation file)");
    }
    set.table = *reference;
    records = &doc;
  } else if (doc.is_object() && doc.contains("images")) {
    set.table = parse_tables(doc);
    if (!doc.contains("results")) throw FormatError("results file lacks a \"results\" array");
    records = &doc.at("results");
    if (!records->is_array()) throw FormatError("\"results\" must be an array");
  } else {
    throw FormatError("results file must be an array or an object with images/results");
  }
  for (std::size_t i = 0; i < records->size(); ++i) {
    const json& r = (*records)[i];
    try {
      set.add(parse_result_record(r));
    } catch (const std::exception& e) {
      throw FormatError(record_label("results", i, r) + ": " + e.what());
    }
  }
  return set;
}

json annotations_to_json(const GroundTruth& gt) {
  json doc = json::object();
  tables_to_json(gt.table, doc);
  json anns = json::array();
  std::set<std::int64_t> categories;
  for (const GtAnnotation& a : gt.annotations) {
    json r{{"id", a.id},
           {"image_id", a.image_id},
           {"instance_id", a.instance_id},
           {"bbox", bbox_to_json(a.bbox)},
           {"area", a.bbox.area()},
           {"iscrowd", 0},
           {"category_id", a.category_id}};
    if (a.video_id) r["video_id"] = *a.video_id;
    if (a.mask) r["segmentation"] = segmentation_to_json(*a.mask);
    anns.push_back(std::move(r));
    categories.insert(a.category_id);
  }
  doc["annotations"] = std::move(anns);
  json cats = json::array();
  for (std::int64_t c : categories) cats.push_back({{"id", c}, {"name", "object"}});
  doc["categories"] = std::move(cats);
  return doc;
}

json results_to_json(const DetectionSet& set) {
  json doc = json::object();
  tables_to_json(set.table, doc);
  json results = json::array();
  for (const auto& [image_id, dets] : set.by_image) {
    for (const Detection& d : dets) {
      json r{{"image_id", d.image_id},
             {"bbox", bbox_to_json(d.bbox)},
             {"score", d.score},
             {"category_id", d.category_id}};
      if (d.mask) r["segmentation"] = segmentation_to_json(*d.mask);
      if (d.embedding) r["embedding"] = *d.embedding;
      if (d.track_id) r["track_id"] = *d.track_id;
      results.push_back(std::move(r));
    }
  }
  doc["results"] = std::move(results);
  return doc;
}

GroundTruth load_annotations(const std::filesystem::path& path) {
  try {
    return parse_annotations(read_json(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

DetectionSet load_results(const std::filesystem::path& path, const ImageTable* reference) {
  try {
    return parse_results(read_json(path), reference);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_annotations(const GroundTruth& gt, const std::filesystem::path& path) {
  write_json(annotations_to_json(gt), path);
}

void save_results(const DetectionSet& set, const std::filesystem::path& path) {
  write_json(results_to_json(set), path);
}

std::vector<Detection> class_agnostic_merge(std::vector<Detection> dets) {
  for (auto& d : dets) d.category_id = 1;
  return dets;
}

std::vector<GtAnnotation> class_agnostic_merge(std::vector<GtAnnotation> anns) {
  for (auto& a : anns) a.category_id = 1;
  return anns;
}

DetectionSet class_agnostic_merge(DetectionSet set) {
  for (auto& [id, dets] : set.by_image) {
    for (auto& d : dets) d.category_id = 1;
  }
  return set;
}

GroundTruth class_agnostic_merge(GroundTruth gt) {
  gt.annotations = class_agnostic_merge(std::move(gt.annotations));
  return gt;
}

}  // namespace owtk
