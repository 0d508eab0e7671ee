#include "owtk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace owtk {

bool BBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
         std::isfinite(h) && w >= 0.0 && h >= 0.0;
}

Corners to_corners(const BBox& b) { return {b.x, b.y, b.x + b.w, b.y + b.h}; }

BBox from_corners(const Corners& c) { return {c.x1, c.y1, c.x2 - c.x1, c.y2 - c.y1}; }

double box_intersection(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double box_iou(const BBox& a, const BBox& b) {
  const double inter = box_intersection(a, b);
  // Areas from the same corner differences as the intersection, so that
  // box_iou(a, a) is exactly 1.
  const double area_a = (a.right() - a.x) * (a.bottom() - a.y);
  const double area_b = (b.right() - b.x) * (b.bottom() - b.y);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

DenseMask::DenseMask(int height, int width)
    : DenseMask(height, width,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                          static_cast<std::size_t>(std::max(width, 0)))) {}

DenseMask::DenseMask(int height, int width, std::vector<std::uint8_t> column_major)
    : height_(height), width_(width), pixels_(std::move(column_major)) {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("mask dimensions must be positive");
  }
  if (pixels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw std::invalid_argument("mask pixel buffer does not match height*width");
  }
  for (auto& p : pixels_) p = p ? 1 : 0;
}

std::uint64_t DenseMask::area() const {
  return static_cast<std::uint64_t>(std::count(pixels_.begin(), pixels_.end(), 1));
}

std::uint64_t RleMask::area() const {
  std::uint64_t a = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) a += counts[i];
  return a;
}

void RleMask::validate() const {
  if (height <= 0 || width <= 0) {
    throw FormatError("RLE size must be positive, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  const std::uint64_t total =
      std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  const std::uint64_t expected = static_cast<std::uint64_t>(height) * width;
  if (total != expected) {
    throw FormatError("RLE counts sum to " + std::to_string(total) + " but size is " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] == 0 && counts[i - 1] == 0) {
      throw FormatError("RLE has adjacent zero-length runs at index " + std::to_string(i));
    }
  }
}

RleMask rle_encode(const DenseMask& mask) {
  if (mask.empty()) throw std::invalid_argument("cannot encode an empty grid");
  RleMask rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const std::uint8_t p : mask.pixels()) {
    if (p != current) {
      rle.counts.push_back(run);
      run = 0;
      current = p;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

DenseMask rle_decode(const RleMask& rle) {
  rle.validate();
  std::vector<std::uint8_t> pixels;
  pixels.reserve(static_cast<std::size_t>(rle.height) * rle.width);
  std::uint8_t value = 0;
  for (const std::uint32_t run : rle.counts) {
    pixels.insert(pixels.end(), run, value);
    value ^= 1;
  }
  return DenseMask(rle.height, rle.width, std::move(pixels));
}

std::uint64_t mask_intersection(const RleMask& a, const RleMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask size mismatch");
  }
  std::size_t ia = 0;
  std::size_t ib = 0;
  std::uint64_t left_a = a.counts.empty() ? 0 : a.counts[0];
  std::uint64_t left_b = b.counts.empty() ? 0 : b.counts[0];
  std::uint64_t inter = 0;
  // Odd run index means foreground.
  while (ia < a.counts.size() && ib < b.counts.size()) {
    const std::uint64_t step = std::min(left_a, left_b);
    if ((ia & 1U) && (ib & 1U)) inter += step;
    left_a -= step;
    left_b -= step;
    while (left_a == 0 && ++ia < a.counts.size()) left_a = a.counts[ia];
    while (left_b == 0 && ++ib < b.counts.size()) left_b = b.counts[ib];
  }
  return inter;
}

double mask_iou(const RleMask& a, const RleMask& b) {
  const std::uint64_t inter = mask_intersection(a, b);
  const std::uint64_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

class RunBuilder {
 public:
  void append(std::uint8_t value, std::uint64_t length) {
    if (length == 0) return;
    if (value == current_) {
      run_ += length;
    } else {
      counts_.push_back(static_cast<std::uint32_t>(run_));
      current_ = value;
      run_ = length;
    }
  }
  std::vector<std::uint32_t> finish() {
    counts_.push_back(static_cast<std::uint32_t>(run_));
    return std::move(counts_);
  }

 private:
  std::vector<std::uint32_t> counts_;
  std::uint8_t current_ = 0;
  std::uint64_t run_ = 0;
};

// First pixel index (exclusive upper bound when used as end) whose center
// lies at or beyond `edge`.
int first_center_at_or_after(double edge, int limit) {
  const double v = std::ceil(edge - 0.5);
  return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(limit)));
}

}  // namespace

RleMask rle_from_box(const BBox& box, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
  const int c0 = first_center_at_or_after(box.x, width);
  const int c1 = std::max(c0, first_center_at_or_after(box.right(), width));
  const int r0 = first_center_at_or_after(box.y, height);
  const int r1 = std::max(r0, first_center_at_or_after(box.bottom(), height));
  RunBuilder runs;
  const auto h = static_cast<std::uint64_t>(height);
  runs.append(0, static_cast<std::uint64_t>(c0) * h);
  for (int c = c0; c < c1; ++c) {
    runs.append(0, static_cast<std::uint64_t>(r0));
    runs.append(1, static_cast<std::uint64_t>(r1 - r0));
    runs.append(0, static_cast<std::uint64_t>(height - r1));
  }
  runs.append(0, static_cast<std::uint64_t>(width - c1) * h);
  return RleMask{height, width, runs.finish()};
}

}  // namespace owtk
