#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace owtk {

// Raised when serialized or in-memory data violates a documented format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Axis-aligned box, COCO convention: top-left corner plus size, in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

Corners to_corners(const BBox& b);
BBox from_corners(const Corners& c);

double box_intersection(const BBox& a, const BBox& b);

// Real-valued intersection over union. Returns 0 when the union is empty.
double box_iou(const BBox& a, const BBox& b);

// Dense binary mask stored column-major, the scan order of the RLE codec.
class DenseMask {
 public:
  DenseMask() = default;
  DenseMask(int height, int width);
  DenseMask(int height, int width, std::vector<std::uint8_t> column_major);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int row, int col) const {
    return pixels_[static_cast<std::size_t>(col) * height_ + row];
  }
  void set(int row, int col, bool on) {
    pixels_[static_cast<std::size_t>(col) * height_ + row] = on ? 1 : 0;
  }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::uint64_t area() const;

  friend bool operator==(const DenseMask&, const DenseMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Column-major run-length mask. counts[0] is the leading background run and
// may be zero; runs then alternate foreground/background.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  std::uint64_t area() const;
  // Throws FormatError if the size or run structure is inconsistent.
  void validate() const;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask rle_encode(const DenseMask& mask);
DenseMask rle_decode(const RleMask& rle);

// Foreground pixels shared by both masks, computed by walking the runs.
std::uint64_t mask_intersection(const RleMask& a, const RleMask& b);

// |a & b| / |a | b|. Two empty masks have IoU 1; empty vs non-empty is 0.
double mask_iou(const RleMask& a, const RleMask& b);

// Rasterizes a box into a filled mask. A pixel is on when its center lies
// inside the box.
RleMask rle_from_box(const BBox& box, int height, int width);

}  // namespace owtk
