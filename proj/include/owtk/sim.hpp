#pragma once

#include <cstdint>
#include <vector>

#include "owtk/detset.hpp"

namespace owtk {

// SplitMix64 (Steele, Lea, Flood 2014). Fully specified by its three
// constants, so every platform reproduces the same stream.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by Box-Muller (cosine branch, two uniforms per draw).
  double normal();
  // Knuth's multiplication method; mean must be <= 50.
  int poisson(double mean);

 private:
  std::uint64_t state_;
};

// Seed of the detection stream for one frame.
std::uint64_t frame_stream_seed(std::uint64_t seed, std::int64_t frame);

struct SequenceSpec {
  int n_objects = 5;
  int n_frames = 100;
  int image_width = 640;
  int image_height = 480;
  double min_speed = 0.5;  // px/frame
  double max_speed = 3.0;
  double min_size = 30.0;  // box side, px
  double max_size = 80.0;
  double turn_rate = 0.0;  // max |heading change| per frame, rad
  double jitter_sigma = 0.0;
  double score_sigma = 0.0;
  double drop_rate = 0.0;
  double clutter_rate = 0.0;  // expected false detections per frame
  int embedding_dim = 16;     // 0 disables embeddings
  double embedding_noise = 0.0;
  // > 0 confines each object to its own vertical lane; lanes are at least
  // this many pixels apart, so objects never overlap.
  double min_separation = 0.0;
  bool masks = false;
  std::uint64_t seed = 0;
  std::int64_t video_id = 1;
  std::int64_t first_image_id = 1;

  void validate() const;
};

struct SimOutput {
  GroundTruth gt;
  DetectionSet detections;
};

SimOutput simulate(const SequenceSpec& spec);

}  // namespace owtk
