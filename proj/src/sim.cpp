#include "owtk/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace owtk {

double SplitMix64::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int SplitMix64::poisson(double mean) {
  if (!(mean >= 0.0 && mean <= 50.0)) throw std::invalid_argument("poisson mean must lie in [0,50]");
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform();
  while (p > limit) {
    ++k;
    p *= uniform();
  }
  return k;
}

std::uint64_t frame_stream_seed(std::uint64_t seed, std::int64_t frame) {
  SplitMix64 a(static_cast<std::uint64_t>(frame) + 0xD1B54A32D192ED03ULL);
  SplitMix64 b(seed ^ a.next());
  return b.next();
}

void SequenceSpec::validate() const {
  const auto fail = [](const std::string& what) { throw std::invalid_argument("simulate: " + what); };
  if (n_objects <= 0) fail("n_objects must be positive");
  if (n_frames <= 0) fail("n_frames must be positive");
  if (image_width <= 0 || image_height <= 0) fail("image size must be positive");
  if (!(min_speed >= 0.0 && max_speed >= min_speed)) fail("speed range invalid");
  if (!(min_size > 0.0 && max_size >= min_size)) fail("size range invalid");
  if (max_size > image_height) fail("max_size exceeds image height");
  if (!(turn_rate >= 0.0)) fail("turn_rate must be >= 0");
  if (!(jitter_sigma >= 0.0 && score_sigma >= 0.0 && embedding_noise >= 0.0)) {
    fail("noise sigmas must be >= 0");
  }
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) fail("drop_rate must lie in [0,1]");
  if (!(clutter_rate >= 0.0 && clutter_rate <= 50.0)) fail("clutter_rate must lie in [0,50]");
  if (embedding_dim < 0) fail("embedding_dim must be >= 0");
  if (!(min_separation >= 0.0)) fail("min_separation must be >= 0");
  const double region = min_separation > 0.0
                            ? static_cast<double>(image_width) / n_objects - min_separation
                            : static_cast<double>(image_width);
  if (region < max_size) fail("lane or image width is smaller than max_size");
}

namespace {

struct Region {
  double x0, y0, x1, y1;
};

struct ObjectState {
  BBox box;
  double vx = 0.0;
  double vy = 0.0;
  double turn = 0.0;
  std::int64_t category_id = 1;
  Embedding embedding;
  Region region{};
};

Embedding random_unit(SplitMix64& rng, int dim) {
  Embedding e(static_cast<std::size_t>(dim));
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& v : e) {
      v = rng.normal();
      sq += v * v;
    }
  } while (sq == 0.0);
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : e) v *= inv;
  return e;
}

// Mirrors the position back into [lo, hi - size] and flips the velocity.
void reflect(double& pos, double& vel, double size, double lo, double hi) {
  const double max_pos = hi - size;
  if (pos < lo) {
    pos = 2.0 * lo - pos;
    vel = -vel;
  } else if (pos > max_pos) {
    pos = 2.0 * max_pos - pos;
    vel = -vel;
  }
  pos = std::clamp(pos, lo, max_pos);
}

BBox clip_to_image(BBox b, int width, int height) {
  const double x1 = std::clamp(b.x, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(b.y, 0.0, static_cast<double>(height));
  const double x2 = std::clamp(b.right(), 0.0, static_cast<double>(width));
  const double y2 = std::clamp(b.bottom(), 0.0, static_cast<double>(height));
  return from_corners({x1, y1, x2, y2});
}

}  // namespace

SimOutput simulate(const SequenceSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  const double W = spec.image_width;
  const double H = spec.image_height;

  std::vector<ObjectState> objects(static_cast<std::size_t>(spec.n_objects));
  for (int i = 0; i < spec.n_objects; ++i) {
    ObjectState& o = objects[static_cast<std::size_t>(i)];
    if (spec.min_separation > 0.0) {
      const double lane = W / spec.n_objects;
      o.region = {i * lane + spec.min_separation / 2.0, 0.0,
                  (i + 1) * lane - spec.min_separation / 2.0, H};
    } else {
      o.region = {0.0, 0.0, W, H};
    }
    const double w = rng.uniform(spec.min_size, spec.max_size);
    const double h = rng.uniform(spec.min_size, spec.max_size);
    o.box = {rng.uniform(o.region.x0, o.region.x1 - w), rng.uniform(o.region.y0, o.region.y1 - h), w, h};
    const double speed = rng.uniform(spec.min_speed, spec.max_speed);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.vx = speed * std::cos(heading);
    o.vy = speed * std::sin(heading);
    o.turn = rng.uniform(-spec.turn_rate, spec.turn_rate);
    o.category_id = 1 + static_cast<std::int64_t>(rng.uniform() * 81.0);
    if (spec.embedding_dim > 0) o.embedding = random_unit(rng, spec.embedding_dim);
  }

  SimOutput out;
  VideoInfo video{spec.video_id, {}};
  for (int f = 0; f < spec.n_frames; ++f) {
    const std::int64_t image_id = spec.first_image_id + f;
    out.gt.table.add_image({image_id, spec.image_width, spec.image_height});
    video.image_ids.push_back(image_id);
  }
  out.gt.table.add_video(video);
  out.detections.table = out.gt.table;

  std::int64_t next_ann_id = 1;
  for (int f = 0; f < spec.n_frames; ++f) {
    const std::int64_t image_id = spec.first_image_id + f;
    SplitMix64 frng(frame_stream_seed(spec.seed, f));

    for (int i = 0; i < spec.n_objects; ++i) {
      const ObjectState& o = objects[static_cast<std::size_t>(i)];
      GtAnnotation a;
      a.id = next_ann_id++;
      a.image_id = image_id;
      a.instance_id = i + 1;
      a.bbox = clip_to_image(o.box, spec.image_width, spec.image_height);
      a.category_id = o.category_id;
      a.video_id = spec.video_id;
      if (spec.masks) a.mask = rle_from_box(a.bbox, spec.image_height, spec.image_width);

      // Every draw happens regardless of the outcome, so changing one rate
      // leaves the other noise sources untouched.
      const double u_drop = frng.uniform();
      const double jx = frng.normal(), jy = frng.normal(), jw = frng.normal(), jh = frng.normal();
      const double js = frng.normal();
      Embedding noisy = o.embedding;
      if (spec.embedding_dim > 0) {
        for (double& v : noisy) v += spec.embedding_noise * frng.normal();
      }

      if (u_drop >= spec.drop_rate) {
        Detection d;
        d.image_id = image_id;
        d.category_id = o.category_id;
        BBox b{a.bbox.x + spec.jitter_sigma * jx, a.bbox.y + spec.jitter_sigma * jy,
               a.bbox.w + spec.jitter_sigma * jw, a.bbox.h + spec.jitter_sigma * jh};
        b = clip_to_image(b, spec.image_width, spec.image_height);
        b.w = std::max(b.w, 1.0);
        b.h = std::max(b.h, 1.0);
        d.bbox = b;
        d.score = std::clamp(1.0 - std::abs(spec.score_sigma * js), 0.0, 1.0);
        if (spec.embedding_dim > 0) {
          if (spec.embedding_noise == 0.0) {
            d.embedding = o.embedding;
          } else {
            double sq = 0.0;
            for (double v : noisy) sq += v * v;
            const double inv = 1.0 / std::sqrt(sq);
            for (double& v : noisy) v *= inv;
            d.embedding = std::move(noisy);
          }
        }
        if (spec.masks) d.mask = rle_from_box(d.bbox, spec.image_height, spec.image_width);
        out.detections.add(std::move(d));
      }
      out.gt.annotations.push_back(std::move(a));
    }

    const int clutter = frng.poisson(spec.clutter_rate);
    for (int c = 0; c < clutter; ++c) {
      Detection d;
      d.image_id = image_id;
      const double w = frng.uniform(spec.min_size, spec.max_size);
      const double h = frng.uniform(spec.min_size, spec.max_size);
      d.bbox = clip_to_image({frng.uniform(0.0, W - w), frng.uniform(0.0, H - h), w, h},
                             spec.image_width, spec.image_height);
      d.score = frng.uniform();
      if (spec.embedding_dim > 0) d.embedding = random_unit(frng, spec.embedding_dim);
      if (spec.masks) d.mask = rle_from_box(d.bbox, spec.image_height, spec.image_width);
      out.detections.add(std::move(d));
    }

    for (ObjectState& o : objects) {
      if (o.turn != 0.0) {
        const double c = std::cos(o.turn), s = std::sin(o.turn);
        const double vx = c * o.vx - s * o.vy;
        o.vy = s * o.vx + c * o.vy;
        o.vx = vx;
      }
      o.box.x += o.vx;
      o.box.y += o.vy;
      reflect(o.box.x, o.vx, o.box.w, o.region.x0, o.region.x1);
      reflect(o.box.y, o.vy, o.box.h, o.region.y0, o.region.y1);
    }
  }
  return out;
}

}  // namespace owtk
