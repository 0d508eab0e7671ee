#include <gtest/gtest.h>

#include <set>

#include "owtk/eval.hpp"
#include "owtk/sim.hpp"
#include "owtk/tracker.hpp"

namespace owtk {
namespace {

Detection det_at(double x, double y, double score = 0.9) {
  Detection d;
  d.image_id = 1;
  d.bbox = {x, y, 20, 40};
  d.score = score;
  return d;
}

TEST(TrackerConfig, Validation) {
  TrackerConfig c;
  c.n_init = 0;
  EXPECT_THROW(Tracker{c}, std::invalid_argument);
  c = {};
  c.assoc.lambda = 2.0;
  EXPECT_THROW(Tracker{c}, std::invalid_argument);
}

TEST(Tracker, ConfirmsAfterNInitHits) {
  Tracker t({});
  const std::vector<Detection> one{det_at(100, 100)};
  EXPECT_TRUE(t.step(0, one).empty());
  EXPECT_TRUE(t.step(1, one).empty());
  const auto out = t.step(2, one);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].track_id, 1);
  EXPECT_EQ(out[0].detection.bbox, one[0].bbox);
  EXPECT_EQ(out[0].detection.track_id, 1);
}

TEST(Tracker, NInitOneConfirmsImmediately) {
  TrackerConfig c;
  c.n_init = 1;
  Tracker t(c);
  EXPECT_EQ(t.step(0, std::vector<Detection>{det_at(0, 0)}).size(), 1u);
}

TEST(Tracker, TentativeTrackDiesOnFirstMiss) {
  Tracker t({});
  t.step(0, std::vector<Detection>{det_at(100, 100)});
  t.step(1, {});
  EXPECT_TRUE(t.live_tracks().empty());
  t.step(2, std::vector<Detection>{det_at(100, 100)});
  ASSERT_EQ(t.live_tracks().size(), 1u);
  EXPECT_EQ(t.live_tracks()[0].track_id, 2);
}

TEST(Tracker, ConfirmedTrackSurvivesMaxAgeMisses) {
  TrackerConfig c;
  c.max_age = 5;
  Tracker t(c);
  const std::vector<Detection> one{det_at(100, 100)};
  std::int64_t f = 0;
  for (; f < 3; ++f) t.step(f, one);
  for (int miss = 0; miss < 4; ++miss) t.step(f++, {});
  ASSERT_EQ(t.live_tracks().size(), 1u);
  const auto out = t.step(f++, one);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].track_id, 1);
  for (int miss = 0; miss < 6; ++miss) t.step(f++, {});
  EXPECT_TRUE(t.live_tracks().empty());
  ASSERT_EQ(t.finished_tracks().size(), 1u);
  EXPECT_EQ(t.finished_tracks()[0].history.size(), 2u);
}

TEST(Tracker, ScoreThresholdDropsWeakDetections) {
  TrackerConfig c;
  c.n_init = 1;
  Tracker t(c);
  EXPECT_TRUE(t.step(0, std::vector<Detection>{det_at(0, 0, 0.1)}).empty());
}

TEST(Tracker, RejectsNonIncreasingFrames) {
  Tracker t({});
  t.step(3, {});
  EXPECT_THROW(t.step(3, {}), std::invalid_argument);
}

TEST(Tracker, TwoCrossingFreeObjectsKeepIds) {
  Tracker t({});
  for (int f = 0; f < 30; ++f) {
    const std::vector<Detection> dets{det_at(10 + 2.0 * f, 100), det_at(300 - 2.0 * f, 300)};
    const auto out = t.step(f, dets);
    if (f >= 2) {
      ASSERT_EQ(out.size(), 2u);
      EXPECT_EQ(out[0].track_id, 1);
      EXPECT_EQ(out[0].detection.bbox.y, 100);
      EXPECT_EQ(out[1].track_id, 2);
    }
  }
}

TEST(Tracker, TrackIdsNeverReused) {
  SequenceSpec spec;
  spec.drop_rate = 0.3;
  spec.clutter_rate = 2.0;
  spec.jitter_sigma = 2.0;
  spec.seed = 5;
  const SimOutput sim = simulate(spec);
  const auto tracks = run_sequence({}, sim.detections, 1);
  std::set<std::int64_t> ids;
  for (const Track& t : tracks) EXPECT_TRUE(ids.insert(t.track_id).second);
  const DetectionSet out = track_all({}, sim.detections);
  for (const auto& [image, dets] : out.by_image) {
    std::set<std::int64_t> per_frame;
    for (const Detection& d : dets) EXPECT_TRUE(per_frame.insert(*d.track_id).second);
  }
}

TEST(Tracker, DeterministicAcrossRunsAndJobs) {
  SequenceSpec spec;
  spec.jitter_sigma = 1.5;
  spec.clutter_rate = 1.0;
  spec.drop_rate = 0.1;
  DetectionSet merged;
  for (int v = 0; v < 4; ++v) {
    spec.seed = 40 + v;
    spec.video_id = v + 1;
    spec.first_image_id = 1 + 1000 * v;
    const SimOutput sim = simulate(spec);
    for (const auto& [id, img] : sim.detections.table.images()) merged.table.add_image(img);
    merged.table.add_video(sim.detections.table.videos().begin()->second);
    for (const Detection& d : sim.detections.flatten()) merged.add(d);
  }
  const DetectionSet a = track_all({}, merged, 1);
  EXPECT_EQ(track_all({}, merged, 1), a);
  EXPECT_EQ(track_all({}, merged, 4), a);
}

TEST(Tracker, NoiselessSimulationGivesOneTrackPerObject) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SequenceSpec spec;
    spec.seed = seed;
    spec.min_separation = 20;
    const SimOutput sim = simulate(spec);
    const auto tracks = run_sequence({}, sim.detections, 1);
    EXPECT_EQ(tracks.size(), 5u);
    const DetectionSet out = track_all({}, sim.detections);
    EXPECT_EQ(count_id_switches(out, sim.gt), 0);
    EXPECT_GE(track_ar(out, sim.gt, {}).ar, 0.95);
  }
}

TEST(Tracker, MissingVideoTableIsFormatError) {
  DetectionSet set;
  set.table.add_image({1, 10, 10});
  EXPECT_THROW(track_all({}, set), FormatError);
  EXPECT_THROW(run_sequence({}, set, 1), FormatError);
}

TEST(CountIdSwitches, CountsIdentityChange) {
  ImageTable table;
  for (int i = 1; i <= 3; ++i) table.add_image({i, 100, 100});
  table.add_video({1, {1, 2, 3}});
  GroundTruth gt{table, {}};
  DetectionSet tracked{table, {}};
  for (int i = 1; i <= 3; ++i) {
    gt.annotations.push_back({i, i, 1, {10, 10, 20, 20}, 1, {}, 1});
    Detection d;
    d.image_id = i;
    d.bbox = {10, 10, 20, 20};
    d.score = 1.0;
    d.track_id = i == 3 ? 2 : 1;
    tracked.add(d);
  }
  EXPECT_EQ(count_id_switches(tracked, gt), 1);
}

// Average video AR over 20 seeds should not improve when detections drop out.
TEST(Tracker, TrackArDegradesWithDropRate) {
  std::vector<double> mean_ar;
  for (double drop : {0.0, 0.2, 0.4, 0.6}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SequenceSpec spec;
      spec.seed = seed;
      spec.drop_rate = drop;
      spec.jitter_sigma = 1.0;
      const SimOutput sim = simulate(spec);
      sum += track_ar(track_all({}, sim.detections), sim.gt, {}).ar;
    }
    mean_ar.push_back(sum / 20.0);
  }
  for (std::size_t i = 1; i < mean_ar.size(); ++i) {
    EXPECT_LE(mean_ar[i], mean_ar[i - 1]) << "drop index " << i;
  }
}

}  // namespace
}  // namespace owtk
