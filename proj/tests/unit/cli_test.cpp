#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "owtk/cli.hpp"
#include "owtk/detset.hpp"

namespace owtk {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("owtk_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CliTest, NoSubcommandIsUsageError) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--bogus"}).code, kExitUsage);
}

TEST_F(CliTest, HelpListsDefaults) {
  const CliRun r = run({"track", "--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* knob : {"--n-init", "--max-age", "--lambda", "--gate-chi2", "--score-thresh",
                           "--nms-iou", "--gallery-budget", "--max-iou-cost", "--jobs"}) {
    EXPECT_NE(r.out.find(knob), std::string::npos) << knob;
  }
  EXPECT_NE(r.out.find("9.4877"), std::string::npos);
  EXPECT_NE(run({"filter", "--help"}).out.find("15"), std::string::npos);
}

TEST_F(CliTest, MissingPathsAreUsageErrors) {
  EXPECT_EQ(run({"eval", "--gt", path("gt.json")}).code, kExitUsage);
  EXPECT_EQ(run({"filter", path("in.json")}).code, kExitUsage);
  EXPECT_EQ(run({"simulate", "--gt-out", path("g.json")}).code, kExitUsage);
}

TEST_F(CliTest, MissingFileIsDataError) {
  const CliRun r = run({"eval", "--gt", path("nope.json"), "--pred", path("nope2.json")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, PipelineProducesPerfectScore) {
  ASSERT_EQ(run({"simulate", "--seed", "7", "--min-separation", "20", "--gt-out", path("gt.json"),
                 "--det-out", path("det.json")})
                .code,
            kExitOk);
  ASSERT_EQ(run({"filter", "--policy", "topk", "--k", "15", path("det.json"), path("f.json")}).code,
            kExitOk);
  ASSERT_EQ(run({"track", path("f.json"), path("t.json")}).code, kExitOk);
  const CliRun frame = run({"eval", "--gt", path("gt.json"), "--pred", path("f.json")});
  EXPECT_EQ(frame.code, kExitOk);
  EXPECT_EQ(frame.out, "label   AR@100\nresult   100.0\n");
  const CliRun video = run({"eval", "--gt", path("gt.json"), "--pred", path("t.json"), "--mode", "video",
                         "--id-switches", "--csv"});
  EXPECT_EQ(video.code, kExitOk);
  EXPECT_NE(video.out.find("id_switches 0"), std::string::npos) << video.out;
}

TEST_F(CliTest, FilterThresholdAndTopk) {
  std::ofstream(path("gt.json")) << R"({"images": [{"id": 1, "width": 50, "height": 50}]})";
  std::ofstream(path("in.json")) << R"([
    {"image_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9, "category_id": 3},
    {"image_id": 1, "bbox": [1, 0, 10, 10], "score": 0.8},
    {"image_id": 1, "bbox": [30, 30, 10, 10], "score": 0.2}])";
  ASSERT_EQ(run({"filter", "--gt", path("gt.json"), "--policy", "threshold", "--tau", "0.5",
                 path("in.json"), path("a.json")})
                .code,
            kExitOk);
  EXPECT_EQ(load_results(path("a.json")).size(), 2u);
  ASSERT_EQ(run({"filter", "--gt", path("gt.json"), "--policy", "topk", "--k", "2", "--nms-iou", "0.5",
                 "--class-agnostic", path("in.json"), path("b.json")})
                .code,
            kExitOk);
  const DetectionSet b = load_results(path("b.json"));
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.on_image(1)[0].category_id, 1);
  EXPECT_EQ(b.on_image(1)[1].score, 0.2);
}

TEST_F(CliTest, BadValuesRejected) {
  EXPECT_EQ(run({"filter", "--policy", "median", "a", "b"}).code, kExitUsage);
  EXPECT_EQ(run({"filter", "--tau", "2", "a", "b"}).code, kExitUsage);
}

TEST_F(CliTest, PrintConfigShowsResolvedValues) {
  const CliRun r = run({"track", "--max-age", "12", "--print-config"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("[track]"), std::string::npos);
  EXPECT_NE(r.out.find("max-age = 12"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n-init = 3"), std::string::npos) << r.out;
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  std::ofstream(path("owtk.toml")) << "[track]\nmax-age = 7\nn-init = 2\n";
  const CliRun r = run({"--config", path("owtk.toml"), "track", "--n-init", "4", "--print-config"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("max-age = 7"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n-init = 4"), std::string::npos) << r.out;
}

TEST_F(CliTest, ReportCombinesEvalOutputs) {
  std::ofstream(path("r1.json")) << R"({"label": "topk", "max_dets": 100, "ar": 0.624})";
  std::ofstream(path("r2.json")) << R"({"label": "threshold", "max_dets": 100, "ar": 0.663})";
  const CliRun r = run({"report", path("r1.json"), path("r2.json")});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "label      AR@100\ntopk         62.4\nthreshold    66.3\n");
  EXPECT_EQ(run({"report", path("missing.json")}).code, kExitData);
}

TEST_F(CliTest, OutputsAreByteIdenticalAcrossRuns) {
  for (const char* suffix : {"1", "2"}) {
    const std::string s(suffix);
    ASSERT_EQ(run({"simulate", "--seed", "3", "--jitter", "1.5", "--clutter-rate", "1", "--gt-out",
                   path("gt" + s), "--det-out", path("det" + s)})
                  .code,
              kExitOk);
    ASSERT_EQ(run({"track", "--jobs", s, path("det" + s), path("trk" + s)}).code, kExitOk);
  }
  EXPECT_EQ(slurp(path("gt1")), slurp(path("gt2")));
  EXPECT_EQ(slurp(path("det1")), slurp(path("det2")));
  EXPECT_EQ(slurp(path("trk1")), slurp(path("trk2")));
}

}  // namespace
}  // namespace owtk
