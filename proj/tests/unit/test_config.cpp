#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "semidirect/config.hpp"
#include "semidirect/error.hpp"

namespace semidirect {
namespace {

ErrorCode code_of(std::string_view text) {
  try {
    parse_engine_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;  // stands for "nothing thrown"; parsing never raises it
}

TEST(EngineConfigParse, EmptyTextGivesDefaults) {
  const EngineConfig c = parse_engine_config("");
  EXPECT_DOUBLE_EQ(c.motion_threshold, 20.0);
  EXPECT_EQ(c.max_frames_per_keyframe, 30);
  EXPECT_EQ(c.min_initial_hypotheses, 1000U);
  EXPECT_EQ(c.loops.candidates, 5);
  EXPECT_DOUBLE_EQ(c.loops.radius, 10.0);
  EXPECT_DOUBLE_EQ(c.graph.loop_information_scale, 0.5);
}

TEST(EngineConfigParse, ReadsSectionsCommentsAndQuotes) {
  const EngineConfig c = parse_engine_config(R"(
# engine settings
[odometry]
motion_threshold = 12.5   # px
threads = "deterministic"
mode = vo
seed = 7

[alignment]
use_depth = false
tau_track = 0.05

[loop_closure]
candidates = 3
)");
  EXPECT_DOUBLE_EQ(c.motion_threshold, 12.5);
  EXPECT_EQ(c.threads, ThreadMode::Deterministic);
  EXPECT_EQ(c.mode, EngineMode::VisualOdometry);
  EXPECT_EQ(c.seed, 7U);
  EXPECT_FALSE(c.alignment.use_depth);
  EXPECT_DOUBLE_EQ(c.alignment.tau_track, 0.05);
  EXPECT_EQ(c.loops.candidates, 3);
}

TEST(EngineConfigParse, SerializationRoundTrips) {
  EngineConfig c;
  c.motion_threshold = 17.25;
  c.features.response_threshold = 0.125f;
  c.graph.odometry_sigma_r = 0.0031;
  c.threads = ThreadMode::Deterministic;
  c.mode = EngineMode::VisualOdometry;
  c.seed = 123456789012345ULL;
  const EngineConfig back = parse_engine_config(to_string(c));
  EXPECT_EQ(to_string(back), to_string(c));
  EXPECT_DOUBLE_EQ(back.graph.odometry_sigma_r, 0.0031);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(EngineConfigParse, MalformedLinesNameTheLine) {
  const std::string text = "[odometry]\nmotion_threshold = 10\nmotion_threshold = fast\n";
  try {
    parse_engine_config(text);
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of("[nowhere]\n"), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of("[odometry]\nunknown = 1\n"), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of("[odometry\n"), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of("[odometry]\nmotion_threshold 3\n"), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of("motion_threshold = 3\n"), ErrorCode::MalformedLine);
}

TEST(EngineConfigParse, ValidatesValues) {
  EXPECT_EQ(code_of("[odometry]\nmotion_threshold = 0\n"), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of("[odometry]\nmotion_threshold = -3\n"), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of("[stereo]\nwindow = 4\n"), ErrorCode::InvalidArgument);
}

TEST(EngineConfigLoad, MissingFile) {
  try {
    load_engine_config("/nonexistent/engine.toml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(EngineConfigLoad, ReadsFile) {
  const auto path = std::filesystem::temp_directory_path() / "semidirect_engine_test.toml";
  {
    std::ofstream out(path);
    out << "[odometry]\nmax_frames_per_keyframe = 12\n";
  }
  EXPECT_EQ(load_engine_config(path).max_frames_per_keyframe, 12);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace semidirect
