#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "semidirect/direct_alignment.hpp"
#include "semidirect/features.hpp"
#include "semidirect/pose_graph.hpp"
#include "semidirect/stereo_depth.hpp"

namespace semidirect {

enum class EngineMode : std::uint8_t { VisualOdometry, Slam };

/// Every tunable of the pipeline in one place.
struct EngineConfig {
  double motion_threshold = 20.0;    ///< epsilon_motion [px] of accumulated mean match displacement
  int max_frames_per_keyframe = 30;  ///< K_max
  /// Below this accumulated displacement [px] a K_max-forced registration
  /// only re-anchors the tracked motion instead of creating a keyframe.
  double stationary_displacement = 1.0;
  std::uint64_t min_initial_hypotheses = 1000;  ///< N_min
  int pyramid_levels = 0;            ///< 0 picks default_pyramid_levels()
  double gradient_threshold = 0.02;  ///< g_min applied to fused keyframe depth
  /// Cost handed to odometry_information() for keyframes whose motion came
  /// from features because direct registration failed.
  double feature_edge_cost = 1.0;
  std::uint64_t seed = 42;
  ThreadMode threads = ThreadMode::Threaded;
  EngineMode mode = EngineMode::Slam;

  FeatureConfig features;
  BlockMatchConfig stereo;
  FuseConfig fusion;
  AlignmentConfig alignment;
  PoseGraphConfig graph;
  LoopClosureConfig loops;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// TOML-style text: `[section]` headers, `key = value` lines, `#` comments,
/// optional quotes around string values. Unknown sections or keys and
/// unparsable values raise MalformedLine with the line number.
EngineConfig parse_engine_config(std::string_view text);
EngineConfig load_engine_config(const std::filesystem::path& path);

/// Serialization accepted by parse_engine_config.
std::string to_string(const EngineConfig& config);

}  // namespace semidirect
