#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "semidirect/config.hpp"

namespace semidirect::cli {

enum class DatasetKind { Kitti, Euroc, Synth };

/// Everything one `run` invocation needs. For DatasetKind::Synth, `path` is a
/// scene description that is rendered frame by frame in memory.
struct RunManifest {
  DatasetKind dataset = DatasetKind::Kitti;
  std::filesystem::path path;
  std::string sequence = "00";  ///< KITTI sequence id
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  EngineMode mode = EngineMode::Slam;
  std::optional<std::uint64_t> seed;  ///< overrides the config seed when set
  bool deterministic = false;
  std::optional<std::size_t> max_frames;

  /// Creates the output directory; throws IoFailure when it is not writable.
  void validate() const;
};

/// File names written by cmd_run inside RunManifest::out.
namespace outputs {
inline constexpr const char* kTrajectory = "trajectory.txt";   ///< final estimate (optimized in slam mode)
inline constexpr const char* kOdometry = "odometry.txt";       ///< tracker output before optimization
inline constexpr const char* kGroundTruth = "groundtruth.txt";
inline constexpr const char* kGraph = "graph.g2o";
inline constexpr const char* kMap = "map.ply";
inline constexpr const char* kTiming = "timing.csv";
inline constexpr const char* kMetrics = "metrics.csv";
}  // namespace outputs

/// Processes the sequence and writes the files in `outputs`. Returns 0 when
/// every output was written; lost frames are reported but not fatal.
int cmd_run(const RunManifest& manifest, std::ostream& out, std::ostream& err);

enum class Metric { Ate, Rpe, Improve };

struct EvalRequest {
  Metric metric = Metric::Ate;
  std::filesystem::path est;
  std::filesystem::path gt;
  /// Odometry estimate compared against `est` for Metric::Improve.
  std::optional<std::filesystem::path> baseline;
  /// Precomputed errors for Metric::Improve instead of trajectories.
  std::optional<double> vo_ate;
  std::optional<double> slam_ate;
  std::optional<std::filesystem::path> csv;  ///< defaults to <est>.<metric>.csv
  double max_dt = 0.02;
  std::vector<double> segments;  ///< empty selects the KITTI lengths
  bool similarity = false;
  std::string dataset = "dataset";
  std::string method = "estimate";
};

int cmd_eval(const EvalRequest& request, std::ostream& out, std::ostream& err);

/// Writes the scene in the KITTI layout as sequence 00 under `out_dir`.
int cmd_synth(const std::filesystem::path& scene, const std::filesystem::path& out_dir, std::ostream& out,
              std::ostream& err);

/// Parses `argv` and dispatches to a command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semidirect::cli
