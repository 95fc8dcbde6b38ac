#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "semidirect/frame.hpp"
#include "semidirect/synth.hpp"
#include "semidirect/trajectory.hpp"

namespace semidirect {

// ---------------------------------------------------------------------------
// Images

/// Reads an 8- or 16-bit PNG or PGM (P2/P5) and normalizes intensities to
/// [0, 1] by the maximum code value. Colour PNGs are converted to grey.
/// Throws MissingFile or IoFailure.
Image read_image(const std::filesystem::path& path);

/// Quantizes [0, 1] intensities (clamped) to `bit_depth` (8 or 16) bits.
void write_png(const Image& image, const std::filesystem::path& path, int bit_depth = 8);
void write_pgm(const Image& image, const std::filesystem::path& path, int bit_depth = 8);

/// 16-bit PGM of scaled inverse depth (code 0 marks no hypothesis) plus a
/// sidecar `<path>.scale` text file holding the inverse depth per code unit.
void write_depth_pgm(const DepthMap& depth, const std::filesystem::path& path);
/// Inverse of write_depth_pgm. Variances are set to the quantization
/// variance scale^2 / 12.
DepthMap read_depth_pgm(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sequences

struct FramePaths {
  double timestamp = 0.0;  ///< [s]
  std::filesystem::path left;
  std::filesystem::path right;
};

/// Stereo sequence on disk. When `rectification` is set the images are raw
/// and load_frame() rectifies them to `rig`.
struct SequenceSource {
  std::string name;
  std::vector<FramePaths> frames;
  StereoRig rig;
  std::optional<Trajectory> ground_truth;  ///< left rectified camera -> world
  std::optional<RectificationMap> rectification;

  std::size_t size() const { return frames.size(); }
  /// Throws InvalidArgument unless timestamps strictly increase.
  void validate() const;
};

/// Reads and (when needed) rectifies frame `index`. Throws IndexOutOfRange.
StereoFrame load_frame(const SequenceSource& source, std::size_t index);

/// KITTI odometry layout. `dir` is either the dataset root holding
/// sequences/<id>/ and poses/<id>.txt, or the sequence directory itself,
/// in which case poses are looked up at ../../poses/<id>.txt and
/// ./poses.txt. The rig comes from P0 and P1 in calib.txt with baseline
/// -P1[0,3] / P1[0,0]; the image size comes from the first left image.
/// Throws MissingFile, MalformedCalibration or MalformedLine.
SequenceSource load_kitti(const std::filesystem::path& dir, const std::string& sequence);

/// Maximum distance between paired EuRoC left and right timestamps [s].
inline constexpr double kEurocPairingTolerance = 1e-3;

/// EuRoC ASL layout (`dir` is mav0/ or its parent). Stereo frames are
/// paired by nearest timestamp; any frame without a partner within 1 ms
/// raises UnpairableFrames naming the offenders. A stereo rectification is
/// built from the two sensor.yaml files. Ground truth, when present, is
/// interpolated to the frame timestamps it brackets and expressed for the
/// rectified left camera.
SequenceSource load_euroc(const std::filesystem::path& dir);

/// Interpolates `trajectory` at `t`: linear on translation, spherical-linear
/// on rotation. Empty outside the covered time range.
std::optional<RigidTransform> interpolate_pose(const Trajectory& trajectory, double t);

/// Loads frames ahead of the consumer on a reader thread, preserving order.
class FramePrefetcher {
 public:
  explicit FramePrefetcher(const SequenceSource& source, std::size_t depth = 4);
  ~FramePrefetcher();

  FramePrefetcher(const FramePrefetcher&) = delete;
  FramePrefetcher& operator=(const FramePrefetcher&) = delete;

  /// Next frame in sequence order, or empty at the end. A load failure on
  /// the reader thread is rethrown here at the frame where it occurred.
  std::optional<StereoFrame> next();

 private:
  void run();

  const SequenceSource& source_;
  std::size_t depth_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<StereoFrame> queue_;
  std::exception_ptr failure_;
  bool finished_ = false;
  bool stop_ = false;
  std::thread worker_;
};

// ---------------------------------------------------------------------------
// Trajectories

/// "timestamp tx ty tz qx qy qz qw" per line, 9 decimals on the timestamp and
/// 9 significant digits elsewhere.
void write_trajectory_tum(const Trajectory& trajectory, const std::filesystem::path& path);
/// Skips blank lines and `#` comments. Throws MissingFile or MalformedLine.
Trajectory read_trajectory_tum(const std::filesystem::path& path);

/// 12 row-major entries of the 3x4 camera -> world matrix per line.
/// Timestamps are not stored in this format.
void write_trajectory_kitti(const Trajectory& trajectory, const std::filesystem::path& path);
std::vector<RigidTransform> read_kitti_poses(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Maps

struct MapPoint {
  Eigen::Vector3f position;  ///< world frame [m]
  std::uint8_t intensity = 0;
};

/// World-frame unprojection of every depth hypothesis of every keyframe.
/// `world_to_camera`, when given, overrides the keyframe poses one to one.
std::vector<MapPoint> semi_dense_points(const std::vector<KeyFramePtr>& keyframes,
                                        const std::vector<RigidTransform>* world_to_camera = nullptr);

/// Binary little-endian PLY with float x, y, z and uchar intensity.
void write_ply(const std::vector<MapPoint>& points, const std::filesystem::path& path);
void write_ply(const std::vector<KeyFramePtr>& keyframes, const std::filesystem::path& path);
std::vector<MapPoint> read_ply(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Tables

/// One metric value of one method on one dataset.
struct MetricRow {
  std::string dataset;
  std::string method;
  std::string metric;
  double value = 0.0;
};

/// Header "dataset,method,metric,value"; fields containing commas or quotes
/// are quoted.
void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic export

/// Writes `scene` in the KITTI layout under root/sequences/<sequence>/ with
/// ground truth in root/poses/<sequence>.txt. Images are quantized to
/// `bit_depth` bits.
void write_kitti_sequence(const SyntheticScene& scene, const std::filesystem::path& root,
                          const std::string& sequence, int bit_depth = 8);

}  // namespace semidirect
