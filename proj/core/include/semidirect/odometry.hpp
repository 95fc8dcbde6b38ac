#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "semidirect/config.hpp"
#include "semidirect/trajectory.hpp"

namespace semidirect {

/// Mean Euclidean displacement between the current-left and previous-left
/// positions of the matches [px]. Throws NoMatches on an empty list.
double motion_magnitude(const std::vector<QuadMatch>& matches);

enum class FrameStatus : std::uint8_t { TrackedByFeatures, NewKeyframe, TrackingLost };

struct FrameOutcome {
  FrameStatus status = FrameStatus::TrackedByFeatures;
  std::size_t frame_index = 0;
  KeyframeId keyframe = 0;      ///< keyframe the frame is expressed against (the new one on NewKeyframe)
  RigidTransform pose;          ///< logged camera -> world pose
  bool features_ok = false;
  double displacement = 0.0;    ///< accumulated mean match displacement since the keyframe [px]
  std::optional<AlignmentResult> alignment;  ///< set whenever direct registration ran
  double tracking_ms = 0.0;     ///< feature tracking plus direct registration
  double mapping_ms = 0.0;      ///< stereo, propagation, fusion and keyframe construction
};

/// One tracked frame relative to its keyframe; the absolute pose follows
/// from whatever pose the keyframe currently has.
struct FrameAnchor {
  double timestamp = 0.0;
  KeyframeId keyframe = 0;
  RigidTransform relative;      ///< keyframe camera -> frame camera
};

/// The hybrid tracker. Frames are tracked by stereo features while the
/// accumulated image motion stays below the threshold; beyond it (or after
/// K_max frames, or when features fail) the frame is registered directly
/// against the keyframe, seeded with the feature estimate, and becomes the
/// next keyframe. Keyframes go to a SlamBackend for constraint search and
/// pose-graph optimization.
class Odometry {
 public:
  explicit Odometry(const EngineConfig& config);
  ~Odometry();

  Odometry(const Odometry&) = delete;
  Odometry& operator=(const Odometry&) = delete;

  /// Creates keyframe 0 at the world origin from block-matched stereo.
  /// Throws InsufficientDepth below N_min hypotheses.
  FrameOutcome initialize(const StereoFrame& first);

  /// Throws NotInitialized before initialize().
  FrameOutcome process(const StereoFrame& frame);

  bool initialized() const { return keyframe_ != nullptr; }
  const EngineConfig& config() const { return config_; }

  /// Per-frame camera -> world poses as tracked, one per processed frame.
  const Trajectory& trajectory() const { return trajectory_; }
  const std::vector<FrameAnchor>& anchors() const { return anchors_; }
  /// Motion from the previous logged frame to each logged frame (identity
  /// for the first); composing them reproduces the logged poses.
  const std::vector<RigidTransform>& frame_motions() const { return frame_motions_; }

  /// Keyframe camera -> current camera accumulated since the last keyframe.
  const RigidTransform& accumulated_motion() const { return xi_feat_; }
  KeyFramePtr current_keyframe() const { return keyframe_; }
  std::size_t keyframe_count() const { return keyframe_count_; }

  /// Waits for the backend, then re-expresses every frame through the
  /// optimized pose of its keyframe.
  Trajectory optimized_trajectory();

  SlamBackend& backend() { return *backend_; }

 private:
  struct Tracked {
    StereoFrame frame;
    StereoKeypoints keypoints;
  };

  void make_keyframe(const StereoFrame& frame, const DepthMap& stereo, const RigidTransform& motion,
                     const Matrix6d& information, FrameOutcome& outcome);
  void log_frame(double timestamp);
  void log_lost_frame(double timestamp);
  std::uint64_t frame_seed() const;
  int levels_for(const StereoFrame& frame) const;

  EngineConfig config_;
  std::unique_ptr<SlamBackend> backend_;

  KeyFramePtr keyframe_;
  /// World -> camera of the current keyframe by odometry alone. The tracker
  /// never reads optimized poses back, so its log does not depend on when
  /// the backend thread finishes; optimized_trajectory() applies them.
  RigidTransform keyframe_pose_;
  std::size_t keyframe_count_ = 0;
  RigidTransform xi_feat_;          ///< keyframe camera -> current camera
  RigidTransform last_step_;        ///< previous frame -> current frame, for constant-velocity prediction
  double displacement_ = 0.0;
  int frames_since_keyframe_ = 0;
  std::size_t frame_index_ = 0;
  std::optional<Tracked> previous_;

  Trajectory trajectory_;
  std::vector<FrameAnchor> anchors_;
  std::vector<RigidTransform> frame_motions_;
};

}  // namespace semidirect
