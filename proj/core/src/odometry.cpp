#include "semidirect/odometry.hpp"

#include <chrono>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

bool recoverable_feature_failure(const Error& e) {
  return e.code() == ErrorCode::InsufficientMatches || e.code() == ErrorCode::DegenerateGeometry ||
         e.code() == ErrorCode::NoMatches;
}

bool recoverable_alignment_failure(const Error& e) {
  return e.code() == ErrorCode::EmptyOverlap || e.code() == ErrorCode::DivergedAlignment;
}

}  // namespace

double motion_magnitude(const std::vector<QuadMatch>& matches) {
  if (matches.empty()) throw Error(ErrorCode::NoMatches, "motion magnitude of an empty match list");
  double sum = 0.0;
  for (const QuadMatch& m : matches) sum += (m.u_cur_left - m.u_prev_left).norm();
  return sum / static_cast<double>(matches.size());
}

Odometry::Odometry(const EngineConfig& config) : config_(config) {
  config_.validate();
  backend_ = std::make_unique<SlamBackend>(config_.graph, config_.loops, config_.alignment, config_.threads,
                                           config_.mode == EngineMode::Slam);
}

Odometry::~Odometry() = default;

int Odometry::levels_for(const StereoFrame& frame) const {
  return config_.pyramid_levels > 0 ? config_.pyramid_levels
                                    : default_pyramid_levels(frame.left.width(), frame.left.height());
}

std::uint64_t Odometry::frame_seed() const {
  return config_.seed ^ (static_cast<std::uint64_t>(frame_index_) * 0x9E3779B97F4A7C15ULL);
}

FrameOutcome Odometry::initialize(const StereoFrame& first) {
  if (initialized()) throw Error(ErrorCode::InvalidArgument, "odometry is already initialized");
  first.rig.validate();
  FrameOutcome out;
  const auto t0 = Clock::now();
  DepthMap depth = block_match(first.left, first.right, first.rig, config_.stereo);
  if (depth.count() < config_.min_initial_hypotheses) {
    throw Error(ErrorCode::InsufficientDepth, "first frame yields " + std::to_string(depth.count()) +
                                                  " depth hypotheses, need " +
                                                  std::to_string(config_.min_initial_hypotheses));
  }
  keyframe_ = KeyFrame::create(0, first.timestamp, first.left, first.right, first.rig, std::move(depth),
                               RigidTransform::identity(), levels_for(first));
  keyframe_pose_ = RigidTransform::identity();
  keyframe_count_ = 1;
  backend_->submit_first(keyframe_);
  out.mapping_ms = elapsed_ms(t0);

  const auto t1 = Clock::now();
  previous_ = Tracked{first, detect_stereo(first, config_.features)};
  out.tracking_ms = elapsed_ms(t1);

  frame_index_ = 0;
  log_frame(first.timestamp);
  out.status = FrameStatus::NewKeyframe;
  out.frame_index = 0;
  out.keyframe = 0;
  out.pose = trajectory_.back().pose;
  out.features_ok = true;
  return out;
}

FrameOutcome Odometry::process(const StereoFrame& frame) {
  if (!initialized()) throw Error(ErrorCode::NotInitialized, "process() before initialize()");
  ++frame_index_;
  FrameOutcome out;
  out.frame_index = frame_index_;

  // Feature tracking against the previous good frame.
  const auto t_track = Clock::now();
  StereoKeypoints keypoints = detect_stereo(frame, config_.features);
  std::optional<RigidTransform> step;
  double pixels = 0.0;
  try {
    std::vector<QuadMatch> matches = match_circular(previous_->keypoints, keypoints, config_.features);
    refine_matches(previous_->frame, frame, matches, config_.features);
    const FeatureMotion fm = estimate_motion(matches, frame.rig, config_.features, frame_seed());
    if (fm.reliable) {
      std::vector<QuadMatch> inliers;
      inliers.reserve(fm.inliers.size());
      for (int i : fm.inliers) inliers.push_back(matches[static_cast<std::size_t>(i)]);
      pixels = motion_magnitude(inliers);
      step = fm.motion;
    }
  } catch (const Error& e) {
    if (!recoverable_feature_failure(e)) throw;
  }
  out.features_ok = step.has_value();

  const RigidTransform predicted = (step ? *step : last_step_) * xi_feat_;
  const double displacement = displacement_ + pixels;
  const int frames = frames_since_keyframe_ + 1;
  const bool over_threshold = displacement > config_.motion_threshold;
  const bool forced = frames >= config_.max_frames_per_keyframe;

  auto keep_tracking = [&](const RigidTransform& motion, int frames_since) {
    last_step_ = motion * xi_feat_.inverse();
    xi_feat_ = motion;
    displacement_ = displacement;
    frames_since_keyframe_ = frames_since;
    previous_ = Tracked{frame, std::move(keypoints)};
    log_frame(frame.timestamp);
    out.status = FrameStatus::TrackedByFeatures;
    out.keyframe = keyframe_->id;
    out.pose = trajectory_.back().pose;
    out.displacement = displacement;
  };

  if (step && !over_threshold && !forced) {
    keep_tracking(predicted, frames);
    out.tracking_ms = elapsed_ms(t_track);
    return out;
  }
  out.tracking_ms = elapsed_ms(t_track);

  // Direct registration against the keyframe, seeded by the feature estimate
  // or, without one, by the constant-velocity prediction.
  const auto t_stereo = Clock::now();
  const DepthMap stereo = block_match(frame.left, frame.right, frame.rig, config_.stereo);
  out.mapping_ms = elapsed_ms(t_stereo);

  const auto t_align = Clock::now();
  std::optional<AlignmentResult> result;
  try {
    const AlignmentTarget target =
        AlignmentTarget::make(frame.left, stereo, static_cast<int>(keyframe_->pyramid.size()));
    result = align(*keyframe_, target, predicted, config_.alignment);
  } catch (const Error& e) {
    if (!recoverable_alignment_failure(e)) throw;
  }
  out.tracking_ms += elapsed_ms(t_align);
  out.alignment = result;
  const bool direct_ok = result && result->converged;

  // A K_max registration of a frame that has not moved re-anchors the
  // accumulated motion without adding a keyframe at the same viewpoint.
  const bool stationary = step && !over_threshold && displacement < config_.stationary_displacement;

  if (!direct_ok && !step) {
    log_lost_frame(frame.timestamp);
    out.status = FrameStatus::TrackingLost;
    out.keyframe = keyframe_->id;
    out.pose = trajectory_.back().pose;
    out.displacement = displacement_;
    return out;
  }
  const RigidTransform motion = direct_ok ? result->motion : predicted;
  if (stationary) {
    keep_tracking(motion, 0);
    return out;
  }

  const Matrix6d information = odometry_information(direct_ok ? result->cost : config_.feature_edge_cost, config_.graph);
  last_step_ = motion * xi_feat_.inverse();
  make_keyframe(frame, stereo, motion, information, out);
  previous_ = Tracked{frame, std::move(keypoints)};
  out.displacement = displacement;
  return out;
}

void Odometry::make_keyframe(const StereoFrame& frame, const DepthMap& stereo, const RigidTransform& motion,
                             const Matrix6d& information, FrameOutcome& outcome) {
  const auto t0 = Clock::now();
  const DepthMap propagated = propagate(*keyframe_, motion, frame.rig.intrinsics);
  DepthMap depth = restrict_to_gradient(fuse(stereo, propagated, config_.fusion), frame.left, config_.gradient_threshold);

  const RigidTransform pose = motion * keyframe_pose_;
  const auto id = static_cast<KeyframeId>(keyframe_count_);
  KeyFramePtr kf = KeyFrame::create(id, frame.timestamp, frame.left, frame.right, frame.rig, std::move(depth), pose,
                                    static_cast<int>(keyframe_->pyramid.size()));
  backend_->submit(kf, motion, information);
  ++keyframe_count_;

  keyframe_ = std::move(kf);
  keyframe_pose_ = pose;
  xi_feat_ = RigidTransform::identity();
  displacement_ = 0.0;
  frames_since_keyframe_ = 0;
  log_frame(frame.timestamp);

  outcome.mapping_ms += elapsed_ms(t0);
  outcome.status = FrameStatus::NewKeyframe;
  outcome.keyframe = id;
  outcome.pose = trajectory_.back().pose;
}

void Odometry::log_frame(double timestamp) {
  const RigidTransform world_to_camera = xi_feat_ * keyframe_pose_;
  const RigidTransform camera_to_world = world_to_camera.inverse();
  frame_motions_.push_back(trajectory_.empty() ? RigidTransform::identity()
                                               : world_to_camera * trajectory_.back().pose);
  trajectory_.push_back(timestamp, camera_to_world);
  anchors_.push_back({timestamp, keyframe_->id, xi_feat_});
}

void Odometry::log_lost_frame(double timestamp) {
  const RigidTransform last = trajectory_.back().pose;
  FrameAnchor anchor = anchors_.back();
  anchor.timestamp = timestamp;
  trajectory_.push_back(timestamp, last);
  anchors_.push_back(anchor);
  frame_motions_.push_back(RigidTransform::identity());
}

Trajectory Odometry::optimized_trajectory() {
  backend_->flush();
  const PoseGraph graph = backend_->snapshot();
  Trajectory out;
  for (const FrameAnchor& a : anchors_) {
    const RigidTransform world_to_camera = a.relative * graph.vertex(a.keyframe).pose;
    out.push_back(a.timestamp, world_to_camera.inverse());
  }
  return out;
}

}  // namespace semidirect
