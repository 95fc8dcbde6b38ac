#include <gtest/gtest.h>

#include <cmath>

#include "semidirect/error.hpp"
#include "semidirect/odometry.hpp"
#include "test_scenes.hpp"

namespace semidirect {
namespace {

using fixtures::make_rig;

EngineConfig deterministic_vo() {
  EngineConfig c;
  c.threads = ThreadMode::Deterministic;
  c.mode = EngineMode::VisualOdometry;
  return c;
}

StereoFrame frame_of(const SyntheticScene& scene, std::size_t i) { return render(scene, i).frame; }

double position_error(const RigidTransform& est_c2w, const RigidTransform& gt_c2w) {
  return (est_c2w.translation - gt_c2w.translation).norm();
}

SyntheticScene moving_room(int count) {
  return fixtures::box_room(make_rig(320, 240, 250.0, 0.4),
                            make_constant_velocity_trajectory(Twist(Vector3d(0, 0, 0.1), Vector3d(0, 0.01, 0)), count));
}

QuadMatch displaced(const Vector2d& from, const Vector2d& by) {
  QuadMatch m;
  m.u_prev_left = from;
  m.u_cur_left = from + by;
  return m;
}

TEST(MotionMagnitude, ZeroDisplacementIsZero) {
  const std::vector<QuadMatch> m = {displaced({10, 10}, {0, 0}), displaced({50, 20}, {0, 0})};
  EXPECT_DOUBLE_EQ(motion_magnitude(m), 0.0);
}

TEST(MotionMagnitude, MeanOfEuclideanDisplacements) {
  const std::vector<QuadMatch> m = {displaced({10, 10}, {3, 0}), displaced({50, 20}, {0, -4})};
  EXPECT_DOUBLE_EQ(motion_magnitude(m), 3.5);
  const std::vector<QuadMatch> diagonal = {displaced({0, 0}, {3, 4})};
  EXPECT_DOUBLE_EQ(motion_magnitude(diagonal), 5.0);
}

TEST(MotionMagnitude, EmptyListIsAnError) {
  try {
    motion_magnitude({});
    FAIL() << "expected NoMatches";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoMatches);
  }
}

TEST(OdometryInit, TexturedFrameGivesKeyframeAtOrigin) {
  const SyntheticScene scene = moving_room(1);
  Odometry odo(deterministic_vo());
  const FrameOutcome out = odo.initialize(frame_of(scene, 0));
  EXPECT_EQ(out.status, FrameStatus::NewKeyframe);
  ASSERT_TRUE(odo.current_keyframe());
  EXPECT_GE(odo.current_keyframe()->depth.count(), odo.config().min_initial_hypotheses);
  EXPECT_EQ(odo.current_keyframe()->pose.matrix(), Matrix4d::Identity());
  EXPECT_EQ(odo.trajectory().size(), 1U);
  EXPECT_EQ(odo.trajectory()[0].pose.matrix(), Matrix4d::Identity());
  const PoseGraph g = odo.backend().snapshot();
  ASSERT_EQ(g.vertices().size(), 1U);
  EXPECT_TRUE(g.vertices()[0].fixed);
}

TEST(OdometryInit, ConstantImageIsInsufficientDepth) {
  StereoFrame f;
  f.rig = make_rig(320, 240, 250.0, 0.4);
  f.left = Image(320, 240, 0.5f);
  f.right = Image(320, 240, 0.5f);
  Odometry odo(deterministic_vo());
  try {
    odo.initialize(f);
    FAIL() << "expected InsufficientDepth";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientDepth);
  }
  EXPECT_FALSE(odo.initialized());
}

TEST(OdometryInit, ProcessBeforeInitializeIsAnError) {
  const SyntheticScene scene = moving_room(1);
  Odometry odo(deterministic_vo());
  try {
    odo.process(frame_of(scene, 0));
    FAIL() << "expected NotInitialized";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotInitialized);
  }
}

TEST(OdometryTracking, StationaryStreamKeepsSingleKeyframe) {
  SyntheticScene scene = moving_room(1);
  const StereoFrame still = frame_of(scene, 0);
  Odometry odo(deterministic_vo());
  odo.initialize(still);
  // Longer than K_max so the forced re-registration runs at least once.
  const int frames = odo.config().max_frames_per_keyframe + 10;
  bool registered = false;
  for (int i = 1; i < frames; ++i) {
    StereoFrame f = still;
    f.timestamp = 0.1 * i;
    const FrameOutcome out = odo.process(f);
    EXPECT_NE(out.status, FrameStatus::TrackingLost) << i;
    registered = registered || out.alignment.has_value();
  }
  EXPECT_TRUE(registered);
  EXPECT_EQ(odo.keyframe_count(), 1U);
  for (const StampedPose& p : odo.trajectory()) {
    EXPECT_LT(p.pose.translation.norm(), 1e-6);
    EXPECT_LT(rotation_angle(p.pose), 1e-6);
  }
}

TEST(OdometryTracking, KeyframeSpacingFollowsDisplacementModel) {
  // A frontal plane under lateral translation moves every pixel by exactly
  // f * t / z per frame, so the threshold crossing is known in advance.
  const double z = 4.0;
  const double f = 250.0;
  const double t = 0.06;
  const int count = 20;
  SyntheticScene scene = fixtures::frontal_plane_scene(z, make_rig(320, 240, f, 0.4), 0.25);
  scene.supersample = 2;
  scene.trajectory = make_constant_velocity_trajectory(Twist(Vector3d(t, 0, 0), Vector3d::Zero()), count);

  const EngineConfig config = deterministic_vo();
  const double per_frame = f * t / z;
  std::vector<int> predicted;
  double accumulated = 0.0;
  for (int i = 1; i < count; ++i) {
    accumulated += per_frame;
    if (accumulated > config.motion_threshold) {
      predicted.push_back(i);
      accumulated = 0.0;
    }
  }
  ASSERT_GE(predicted.size(), 2U);

  Odometry odo(config);
  odo.initialize(frame_of(scene, 0));
  std::vector<int> actual;
  for (int i = 1; i < count; ++i) {
    const FrameOutcome out = odo.process(frame_of(scene, static_cast<std::size_t>(i)));
    ASSERT_NE(out.status, FrameStatus::TrackingLost) << i;
    if (out.status == FrameStatus::NewKeyframe) actual.push_back(i);
  }
  ASSERT_EQ(actual.size(), predicted.size());
  for (std::size_t k = 0; k < actual.size(); ++k) EXPECT_NEAR(actual[k], predicted[k], 1) << k;
}

class MovingRoom : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const SyntheticScene scene = moving_room(kFrames);
    frames_ = new std::vector<StereoFrame>();
    truth_ = new Trajectory(scene.trajectory);
    for (int i = 0; i < kFrames; ++i) frames_->push_back(frame_of(scene, static_cast<std::size_t>(i)));
  }
  static void TearDownTestSuite() {
    delete frames_;
    delete truth_;
  }
  static Trajectory run(const EngineConfig& config, std::vector<FrameOutcome>* outcomes = nullptr) {
    Odometry odo(config);
    odo.initialize(frames_->front());
    for (std::size_t i = 1; i < frames_->size(); ++i) {
      const FrameOutcome out = odo.process((*frames_)[i]);
      if (outcomes) outcomes->push_back(out);
    }
    return odo.trajectory();
  }

  static constexpr int kFrames = 16;
  static std::vector<StereoFrame>* frames_;
  static Trajectory* truth_;
};
std::vector<StereoFrame>* MovingRoom::frames_ = nullptr;
Trajectory* MovingRoom::truth_ = nullptr;

TEST_F(MovingRoom, TracksGroundTruth) {
  std::vector<FrameOutcome> outcomes;
  const Trajectory est = run(deterministic_vo(), &outcomes);
  ASSERT_EQ(est.size(), truth_->size());
  int keyframes = 0;
  for (const FrameOutcome& o : outcomes) {
    EXPECT_NE(o.status, FrameStatus::TrackingLost);
    EXPECT_TRUE(o.features_ok);
    if (o.status == FrameStatus::NewKeyframe) {
      ++keyframes;
      ASSERT_TRUE(o.alignment.has_value());
      EXPECT_TRUE(o.alignment->converged);
    }
  }
  EXPECT_GE(keyframes, 1);
  for (std::size_t i = 0; i < est.size(); ++i) {
    EXPECT_LT(position_error(est[i].pose, (*truth_)[i].pose), 0.02) << i;
  }
}

TEST_F(MovingRoom, ComposedFrameMotionsMatchLoggedPose) {
  Odometry odo(deterministic_vo());
  odo.initialize(frames_->front());
  for (std::size_t i = 1; i < frames_->size(); ++i) odo.process((*frames_)[i]);
  RigidTransform composed = odo.trajectory()[0].pose.inverse();
  for (std::size_t i = 1; i < odo.frame_motions().size(); ++i) composed = odo.frame_motions()[i] * composed;
  const RigidTransform logged = odo.trajectory().back().pose.inverse();
  EXPECT_LT((composed.matrix() - logged.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  // Anchors reproduce the log through the keyframe poses.
  const Trajectory again = odo.optimized_trajectory();
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_LT((again[i].pose.matrix() - odo.trajectory()[i].pose.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST_F(MovingRoom, SameSeedIsBitwiseReproducible) {
  const Trajectory a = run(deterministic_vo());
  const Trajectory b = run(deterministic_vo());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].timestamp, b[i].timestamp);
    EXPECT_EQ(a[i].pose.matrix(), b[i].pose.matrix()) << i;
  }
}

TEST_F(MovingRoom, BlankFrameIsTrackingLostAndRecovers) {
  Odometry odo(deterministic_vo());
  odo.initialize(frames_->front());
  const std::size_t blank = 5;
  for (std::size_t i = 1; i < frames_->size(); ++i) {
    StereoFrame f = (*frames_)[i];
    if (i == blank) {
      f.left = Image(f.left.width(), f.left.height(), 0.5f);
      f.right = Image(f.right.width(), f.right.height(), 0.5f);
    }
    const FrameOutcome out = odo.process(f);
    if (i == blank) {
      EXPECT_EQ(out.status, FrameStatus::TrackingLost);
      EXPECT_EQ(out.pose.matrix(), odo.trajectory()[blank - 1].pose.matrix());
    } else {
      EXPECT_NE(out.status, FrameStatus::TrackingLost) << i;
    }
  }
  ASSERT_EQ(odo.trajectory().size(), frames_->size());
  EXPECT_LT(position_error(odo.trajectory().back().pose, truth_->back().pose), 0.03);
}

TEST_F(MovingRoom, FeatureFailureFallsBackToDirectRegistration) {
  EngineConfig config = deterministic_vo();
  config.features.min_inliers = 1000000;  // the feature estimate never qualifies
  std::vector<FrameOutcome> outcomes;
  const Trajectory est = run(config, &outcomes);
  for (const FrameOutcome& o : outcomes) {
    EXPECT_FALSE(o.features_ok);
    EXPECT_EQ(o.status, FrameStatus::NewKeyframe);
    ASSERT_TRUE(o.alignment.has_value());
    EXPECT_TRUE(o.alignment->converged);
  }
  for (std::size_t i = 0; i < est.size(); ++i) {
    EXPECT_LT(position_error(est[i].pose, (*truth_)[i].pose), 0.02) << i;
  }
}

TEST_F(MovingRoom, AlignmentFailureDegradesToFeatureOdometry) {
  EngineConfig config = deterministic_vo();
  config.alignment.tau_track = 1e-9;  // no registration can pass the tracking gate
  std::vector<FrameOutcome> outcomes;
  const Trajectory est = run(config, &outcomes);
  ASSERT_EQ(est.size(), truth_->size());
  int keyframes = 0;
  for (const FrameOutcome& o : outcomes) {
    EXPECT_NE(o.status, FrameStatus::TrackingLost);
    if (o.status == FrameStatus::NewKeyframe) {
      ++keyframes;
      // Either the registration diverged outright or it failed the gate.
      EXPECT_TRUE(!o.alignment || !o.alignment->converged);
    }
  }
  EXPECT_GE(keyframes, 1);
  EXPECT_LT(position_error(est.back().pose, truth_->back().pose), 0.05);
}

TEST_F(MovingRoom, ThreadedSlamMatchesDeterministicTracking) {
  EngineConfig threaded;
  threaded.threads = ThreadMode::Threaded;
  EngineConfig inline_config = threaded;
  inline_config.threads = ThreadMode::Deterministic;
  Odometry a(threaded);
  Odometry b(inline_config);
  a.initialize(frames_->front());
  b.initialize(frames_->front());
  for (std::size_t i = 1; i < frames_->size(); ++i) {
    a.process((*frames_)[i]);
    b.process((*frames_)[i]);
  }
  const Trajectory ta = a.optimized_trajectory();
  const Trajectory tb = b.optimized_trajectory();
  ASSERT_EQ(ta.size(), tb.size());
  EXPECT_EQ(a.keyframe_count(), b.keyframe_count());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_LT(position_error(ta[i].pose, tb[i].pose), 1e-9) << i;
  }
}

}  // namespace
}  // namespace semidirect
