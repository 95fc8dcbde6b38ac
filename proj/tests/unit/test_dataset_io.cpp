#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <fstream>
#include <random>
#include <sstream>

#include "semidirect/dataset_io.hpp"
#include "semidirect/error.hpp"
#include "temp_dir.hpp"
#include "test_scenes.hpp"

using namespace semidirect;
namespace fs = std::filesystem;
using fixtures::pose_distance;
using fixtures::TempDir;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::InvalidArgument;
}

std::string error_message(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Image ramp(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img(x, y) = static_cast<float>((x * 7 + y * 13) % 256 / 255.0);
  }
  return img;
}

double max_abs_difference(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
  return m;
}

SyntheticScene small_scene(int frames, int width = 160, int height = 120) {
  const StereoRig rig = fixtures::make_rig(width, height, 120.0, 0.25);
  SyntheticScene scene = fixtures::frontal_plane_scene(4.0, rig);
  scene.trajectory = make_constant_velocity_trajectory(Twist(Vector3d(0.02, 0, 0.05), Vector3d(0, 0.01, 0)), frames);
  return scene;
}

}  // namespace

// ---------------------------------------------------------------------------
// Images

TEST(ImageIo, Png8RoundTripIsExactOnCodeValues) {
  TempDir dir;
  const Image img = ramp(37, 21);
  write_png(img, dir / "a.png");
  const Image back = read_image(dir / "a.png");
  ASSERT_EQ(back.width(), 37);
  ASSERT_EQ(back.height(), 21);
  EXPECT_LT(max_abs_difference(img, back), 1e-7);
}

TEST(ImageIo, Png16KeepsSixteenBitPrecision) {
  TempDir dir;
  Image img(64, 8);
  for (int x = 0; x < 64; ++x) {
    for (int y = 0; y < 8; ++y) img(x, y) = static_cast<float>((x * 1000 + y) / 65535.0);
  }
  write_png(img, dir / "a.png", 16);
  EXPECT_LT(max_abs_difference(img, read_image(dir / "a.png")), 0.5 / 65535.0 + 1e-7);
}

TEST(ImageIo, PgmRoundTripBothDepths) {
  TempDir dir;
  const Image img = ramp(19, 11);
  write_pgm(img, dir / "a.pgm", 8);
  write_pgm(img, dir / "b.pgm", 16);
  EXPECT_LT(max_abs_difference(img, read_image(dir / "a.pgm")), 1e-7);
  EXPECT_LT(max_abs_difference(img, read_image(dir / "b.pgm")), 0.5 / 65535.0 + 1e-7);
}

TEST(ImageIo, AsciiPgmWithCommentsNormalizesByMaxval) {
  TempDir dir;
  write_text(dir / "a.pgm", "P2\n# a comment\n3 1\n# another\n1000\n0 500 1000\n");
  const Image img = read_image(dir / "a.pgm");
  ASSERT_EQ(img.width(), 3);
  EXPECT_FLOAT_EQ(img(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(img(1, 0), 0.5f);
  EXPECT_FLOAT_EQ(img(2, 0), 1.0f);
}

TEST(ImageIo, MissingAndCorruptFilesAreReported) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { read_image(dir / "none.png"); }), ErrorCode::MissingFile);
  write_text(dir / "junk.png", "definitely not an image");
  EXPECT_EQ(code_of([&] { read_image(dir / "junk.png"); }), ErrorCode::IoFailure);
  std::string png = read_text([&] {
    write_png(ramp(40, 40), dir / "ok.png");
    return dir / "ok.png";
  }());
  png.resize(png.size() / 2);
  std::ofstream(dir / "cut.png", std::ios::binary) << png;
  EXPECT_EQ(code_of([&] { read_image(dir / "cut.png"); }), ErrorCode::IoFailure);
  EXPECT_EQ(code_of([&] { write_png(ramp(4, 4), dir / "x.png", 12); }), ErrorCode::InvalidArgument);
}

TEST(ImageIo, DepthPgmRoundTripWithinQuantization) {
  TempDir dir;
  DepthMap depth(20, 10);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      if ((x + y) % 3) depth.set(x, y, u(rng), 1e-3);
    }
  }
  write_depth_pgm(depth, dir / "d.pgm");
  ASSERT_TRUE(fs::exists(dir / "d.pgm.scale"));
  const DepthMap back = read_depth_pgm(dir / "d.pgm");
  double max_d = 0.0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      if (depth.valid(x, y)) max_d = std::max(max_d, depth.idepth(x, y));
    }
  }
  const double step = max_d / 65535.0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      ASSERT_EQ(back.valid(x, y), depth.valid(x, y));
      if (depth.valid(x, y)) EXPECT_NEAR(back.idepth(x, y), depth.idepth(x, y), 0.5 * step + 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// TUM trajectories

TEST(TumTrajectory, EmptyTrajectoryWritesEmptyFile) {
  TempDir dir;
  write_trajectory_tum(Trajectory{}, dir / "t.txt");
  EXPECT_EQ(read_text(dir / "t.txt"), "");
  EXPECT_TRUE(read_trajectory_tum(dir / "t.txt").empty());
}

TEST(TumTrajectory, IdentityAtZeroHasCanonicalLine) {
  TempDir dir;
  Trajectory t;
  t.push_back(0.0, RigidTransform::identity());
  write_trajectory_tum(t, dir / "t.txt");
  EXPECT_EQ(read_text(dir / "t.txt"), "0.000000000 0 0 0 0 0 0 1\n");
}

TEST(TumTrajectory, RandomPosesRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(9);
  Trajectory t;
  for (int i = 0; i < 100; ++i) t.push_back(0.05 * i + 1e-4, fixtures::random_transform(rng, 3.1, 1.0));
  write_trajectory_tum(t, dir / "t.txt");
  const Trajectory back = read_trajectory_tum(dir / "t.txt");
  ASSERT_EQ(back.size(), t.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back[i].timestamp, t[i].timestamp, 1e-9);
    worst = std::max(worst, pose_distance(back[i].pose, t[i].pose));
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(TumTrajectory, MalformedLineNamesTheLine) {
  TempDir dir;
  write_text(dir / "t.txt", "# header\n0 0 0 0 0 0 0 1\n0.1 0 0 zero 0 0 0 1\n");
  EXPECT_EQ(code_of([&] { read_trajectory_tum(dir / "t.txt"); }), ErrorCode::MalformedLine);
  EXPECT_NE(error_message([&] { read_trajectory_tum(dir / "t.txt"); }).find("line 3"), std::string::npos);

  write_text(dir / "u.txt", "0 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 1\n");
  EXPECT_NE(error_message([&] { read_trajectory_tum(dir / "u.txt"); }).find("line 2"), std::string::npos);

  write_text(dir / "v.txt", "0.2 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 0 1\n");
  EXPECT_EQ(code_of([&] { read_trajectory_tum(dir / "v.txt"); }), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of([&] { read_trajectory_tum(dir / "none.txt"); }), ErrorCode::MissingFile);
}

// ---------------------------------------------------------------------------
// KITTI

TEST(Kitti, SyntheticExportLoadsBack) {
  TempDir dir;
  const SyntheticScene scene = small_scene(10);
  write_kitti_sequence(scene, dir.path(), "07");

  std::size_t left = 0, right = 0;
  for (const auto& e : fs::directory_iterator(dir / "sequences/07/image_0")) left += e.path().extension() == ".png";
  for (const auto& e : fs::directory_iterator(dir / "sequences/07/image_1")) right += e.path().extension() == ".png";
  EXPECT_EQ(left, 10u);
  EXPECT_EQ(right, 10u);

  const SequenceSource src = load_kitti(dir.path(), "07");
  ASSERT_EQ(src.size(), 10u);
  EXPECT_DOUBLE_EQ(src.rig.intrinsics.fx, scene.rig.intrinsics.fx);
  EXPECT_DOUBLE_EQ(src.rig.intrinsics.cy, scene.rig.intrinsics.cy);
  EXPECT_EQ(src.rig.intrinsics.width, 160);
  EXPECT_EQ(src.rig.intrinsics.height, 120);
  EXPECT_NEAR(src.rig.baseline, scene.rig.baseline, 1e-12);
  ASSERT_TRUE(src.ground_truth);
  ASSERT_EQ(src.ground_truth->size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(src.frames[i].timestamp, scene.trajectory[i].timestamp, 1e-12);
    EXPECT_LT(pose_distance((*src.ground_truth)[i].pose, scene.trajectory[i].pose), 1e-9);
  }
}

TEST(Kitti, FramesMatchRenderedImagesUpToQuantization) {
  TempDir dir;
  const SyntheticScene scene = small_scene(3);
  write_kitti_sequence(scene, dir.path(), "00");
  const SequenceSource src = load_kitti(dir / "sequences/00", "00");
  ASSERT_TRUE(src.ground_truth);  // found through ../../poses/00.txt
  for (std::size_t i = 0; i < 3; ++i) {
    const StereoFrame f = load_frame(src, i);
    const RenderedFrame r = render(scene, i);
    EXPECT_LT(max_abs_difference(f.left, r.frame.left), 0.5 / 255.0 + 1e-6);
    EXPECT_LT(max_abs_difference(f.right, r.frame.right), 0.5 / 255.0 + 1e-6);
  }
  EXPECT_EQ(code_of([&] { load_frame(src, 3); }), ErrorCode::IndexOutOfRange);
}

TEST(Kitti, FullResolutionSequenceAtTenHertz) {
  TempDir dir;
  SyntheticScene scene = small_scene(3, 1240, 376);
  write_kitti_sequence(scene, dir.path(), "03");
  const SequenceSource src = load_kitti(dir.path(), "03");
  EXPECT_EQ(src.rig.intrinsics.width, 1240);
  EXPECT_EQ(src.rig.intrinsics.height, 376);
  const double rate = double(src.size() - 1) / (src.frames.back().timestamp - src.frames.front().timestamp);
  EXPECT_NEAR(rate, 10.0, 1e-9);
}

TEST(Kitti, RealCalibrationFileParses) {
  TempDir dir;
  const fs::path seq = dir / "seq";
  write_text(seq / "calib.txt",
             "P0: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 0.000000000000e+00 0.000000000000e+00 "
             "7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 "
             "1.000000000000e+00 0.000000000000e+00\n"
             "P1: 7.188560000000e+02 0.000000000000e+00 6.071928000000e+02 -3.861448000000e+02 0.000000000000e+00 "
             "7.188560000000e+02 1.852157000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 "
             "1.000000000000e+00 0.000000000000e+00\n"
             "Tr: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  write_text(seq / "times.txt", "0.000000e+00\n1.036894e-01\n");
  fs::create_directories(seq / "image_0");
  fs::create_directories(seq / "image_1");
  for (const char* name : {"000000.png", "000001.png"}) {
    write_png(ramp(1240, 376), seq / "image_0" / name);
    write_png(ramp(1240, 376), seq / "image_1" / name);
  }
  const SequenceSource src = load_kitti(seq, "03");
  EXPECT_DOUBLE_EQ(src.rig.intrinsics.fx, 718.856);
  EXPECT_DOUBLE_EQ(src.rig.intrinsics.cx, 607.1928);
  EXPECT_NEAR(src.rig.baseline, 386.1448 / 718.856, 1e-12);
  EXPECT_FALSE(src.ground_truth);
}

TEST(Kitti, MissingOrBrokenInputsAreReported) {
  TempDir dir;
  write_kitti_sequence(small_scene(2), dir.path(), "01");
  const fs::path seq = dir / "sequences/01";

  const std::string calib = read_text(seq / "calib.txt");
  write_text(seq / "calib.txt", "P0: 1 2 3\n");
  EXPECT_EQ(code_of([&] { load_kitti(dir.path(), "01"); }), ErrorCode::MalformedCalibration);
  write_text(seq / "calib.txt", calib);

  write_text(seq / "times.txt", "0\n0\n");
  EXPECT_EQ(code_of([&] { load_kitti(dir.path(), "01"); }), ErrorCode::MalformedLine);
  fs::remove(seq / "times.txt");
  EXPECT_EQ(code_of([&] { load_kitti(dir.path(), "01"); }), ErrorCode::MissingFile);
  write_text(seq / "times.txt", "0\n0.1\n0.2\n");
  EXPECT_EQ(code_of([&] { load_kitti(dir.path(), "01"); }), ErrorCode::MissingFile);
}

TEST(Kitti, LoaderIsPureInTheDirectoryContents) {
  TempDir dir;
  write_kitti_sequence(small_scene(4), dir.path(), "02");
  const SequenceSource a = load_kitti(dir.path(), "02");
  const SequenceSource b = load_kitti(dir.path(), "02");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.frames[i].timestamp, b.frames[i].timestamp);
    EXPECT_EQ(a.frames[i].left, b.frames[i].left);
    EXPECT_EQ((*a.ground_truth)[i].pose.matrix(), (*b.ground_truth)[i].pose.matrix());
  }
  const StereoFrame fa = load_frame(a, 1);
  const StereoFrame fb = load_frame(b, 1);
  EXPECT_TRUE(std::equal(fa.left.data().begin(), fa.left.data().end(), fb.left.data().begin()));
}

TEST(FramePrefetcher, DeliversFramesInOrder) {
  TempDir dir;
  write_kitti_sequence(small_scene(6), dir.path(), "00");
  const SequenceSource src = load_kitti(dir.path(), "00");
  FramePrefetcher prefetch(src, 2);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto f = prefetch.next();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->timestamp, src.frames[i].timestamp);
    const StereoFrame direct = load_frame(src, i);
    EXPECT_TRUE(std::equal(f->left.data().begin(), f->left.data().end(), direct.left.data().begin()));
  }
  EXPECT_FALSE(prefetch.next());
}

TEST(FramePrefetcher, FailureSurfacesAtTheBrokenFrame) {
  TempDir dir;
  write_kitti_sequence(small_scene(4), dir.path(), "00");
  const SequenceSource src = load_kitti(dir.path(), "00");
  fs::remove(dir / "sequences/00/image_1/000002.png");
  FramePrefetcher prefetch(src);
  EXPECT_TRUE(prefetch.next());
  EXPECT_TRUE(prefetch.next());
  EXPECT_EQ(code_of([&] { prefetch.next(); }), ErrorCode::MissingFile);
}

// ---------------------------------------------------------------------------
// EuRoC

namespace {

// Extrinsics and calibration of the public V1_01 sequence.
constexpr const char* kCam0Yaml = R"(# General sensor definitions.
sensor_type: camera
comment: VI-Sensor cam0 (MT9M034)

T_BS:
  cols: 4
  rows: 4
  data: [0.0148655429818, -0.999880929698, 0.00414029679422, -0.0216401454975,
         0.999557249008, 0.0149672133247, 0.025715529948, -0.064676986768,
        -0.0257744366974, 0.00375618835797, 0.999660727178, 0.00981073058949,
         0.0, 0.0, 0.0, 1.0]

rate_hz: 20
resolution: [752, 480]
camera_model: pinhole
intrinsics: [458.654, 457.296, 367.215, 248.375] #fu, fv, cu, cv
distortion_model: radial-tangential
distortion_coefficients: [-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05]
)";

constexpr const char* kCam1Yaml = R"(%YAML:1.0
sensor_type: camera
comment: VI-Sensor cam1 (MT9M034)

T_BS:
  cols: 4
  rows: 4
  data: [0.0125552670891, -0.999755099723, 0.0182237714554, -0.0198435579556,
         0.999598781151, 0.0130119051815, 0.0251588363115, 0.0453689425024,
        -0.0253898008918, 0.0179005838253, 0.999517347078, 0.00786212447038,
         0.0, 0.0, 0.0, 1.0]

rate_hz: 20
resolution: [752, 480]
camera_model: pinhole
intrinsics: [457.587, 456.134, 379.999, 255.238] #fu, fv, cu, cv
distortion_model: radial-tangential
distortion_coefficients: [-0.28368365,  0.07451284, -0.00010473, -3.55590700e-05]
)";

struct EurocLayout {
  fs::path mav;
  std::vector<std::int64_t> stamps;
};

/// Minimal V1_01-like layout with tiny placeholder images (the loader reads
/// images only in load_frame).
EurocLayout make_euroc(const fs::path& root, int frames, std::int64_t right_offset_ns = 0) {
  EurocLayout out{root / "mav0", {}};
  const std::int64_t t0 = 1403715273262142976LL;
  std::ostringstream c0, c1;
  c0 << "#timestamp [ns],filename\n";
  c1 << "#timestamp [ns],filename\n";
  fs::create_directories(out.mav / "cam0/data");
  fs::create_directories(out.mav / "cam1/data");
  for (int i = 0; i < frames; ++i) {
    const std::int64_t t = t0 + 50'000'000LL * i;
    out.stamps.push_back(t);
    c0 << t << ',' << t << ".png\n";
    c1 << t + right_offset_ns << ',' << t + right_offset_ns << ".png\n";
  }
  write_text(out.mav / "cam0/data.csv", c0.str());
  write_text(out.mav / "cam1/data.csv", c1.str());
  write_text(out.mav / "cam0/sensor.yaml", kCam0Yaml);
  write_text(out.mav / "cam1/sensor.yaml", kCam1Yaml);
  return out;
}

RigidTransform yaml_extrinsic(const double (&d)[12]) {
  Matrix3d r;
  r << d[0], d[1], d[2], d[4], d[5], d[6], d[8], d[9], d[10];
  const Eigen::JacobiSVD<Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {svd.matrixU() * svd.matrixV().transpose(), Vector3d(d[3], d[7], d[11])};
}

constexpr double kTbs0[12] = {0.0148655429818, -0.999880929698, 0.00414029679422, -0.0216401454975,
                              0.999557249008,  0.0149672133247, 0.025715529948,   -0.064676986768,
                              -0.0257744366974, 0.00375618835797, 0.999660727178, 0.00981073058949};
constexpr double kTbs1[12] = {0.0125552670891, -0.999755099723, 0.0182237714554, -0.0198435579556,
                              0.999598781151,  0.0130119051815, 0.0251588363115, 0.0453689425024,
                              -0.0253898008918, 0.0179005838253, 0.999517347078, 0.00786212447038};

Vector2d distort(double fx, double fy, double cx, double cy, const double (&k)[4], const Vector3d& p) {
  const double x = p.x() / p.z(), y = p.y() / p.z();
  const double r2 = x * x + y * y;
  const double f = 1 + k[0] * r2 + k[1] * r2 * r2;
  return {fx * (x * f + 2 * k[2] * x * y + k[3] * (r2 + 2 * x * x)) + cx,
          fy * (y * f + k[2] * (r2 + 2 * y * y) + 2 * k[3] * x * y) + cy};
}

}  // namespace

TEST(Euroc, FramesArePairedAtTwentyHertz) {
  TempDir dir;
  const EurocLayout layout = make_euroc(dir.path(), 8, 300'000);
  const SequenceSource src = load_euroc(dir.path());
  ASSERT_EQ(src.size(), 8u);
  EXPECT_NEAR(src.frames[1].timestamp - src.frames[0].timestamp, 0.05, 1e-6);
  EXPECT_NEAR(src.frames[0].timestamp, layout.stamps[0] * 1e-9, 1e-6);
  EXPECT_EQ(src.frames[3].right.filename(), std::to_string(layout.stamps[3] + 300'000) + ".png");
  EXPECT_EQ(src.rig.intrinsics.width, 752);
  EXPECT_EQ(src.rig.intrinsics.height, 480);
  EXPECT_FALSE(src.ground_truth);
  // The two extrinsics put the camera centres about 11 cm apart.
  EXPECT_NEAR(src.rig.baseline, 0.110, 0.001);
}

TEST(Euroc, UnpairableFramesAreListed) {
  TempDir dir;
  make_euroc(dir.path(), 4, 2'000'000);
  EXPECT_EQ(code_of([&] { load_euroc(dir.path()); }), ErrorCode::UnpairableFrames);
  const std::string msg = error_message([&] { load_euroc(dir.path()); });
  EXPECT_NE(msg.find("cam0@1403715273262142976"), std::string::npos) << msg;
  EXPECT_NE(msg.find("cam1@"), std::string::npos) << msg;
}

TEST(Euroc, RectificationMapsWorldPointsToTheirRawPixels) {
  TempDir dir;
  make_euroc(dir.path(), 2);
  const SequenceSource src = load_euroc(dir.path());
  ASSERT_TRUE(src.rectification);
  const RectificationMap& map = *src.rectification;
  const CameraIntrinsics& k = src.rig.intrinsics;
  const RigidTransform body_from_0 = yaml_extrinsic(kTbs0);
  const RigidTransform body_from_1 = yaml_extrinsic(kTbs1);
  const double k0[4] = {-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05};
  const double k1[4] = {-0.28368365, 0.07451284, -0.00010473, -3.55590700e-05};

  // A point seen at integer rectified pixels in both views: depth chosen so
  // the disparity is a whole number of pixels.
  for (const auto& [u, v, disparity] : {std::tuple{376, 240, 20}, {300, 200, 10}, {450, 300, 40}}) {
    const double z = k.fx * src.rig.baseline / disparity;
    const Vector3d ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    const Vector3d x_rect = z * ray;
    // Rectified left frame: centre of raw cam0, x along the baseline, y
    // orthogonal to the raw cam0 optical axis.
    const Vector3d base = (body_from_0.inverse() * body_from_1).translation;
    const Vector3d e1 = base.normalized();
    const Vector3d e2 = Vector3d(-e1.y(), e1.x(), 0.0).normalized();
    Matrix3d rect_from_0;
    rect_from_0 << e1.transpose(), e2.transpose(), e1.cross(e2).transpose();
    const Vector3d x0 = rect_from_0.transpose() * x_rect;
    const Vector3d x1 = (body_from_1.inverse() * body_from_0) * x0;

    const Vector2d raw_left = distort(458.654, 457.296, 367.215, 248.375, k0, x0);
    const Vector2d raw_right = distort(457.587, 456.134, 379.999, 255.238, k1, x1);
    const std::size_t il = static_cast<std::size_t>(v) * map.width + u;
    const std::size_t ir = static_cast<std::size_t>(v) * map.width + (u - disparity);
    EXPECT_NEAR(map.left_x[il], raw_left.x(), 1e-3);
    EXPECT_NEAR(map.left_y[il], raw_left.y(), 1e-3);
    EXPECT_NEAR(map.right_x[ir], raw_right.x(), 1e-3);
    EXPECT_NEAR(map.right_y[ir], raw_right.y(), 1e-3);
  }
}

TEST(Euroc, GroundTruthIsInterpolatedAndExpressedForTheLeftCamera) {
  TempDir dir;
  const EurocLayout layout = make_euroc(dir.path(), 5);
  // Body moves along world x at 1 m/s and yaws at 0.5 rad/s, sampled at
  // 200 Hz starting 7 ms before the first frame so the frames fall between
  // samples, except frame 2 which lands exactly on one.
  std::ostringstream gt;
  gt << "#timestamp, p_RS_R_x [m], p_RS_R_y [m], p_RS_R_z [m], q_RS_w [], q_RS_x [], q_RS_y [], q_RS_z []\n";
  const std::int64_t start = layout.stamps[0] - 7'000'000;
  auto body_at = [&](double t) {
    return RigidTransform(so3_exp(Vector3d(0, 0, 0.5 * t)), Vector3d(1.0 * t, 0, 0));
  };
  for (int i = 0; i < 60; ++i) {
    const std::int64_t ns = i == 21 ? layout.stamps[2] : start + 5'000'000LL * i;
    const RigidTransform b = body_at((ns - start) * 1e-9);
    const Eigen::Quaterniond q = b.quaternion();
    gt << ns << ',' << b.translation.x() << ',' << b.translation.y() << ',' << b.translation.z() << ',' << q.w() << ','
       << q.x() << ',' << q.y() << ',' << q.z() << ",0,0,0\n";
  }
  write_text(layout.mav / "state_groundtruth_estimate0/data.csv", gt.str());

  const SequenceSource src = load_euroc(dir.path());
  ASSERT_TRUE(src.ground_truth);
  ASSERT_EQ(src.ground_truth->size(), 5u);

  const RigidTransform body_from_0 = yaml_extrinsic(kTbs0);
  const RigidTransform body_from_1 = yaml_extrinsic(kTbs1);
  const Vector3d e1 = (body_from_0.inverse() * body_from_1).translation.normalized();
  const Vector3d e2 = Vector3d(-e1.y(), e1.x(), 0.0).normalized();
  Matrix3d rect_from_0;
  rect_from_0 << e1.transpose(), e2.transpose(), e1.cross(e2).transpose();
  const RigidTransform zero_from_rect(rect_from_0.transpose(), Vector3d::Zero());

  for (std::size_t i = 0; i < 5; ++i) {
    const double t = (layout.stamps[i] - start) * 1e-9;
    const RigidTransform expected = body_at(t) * body_from_0 * zero_from_rect;
    // Constant-rate motion is reproduced exactly by linear translation and
    // slerp up to the float precision of absolute EuRoC timestamps.
    EXPECT_LT(pose_distance((*src.ground_truth)[i].pose, expected), 1e-6) << i;
  }
}

TEST(InterpolatePose, ExactTimestampReturnsThatPoseVerbatim) {
  std::mt19937_64 rng(2);
  Trajectory t;
  for (int i = 0; i < 5; ++i) t.push_back(i * 0.1, fixtures::random_transform(rng));
  const auto p = interpolate_pose(t, 0.2);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->matrix(), t[2].pose.matrix());
  EXPECT_FALSE(interpolate_pose(t, -0.01));
  EXPECT_FALSE(interpolate_pose(t, 0.41));
}

TEST(InterpolatePose, MidpointIsHalfwayOnTranslationAndRotation) {
  Trajectory t;
  t.push_back(0.0, RigidTransform::identity());
  t.push_back(1.0, RigidTransform(so3_exp(Vector3d(0, 0.8, 0)), Vector3d(2, 4, 6)));
  const RigidTransform m = *interpolate_pose(t, 0.25);
  EXPECT_LT((m.translation - Vector3d(0.5, 1, 1.5)).norm(), 1e-12);
  EXPECT_LT((so3_log(m.rotation) - Vector3d(0, 0.2, 0)).norm(), 1e-12);
}

// ---------------------------------------------------------------------------
// PLY

TEST(Ply, OneHypothesisAtPrincipalPoint) {
  TempDir dir;
  StereoRig rig = fixtures::make_rig(64, 48, 100.0, 0.2);
  rig.intrinsics.cx = 32;
  rig.intrinsics.cy = 24;
  DepthMap depth(64, 48);
  depth.set(32, 24, 1.0, 0.01);
  const KeyFramePtr kf =
      KeyFrame::create(0, 0.0, Image(64, 48, 0.5f), Image(64, 48, 0.5f), rig, depth, RigidTransform::identity(), 1);
  write_ply({kf}, dir / "m.ply");
  const auto points = read_ply(dir / "m.ply");
  ASSERT_EQ(points.size(), 1u);
  EXPECT_FLOAT_EQ(points[0].position.x(), 0.0f);
  EXPECT_FLOAT_EQ(points[0].position.y(), 0.0f);
  EXPECT_FLOAT_EQ(points[0].position.z(), 1.0f);
  EXPECT_EQ(points[0].intensity, 128);
  const std::string bytes = read_text(dir / "m.ply");
  EXPECT_EQ(bytes.rfind("ply\nformat binary_little_endian 1.0\nelement vertex 1\n", 0), 0u);
}

TEST(Ply, VertexCountIsTheSumOfHypotheses) {
  TempDir dir;
  const SyntheticScene scene = small_scene(3);
  std::vector<KeyFramePtr> kfs;
  std::size_t total = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const KeyFramePtr kf = fixtures::keyframe_from_render(scene, i, 2);
    total += kf->depth.count();
    kfs.push_back(kf);
  }
  write_ply(kfs, dir / "m.ply");
  EXPECT_EQ(read_ply(dir / "m.ply").size(), total);
}

TEST(Ply, TiltedPlaneExportsCoplanarPoints) {
  TempDir dir;
  const StereoRig rig = fixtures::make_rig(160, 120, 120.0, 0.25);
  SyntheticScene scene;
  scene.rig = rig;
  TexturedPlane plane;
  plane.origin = Vector3d(1.0, -0.5, 6.0);
  plane.normal = Vector3d(0.3, -0.2, -1.0).normalized();
  plane.u_axis = plane.normal.cross(Vector3d::UnitY()).normalized();
  scene.planes.push_back(plane);
  const RigidTransform cam_to_world(so3_exp(Vector3d(0.05, 0.2, -0.1)), Vector3d(0.7, 0.3, -0.4));
  scene.trajectory.push_back(0.0, cam_to_world);
  const KeyFramePtr kf = fixtures::keyframe_from_render(scene, 0, 2);
  ASSERT_GT(kf->depth.count(), 1000u);
  write_ply({kf}, dir / "m.ply");
  const auto points = read_ply(dir / "m.ply");

  Eigen::MatrixXd a(points.size(), 3);
  Vector3d c = Vector3d::Zero();
  for (const MapPoint& p : points) c += p.position.cast<double>();
  c /= double(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = (points[i].position.cast<double>() - c).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Vector3d n = svd.matrixV().col(2);
  double worst = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) worst = std::max(worst, std::abs(a.row(static_cast<Eigen::Index>(i)).dot(n)));
  EXPECT_LT(worst, 1e-3);
  // And the fitted plane is the scene plane in world coordinates.
  EXPECT_GT(std::abs(n.dot(plane.normal)), 1.0 - 1e-6);
  EXPECT_LT(std::abs((c - plane.origin).dot(plane.normal)), 1e-3);
}

TEST(Ply, ExplicitPosesOverrideKeyframePoses) {
  StereoRig rig = fixtures::make_rig(64, 48, 100.0, 0.2);
  rig.intrinsics.cx = 32;
  rig.intrinsics.cy = 24;
  DepthMap depth(64, 48);
  depth.set(32, 24, 0.5, 0.01);
  const KeyFramePtr kf =
      KeyFrame::create(0, 0.0, Image(64, 48), Image(64, 48), rig, depth, RigidTransform::identity(), 1);
  const std::vector<RigidTransform> poses = {RigidTransform(Matrix3d::Identity(), Vector3d(0, 0, -3))};
  const auto points = semi_dense_points({kf}, &poses);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_NEAR(points[0].position.z(), 5.0, 1e-6);
  const std::vector<RigidTransform> wrong(2);
  EXPECT_EQ(code_of([&] { semi_dense_points({kf}, &wrong); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// CSV

TEST(MetricsCsv, RoundTripWithQuotedFields) {
  TempDir dir;
  const std::vector<MetricRow> rows = {{"kitti_03", "semi-direct, slam", "ate_rmse_m", 0.63},
                                       {"V1_\"01\"", "vo", "rpe", 1e-17}};
  write_metrics_csv(rows, dir / "m.csv");
  EXPECT_EQ(read_text(dir / "m.csv").substr(0, 28), "dataset,method,metric,value\n");
  const auto back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].dataset, rows[i].dataset);
    EXPECT_EQ(back[i].method, rows[i].method);
    EXPECT_EQ(back[i].metric, rows[i].metric);
    EXPECT_EQ(back[i].value, rows[i].value);
  }
}
