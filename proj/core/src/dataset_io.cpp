#include "semidirect/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "semidirect/error.hpp"

namespace semidirect {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

/// Whitespace-separated numbers; false on any unparsable token.
bool parse_numbers(std::string_view line, std::vector<double>& out) {
  out.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    double v = 0.0;
    if (!parse_double(line.substr(i, j - i), v)) return false;
    out.push_back(v);
    i = j;
  }
  return true;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void malformed(const fs::path& path, int line, const std::string& why) {
  throw Error(ErrorCode::MalformedLine, path.string() + " line " + std::to_string(line) + ": " + why);
}

std::ifstream open_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return in;
}

std::ofstream create_text(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

/// printf-style formatting into a std::string.
template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[256];
  const int n = std::snprintf(buf, sizeof(buf), fmt, args...);
  return std::string(buf, static_cast<std::size_t>(std::max(n, 0)));
}

/// Turns -0 into 0 so canonical lines do not print "-0".
double tidy(double v) { return v + 0.0; }

Matrix3d nearest_rotation(const Matrix3d& m) {
  const Eigen::JacobiSVD<Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

RigidTransform from_rows_3x4(const std::vector<double>& v) {
  Matrix3d r;
  r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  return {nearest_rotation(r), Vector3d(v[3], v[7], v[11])};
}

// ---------------------------------------------------------------------------
// KITTI

struct KittiPaths {
  fs::path sequence_dir;
  std::vector<fs::path> pose_candidates;
};

KittiPaths resolve_kitti(const fs::path& dir, const std::string& sequence) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "no directory " + dir.string());
  const fs::path nested = dir / "sequences" / sequence;
  if (fs::is_directory(nested)) return {nested, {dir / "poses" / (sequence + ".txt")}};
  return {dir, {dir.parent_path().parent_path() / "poses" / (sequence + ".txt"), dir / "poses.txt"}};
}

StereoRig parse_kitti_calibration(const fs::path& path) {
  std::ifstream in = open_text(path);
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto colon = line.find(':');
    if (trim(line).empty()) continue;
    if (colon == std::string::npos) {
      throw Error(ErrorCode::MalformedCalibration, path.string() + " line " + std::to_string(line_no) +
                                                       ": expected 'name: values'");
    }
    std::vector<double> values;
    if (!parse_numbers(std::string_view(line).substr(colon + 1), values)) {
      throw Error(ErrorCode::MalformedCalibration,
                  path.string() + " line " + std::to_string(line_no) + ": unparsable number");
    }
    rows[std::string(trim(std::string_view(line).substr(0, colon)))] = std::move(values);
  }
  for (const char* key : {"P0", "P1"}) {
    const auto it = rows.find(key);
    if (it == rows.end() || it->second.size() != 12) {
      throw Error(ErrorCode::MalformedCalibration, path.string() + ": missing 3x4 projection " + key);
    }
  }
  const std::vector<double>& p0 = rows["P0"];
  const std::vector<double>& p1 = rows["P1"];
  StereoRig rig;
  rig.intrinsics.fx = p0[0];
  rig.intrinsics.fy = p0[5];
  rig.intrinsics.cx = p0[2];
  rig.intrinsics.cy = p0[6];
  if (!(p0[0] > 0.0) || !(p0[5] > 0.0) || std::abs(p1[0] - p0[0]) > 1e-6 * p0[0]) {
    throw Error(ErrorCode::MalformedCalibration, path.string() + ": P0 and P1 do not describe a rectified pair");
  }
  rig.baseline = -p1[3] / p1[0];
  if (!(rig.baseline > 0.0)) {
    throw Error(ErrorCode::MalformedCalibration, path.string() + ": non-positive baseline " +
                                                     std::to_string(rig.baseline));
  }
  return rig;
}

std::vector<double> read_times(const fs::path& path) {
  std::ifstream in = open_text(path);
  std::vector<double> times;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    double t = 0.0;
    if (!parse_double(line, t)) malformed(path, line_no, "expected a timestamp");
    if (!times.empty() && t <= times.back()) malformed(path, line_no, "timestamps must increase strictly");
    times.push_back(t);
  }
  return times;
}

// ---------------------------------------------------------------------------
// EuRoC

struct EurocCamera {
  RigidTransform body_from_sensor;
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0;
};

std::vector<std::pair<int, std::string>> read_lines(const fs::path& path) {
  std::ifstream in = open_text(path);
  std::vector<std::pair<int, std::string>> lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    lines.emplace_back(line_no, std::string(t));
  }
  return lines;
}

std::int64_t parse_nanoseconds(const fs::path& path, int line, std::string_view field) {
  std::int64_t ns = 0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, ns);
  if (ec != std::errc() || ptr != end) malformed(path, line, "bad nanosecond timestamp '" + std::string(field) + "'");
  return ns;
}

struct EurocImage {
  std::int64_t ns;
  fs::path file;
};

std::vector<EurocImage> read_euroc_images(const fs::path& cam_dir) {
  const fs::path csv = cam_dir / "data.csv";
  std::vector<EurocImage> out;
  for (const auto& [line_no, text] : read_lines(csv)) {
    const auto fields = split(text, ',');
    if (fields.size() < 2) malformed(csv, line_no, "expected 'timestamp,filename'");
    out.push_back({parse_nanoseconds(csv, line_no, fields[0]), cam_dir / "data" / std::string(fields[1])});
  }
  std::sort(out.begin(), out.end(), [](const EurocImage& a, const EurocImage& b) { return a.ns < b.ns; });
  return out;
}

std::vector<double> yaml_numbers(const YAML::Node& node, const fs::path& path, const char* key, std::size_t n) {
  const YAML::Node v = node[key];
  if (!v || !v.IsSequence() || v.size() != n) {
    throw Error(ErrorCode::MalformedCalibration,
                path.string() + ": '" + key + "' must be a list of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (const YAML::Node& e : v) out.push_back(e.as<double>());
  return out;
}

EurocCamera read_euroc_sensor(const fs::path& path) {
  std::ifstream in = open_text(path);
  // Some EuRoC files start with an OpenCV-style "%YAML:1.0" directive, which
  // is not valid YAML.
  std::string text, line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '%') continue;
    text += line + '\n';
  }
  EurocCamera cam;
  try {
    const YAML::Node root = YAML::Load(text);
    const YAML::Node t_bs = root["T_BS"];
    if (!t_bs) throw Error(ErrorCode::MalformedCalibration, path.string() + ": missing T_BS");
    const std::vector<double> m = yaml_numbers(t_bs, path, "data", 16);
    Matrix4d t;
    for (int i = 0; i < 16; ++i) t(i / 4, i % 4) = m[static_cast<std::size_t>(i)];
    cam.body_from_sensor = RigidTransform(nearest_rotation(t.topLeftCorner<3, 3>()), t.topRightCorner<3, 1>());

    const std::vector<double> res = yaml_numbers(root, path, "resolution", 2);
    cam.width = static_cast<int>(res[0]);
    cam.height = static_cast<int>(res[1]);
    const std::vector<double> k = yaml_numbers(root, path, "intrinsics", 4);
    cam.fx = k[0];
    cam.fy = k[1];
    cam.cx = k[2];
    cam.cy = k[3];
    if (const YAML::Node model = root["camera_model"]; model && model.as<std::string>() != "pinhole") {
      throw Error(ErrorCode::MalformedCalibration, path.string() + ": unsupported camera model " + model.as<std::string>());
    }
    const YAML::Node dist_model = root["distortion_model"];
    if (dist_model && dist_model.as<std::string>() != "radial-tangential" && dist_model.as<std::string>() != "radtan") {
      throw Error(ErrorCode::MalformedCalibration,
                  path.string() + ": unsupported distortion model " + dist_model.as<std::string>());
    }
    if (root["distortion_coefficients"]) {
      const std::vector<double> d = yaml_numbers(root, path, "distortion_coefficients", 4);
      cam.k1 = d[0];
      cam.k2 = d[1];
      cam.p1 = d[2];
      cam.p2 = d[3];
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::MalformedCalibration, path.string() + ": " + e.what());
  }
  if (cam.width <= 0 || cam.height <= 0 || !(cam.fx > 0.0) || !(cam.fy > 0.0)) {
    throw Error(ErrorCode::MalformedCalibration, path.string() + ": invalid resolution or focal length");
  }
  return cam;
}

Vector2d distort_radtan(const EurocCamera& c, double x, double y) {
  const double r2 = x * x + y * y;
  const double radial = 1.0 + c.k1 * r2 + c.k2 * r2 * r2;
  const double xd = x * radial + 2.0 * c.p1 * x * y + c.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * x * y;
  return {c.fx * xd + c.cx, c.fy * yd + c.cy};
}

struct EurocRectification {
  RectificationMap map;
  StereoRig rig;
  Matrix3d left_from_rectified;  ///< rotation rectified left -> raw left camera
};

/// Rotates both cameras to a common orientation whose x axis points along
/// the baseline and whose z axis stays as close as possible to the raw left
/// optical axis, then resamples through each camera's distortion model.
EurocRectification build_euroc_rectification(const EurocCamera& left, const EurocCamera& right) {
  if (left.width != right.width || left.height != right.height) {
    throw Error(ErrorCode::MalformedCalibration, "EuRoC cameras differ in resolution");
  }
  const RigidTransform left_from_right = left.body_from_sensor.inverse() * right.body_from_sensor;
  const Vector3d t = left_from_right.translation;
  if (t.norm() < 1e-9) throw Error(ErrorCode::MalformedCalibration, "EuRoC cameras share one centre");

  const Vector3d e1 = t.normalized();
  Vector3d e2(-e1.y(), e1.x(), 0.0);
  if (e2.norm() < 1e-9) throw Error(ErrorCode::MalformedCalibration, "baseline along the optical axis");
  e2.normalize();
  const Vector3d e3 = e1.cross(e2);
  Matrix3d rect_from_left;
  rect_from_left.row(0) = e1.transpose();
  rect_from_left.row(1) = e2.transpose();
  rect_from_left.row(2) = e3.transpose();
  const Matrix3d rect_from_right = rect_from_left * left_from_right.rotation;

  EurocRectification out;
  CameraIntrinsics& k = out.rig.intrinsics;
  k.width = left.width;
  k.height = left.height;
  k.fx = k.fy = std::min({left.fx, left.fy, right.fx, right.fy});
  k.cx = 0.5 * (left.cx + right.cx);
  k.cy = 0.5 * (left.cy + right.cy);
  out.rig.baseline = t.norm();
  out.left_from_rectified = rect_from_left.transpose();

  RectificationMap& m = out.map;
  m.width = left.width;
  m.height = left.height;
  const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
  m.left_x.resize(n);
  m.left_y.resize(n);
  m.right_x.resize(n);
  m.right_y.resize(n);

  auto source = [&](const EurocCamera& cam, const Matrix3d& rect_from_cam, const Vector3d& ray) -> Vector2d {
    const Vector3d c = rect_from_cam.transpose() * ray;
    if (c.z() <= 0.0) return {std::nan(""), std::nan("")};
    return distort_radtan(cam, c.x() / c.z(), c.y() / c.z());
  };
  for (int v = 0; v < m.height; ++v) {
    for (int u = 0; u < m.width; ++u) {
      const Vector3d ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const std::size_t i = static_cast<std::size_t>(v) * m.width + u;
      const Vector2d l = source(left, rect_from_left, ray);
      const Vector2d r = source(right, rect_from_right, ray);
      m.left_x[i] = static_cast<float>(l.x());
      m.left_y[i] = static_cast<float>(l.y());
      m.right_x[i] = static_cast<float>(r.x());
      m.right_y[i] = static_cast<float>(r.y());
    }
  }
  return out;
}

/// Body-in-world poses from a ground-truth csv whose columns start with
/// timestamp, position xyz and quaternion wxyz.
Trajectory read_euroc_ground_truth(const fs::path& csv) {
  Trajectory gt;
  for (const auto& [line_no, text] : read_lines(csv)) {
    const auto fields = split(text, ',');
    if (fields.size() < 8) malformed(csv, line_no, "expected timestamp, position and quaternion");
    const std::int64_t ns = parse_nanoseconds(csv, line_no, fields[0]);
    double v[7];
    for (int i = 0; i < 7; ++i) {
      if (!parse_double(fields[static_cast<std::size_t>(i) + 1], v[i])) malformed(csv, line_no, "unparsable number");
    }
    const Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) malformed(csv, line_no, "zero quaternion");
    try {
      gt.push_back(static_cast<double>(ns) * 1e-9, RigidTransform(q, Vector3d(v[0], v[1], v[2])));
    } catch (const Error&) {
      malformed(csv, line_no, "timestamps must increase strictly");
    }
  }
  return gt;
}

}  // namespace

// ---------------------------------------------------------------------------

void SequenceSource::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].timestamp > frames[i - 1].timestamp)) {
      throw Error(ErrorCode::InvalidArgument, "sequence timestamps must increase strictly at frame " +
                                                  std::to_string(i));
    }
  }
  rig.validate();
}

StereoFrame load_frame(const SequenceSource& source, std::size_t index) {
  if (index >= source.frames.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "frame " + std::to_string(index) + " of a " + std::to_string(source.frames.size()) + "-frame sequence");
  }
  const FramePaths& paths = source.frames[index];
  StereoFrame frame;
  frame.timestamp = paths.timestamp;
  frame.rig = source.rig;
  Image left = read_image(paths.left);
  Image right = read_image(paths.right);
  if (source.rectification) {
    frame.left = rectify(left, *source.rectification, StereoSide::Left).image;
    frame.right = rectify(right, *source.rectification, StereoSide::Right).image;
  } else {
    frame.left = std::move(left);
    frame.right = std::move(right);
  }
  const CameraIntrinsics& k = source.rig.intrinsics;
  for (const Image* img : {&frame.left, &frame.right}) {
    if (img->width() != k.width || img->height() != k.height) {
      throw Error(ErrorCode::DimensionMismatch, "frame " + std::to_string(index) + " is " +
                                                    std::to_string(img->width()) + "x" + std::to_string(img->height()) +
                                                    ", calibration says " + std::to_string(k.width) + "x" +
                                                    std::to_string(k.height));
    }
  }
  return frame;
}

SequenceSource load_kitti(const fs::path& dir, const std::string& sequence) {
  const KittiPaths paths = resolve_kitti(dir, sequence);
  const fs::path& seq = paths.sequence_dir;
  const std::vector<double> times = read_times(seq / "times.txt");
  SequenceSource src;
  src.name = "kitti_" + sequence;
  src.rig = parse_kitti_calibration(seq / "calib.txt");
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::string file = format("%06zu.png", i);
    FramePaths f{times[i], seq / "image_0" / file, seq / "image_1" / file};
    for (const fs::path* p : {&f.left, &f.right}) {
      if (!fs::exists(*p)) throw Error(ErrorCode::MissingFile, "missing image " + p->string());
    }
    src.frames.push_back(std::move(f));
  }
  if (src.frames.empty()) throw Error(ErrorCode::MissingFile, (seq / "times.txt").string() + " lists no frames");
  const Image first = read_image(src.frames.front().left);
  src.rig.intrinsics.width = first.width();
  src.rig.intrinsics.height = first.height();
  src.rig.validate();

  for (const fs::path& candidate : paths.pose_candidates) {
    if (!fs::exists(candidate)) continue;
    const std::vector<RigidTransform> poses = read_kitti_poses(candidate);
    if (poses.size() != times.size()) {
      throw Error(ErrorCode::MalformedLine, candidate.string() + " holds " + std::to_string(poses.size()) +
                                                " poses for " + std::to_string(times.size()) + " frames");
    }
    Trajectory gt;
    for (std::size_t i = 0; i < poses.size(); ++i) gt.push_back(times[i], poses[i]);
    src.ground_truth = std::move(gt);
    break;
  }
  return src;
}

SequenceSource load_euroc(const fs::path& dir) {
  const fs::path mav = fs::is_directory(dir / "mav0") ? dir / "mav0" : dir;
  if (!fs::is_directory(mav / "cam0") || !fs::is_directory(mav / "cam1")) {
    throw Error(ErrorCode::MissingFile, "no cam0/ and cam1/ under " + mav.string());
  }
  const EurocCamera cam0 = read_euroc_sensor(mav / "cam0" / "sensor.yaml");
  const EurocCamera cam1 = read_euroc_sensor(mav / "cam1" / "sensor.yaml");
  const std::vector<EurocImage> left = read_euroc_images(mav / "cam0");
  const std::vector<EurocImage> right = read_euroc_images(mav / "cam1");

  constexpr std::int64_t tolerance_ns = 1'000'000;
  std::vector<char> right_used(right.size(), 0);
  std::vector<std::string> offenders;
  SequenceSource src;
  src.name = "euroc_" + mav.parent_path().filename().string();
  for (const EurocImage& l : left) {
    const auto it = std::lower_bound(right.begin(), right.end(), l.ns,
                                     [](const EurocImage& r, std::int64_t ns) { return r.ns < ns; });
    std::optional<std::size_t> best;
    for (auto c : {it, it == right.begin() ? right.end() : it - 1}) {
      if (c == right.end()) continue;
      const auto j = static_cast<std::size_t>(c - right.begin());
      if (right_used[j] || std::llabs(c->ns - l.ns) > tolerance_ns) continue;
      if (!best || std::llabs(c->ns - l.ns) < std::llabs(right[*best].ns - l.ns)) best = j;
    }
    if (!best) {
      offenders.push_back("cam0@" + std::to_string(l.ns));
      continue;
    }
    right_used[*best] = 1;
    src.frames.push_back({static_cast<double>(l.ns) * 1e-9, l.file, right[*best].file});
  }
  for (std::size_t j = 0; j < right.size(); ++j) {
    if (!right_used[j]) offenders.push_back("cam1@" + std::to_string(right[j].ns));
  }
  if (!offenders.empty()) {
    std::string list;
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) list += (i ? ", " : "") + offenders[i];
    if (offenders.size() > 10) list += ", ... (" + std::to_string(offenders.size()) + " in total)";
    throw Error(ErrorCode::UnpairableFrames, "no stereo partner within 1 ms: " + list);
  }
  if (src.frames.empty()) throw Error(ErrorCode::MissingFile, "EuRoC sequence under " + mav.string() + " is empty");

  EurocRectification rect = build_euroc_rectification(cam0, cam1);
  src.rig = rect.rig;
  src.rectification = std::move(rect.map);
  src.validate();

  for (const char* name : {"state_groundtruth_estimate0", "vicon0"}) {
    const fs::path csv = mav / name / "data.csv";
    if (!fs::exists(csv)) continue;
    const Trajectory body = read_euroc_ground_truth(csv);
    const RigidTransform body_from_camera =
        cam0.body_from_sensor * RigidTransform(rect.left_from_rectified, Vector3d::Zero());
    Trajectory gt;
    for (const FramePaths& f : src.frames) {
      if (const auto pose = interpolate_pose(body, f.timestamp)) gt.push_back(f.timestamp, *pose * body_from_camera);
    }
    src.ground_truth = std::move(gt);
    break;
  }
  return src;
}

std::optional<RigidTransform> interpolate_pose(const Trajectory& trajectory, double t) {
  if (trajectory.empty() || t < trajectory[0].timestamp || t > trajectory.back().timestamp) return std::nullopt;
  const auto& poses = trajectory.poses();
  const auto it = std::lower_bound(poses.begin(), poses.end(), t,
                                   [](const StampedPose& p, double s) { return p.timestamp < s; });
  if (it->timestamp == t) return it->pose;
  const StampedPose& b = *it;
  const StampedPose& a = *(it - 1);
  const double s = (t - a.timestamp) / (b.timestamp - a.timestamp);
  const Eigen::Quaterniond q = a.pose.quaternion().slerp(s, b.pose.quaternion());
  return RigidTransform(q, (1.0 - s) * a.pose.translation + s * b.pose.translation);
}

// ---------------------------------------------------------------------------

FramePrefetcher::FramePrefetcher(const SequenceSource& source, std::size_t depth)
    : source_(source), depth_(std::max<std::size_t>(depth, 1)), worker_([this] { run(); }) {}

FramePrefetcher::~FramePrefetcher() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void FramePrefetcher::run() {
  for (std::size_t i = 0; i < source_.size(); ++i) {
    std::optional<StereoFrame> frame;
    try {
      frame = load_frame(source_, i);
    } catch (...) {
      std::lock_guard lock(mutex_);
      failure_ = std::current_exception();
      break;
    }
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return stop_ || queue_.size() < depth_; });
    if (stop_) return;
    queue_.push_back(std::move(*frame));
    cv_.notify_all();
  }
  std::lock_guard lock(mutex_);
  finished_ = true;
  cv_.notify_all();
}

std::optional<StereoFrame> FramePrefetcher::next() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return !queue_.empty() || finished_ || failure_; });
  if (!queue_.empty()) {
    StereoFrame f = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return f;
  }
  if (failure_) std::rethrow_exception(failure_);
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void write_trajectory_tum(const Trajectory& trajectory, const fs::path& path) {
  std::ofstream out = create_text(path);
  for (const StampedPose& p : trajectory) {
    Eigen::Quaterniond q = p.pose.quaternion();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    const Vector3d& t = p.pose.translation;
    out << format("%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", tidy(p.timestamp), tidy(t.x()), tidy(t.y()),
                  tidy(t.z()), tidy(q.x()), tidy(q.y()), tidy(q.z()), tidy(q.w()));
  }
  finish(out, path);
}

Trajectory read_trajectory_tum(const fs::path& path) {
  std::ifstream in = open_text(path);
  Trajectory traj;
  std::string line;
  std::vector<double> v;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!parse_numbers(t, v)) malformed(path, line_no, "unparsable number");
    if (v.size() != 8) malformed(path, line_no, "expected 8 values, found " + std::to_string(v.size()));
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) malformed(path, line_no, "zero quaternion");
    if (!traj.empty() && !(v[0] > traj.back().timestamp)) malformed(path, line_no, "timestamps must increase strictly");
    traj.push_back(v[0], RigidTransform(q, Vector3d(v[1], v[2], v[3])));
  }
  return traj;
}

void write_trajectory_kitti(const Trajectory& trajectory, const fs::path& path) {
  std::ofstream out = create_text(path);
  for (const StampedPose& p : trajectory) {
    const Matrix3d& r = p.pose.rotation;
    const Vector3d& t = p.pose.translation;
    for (int row = 0; row < 3; ++row) {
      out << format("%.17g %.17g %.17g %.17g", tidy(r(row, 0)), tidy(r(row, 1)), tidy(r(row, 2)), tidy(t(row)))
          << (row == 2 ? '\n' : ' ');
    }
  }
  finish(out, path);
}

std::vector<RigidTransform> read_kitti_poses(const fs::path& path) {
  std::ifstream in = open_text(path);
  std::vector<RigidTransform> poses;
  std::string line;
  std::vector<double> v;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!parse_numbers(line, v)) malformed(path, line_no, "unparsable number");
    if (v.size() != 12) malformed(path, line_no, "expected 12 values, found " + std::to_string(v.size()));
    poses.push_back(from_rows_3x4(v));
  }
  return poses;
}

// ---------------------------------------------------------------------------

std::vector<MapPoint> semi_dense_points(const std::vector<KeyFramePtr>& keyframes,
                                        const std::vector<RigidTransform>* world_to_camera) {
  if (world_to_camera && world_to_camera->size() != keyframes.size()) {
    throw Error(ErrorCode::InvalidArgument, "one pose per keyframe required");
  }
  std::vector<MapPoint> points;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const KeyFrame& kf = *keyframes[k];
    const RigidTransform camera_to_world = (world_to_camera ? (*world_to_camera)[k] : kf.pose).inverse();
    const DepthMap& depth = kf.depth;
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        if (!depth.valid(x, y)) continue;
        const Vector3d p = camera_to_world * unproject(Vector2d(x, y), depth.idepth(x, y), kf.rig.intrinsics);
        const double g = kf.left.in_bounds(x, y) ? std::clamp(static_cast<double>(kf.left(x, y)), 0.0, 1.0) : 0.0;
        points.push_back({p.cast<float>(), static_cast<std::uint8_t>(std::lround(g * 255.0))});
      }
    }
  }
  return points;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const char* bytes) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, bytes, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + sizeof(T));
  T value;
  std::memcpy(&value, tmp, sizeof(T));
  return value;
}

constexpr std::size_t kPlyRecordSize = 3 * sizeof(float) + 1;

}  // namespace

void write_ply(const std::vector<MapPoint>& points, const fs::path& path) {
  std::string data = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(points.size()) +
                     "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar intensity\nend_header\n";
  data.reserve(data.size() + points.size() * kPlyRecordSize);
  for (const MapPoint& p : points) {
    put_le(data, p.position.x());
    put_le(data, p.position.y());
    put_le(data, p.position.z());
    data.push_back(static_cast<char>(p.intensity));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  finish(out, path);
}

void write_ply(const std::vector<KeyFramePtr>& keyframes, const fs::path& path) {
  write_ply(semi_dense_points(keyframes), path);
}

std::vector<MapPoint> read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  const std::vector<std::string> expected = {"ply",
                                             "format binary_little_endian 1.0",
                                             "",
                                             "property float x",
                                             "property float y",
                                             "property float z",
                                             "property uchar intensity",
                                             "end_header"};
  std::size_t count = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::IoFailure, path.string() + ": truncated PLY header");
    if (i == 2) {
      if (std::sscanf(line.c_str(), "element vertex %zu", &count) != 1) {
        throw Error(ErrorCode::IoFailure, path.string() + ": expected 'element vertex N'");
      }
    } else if (line != expected[i]) {
      throw Error(ErrorCode::IoFailure, path.string() + ": unsupported PLY header line '" + line + "'");
    }
  }
  std::string data(count * kPlyRecordSize, '\0');
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw Error(ErrorCode::IoFailure, path.string() + ": truncated PLY body");
  }
  std::vector<MapPoint> points(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* r = data.data() + i * kPlyRecordSize;
    points[i].position = {get_le<float>(r), get_le<float>(r + 4), get_le<float>(r + 8)};
    points[i].intensity = static_cast<std::uint8_t>(r[12]);
  }
  return points;
}

// ---------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> parse_csv_line(const fs::path& path, int line_no, const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) malformed(path, line_no, "unterminated quote");
  return fields;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricRow>& rows, const fs::path& path) {
  std::ofstream out = create_text(path);
  out << "dataset,method,metric,value\n";
  for (const MetricRow& r : rows) {
    out << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << csv_field(r.metric) << ','
        << format("%.17g", r.value) << '\n';
  }
  finish(out, path);
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in = open_text(path);
  std::vector<MetricRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (trim(line) != "dataset,method,metric,value") malformed(path, 1, "unexpected header");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto f = parse_csv_line(path, line_no, line);
    if (f.size() != 4) malformed(path, line_no, "expected 4 fields, found " + std::to_string(f.size()));
    MetricRow r{f[0], f[1], f[2], 0.0};
    if (!parse_double(f[3], r.value)) malformed(path, line_no, "unparsable value '" + f[3] + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------

void write_kitti_sequence(const SyntheticScene& scene, const fs::path& root, const std::string& sequence,
                          int bit_depth) {
  const fs::path seq = root / "sequences" / sequence;
  std::error_code ec;
  for (const fs::path& d : {seq / "image_0", seq / "image_1", root / "poses"}) {
    fs::create_directories(d, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + d.string() + ": " + ec.message());
  }

  const CameraIntrinsics& k = scene.rig.intrinsics;
  {
    std::ofstream calib = create_text(seq / "calib.txt");
    const double tx = -k.fx * scene.rig.baseline;
    for (int cam = 0; cam < 4; ++cam) {
      const double shift = cam % 2 == 1 ? tx : 0.0;
      calib << format("P%d: %.17g 0 %.17g %.17g 0 %.17g %.17g 0 0 0 1 0\n", cam, k.fx, k.cx, tidy(shift), k.fy, k.cy);
    }
    finish(calib, seq / "calib.txt");
  }
  {
    std::ofstream times = create_text(seq / "times.txt");
    for (const StampedPose& p : scene.trajectory) times << format("%.17g\n", p.timestamp);
    finish(times, seq / "times.txt");
  }
  write_trajectory_kitti(scene.trajectory, root / "poses" / (sequence + ".txt"));

  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const RenderedFrame r = render(scene, i);
    const std::string file = format("%06zu.png", i);
    write_png(r.frame.left, seq / "image_0" / file, bit_depth);
    write_png(r.frame.right, seq / "image_1" / file, bit_depth);
  }
}

}  // namespace semidirect
