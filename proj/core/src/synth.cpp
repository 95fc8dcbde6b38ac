#include "semidirect/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

constexpr double kRayEpsilon = 1e-9;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix(splitmix(seed ^ static_cast<std::uint64_t>(ix)) ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double f) { return f * f * f * (f * (f * 6.0 - 15.0) + 10.0); }

double value_noise(double s, double t, std::uint64_t seed) {
  const double fs = std::floor(s);
  const double ft = std::floor(t);
  const auto is = static_cast<std::int64_t>(fs);
  const auto it = static_cast<std::int64_t>(ft);
  const double a = quintic(s - fs);
  const double b = quintic(t - ft);
  const double v00 = lattice(is, it, seed), v10 = lattice(is + 1, it, seed);
  const double v01 = lattice(is, it + 1, seed), v11 = lattice(is + 1, it + 1, seed);
  return (1.0 - b) * ((1.0 - a) * v00 + a * v10) + b * ((1.0 - a) * v01 + a * v11);
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  double s = 0.0;
  double u = 0.0;
  const TextureParams* texture = nullptr;
  std::uint64_t face_seed = 0;
};

void intersect_plane(const TexturedPlane& pl, const Vector3d& c, const Vector3d& d, Hit& best) {
  const Vector3d n = pl.normal.normalized();
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-12) return;
  const double t = n.dot(pl.origin - c) / denom;
  if (!(t > kRayEpsilon) || t >= best.t) return;
  const Vector3d rel = c + t * d - pl.origin;
  const Vector3d ua = (pl.u_axis - n * n.dot(pl.u_axis)).normalized();
  const Vector3d va = n.cross(ua);
  const double s = rel.dot(ua);
  const double v = rel.dot(va);
  if (pl.half_u > 0.0 && std::abs(s) > pl.half_u) return;
  if (pl.half_v > 0.0 && std::abs(v) > pl.half_v) return;
  best = {t, s, v, &pl.texture, pl.texture.seed};
}

void intersect_box(const TexturedBox& box, const Vector3d& c, const Vector3d& d, Hit& best) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis_near = -1;
  int axis_far = -1;
  for (int a = 0; a < 3; ++a) {
    const double lo = box.center[a] - box.half_size[a];
    const double hi = box.center[a] + box.half_size[a];
    if (std::abs(d[a]) < 1e-15) {
      if (c[a] < lo || c[a] > hi) return;
      continue;
    }
    double t1 = (lo - c[a]) / d[a];
    double t2 = (hi - c[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      axis_near = a;
    }
    if (t2 < t_far) {
      t_far = t2;
      axis_far = a;
    }
  }
  if (t_near > t_far || t_far <= kRayEpsilon) return;
  const bool from_outside = t_near > kRayEpsilon;
  const double t = from_outside ? t_near : t_far;
  const int axis = from_outside ? axis_near : axis_far;
  if (t >= best.t || axis < 0) return;
  const Vector3d p = c + t * d;
  const int ia = (axis + 1) % 3;
  const int ib = (axis + 2) % 3;
  const bool positive = p[axis] > box.center[axis];
  const std::uint64_t face = static_cast<std::uint64_t>(2 * axis + (positive ? 1 : 0));
  best = {t, p[ia], p[ib], &box.texture, box.texture.seed * 16 + face};
}

Hit cast(const SyntheticScene& scene, const Vector3d& c, const Vector3d& d) {
  Hit best;
  for (const auto& pl : scene.planes) intersect_plane(pl, c, d, best);
  for (const auto& box : scene.boxes) intersect_box(box, c, d, best);
  return best;
}

double shade(const Hit& h) {
  TextureParams tex = *h.texture;
  tex.seed = h.face_seed;
  return texture_value(tex, h.s, h.u);
}

}  // namespace

double texture_value(const TextureParams& tex, double s, double t) {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  double freq = 1.0 / tex.cell;
  for (int o = 0; o < tex.octaves; ++o) {
    sum += amp * value_noise(s * freq, t * freq, splitmix(tex.seed + static_cast<std::uint64_t>(o)));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  const double n = norm > 0.0 ? sum / norm : 0.5;
  return 0.45 + tex.contrast * 0.7 * (n - 0.5);
}

std::optional<double> cast_depth(const SyntheticScene& scene, const RigidTransform& cam_to_world, const Vector2d& u) {
  const CameraIntrinsics& k = scene.rig.intrinsics;
  const Vector3d dir = cam_to_world.rotation * Vector3d((u.x() - k.cx) / k.fx, (u.y() - k.cy) / k.fy, 1.0);
  const Hit h = cast(scene, cam_to_world.translation, dir);
  if (!h.texture) return std::nullopt;
  return h.t;
}

RenderedFrame render(const SyntheticScene& scene, std::size_t index) {
  if (index >= scene.trajectory.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "frame " + std::to_string(index) + " of " + std::to_string(scene.trajectory.size()));
  }
  const CameraIntrinsics& k = scene.rig.intrinsics;
  const int w = k.width;
  const int h = k.height;
  const int ss = std::max(1, scene.supersample);
  const RigidTransform& t_wl = scene.trajectory[index].pose;
  const RigidTransform t_wr = t_wl * RigidTransform(Matrix3d::Identity(), Vector3d(scene.rig.baseline, 0.0, 0.0));

  RenderedFrame out;
  out.frame.timestamp = scene.trajectory[index].timestamp;
  out.frame.rig = scene.rig;
  out.depth = DepthMap(w, h);
  Image left(w, h, scene.background);
  Image right(w, h, scene.background);

  for (int side = 0; side < 2; ++side) {
    const RigidTransform& pose = side == 0 ? t_wl : t_wr;
    Image& img = side == 0 ? left : right;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sum = 0.0;
        int hits = 0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const double ox = ss == 1 ? 0.0 : (sx + 0.5) / ss - 0.5;
            const double oy = ss == 1 ? 0.0 : (sy + 0.5) / ss - 0.5;
            const Vector3d dir = pose.rotation * Vector3d((x + ox - k.cx) / k.fx, (y + oy - k.cy) / k.fy, 1.0);
            const Hit hit = cast(scene, pose.translation, dir);
            sum += hit.texture ? shade(hit) : scene.background;
            hits += hit.texture ? 1 : 0;
          }
        }
        img(x, y) = static_cast<float>(sum / (ss * ss));
        if (side == 0 && hits > 0) {
          const auto z = cast_depth(scene, pose, {x, y});
          if (z) out.depth.set(x, y, 1.0 / *z, kGroundTruthVariance);
        }
      }
    }
  }

  const NoiseModel& nm = scene.noise;
  double offset = 0.0;
  if (!nm.brightness_offsets.empty()) offset = nm.brightness_offsets[index % nm.brightness_offsets.size()];
  for (int side = 0; side < 2; ++side) {
    Image& img = side == 0 ? left : right;
    const double shift = offset + (side == 1 ? nm.right_offset : 0.0);
    std::mt19937_64 rng(splitmix(nm.seed ^ splitmix(index * 2 + static_cast<std::size_t>(side))));
    std::normal_distribution<double> gauss(0.0, nm.sigma > 0.0 ? nm.sigma : 1.0);
    if (shift == 0.0 && nm.sigma <= 0.0) continue;
    for (float& v : img.data()) {
      double val = v + shift;
      if (nm.sigma > 0.0) val += gauss(rng);
      v = static_cast<float>(val);
    }
  }
  out.frame.left = std::move(left);
  out.frame.right = std::move(right);
  return out;
}

double coverage(const SyntheticScene& scene, std::size_t index) {
  if (index >= scene.trajectory.size()) throw Error(ErrorCode::IndexOutOfRange, "coverage: frame out of range");
  const CameraIntrinsics& k = scene.rig.intrinsics;
  std::size_t hits = 0;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (cast_depth(scene, scene.trajectory[index].pose, {x, y})) ++hits;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(k.width) * k.height);
}

Trajectory make_loop_trajectory(double radius, int count, double frame_rate) {
  if (!(radius > 0.0) || count < 8 || !(frame_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "loop trajectory needs radius > 0, count >= 8, rate > 0");
  }
  Trajectory traj;
  for (int i = 0; i < count; ++i) {
    const double heading = 2.0 * std::numbers::pi * i / (count - 1);
    RigidTransform pose(so3_exp(Vector3d(0.0, heading, 0.0)),
                        Vector3d(radius * (1.0 - std::cos(heading)), 0.0, radius * std::sin(heading)));
    if (i == count - 1) pose = RigidTransform(Matrix3d::Identity(), Vector3d::Zero());
    traj.push_back(i / frame_rate, pose);
  }
  return traj;
}

Trajectory make_constant_velocity_trajectory(const Twist& per_frame, int count, double frame_rate) {
  if (count < 1 || !(frame_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "need count >= 1 and rate > 0");
  const RigidTransform step = exp_map(per_frame);
  Trajectory traj;
  RigidTransform pose;
  for (int i = 0; i < count; ++i) {
    traj.push_back(i / frame_rate, pose);
    pose = pose * step;
  }
  return traj;
}

namespace {

[[noreturn]] void malformed(int line, const std::string& what) {
  throw Error(ErrorCode::MalformedLine, "scene line " + std::to_string(line) + ": " + what);
}

std::vector<double> read_numbers(std::istringstream& in, int line, std::size_t min_count, std::size_t max_count) {
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) malformed(line, "bad number '" + tok + "'");
    } catch (const std::logic_error&) {
      malformed(line, "bad number '" + tok + "'");
    }
  }
  if (v.size() < min_count || v.size() > max_count) {
    malformed(line, "expected " + std::to_string(min_count) + ".." + std::to_string(max_count) + " values, got " +
                        std::to_string(v.size()));
  }
  return v;
}

TextureParams texture_from(const std::vector<double>& v, std::size_t at) {
  TextureParams t;
  if (v.size() > at) t.cell = v[at];
  if (v.size() > at + 1) t.octaves = static_cast<int>(v[at + 1]);
  if (v.size() > at + 2) t.contrast = v[at + 2];
  if (v.size() > at + 3) t.seed = static_cast<std::uint64_t>(v[at + 3]);
  return t;
}

}  // namespace

SyntheticScene parse_scene(const std::string& text) {
  SyntheticScene scene;
  std::istringstream lines(text);
  std::string raw;
  int line_no = 0;
  bool have_camera = false;
  Trajectory explicit_poses;
  while (std::getline(lines, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream in(raw);
    std::string key;
    if (!(in >> key)) continue;
    if (key == "camera") {
      const auto v = read_numbers(in, line_no, 6, 6);
      scene.rig.intrinsics = {v[0], v[1], v[2], v[3], static_cast<int>(v[4]), static_cast<int>(v[5])};
      have_camera = true;
    } else if (key == "baseline") {
      scene.rig.baseline = read_numbers(in, line_no, 1, 1)[0];
    } else if (key == "plane") {
      // origin(3) normal(3) u_axis(3) half_u half_v [cell octaves contrast seed]
      const auto v = read_numbers(in, line_no, 11, 15);
      TexturedPlane p;
      p.origin = {v[0], v[1], v[2]};
      p.normal = {v[3], v[4], v[5]};
      p.u_axis = {v[6], v[7], v[8]};
      p.half_u = v[9];
      p.half_v = v[10];
      p.texture = texture_from(v, 11);
      if (p.normal.norm() < 1e-12 || p.normal.cross(p.u_axis).norm() < 1e-12) malformed(line_no, "degenerate plane");
      scene.planes.push_back(p);
    } else if (key == "box") {
      // center(3) half_size(3) [cell octaves contrast seed]
      const auto v = read_numbers(in, line_no, 6, 10);
      TexturedBox b;
      b.center = {v[0], v[1], v[2]};
      b.half_size = {v[3], v[4], v[5]};
      b.texture = texture_from(v, 6);
      if ((b.half_size.array() <= 0.0).any()) malformed(line_no, "box half sizes must be positive");
      scene.boxes.push_back(b);
    } else if (key == "noise") {
      const auto v = read_numbers(in, line_no, 1, 2);
      scene.noise.sigma = v[0];
      if (v.size() > 1) scene.noise.seed = static_cast<std::uint64_t>(v[1]);
    } else if (key == "brightness_offsets") {
      scene.noise.brightness_offsets = read_numbers(in, line_no, 1, std::numeric_limits<std::size_t>::max());
    } else if (key == "right_offset") {
      scene.noise.right_offset = read_numbers(in, line_no, 1, 1)[0];
    } else if (key == "background") {
      scene.background = static_cast<float>(read_numbers(in, line_no, 1, 1)[0]);
    } else if (key == "supersample") {
      scene.supersample = static_cast<int>(read_numbers(in, line_no, 1, 1)[0]);
    } else if (key == "loop") {
      // radius count [frame_rate]
      const auto v = read_numbers(in, line_no, 2, 3);
      scene.trajectory = make_loop_trajectory(v[0], static_cast<int>(v[1]), v.size() > 2 ? v[2] : 10.0);
    } else if (key == "linear") {
      // count frame_rate vx vy vz wx wy wz (per-frame body twist)
      const auto v = read_numbers(in, line_no, 8, 8);
      scene.trajectory = make_constant_velocity_trajectory(Twist(Vector3d(v[2], v[3], v[4]), Vector3d(v[5], v[6], v[7])),
                                                           static_cast<int>(v[0]), v[1]);
    } else if (key == "pose") {
      // timestamp tx ty tz qx qy qz qw (camera -> world)
      const auto v = read_numbers(in, line_no, 8, 8);
      try {
        explicit_poses.push_back(v[0], RigidTransform(Eigen::Quaterniond(v[7], v[4], v[5], v[6]),
                                                      Vector3d(v[1], v[2], v[3])));
      } catch (const Error& e) {
        malformed(line_no, e.what());
      }
    } else {
      malformed(line_no, "unknown key '" + key + "'");
    }
  }
  if (!have_camera) throw Error(ErrorCode::MalformedLine, "scene has no camera line");
  if (!explicit_poses.empty()) {
    if (!scene.trajectory.empty()) throw Error(ErrorCode::MalformedLine, "scene mixes pose lines with a generator");
    scene.trajectory = explicit_poses;
  }
  scene.rig.validate();
  return scene;
}

SyntheticScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open scene " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

}  // namespace semidirect
