#include "semidirect/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "semidirect/error.hpp"

namespace semidirect {

namespace {

struct ThreadModeField {
  ThreadMode* target;
};
struct EngineModeField {
  EngineMode* target;
};

using FieldRef = std::variant<double*, float*, int*, bool*, std::uint64_t*, ThreadModeField, EngineModeField>;

struct Binding {
  std::string_view section;
  std::string_view key;
  FieldRef field;
};

std::vector<Binding> bindings(EngineConfig& c) {
  return {
      {"odometry", "motion_threshold", &c.motion_threshold},
      {"odometry", "max_frames_per_keyframe", &c.max_frames_per_keyframe},
      {"odometry", "stationary_displacement", &c.stationary_displacement},
      {"odometry", "min_initial_hypotheses", &c.min_initial_hypotheses},
      {"odometry", "pyramid_levels", &c.pyramid_levels},
      {"odometry", "gradient_threshold", &c.gradient_threshold},
      {"odometry", "feature_edge_cost", &c.feature_edge_cost},
      {"odometry", "seed", &c.seed},
      {"odometry", "threads", ThreadModeField{&c.threads}},
      {"odometry", "mode", EngineModeField{&c.mode}},

      {"features", "nms_radius", &c.features.nms_radius},
      {"features", "response_threshold", &c.features.response_threshold},
      {"features", "search_half_width", &c.features.search_half_width},
      {"features", "search_half_height", &c.features.search_half_height},
      {"features", "epipolar_band", &c.features.epipolar_band},
      {"features", "max_disparity", &c.features.max_disparity},
      {"features", "min_disparity", &c.features.min_disparity},
      {"features", "ransac_iterations", &c.features.ransac_iterations},
      {"features", "inlier_threshold", &c.features.inlier_threshold},
      {"features", "min_inliers", &c.features.min_inliers},
      {"features", "gauss_newton_iterations", &c.features.gauss_newton_iterations},
      {"features", "refine_half_window", &c.features.refine_half_window},

      {"stereo", "window", &c.stereo.window},
      {"stereo", "min_disparity", &c.stereo.min_disparity},
      {"stereo", "max_disparity", &c.stereo.max_disparity},
      {"stereo", "gradient_threshold", &c.stereo.gradient_threshold},
      {"stereo", "disparity_sigma", &c.stereo.disparity_sigma},
      {"stereo", "lr_tolerance", &c.stereo.lr_tolerance},

      {"fusion", "compatibility_sigmas", &c.fusion.compatibility_sigmas},

      {"alignment", "huber_photo", &c.alignment.huber_photo},
      {"alignment", "huber_depth_scale", &c.alignment.huber_depth_scale},
      {"alignment", "photometric_sigma", &c.alignment.photometric_sigma},
      {"alignment", "use_depth", &c.alignment.use_depth},
      {"alignment", "max_iterations", &c.alignment.max_iterations},
      {"alignment", "step_tolerance", &c.alignment.step_tolerance},
      {"alignment", "relative_decrease_tolerance", &c.alignment.relative_decrease_tolerance},
      {"alignment", "stall_tolerance", &c.alignment.stall_tolerance},
      {"alignment", "max_rejections", &c.alignment.max_rejections},
      {"alignment", "min_valid_ratio", &c.alignment.min_valid_ratio},
      {"alignment", "tau_track", &c.alignment.tau_track},
      {"alignment", "levels", &c.alignment.levels},

      {"pose_graph", "max_iterations", &c.graph.max_iterations},
      {"pose_graph", "relative_decrease_tolerance", &c.graph.relative_decrease_tolerance},
      {"pose_graph", "step_tolerance", &c.graph.step_tolerance},
      {"pose_graph", "odometry_sigma_t", &c.graph.odometry_sigma_t},
      {"pose_graph", "odometry_sigma_r", &c.graph.odometry_sigma_r},
      {"pose_graph", "loop_information_scale", &c.graph.loop_information_scale},

      {"loop_closure", "candidates", &c.loops.candidates},
      {"loop_closure", "radius", &c.loops.radius},
      {"loop_closure", "max_angle", &c.loops.max_angle},
      {"loop_closure", "max_translation_discrepancy", &c.loops.max_translation_discrepancy},
      {"loop_closure", "max_rotation_discrepancy", &c.loops.max_rotation_discrepancy},
      {"loop_closure", "min_separation", &c.loops.min_separation},
  };
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool assign(const FieldRef& field, std::string_view value) {
  struct Visitor {
    std::string_view v;
    bool operator()(double* p) const { return parse_number(v, *p); }
    bool operator()(float* p) const {
      double d = 0.0;
      if (!parse_number(v, d)) return false;
      *p = static_cast<float>(d);
      return true;
    }
    bool operator()(int* p) const { return parse_number(v, *p); }
    bool operator()(std::uint64_t* p) const { return parse_number(v, *p); }
    bool operator()(bool* p) const {
      if (v == "true") *p = true;
      else if (v == "false") *p = false;
      else return false;
      return true;
    }
    bool operator()(ThreadModeField f) const {
      if (v == "threaded") *f.target = ThreadMode::Threaded;
      else if (v == "deterministic") *f.target = ThreadMode::Deterministic;
      else return false;
      return true;
    }
    bool operator()(EngineModeField f) const {
      if (v == "slam") *f.target = EngineMode::Slam;
      else if (v == "vo") *f.target = EngineMode::VisualOdometry;
      else return false;
      return true;
    }
  };
  return std::visit(Visitor{value}, field);
}

std::string format(const FieldRef& field) {
  struct Visitor {
    std::string operator()(double* p) const {
      std::ostringstream out;
      out.precision(17);
      out << *p;
      return out.str();
    }
    std::string operator()(float* p) const {
      std::ostringstream out;
      out.precision(9);
      out << *p;
      return out.str();
    }
    std::string operator()(int* p) const { return std::to_string(*p); }
    std::string operator()(std::uint64_t* p) const { return std::to_string(*p); }
    std::string operator()(bool* p) const { return *p ? "true" : "false"; }
    std::string operator()(ThreadModeField f) const {
      return *f.target == ThreadMode::Threaded ? "\"threaded\"" : "\"deterministic\"";
    }
    std::string operator()(EngineModeField f) const { return *f.target == EngineMode::Slam ? "\"slam\"" : "\"vo\""; }
  };
  return std::visit(Visitor{}, field);
}

[[noreturn]] void malformed(int line, const std::string& why) {
  throw Error(ErrorCode::MalformedLine, "config line " + std::to_string(line) + ": " + why);
}

}  // namespace

void EngineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, std::string("invalid config: ") + what);
  };
  require(motion_threshold > 0.0, "motion_threshold must be positive");
  require(max_frames_per_keyframe >= 1, "max_frames_per_keyframe must be at least 1");
  require(stationary_displacement >= 0.0, "stationary_displacement must be non-negative");
  require(pyramid_levels >= 0, "pyramid_levels must be non-negative");
  require(feature_edge_cost >= 0.0, "feature_edge_cost must be non-negative");
  require(features.min_inliers >= 3, "features.min_inliers must be at least 3");
  require(features.ransac_iterations >= 1, "features.ransac_iterations must be positive");
  require(stereo.window >= 3 && stereo.window % 2 == 1, "stereo.window must be odd and at least 3");
  require(stereo.max_disparity > stereo.min_disparity, "stereo.max_disparity must exceed min_disparity");
  require(fusion.compatibility_sigmas > 0.0, "fusion.compatibility_sigmas must be positive");
  require(alignment.max_iterations >= 1, "alignment.max_iterations must be positive");
  require(alignment.max_rejections >= 1, "alignment.max_rejections must be positive");
  require(alignment.min_valid_ratio >= 0.0 && alignment.min_valid_ratio <= 1.0,
          "alignment.min_valid_ratio must lie in [0, 1]");
  require(alignment.tau_track > 0.0, "alignment.tau_track must be positive");
  require(graph.max_iterations >= 1, "pose_graph.max_iterations must be positive");
  require(graph.odometry_sigma_t > 0.0 && graph.odometry_sigma_r > 0.0, "pose_graph sigmas must be positive");
  require(graph.loop_information_scale > 0.0, "pose_graph.loop_information_scale must be positive");
  require(loops.candidates >= 0, "loop_closure.candidates must be non-negative");
  require(loops.radius > 0.0 && loops.max_angle > 0.0, "loop_closure gates must be positive");
}

EngineConfig parse_engine_config(std::string_view text) {
  EngineConfig config;
  const std::vector<Binding> table = bindings(config);
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') malformed(line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const Binding& b : table) known = known || b.section == section;
      if (!known) malformed(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) malformed(line_no, "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const Binding* match = nullptr;
    for (const Binding& b : table) {
      if (b.section == section && b.key == key) match = &b;
    }
    if (!match) malformed(line_no, "unknown key '" + std::string(key) + "' in [" + section + "]");
    if (!assign(match->field, value)) {
      malformed(line_no, "cannot parse '" + std::string(value) + "' for " + section + "." + std::string(key));
    }
  }
  config.validate();
  return config;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_engine_config(buf.str());
}

std::string to_string(const EngineConfig& config) {
  EngineConfig copy = config;
  std::ostringstream out;
  std::string_view section;
  for (const Binding& b : bindings(copy)) {
    if (b.section != section) {
      if (!section.empty()) out << '\n';
      section = b.section;
      out << '[' << section << "]\n";
    }
    out << b.key << " = " << format(b.field) << '\n';
  }
  return out.str();
}

}  // namespace semidirect
