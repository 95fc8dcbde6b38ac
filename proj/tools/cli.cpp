#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>

#include "semidirect/dataset_io.hpp"
#include "semidirect/error.hpp"
#include "semidirect/evaluation.hpp"
#include "semidirect/odometry.hpp"
#include "semidirect/synth.hpp"

namespace semidirect::cli {

namespace fs = std::filesystem;

namespace {

/// Sequential frame provider over any of the supported inputs.
struct FrameFeed {
  std::string name;
  std::size_t count = 0;
  std::optional<Trajectory> ground_truth;
  std::function<std::optional<StereoFrame>()> next;
};

FrameFeed open_feed(const RunManifest& m) {
  FrameFeed feed;
  if (m.dataset == DatasetKind::Synth) {
    auto scene = std::make_shared<SyntheticScene>(load_scene(m.path));
    feed.name = "synth_" + m.path.stem().string();
    feed.count = scene->trajectory.size();
    feed.ground_truth = scene->trajectory;
    feed.next = [scene, i = std::size_t{0}]() mutable -> std::optional<StereoFrame> {
      if (i >= scene->trajectory.size()) return std::nullopt;
      return render(*scene, i++).frame;
    };
    return feed;
  }

  auto source = std::make_shared<SequenceSource>(m.dataset == DatasetKind::Kitti ? load_kitti(m.path, m.sequence)
                                                                                 : load_euroc(m.path));
  feed.name = source->name;
  feed.count = source->size();
  feed.ground_truth = source->ground_truth;
  if (m.deterministic) {
    feed.next = [source, i = std::size_t{0}]() mutable -> std::optional<StereoFrame> {
      if (i >= source->size()) return std::nullopt;
      return load_frame(*source, i++);
    };
  } else {
    auto prefetch = std::make_shared<FramePrefetcher>(*source);
    // The prefetcher refers to the source, so the closure keeps both alive.
    feed.next = [source, prefetch] { return prefetch->next(); };
  }
  return feed;
}

std::string status_name(FrameStatus s) {
  switch (s) {
    case FrameStatus::TrackedByFeatures: return "tracked";
    case FrameStatus::NewKeyframe: return "keyframe";
    case FrameStatus::TrackingLost: return "lost";
  }
  return "unknown";
}

struct FrameRecord {
  std::size_t index = 0;
  double timestamp = 0.0;
  FrameStatus status = FrameStatus::TrackedByFeatures;
  KeyframeId keyframe = 0;
  double tracking_ms = 0.0;
  double mapping_ms = 0.0;
};

void write_timing_csv(const std::vector<FrameRecord>& records, const std::vector<BackendTiming>& backend,
                      const fs::path& path) {
  std::map<KeyframeId, BackendTiming> by_keyframe;
  for (const BackendTiming& t : backend) by_keyframe[t.keyframe] = t;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out << "frame,timestamp,status,keyframe,tracking,mapping,constraint_search,optimization\n";
  char line[256];
  for (const FrameRecord& r : records) {
    BackendTiming t;
    if (r.status == FrameStatus::NewKeyframe) {
      if (const auto it = by_keyframe.find(r.keyframe); it != by_keyframe.end()) t = it->second;
    }
    std::snprintf(line, sizeof(line), "%zu,%.9f,%s,%d,%.6f,%.6f,%.6f,%.6f\n", r.index, r.timestamp,
                  status_name(r.status).c_str(), r.keyframe, r.tracking_ms, r.mapping_ms, t.constraint_search_ms,
                  t.optimization_ms);
    out << line;
  }
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void RunManifest::validate() const {
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, "no dataset path given");
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no output directory given");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw Error(ErrorCode::IoFailure, "cannot create output directory " + out.string() + ": " + ec.message());
  }
  const fs::path probe = out / ".write_probe";
  if (!std::ofstream(probe)) throw Error(ErrorCode::IoFailure, "output directory " + out.string() + " is not writable");
  fs::remove(probe, ec);
}

int cmd_run(const RunManifest& manifest, std::ostream& out, std::ostream& err) {
  try {
    manifest.validate();
    EngineConfig config = manifest.config ? load_engine_config(*manifest.config) : EngineConfig{};
    if (manifest.seed) config.seed = *manifest.seed;
    config.mode = manifest.mode;
    if (manifest.deterministic) config.threads = ThreadMode::Deterministic;
    config.validate();

    FrameFeed feed = open_feed(manifest);
    const std::size_t limit = std::min(feed.count, manifest.max_frames.value_or(feed.count));
    if (limit == 0) throw Error(ErrorCode::InvalidArgument, "the sequence has no frames");

    Odometry odometry(config);
    std::vector<FrameRecord> records;
    std::size_t lost = 0;
    auto record = [&](const FrameOutcome& o, double timestamp) {
      records.push_back({o.frame_index, timestamp, o.status, o.keyframe, o.tracking_ms, o.mapping_ms});
      if (o.status == FrameStatus::TrackingLost) {
        ++lost;
        err << "warning: tracking lost at frame " << o.frame_index << " (t = " << fixed(timestamp) << ")\n";
      }
    };

    std::optional<StereoFrame> frame = feed.next();
    if (!frame) throw Error(ErrorCode::InvalidArgument, "the sequence has no frames");
    record(odometry.initialize(*frame), frame->timestamp);
    for (std::size_t i = 1; i < limit; ++i) {
      frame = feed.next();
      if (!frame) break;
      record(odometry.process(*frame), frame->timestamp);
    }

    const Trajectory estimate =
        manifest.mode == EngineMode::Slam ? odometry.optimized_trajectory() : Trajectory(odometry.trajectory());
    odometry.backend().flush();
    const PoseGraph graph = odometry.backend().snapshot();
    std::vector<KeyFramePtr> keyframes = odometry.backend().keyframes();
    std::vector<RigidTransform> poses;
    for (const KeyFramePtr& kf : keyframes) poses.push_back(graph.vertex(kf->id).pose);

    write_trajectory_tum(estimate, manifest.out / outputs::kTrajectory);
    write_trajectory_tum(odometry.trajectory(), manifest.out / outputs::kOdometry);
    write_g2o(graph, manifest.out / outputs::kGraph);
    write_ply(semi_dense_points(keyframes, &poses), manifest.out / outputs::kMap);
    write_timing_csv(records, odometry.backend().timings(), manifest.out / outputs::kTiming);

    std::vector<double> tracking;
    for (const FrameRecord& r : records) tracking.push_back(r.tracking_ms);
    const char* method = manifest.mode == EngineMode::Slam ? "slam" : "vo";
    out << feed.name << " [" << method << "]: " << records.size() << " frames, " << keyframes.size()
        << " keyframes, " << graph.loop_closures() << " loop closures, " << lost << " lost\n";
    out << "median tracking time " << fixed(median(tracking), 2) << " ms\n";

    if (feed.ground_truth) {
      Trajectory truth;
      for (const StampedPose& p : *feed.ground_truth) {
        if (p.timestamp <= records.back().timestamp + 1e-9) truth.push_back(p);
      }
      write_trajectory_tum(truth, manifest.out / outputs::kGroundTruth);
      try {
        const AteReport final_ate = ate(estimate, truth);
        std::vector<MetricRow> rows = metric_rows(final_ate, feed.name, method);
        out << "ATE rmse " << fixed(final_ate.rmse) << " m, median " << fixed(final_ate.median) << " m\n";
        if (manifest.mode == EngineMode::Slam) {
          const AteReport vo_ate = ate(odometry.trajectory(), truth);
          const auto vo_rows = metric_rows(vo_ate, feed.name, "vo");
          rows.insert(rows.end(), vo_rows.begin(), vo_rows.end());
          if (vo_ate.rmse > 0.0) {
            const double gain = improvement(vo_ate.rmse, final_ate.rmse);
            rows.push_back({feed.name, method, "improvement_percent", gain});
            out << "odometry ATE rmse " << fixed(vo_ate.rmse) << " m, improvement " << fixed(gain, 2) << " %\n";
          }
        }
        write_metrics_csv(rows, manifest.out / outputs::kMetrics);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::IoFailure) throw;
        err << "warning: no ATE for this run: " << e.what() << '\n';
      }
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_eval(const EvalRequest& request, std::ostream& out, std::ostream& err) {
  try {
    std::vector<MetricRow> rows;
    fs::path csv;
    switch (request.metric) {
      case Metric::Ate: {
        const AteReport r = ate(read_trajectory_tum(request.est), read_trajectory_tum(request.gt),
                                AteOptions{.similarity = request.similarity}, request.max_dt);
        out << "ATE rmse " << fixed(r.rmse) << " m, median " << fixed(r.median) << " m over " << r.errors.size()
            << " poses";
        if (request.similarity) out << ", scale " << fixed(r.scale);
        out << '\n';
        rows = metric_rows(r, request.dataset, request.method);
        csv = fs::path(request.est.string() + ".ate.csv");
        break;
      }
      case Metric::Rpe: {
        const std::vector<double> lengths = request.segments.empty() ? kitti_segment_lengths() : request.segments;
        const RpeReport r =
            rpe(read_trajectory_tum(request.est), read_trajectory_tum(request.gt), lengths, request.max_dt);
        out << "segment [m]  segments  translation [%]  rotation [deg/m]\n";
        for (const SegmentStats& s : r.per_length) {
          char line[128];
          std::snprintf(line, sizeof(line), "%11.1f  %8zu  %15.4f  %16.6f\n", s.length, s.count, s.translation_percent,
                        s.rotation_deg_per_m);
          out << line;
        }
        out << "RPE " << fixed(r.translation_percent, 4) << " %, " << fixed(r.rotation_deg_per_m) << " deg/m\n";
        rows = metric_rows(r, request.dataset, request.method);
        csv = fs::path(request.est.string() + ".rpe.csv");
        break;
      }
      case Metric::Improve: {
        double vo = 0.0;
        double slam = 0.0;
        if (request.vo_ate && request.slam_ate) {
          vo = *request.vo_ate;
          slam = *request.slam_ate;
          csv = "improvement.csv";
        } else if (request.baseline && !request.est.empty() && !request.gt.empty()) {
          const Trajectory gt = read_trajectory_tum(request.gt);
          slam = ate(read_trajectory_tum(request.est), gt, {}, request.max_dt).rmse;
          vo = ate(read_trajectory_tum(*request.baseline), gt, {}, request.max_dt).rmse;
          csv = fs::path(request.est.string() + ".improve.csv");
        } else {
          err << "error: improve needs --vo-ate and --slam-ate, or --est, --baseline and --gt\n";
          return 2;
        }
        const double gain = improvement(vo, slam);
        out << "VO ATE " << fixed(vo) << " m, SLAM ATE " << fixed(slam) << " m, improvement " << fixed(gain, 2)
            << " %\n";
        rows = {{request.dataset, "vo", "ate_rmse_m", vo},
                {request.dataset, request.method, "ate_rmse_m", slam},
                {request.dataset, request.method, "improvement_percent", gain}};
        break;
      }
    }
    write_metrics_csv(rows, request.csv.value_or(csv));
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_synth(const fs::path& scene_path, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  try {
    const SyntheticScene scene = load_scene(scene_path);
    write_kitti_sequence(scene, out_dir, "00");
    out << "wrote " << scene.trajectory.size() << " stereo frames to " << (out_dir / "sequences" / "00").string()
        << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-direct stereo visual odometry and SLAM"};
  app.require_subcommand(1);

  RunManifest manifest;
  std::string dataset, mode = "slam", path, config, out_dir;
  std::uint64_t seed = 0;
  std::size_t max_frames = 0;
  CLI::App* run = app.add_subcommand("run", "Track a sequence and write trajectory, graph, map and timings");
  run->add_option("--dataset", dataset, "Input kind")->required()->check(CLI::IsMember({"kitti", "euroc", "synth"}));
  run->add_option("--path", path, "Dataset directory, or scene file for synth")->required();
  run->add_option("--sequence", manifest.sequence, "KITTI sequence id")->capture_default_str();
  run->add_option("--config", config, "Engine config file");
  run->add_option("--mode", mode, "vo disables constraint search and optimization")
      ->check(CLI::IsMember({"vo", "slam"}))
      ->capture_default_str();
  run->add_option("--out", out_dir, "Output directory")->required();
  CLI::Option* seed_opt = run->add_option("--seed", seed, "RANSAC seed");
  run->add_flag("--deterministic", manifest.deterministic, "Single-threaded engine");
  CLI::Option* frames_opt = run->add_option("--max-frames", max_frames, "Stop after this many frames");

  EvalRequest request;
  std::string metric, est, gt, baseline, csv;
  CLI::App* eval = app.add_subcommand("eval", "Compare trajectories in TUM format");
  eval->add_option("--metric", metric, "ate, rpe or improve")
      ->required()
      ->check(CLI::IsMember({"ate", "rpe", "improve"}));
  eval->add_option("--est", est, "Estimated trajectory");
  eval->add_option("--gt", gt, "Ground-truth trajectory");
  eval->add_option("--baseline", baseline, "Odometry trajectory for improve");
  CLI::Option* vo_opt = eval->add_option("--vo-ate", request.vo_ate.emplace(), "Odometry ATE for improve [m]");
  CLI::Option* slam_opt = eval->add_option("--slam-ate", request.slam_ate.emplace(), "SLAM ATE for improve [m]");
  eval->add_option("--csv", csv, "Report path");
  eval->add_option("--max-dt", request.max_dt, "Association window [s]")->capture_default_str();
  eval->add_option("--segments", request.segments, "RPE segment lengths [m]");
  eval->add_flag("--similarity", request.similarity, "Also align scale");
  eval->add_option("--dataset-id", request.dataset, "Dataset column of the CSV")->capture_default_str();
  eval->add_option("--method-id", request.method, "Method column of the CSV")->capture_default_str();

  std::string scene, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Render a scene description to a KITTI-layout dataset");
  synth->add_option("--scene", scene, "Scene description file")->required();
  synth->add_option("--out", synth_out, "Output dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  if (run->parsed()) {
    manifest.dataset = dataset == "kitti" ? DatasetKind::Kitti : dataset == "euroc" ? DatasetKind::Euroc
                                                                                    : DatasetKind::Synth;
    manifest.path = path;
    manifest.out = out_dir;
    manifest.mode = mode == "vo" ? EngineMode::VisualOdometry : EngineMode::Slam;
    if (!config.empty()) manifest.config = fs::path(config);
    if (seed_opt->count() > 0) manifest.seed = seed;
    if (frames_opt->count() > 0) manifest.max_frames = max_frames;
    return cmd_run(manifest, out, err);
  }
  if (eval->parsed()) {
    request.metric = metric == "ate" ? Metric::Ate : metric == "rpe" ? Metric::Rpe : Metric::Improve;
    request.est = est;
    request.gt = gt;
    if (!baseline.empty()) request.baseline = fs::path(baseline);
    if (!csv.empty()) request.csv = fs::path(csv);
    if (vo_opt->count() == 0) request.vo_ate.reset();
    if (slam_opt->count() == 0) request.slam_ate.reset();
    if (request.metric != Metric::Improve && (est.empty() || gt.empty())) {
      err << "error: --est and --gt are required for " << metric << '\n';
      return 2;
    }
    return cmd_eval(request, out, err);
  }
  return cmd_synth(scene, synth_out, out, err);
}

}  // namespace semidirect::cli
