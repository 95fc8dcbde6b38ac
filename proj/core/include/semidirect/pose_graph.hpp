#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "semidirect/direct_alignment.hpp"

namespace semidirect {

struct Vertex {
  KeyframeId id = 0;
  RigidTransform pose;  ///< world -> camera
  bool fixed = false;
};

enum class EdgeSource : std::uint8_t { Odometry, LoopClosure };

/// Relative-motion constraint: `measurement` maps camera `from` into camera
/// `to`, i.e. it predicts pose(to) * pose(from)^-1.
struct Edge {
  KeyframeId from = 0;
  KeyframeId to = 0;
  RigidTransform measurement;
  Matrix6d information = Matrix6d::Identity();
  EdgeSource source = EdgeSource::Odometry;
};

struct OptimizationReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PoseGraphConfig {
  int max_iterations = 100;
  double relative_decrease_tolerance = 1e-9;
  double step_tolerance = 1e-10;      ///< largest increment component that still counts as progress
  double odometry_sigma_t = 0.01;     ///< [m] baseline edge standard deviation
  double odometry_sigma_r = 0.005;    ///< [rad]
  double loop_information_scale = 0.5;
};

/// Information of an odometry edge: the baseline diagonal derated by (1 + cost).
Matrix6d odometry_information(double alignment_cost, const PoseGraphConfig& config = {});

/// Error vector of an edge, log(Z^-1 * T_to * T_from^-1), with (v, w) ordering.
Vector6d edge_error(const Edge& e, const RigidTransform& from_pose, const RigidTransform& to_pose);

class PoseGraph {
 public:
  /// Appends a vertex. The first vertex becomes the fixed gauge anchor.
  void add_vertex(KeyframeId id, const RigidTransform& pose);

  /// Appends a vertex placed at `relative * pose(previous)` and the odometry
  /// edge carrying `relative` from the previously added vertex.
  KeyframeId add_keyframe(KeyframeId id, const RigidTransform& relative, const Matrix6d& information);

  void add_edge(const Edge& e);

  bool contains(KeyframeId id) const { return index_.count(id) != 0; }
  const Vertex& vertex(KeyframeId id) const;
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t loop_closures() const;
  bool connected(KeyframeId a, KeyframeId b) const;

  void set_pose(KeyframeId id, const RigidTransform& pose);

  /// Sum over edges of e^T Omega e.
  double cost() const;

  /// Levenberg-Marquardt over the non-fixed vertices with left increments
  /// T <- exp(delta) T. Throws DisconnectedGraph when a vertex cannot be
  /// reached from the anchor.
  OptimizationReport optimize(const PoseGraphConfig& config = {});

 private:
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::map<KeyframeId, std::size_t> index_;
};

/// g2o text format: VERTEX_SE3:QUAT and EDGE_SE3:QUAT lines. Vertex poses are
/// written camera -> world as g2o expects; edge measurements are expressed
/// as the pose of `to` in the frame of `from`; FIX marks the anchor.
void write_g2o(const PoseGraph& graph, const std::filesystem::path& path);
PoseGraph read_g2o(const std::filesystem::path& path);

struct LoopClosureConfig {
  int candidates = 5;            ///< n nearest keyframes tried
  double radius = 10.0;          ///< rho_c [m]
  double max_angle = 0.7853981633974483;  ///< theta_c [rad] between viewing directions
  double max_translation_discrepancy = 0.1;  ///< delta_t [m]
  double max_rotation_discrepancy = 0.05;    ///< delta_r [rad]
  int min_separation = 1;        ///< candidates must be at least this many keyframe ids apart
};

/// Keyframes eligible for matching against `id` by distance, viewing angle,
/// and graph adjacency, nearest first, at most `config.candidates`.
std::vector<KeyframeId> constraint_candidates(const PoseGraph& graph, KeyframeId id,
                                              const LoopClosureConfig& config = {});

/// Both registrations agree: fwd * bwd and bwd * fwd are both within the
/// translation and rotation gates of identity.
bool mutually_consistent(const RigidTransform& fwd, const RigidTransform& bwd, const LoopClosureConfig& config = {});

/// Registers `a` against `b` and `b` against `a`, seeded from `a_to_b`.
/// Returns the verified loop-closure edge from a to b, if any.
std::optional<Edge> verify_constraint(const KeyFrame& a, const KeyFrame& b, const RigidTransform& a_to_b,
                                      const AlignmentConfig& alignment, const PoseGraphConfig& graph_config,
                                      const LoopClosureConfig& config = {});

/// Runs verify_constraint against every candidate of `kf` and adds the
/// accepted edges to the graph. `keyframes` resolves ids to snapshots.
std::vector<Edge> find_constraints(PoseGraph& graph, const KeyFrame& kf,
                                   const std::map<KeyframeId, KeyFramePtr>& keyframes,
                                   const AlignmentConfig& alignment, const PoseGraphConfig& graph_config,
                                   const LoopClosureConfig& config = {});

enum class ThreadMode : std::uint8_t { Deterministic, Threaded };

struct BackendTiming {
  KeyframeId keyframe = 0;
  double constraint_search_ms = 0.0;
  double optimization_ms = 0.0;
};

/// Owns the pose graph and the keyframe store. In threaded mode a worker
/// consumes submitted keyframes, searches constraints and optimizes; in
/// deterministic mode the same work runs inline inside submit().
class SlamBackend {
 public:
  SlamBackend(const PoseGraphConfig& graph, const LoopClosureConfig& loops, const AlignmentConfig& alignment,
              ThreadMode mode, bool search_constraints);
  ~SlamBackend();

  SlamBackend(const SlamBackend&) = delete;
  SlamBackend& operator=(const SlamBackend&) = delete;

  /// First keyframe: anchors the graph at its pose.
  void submit_first(KeyFramePtr kf);
  /// Subsequent keyframe with the odometry constraint from the previous one.
  void submit(KeyFramePtr kf, const RigidTransform& relative, const Matrix6d& information);

  /// Blocks until every submitted keyframe has been processed and rethrows
  /// the first failure raised on the worker.
  void flush();

  /// Copy of the current graph; `epoch` increments with every optimization.
  PoseGraph snapshot() const;
  std::uint64_t epoch() const;
  std::vector<KeyFramePtr> keyframes() const;
  std::vector<BackendTiming> timings() const;

 private:
  struct Job {
    KeyFramePtr kf;
    std::optional<RigidTransform> relative;
    Matrix6d information = Matrix6d::Identity();
  };

  void process(const Job& job);
  void run();

  PoseGraphConfig graph_config_;
  LoopClosureConfig loop_config_;
  AlignmentConfig alignment_config_;
  ThreadMode mode_;
  bool search_constraints_;

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<Job> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::exception_ptr error_;

  PoseGraph graph_;
  std::map<KeyframeId, KeyFramePtr> keyframes_;
  std::vector<BackendTiming> timings_;
  std::uint64_t epoch_ = 0;
  std::thread worker_;
};

}  // namespace semidirect
