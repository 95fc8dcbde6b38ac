#include "semidirect/pose_graph.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "semidirect/error.hpp"

namespace semidirect {

Matrix6d odometry_information(double alignment_cost, const PoseGraphConfig& config) {
  Matrix6d info = Matrix6d::Zero();
  const double it = 1.0 / (config.odometry_sigma_t * config.odometry_sigma_t);
  const double ir = 1.0 / (config.odometry_sigma_r * config.odometry_sigma_r);
  info.diagonal() << it, it, it, ir, ir, ir;
  const double derate = std::isfinite(alignment_cost) ? 1.0 + std::max(alignment_cost, 0.0) : 1e6;
  return info / derate;
}

Vector6d edge_error(const Edge& e, const RigidTransform& from_pose, const RigidTransform& to_pose) {
  return log_map(e.measurement.inverse() * to_pose * from_pose.inverse()).vector();
}

void PoseGraph::add_vertex(KeyframeId id, const RigidTransform& pose) {
  if (contains(id)) throw Error(ErrorCode::InvalidArgument, "duplicate vertex " + std::to_string(id));
  index_[id] = vertices_.size();
  vertices_.push_back({id, pose, vertices_.empty()});
}

KeyframeId PoseGraph::add_keyframe(KeyframeId id, const RigidTransform& relative, const Matrix6d& information) {
  if (vertices_.empty()) throw Error(ErrorCode::InvalidArgument, "keyframe " + std::to_string(id) + " has no predecessor");
  const KeyframeId previous = vertices_.back().id;
  const RigidTransform pose = relative * vertices_.back().pose;
  add_vertex(id, pose);
  add_edge({previous, id, relative, information, EdgeSource::Odometry});
  return id;
}

void PoseGraph::add_edge(const Edge& e) {
  if (e.from == e.to) throw Error(ErrorCode::InvalidArgument, "edge endpoints coincide");
  if (!contains(e.from) || !contains(e.to)) {
    throw Error(ErrorCode::InvalidArgument,
                "edge " + std::to_string(e.from) + "->" + std::to_string(e.to) + " references a missing vertex");
  }
  if ((e.information - e.information.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "edge information is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Matrix6d> eig(e.information);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "edge information is not positive definite");
  }
  edges_.push_back(e);
}

const Vertex& PoseGraph::vertex(KeyframeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no vertex " + std::to_string(id));
  return vertices_[it->second];
}

void PoseGraph::set_pose(KeyframeId id, const RigidTransform& pose) {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no vertex " + std::to_string(id));
  vertices_[it->second].pose = pose;
}

std::size_t PoseGraph::loop_closures() const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.source == EdgeSource::LoopClosure; }));
}

bool PoseGraph::connected(KeyframeId a, KeyframeId b) const {
  return std::any_of(edges_.begin(), edges_.end(),
                     [&](const Edge& e) { return (e.from == a && e.to == b) || (e.from == b && e.to == a); });
}

double PoseGraph::cost() const {
  double c = 0.0;
  for (const Edge& e : edges_) {
    const Vector6d r = edge_error(e, vertex(e.from).pose, vertex(e.to).pose);
    c += r.dot(e.information * r);
  }
  return c;
}

namespace {

/// se(3) adjoint matrix ad(xi) for (v, w) ordering.
Matrix6d small_adjoint(const Vector6d& xi) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = hat(xi.tail<3>());
  ad.topRightCorner<3, 3>() = hat(xi.head<3>());
  ad.bottomRightCorner<3, 3>() = hat(xi.tail<3>());
  return ad;
}

/// Inverse right Jacobian of SE(3) at xi = log(E): the derivative of
/// log(E exp(eps)) at eps = 0. Evaluated as the Bernoulli series
/// sum B_n / n! ad(-xi)^n, which converges for rotation angles below 2 pi and
/// reaches double precision within the truncation used here for angles up
/// to about 2 rad. Larger errors fall back to central differences.
Matrix6d inverse_right_jacobian(const RigidTransform& e) {
  const Vector6d xi = log_map(e).vector();
  if (xi.tail<3>().norm() > 2.0) {
    constexpr double h = 1e-6;
    Matrix6d j;
    for (int k = 0; k < 6; ++k) {
      Vector6d d = Vector6d::Zero();
      d[k] = h;
      j.col(k) = (log_map(e * exp_map(Twist(d))).vector() - log_map(e * exp_map(Twist(Vector6d(-d)))).vector()) /
                 (2.0 * h);
    }
    return j;
  }
  // Bernoulli numbers B_0..B_30 with the B_1 = -1/2 convention; odd ones above 1 vanish.
  static constexpr std::array<double, 31> bernoulli = {
      1.0, -0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0, 0.0, 1.0 / 42.0, 0.0, -1.0 / 30.0, 0.0, 5.0 / 66.0, 0.0,
      -691.0 / 2730.0, 0.0, 7.0 / 6.0, 0.0, -3617.0 / 510.0, 0.0, 43867.0 / 798.0, 0.0, -174611.0 / 330.0, 0.0,
      854513.0 / 138.0, 0.0, -236364091.0 / 2730.0, 0.0, 8553103.0 / 6.0, 0.0, -23749461029.0 / 870.0, 0.0,
      8615841276005.0 / 14322.0};
  const Matrix6d ad = small_adjoint(-xi);
  Matrix6d power = Matrix6d::Identity();
  Matrix6d j = Matrix6d::Identity();
  double factorial = 1.0;
  for (std::size_t n = 1; n < bernoulli.size(); ++n) {
    power = power * ad;
    factorial *= static_cast<double>(n);
    if (bernoulli[n] != 0.0) j += (bernoulli[n] / factorial) * power;
  }
  return j;
}

double total_cost(const std::vector<Edge>& edges, const std::vector<RigidTransform>& poses,
                  const std::map<KeyframeId, std::size_t>& index) {
  double c = 0.0;
  for (const Edge& e : edges) {
    const Vector6d r = edge_error(e, poses[index.at(e.from)], poses[index.at(e.to)]);
    c += r.dot(e.information * r);
  }
  return c;
}

}  // namespace

OptimizationReport PoseGraph::optimize(const PoseGraphConfig& config) {
  OptimizationReport report;
  if (vertices_.empty()) {
    report.converged = true;
    return report;
  }

  // Every vertex must be reachable from the anchor.
  std::map<KeyframeId, std::vector<KeyframeId>> adjacency;
  for (const Edge& e : edges_) {
    adjacency[e.from].push_back(e.to);
    adjacency[e.to].push_back(e.from);
  }
  std::set<KeyframeId> reached;
  std::queue<KeyframeId> open;
  for (const Vertex& v : vertices_) {
    if (v.fixed) {
      reached.insert(v.id);
      open.push(v.id);
    }
  }
  while (!open.empty()) {
    const KeyframeId id = open.front();
    open.pop();
    for (KeyframeId n : adjacency[id]) {
      if (reached.insert(n).second) open.push(n);
    }
  }
  if (reached.size() != vertices_.size()) {
    std::string missing;
    for (const Vertex& v : vertices_) {
      if (!reached.count(v.id)) missing += (missing.empty() ? "" : ", ") + std::to_string(v.id);
    }
    throw Error(ErrorCode::DisconnectedGraph, "vertices not reachable from the anchor: " + missing);
  }

  std::vector<RigidTransform> poses;
  poses.reserve(vertices_.size());
  for (const Vertex& v : vertices_) poses.push_back(v.pose);
  std::vector<int> block(vertices_.size(), -1);
  int free_count = 0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (!vertices_[i].fixed) block[i] = free_count++;
  }

  double cost = total_cost(edges_, poses, index_);
  report.initial_cost = cost;
  report.final_cost = cost;
  if (free_count == 0 || edges_.empty() || cost == 0.0) {
    report.converged = true;
    return report;
  }

  const int n = 6 * free_count;
  double lambda = 1e-4;
  for (int it = 0; it < config.max_iterations; ++it) {
    ++report.iterations;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (const Edge& e : edges_) {
      const std::size_t fi = index_.at(e.from);
      const std::size_t ti = index_.at(e.to);
      const RigidTransform a = poses[ti] * poses[fi].inverse();
      const RigidTransform err_t = e.measurement.inverse() * a;
      const Vector6d r = log_map(err_t).vector();
      const Matrix6d jr = inverse_right_jacobian(err_t);
      // Z^-1 exp(d_to) A exp(-d_from) = E exp(Ad(A^-1) d_to) exp(-d_from) to first order.
      const Matrix6d j_to = jr * adjoint(a.inverse());
      const Matrix6d j_from = -jr;
      const std::array<std::pair<int, const Matrix6d*>, 2> parts = {
          std::pair<int, const Matrix6d*>{block[fi], &j_from}, std::pair<int, const Matrix6d*>{block[ti], &j_to}};
      for (const auto& [bi, ji] : parts) {
        if (bi < 0) continue;
        g.segment<6>(6 * bi) += ji->transpose() * e.information * r;
        for (const auto& [bj, jj] : parts) {
          if (bj < 0) continue;
          const Matrix6d hij = ji->transpose() * e.information * *jj;
          for (int r0 = 0; r0 < 6; ++r0) {
            for (int c0 = 0; c0 < 6; ++c0) triplets.emplace_back(6 * bi + r0, 6 * bj + c0, hij(r0, c0));
          }
        }
      }
    }
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diag = h.diagonal();

    bool accepted = false;
    while (!accepted && lambda < 1e12) {
      Eigen::SparseMatrix<double> damped = h;
      for (int k = 0; k < n; ++k) damped.coeffRef(k, k) += lambda * std::max(diag[k], 1e-12);
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = -solver.solve(g);
      std::vector<RigidTransform> candidate = poses;
      for (std::size_t i = 0; i < vertices_.size(); ++i) {
        if (block[i] < 0) continue;
        candidate[i] = exp_map(Twist(Vector6d(delta.segment<6>(6 * block[i])))) * poses[i];
      }
      const double next = total_cost(edges_, candidate, index_);
      if (next < cost) {
        const double rel = (cost - next) / cost;
        poses = std::move(candidate);
        cost = next;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (rel < config.relative_decrease_tolerance || delta.lpNorm<Eigen::Infinity>() < config.step_tolerance) {
          report.converged = true;
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No damped step lowers the cost: the current poses are a minimum.
      report.converged = true;
    }
    if (report.converged) break;
  }

  for (std::size_t i = 0; i < vertices_.size(); ++i) vertices_[i].pose = poses[i];
  report.final_cost = cost;
  return report;
}

// ---------------------------------------------------------------------------
// g2o text format

namespace {

void write_pose(std::ostream& out, const RigidTransform& t) {
  const Eigen::Quaterniond q = t.quaternion();
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", t.translation.x(), t.translation.y(),
                t.translation.z(), q.x(), q.y(), q.z(), q.w());
  out << buf;
}

RigidTransform read_pose(std::istringstream& in) {
  double x, y, z, qx, qy, qz, qw;
  if (!(in >> x >> y >> z >> qx >> qy >> qz >> qw)) throw Error(ErrorCode::MalformedLine, "truncated pose");
  return RigidTransform(Eigen::Quaterniond(qw, qx, qy, qz).normalized(), Vector3d(x, y, z));
}

}  // namespace

void write_g2o(const PoseGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  for (const Vertex& v : graph.vertices()) {
    out << "VERTEX_SE3:QUAT " << v.id << ' ';
    write_pose(out, v.pose.inverse());
    out << '\n';
  }
  for (const Vertex& v : graph.vertices()) {
    if (v.fixed) out << "FIX " << v.id << '\n';
  }
  for (const Edge& e : graph.edges()) {
    out << (e.source == EdgeSource::LoopClosure ? "# loop\n" : "");
    out << "EDGE_SE3:QUAT " << e.from << ' ' << e.to << ' ';
    write_pose(out, e.measurement.inverse());
    char buf[64];
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        std::snprintf(buf, sizeof buf, " %.17g", e.information(r, c));
        out << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

PoseGraph read_g2o(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  struct PendingVertex {
    KeyframeId id;
    RigidTransform pose;
  };
  std::vector<PendingVertex> vertices;
  std::vector<Edge> edges;
  std::set<KeyframeId> fixed;
  std::string line;
  int line_no = 0;
  bool next_is_loop = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "# loop") {
      next_is_loop = true;
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    try {
      if (tag == "VERTEX_SE3:QUAT") {
        KeyframeId id;
        if (!(ss >> id)) throw Error(ErrorCode::MalformedLine, "missing vertex id");
        vertices.push_back({id, read_pose(ss).inverse()});
      } else if (tag == "FIX") {
        KeyframeId id;
        if (!(ss >> id)) throw Error(ErrorCode::MalformedLine, "missing id");
        fixed.insert(id);
      } else if (tag == "EDGE_SE3:QUAT") {
        Edge e;
        if (!(ss >> e.from >> e.to)) throw Error(ErrorCode::MalformedLine, "missing edge ids");
        e.measurement = read_pose(ss).inverse();
        for (int r = 0; r < 6; ++r) {
          for (int c = r; c < 6; ++c) {
            if (!(ss >> e.information(r, c))) throw Error(ErrorCode::MalformedLine, "truncated information");
            e.information(c, r) = e.information(r, c);
          }
        }
        e.source = next_is_loop ? EdgeSource::LoopClosure : EdgeSource::Odometry;
        edges.push_back(e);
      } else {
        throw Error(ErrorCode::MalformedLine, "unknown tag '" + tag + "'");
      }
    } catch (const Error& err) {
      throw Error(ErrorCode::MalformedLine, path.string() + " line " + std::to_string(line_no) + ": " + err.what());
    }
    next_is_loop = false;
  }
  // The anchor goes first so that it becomes the fixed vertex.
  std::stable_partition(vertices.begin(), vertices.end(),
                        [&](const PendingVertex& v) { return fixed.count(v.id) != 0; });
  PoseGraph graph;
  for (const auto& v : vertices) graph.add_vertex(v.id, v.pose);
  for (const auto& e : edges) graph.add_edge(e);
  return graph;
}

// ---------------------------------------------------------------------------
// Constraint search

namespace {

Vector3d camera_centre(const RigidTransform& world_to_camera) {
  return -(world_to_camera.rotation.transpose() * world_to_camera.translation);
}

Vector3d viewing_direction(const RigidTransform& world_to_camera) {
  return world_to_camera.rotation.transpose().col(2);
}

bool near_identity(const RigidTransform& t, const LoopClosureConfig& config) {
  return t.translation.norm() < config.max_translation_discrepancy &&
         rotation_angle(t) < config.max_rotation_discrepancy;
}

}  // namespace

std::vector<KeyframeId> constraint_candidates(const PoseGraph& graph, KeyframeId id, const LoopClosureConfig& config) {
  const Vertex& self = graph.vertex(id);
  const Vector3d c = camera_centre(self.pose);
  const Vector3d dir = viewing_direction(self.pose);
  std::vector<std::pair<double, KeyframeId>> found;
  for (const Vertex& v : graph.vertices()) {
    if (v.id == id || std::abs(v.id - id) < config.min_separation || graph.connected(v.id, id)) continue;
    const double dist = (camera_centre(v.pose) - c).norm();
    if (dist > config.radius) continue;
    const double angle = std::acos(std::clamp(viewing_direction(v.pose).dot(dir), -1.0, 1.0));
    if (angle > config.max_angle) continue;
    found.emplace_back(dist, v.id);
  }
  std::sort(found.begin(), found.end());
  std::vector<KeyframeId> out;
  for (std::size_t i = 0; i < found.size() && static_cast<int>(i) < config.candidates; ++i) {
    out.push_back(found[i].second);
  }
  return out;
}

bool mutually_consistent(const RigidTransform& fwd, const RigidTransform& bwd, const LoopClosureConfig& config) {
  return near_identity(fwd * bwd, config) && near_identity(bwd * fwd, config);
}

std::optional<Edge> verify_constraint(const KeyFrame& a, const KeyFrame& b, const RigidTransform& a_to_b,
                                      const AlignmentConfig& alignment, const PoseGraphConfig& graph_config,
                                      const LoopClosureConfig& config) {
  const int levels = std::min(a.pyramid.size(), b.pyramid.size());
  AlignmentResult fwd;
  AlignmentResult bwd;
  try {
    fwd = align(a, AlignmentTarget::make(b.left, b.depth, levels), a_to_b, alignment);
    bwd = align(b, AlignmentTarget::make(a.left, a.depth, levels), a_to_b.inverse(), alignment);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyOverlap || e.code() == ErrorCode::DivergedAlignment) return std::nullopt;
    throw;
  }
  if (!fwd.converged || !bwd.converged || !mutually_consistent(fwd.motion, bwd.motion, config)) return std::nullopt;
  Edge e;
  e.from = a.id;
  e.to = b.id;
  e.measurement = fwd.motion;
  e.information = graph_config.loop_information_scale * odometry_information(0.5 * (fwd.cost + bwd.cost), graph_config);
  e.source = EdgeSource::LoopClosure;
  return e;
}

std::vector<Edge> find_constraints(PoseGraph& graph, const KeyFrame& kf,
                                   const std::map<KeyframeId, KeyFramePtr>& keyframes,
                                   const AlignmentConfig& alignment, const PoseGraphConfig& graph_config,
                                   const LoopClosureConfig& config) {
  std::vector<Edge> accepted;
  const RigidTransform self = graph.vertex(kf.id).pose;
  for (KeyframeId id : constraint_candidates(graph, kf.id, config)) {
    const auto it = keyframes.find(id);
    if (it == keyframes.end()) continue;
    const RigidTransform seed = self * graph.vertex(id).pose.inverse();
    if (auto e = verify_constraint(*it->second, kf, seed, alignment, graph_config, config)) {
      graph.add_edge(*e);
      accepted.push_back(*e);
    }
  }
  return accepted;
}

// ---------------------------------------------------------------------------
// Backend

SlamBackend::SlamBackend(const PoseGraphConfig& graph, const LoopClosureConfig& loops,
                         const AlignmentConfig& alignment, ThreadMode mode, bool search_constraints)
    : graph_config_(graph),
      loop_config_(loops),
      alignment_config_(alignment),
      mode_(mode),
      search_constraints_(search_constraints) {
  if (mode_ == ThreadMode::Threaded) worker_ = std::thread([this] { run(); });
}

SlamBackend::~SlamBackend() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void SlamBackend::submit_first(KeyFramePtr kf) {
  Job job{std::move(kf), std::nullopt, Matrix6d::Identity()};
  if (mode_ == ThreadMode::Deterministic) {
    process(job);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    queue_.push_back(std::move(job));
  }
  wake_.notify_one();
}

void SlamBackend::submit(KeyFramePtr kf, const RigidTransform& relative, const Matrix6d& information) {
  Job job{std::move(kf), relative, information};
  if (mode_ == ThreadMode::Deterministic) {
    process(job);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    queue_.push_back(std::move(job));
  }
  wake_.notify_one();
}

void SlamBackend::flush() {
  if (mode_ == ThreadMode::Deterministic) return;
  std::unique_lock<std::mutex> lock(mutex_);
  idle_.wait(lock, [this] { return queue_.empty() && !busy_; });
  if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
}

PoseGraph SlamBackend::snapshot() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return graph_;
}

std::uint64_t SlamBackend::epoch() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return epoch_;
}

std::vector<KeyFramePtr> SlamBackend::keyframes() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<KeyFramePtr> out;
  out.reserve(keyframes_.size());
  for (const auto& [id, kf] : keyframes_) out.push_back(kf);
  return out;
}

std::vector<BackendTiming> SlamBackend::timings() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return timings_;
}

void SlamBackend::process(const Job& job) {
  using Clock = std::chrono::steady_clock;
  PoseGraph graph;
  std::map<KeyframeId, KeyFramePtr> keyframes;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    graph = graph_;
    keyframes = keyframes_;
  }
  if (job.relative) {
    graph.add_keyframe(job.kf->id, *job.relative, job.information);
  } else {
    graph.add_vertex(job.kf->id, job.kf->pose);
  }
  keyframes[job.kf->id] = job.kf;

  BackendTiming timing;
  timing.keyframe = job.kf->id;
  bool optimized = false;
  if (search_constraints_) {
    const auto t0 = Clock::now();
    const std::vector<Edge> found =
        find_constraints(graph, *job.kf, keyframes, alignment_config_, graph_config_, loop_config_);
    const auto t1 = Clock::now();
    timing.constraint_search_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (!found.empty()) {
      graph.optimize(graph_config_);
      optimized = true;
      timing.optimization_ms = std::chrono::duration<double, std::milli>(Clock::now() - t1).count();
    }
  }

  std::lock_guard<std::mutex> lock(mutex_);
  graph_ = std::move(graph);
  keyframes_[job.kf->id] = job.kf;
  timings_.push_back(timing);
  if (optimized) ++epoch_;
}

void SlamBackend::run() {
  for (;;) {
    Job job;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
    }
    std::exception_ptr failure;
    try {
      process(job);
    } catch (...) {
      failure = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      busy_ = false;
      if (failure && !error_) error_ = failure;
    }
    idle_.notify_all();
  }
}

}  // namespace semidirect
