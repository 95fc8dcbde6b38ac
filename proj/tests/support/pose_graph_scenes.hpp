#pragma once

#include <random>
#include <vector>

#include "semidirect/pose_graph.hpp"
#include "semidirect/synth.hpp"

namespace semidirect::fixtures {

struct NoisyLoop {
  PoseGraph graph;
  std::vector<RigidTransform> truth;  ///< world -> camera, indexed like the vertices
};

/// `count` vertices on a circle, consecutive odometry edges whose translation
/// carries isotropic Gaussian noise of `sigma_t`, and one exact closing edge
/// from the last vertex back to the first. Vertex 0 sits at its true pose and
/// every other vertex is the composition of the noisy edges.
inline NoisyLoop noisy_loop(int count, double radius, double sigma_t, std::uint64_t seed) {
  const Trajectory traj = make_loop_trajectory(radius, count + 1);
  NoisyLoop out;
  for (int i = 0; i < count; ++i) out.truth.push_back(traj[static_cast<std::size_t>(i)].pose.inverse());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_t);
  Matrix6d info = Matrix6d::Zero();
  info.diagonal() << Vector3d::Constant(1.0 / (sigma_t * sigma_t)), Vector3d::Constant(1.0 / (0.005 * 0.005));

  out.graph.add_vertex(0, out.truth[0]);
  for (int i = 1; i < count; ++i) {
    RigidTransform z = out.truth[static_cast<std::size_t>(i)] * out.truth[static_cast<std::size_t>(i - 1)].inverse();
    z.translation += Vector3d(noise(rng), noise(rng), noise(rng));
    out.graph.add_keyframe(i, z, info);
  }
  Edge closure;
  closure.from = count - 1;
  closure.to = 0;
  closure.measurement = out.truth[0] * out.truth[static_cast<std::size_t>(count - 1)].inverse();
  closure.information = info;
  closure.source = EdgeSource::LoopClosure;
  out.graph.add_edge(closure);
  return out;
}

/// Root mean square camera-centre error against the truth, no alignment.
inline double centre_rmse(const PoseGraph& graph, const std::vector<RigidTransform>& truth) {
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Vector3d c = graph.vertices()[i].pose.inverse().translation;
    sum += (c - truth[i].inverse().translation).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

}  // namespace semidirect::fixtures
