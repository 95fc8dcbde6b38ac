#include <benchmark/benchmark.h>

#include "pose_graph_scenes.hpp"
#include "semidirect/direct_alignment.hpp"
#include "semidirect/features.hpp"
#include "semidirect/stereo_depth.hpp"
#include "test_scenes.hpp"

using namespace semidirect;

namespace {

const StereoRig& rig_of(int width) {
  static const StereoRig small = fixtures::make_rig(320, 240, 250.0, 0.4);
  static const StereoRig kitti = fixtures::make_rig(1240, 376, 718.0, 0.54);
  return width == 320 ? small : kitti;
}

SyntheticScene room(int width) {
  return fixtures::box_room(rig_of(width),
                            make_constant_velocity_trajectory(Twist({0.0, 0.0, 0.1}, {0.0, 0.01, 0.0}), 2));
}

void BM_BlockMatch(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const RenderedFrame r = render(room(width), 0);
  for (auto _ : state) benchmark::DoNotOptimize(block_match(r.frame.left, r.frame.right, r.frame.rig));
}
BENCHMARK(BM_BlockMatch)->Arg(320)->Arg(1240)->Unit(benchmark::kMillisecond);

void BM_DetectStereo(benchmark::State& state) {
  const RenderedFrame r = render(room(static_cast<int>(state.range(0))), 0);
  for (auto _ : state) benchmark::DoNotOptimize(detect_stereo(r.frame));
}
BENCHMARK(BM_DetectStereo)->Arg(320)->Arg(1240)->Unit(benchmark::kMillisecond);

void BM_FeatureMotion(benchmark::State& state) {
  const SyntheticScene scene = room(static_cast<int>(state.range(0)));
  const StereoFrame a = render(scene, 0).frame;
  const StereoFrame b = render(scene, 1).frame;
  const FeatureConfig config;
  const StereoKeypoints ka = detect_stereo(a, config), kb = detect_stereo(b, config);
  for (auto _ : state) {
    std::vector<QuadMatch> matches = match_circular(ka, kb, config);
    refine_matches(a, b, matches, config);
    benchmark::DoNotOptimize(estimate_motion(matches, a.rig, config, 42));
  }
}
BENCHMARK(BM_FeatureMotion)->Arg(320)->Arg(1240)->Unit(benchmark::kMillisecond);

void BM_Align(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const SyntheticScene scene = room(width);
  const RenderedFrame r = render(scene, 1);
  const KeyFramePtr kf = fixtures::keyframe_from_render(scene, 0, default_pyramid_levels(width, r.frame.left.height()));
  const DepthMap stereo = block_match(r.frame.left, r.frame.right, r.frame.rig);
  const Twist init = log_map(fixtures::true_motion(scene, 0, 1));
  for (auto _ : state) benchmark::DoNotOptimize(align(*kf, r.frame, stereo, init));
}
BENCHMARK(BM_Align)->Arg(320)->Arg(1240)->Unit(benchmark::kMillisecond);

void BM_PoseGraphOptimize(benchmark::State& state) {
  const fixtures::NoisyLoop loop = fixtures::noisy_loop(static_cast<int>(state.range(0)), 5.0, 0.05, 1);
  for (auto _ : state) {
    PoseGraph graph = loop.graph;
    benchmark::DoNotOptimize(graph.optimize());
  }
}
BENCHMARK(BM_PoseGraphOptimize)->Arg(20)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_ExpLog(benchmark::State& state) {
  const Twist xi({0.3, -0.2, 0.5}, {0.4, 0.1, -0.7});
  for (auto _ : state) benchmark::DoNotOptimize(log_map(exp_map(xi)));
}
BENCHMARK(BM_ExpLog);

}  // namespace

BENCHMARK_MAIN();
