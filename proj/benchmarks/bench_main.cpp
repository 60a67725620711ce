#include <benchmark/benchmark.h>

#include "mapattack/attack.hpp"
#include "mapattack/geometry.hpp"
#include "mapattack/interference.hpp"
#include "mapattack/oracle.hpp"
#include "mapattack/planner.hpp"
#include "mapattack/scene.hpp"

namespace {

using namespace mapattack;

scene::SceneFrame fork_frame() {
  scene::SceneSpec spec = scene::suite_spec(scene::RoadKind::kFork, 7, 0);
  scene::SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  return frame;
}

void BM_Resample(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  const geom::Polyline2D& poly = frame.right_boundary();
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::resample_polyline(poly, 20));
  }
}
BENCHMARK(BM_Resample);

void BM_Curvature(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  const geom::Polyline2D poly = geom::resample_polyline(frame.right_boundary(), 128);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::pointwise_curvature(poly));
  }
}
BENCHMARK(BM_Curvature);

void BM_Chamfer20(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  const geom::Polyline2D a = geom::resample_polyline(frame.right_boundary(), 20);
  const geom::Polyline2D b = geom::resample_polyline(frame.left_boundary(), 20);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom::chamfer_distance(a, b));
  }
}
BENCHMARK(BM_Chamfer20);

void BM_RenderScene(benchmark::State& state) {
  scene::SceneSpec spec = scene::suite_spec(scene::RoadKind::kFork, 7, 0);
  scene::SceneFrame frame = scene::generate_scene(spec);
  for (auto _ : state) {
    scene::render_surround_views(frame);
    benchmark::DoNotOptimize(frame.images);
  }
}
BENCHMARK(BM_RenderScene)->Unit(benchmark::kMillisecond);

void BM_RenderFlare(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  interf::FlashlightSpec spec;
  const geom::Vec3 p{4.5, 9.0, 1.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(interf::render_flare(frame.images, frame.rig, p, spec));
  }
}
BENCHMARK(BM_RenderFlare)->Unit(benchmark::kMillisecond);

void BM_SurrogatePredict(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  oracle::SurrogateParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle::surrogate_predict(frame, frame.images, params));
  }
}
BENCHMARK(BM_SurrogatePredict)->Unit(benchmark::kMillisecond);

void BM_AttackQuery(benchmark::State& state) {
  // One full black-box query: flare render plus surrogate prediction.
  scene::SceneFrame frame = fork_frame();
  oracle::SurrogateOracle oracle_inst;
  interf::FlashlightSpec spec;
  const geom::Vec3 p{4.5, 9.0, 1.0};
  for (auto _ : state) {
    const scene::ImageSet attacked = interf::render_flare(frame.images, frame.rig, p, spec);
    benchmark::DoNotOptimize(oracle_inst.predict(attacked, frame));
  }
}
BENCHMARK(BM_AttackQuery)->Unit(benchmark::kMillisecond);

void BM_HybridAStar(benchmark::State& state) {
  scene::SceneFrame frame = fork_frame();
  oracle::SurrogateOracle oracle_inst;
  const oracle::PredictedMap pred = oracle_inst.predict(frame.images, frame);
  std::vector<geom::Polyline2D> walls;
  for (const auto& e : pred.elements)
    if (e.polyline.class_tag == geom::MapClass::kBoundary) walls.push_back(e.polyline);
  plan::PlanningProblem problem;
  problem.start = {0.0, 0.0, 1.5707963267948966};
  problem.goals = plan::derive_goals(frame);
  problem.occupancy = plan::build_occupancy(walls, scene::bev_range(frame), 0.25, 0.95);
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan::plan(problem));
  }
}
BENCHMARK(BM_HybridAStar)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
