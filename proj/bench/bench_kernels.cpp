// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. The second argument of every benchmark
// selects the path: 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include <vector>

#include "lcm/distill.hpp"
#include "lcm/sampler_eval.hpp"
#include "lcm/solver.hpp"

using namespace lcm;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = make_vp_schedule(1000, 1e-4, 0.02);
  return s;
}

const MixtureSpec& ring() {
  static const MixtureSpec m = ring_mixture(8, 1.0, 0.1);
  return m;
}

const TeacherModel& teacher() {
  static const TeacherModel T = TeacherModel::analytic(ring(), sched());
  return T;
}

Exec exec_of(const benchmark::State& st) { return st.range(1) ? Exec::parallel : Exec::serial; }

Mat noise(int dim, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Mat z(dim, cols);
  for (int j = 0; j < cols; ++j) z.col(j) = rng.normal_vec(dim);
  return z;
}

std::vector<ClassId> classes(int count) {
  std::vector<ClassId> c(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) c[static_cast<std::size_t>(i)] = i % 8;
  return c;
}

ConsistencyModel model() {
  NetConfig nc;
  nc.data_dim = 2;
  nc.num_classes = 8;
  nc.kind = PredictionKind::x;
  return ConsistencyModel::create(nc, BoundarySpec{}, sched(), 7, 0.99);
}

void BM_EpsBatch(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const Mat z = noise(2, B, 1);
  const std::vector<int> n(static_cast<std::size_t>(B), 500);
  const std::vector<ClassId> c = classes(B);
  for (auto _ : st) benchmark::DoNotOptimize(teacher().eps_batch(z, n, c, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * B);
}

void BM_GuidedSolverStep(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const Mat z = noise(2, B, 2);
  const std::vector<int> from(static_cast<std::size_t>(B), 600), to(static_cast<std::size_t>(B), 580);
  const std::vector<double> w(static_cast<std::size_t>(B), 8.0);
  const std::vector<ClassId> c = classes(B);
  for (auto _ : st)
    benchmark::DoNotOptimize(cfg_solver_step_batch(teacher(), z, from, to, w, c, SolverKind::dpmpp2, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * B);
}

void BM_OracleIntegrate(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const Mat z = noise(2, B, 3);
  const std::vector<int> from(static_cast<std::size_t>(B), 900), to(static_cast<std::size_t>(B), 100);
  const std::vector<double> w(static_cast<std::size_t>(B), 4.0);
  const std::vector<ClassId> c = classes(B);
  for (auto _ : st) benchmark::DoNotOptimize(oracle_integrate_batch(teacher(), z, from, to, c, w, 200, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * B);
}

void BM_LcdLoss(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const ConsistencyModel m = model();
  Rng data_rng(4);
  const LabeledData data = sample_mixture(ring(), B, data_rng);
  TrainConfig cfg;
  cfg.batch = B;
  for (auto _ : st) {
    Rng rng(5);
    benchmark::DoNotOptimize(lcd_loss(m, teacher(), data.x, data.labels, cfg, rng, exec_of(st)));
  }
  st.SetItemsProcessed(st.iterations() * B);
}

void BM_MultistepSample(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const ConsistencyModel m = model();
  const std::vector<ClassId> c = classes(B);
  const SampleSchedule s = uniform_sample_schedule(1000, 4);
  for (auto _ : st) benchmark::DoNotOptimize(multistep_sample(m, s, 8.0, c, 6, LatentCodec::identity(2), exec_of(st)));
  st.SetItemsProcessed(st.iterations() * B);
}

void BM_SlicedW1(benchmark::State& st) {
  const int B = static_cast<int>(st.range(0));
  const Mat a = noise(2, B, 7), b = noise(2, B, 8);
  Rng rng(9);
  const Mat dirs = random_directions(2, 128, rng);
  for (auto _ : st) benchmark::DoNotOptimize(sliced_w1(a, b, dirs, exec_of(st)));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int n : {256, 4096})
    for (int par : {0, 1}) b->Args({n, par});
  b->ArgNames({"batch", "parallel"});
}

}  // namespace

BENCHMARK(BM_EpsBatch)->Apply(sizes);
BENCHMARK(BM_GuidedSolverStep)->Apply(sizes);
BENCHMARK(BM_OracleIntegrate)->Apply(sizes);
BENCHMARK(BM_LcdLoss)->Apply(sizes);
BENCHMARK(BM_MultistepSample)->Apply(sizes);
BENCHMARK(BM_SlicedW1)->Apply(sizes);

BENCHMARK_MAIN();
