// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/consistency.hpp"
#include "lcm/net.hpp"
#include "lcm/solver.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

enum class MetricKind { squared_l2, huber };

struct Metric {
  MetricKind kind = MetricKind::squared_l2;
  double delta = 1.0;  // huber threshold
};

const char* to_string(MetricKind kind);
MetricKind parse_metric_kind(const std::string& text);

// squared_l2: |a - b|^2. huber: sum over coordinates of 0.5 x^2 for |x| <= delta
// and delta (|x| - delta / 2) beyond.
double distance(const Metric& metric, const Vec& a, const Vec& b);
// Gradient of distance with respect to a.
Vec distance_grad(const Metric& metric, const Vec& a, const Vec& b);

struct TrainConfig {
  double lr = 8e-6;
  double mu = 0.999943;
  int batch = 64;
  long long iters = 1000;
  int k = 20;
  double omega_min = 2.0;
  double omega_max = 14.0;
  Metric metric;
  std::uint64_t seed = 0;
  SolverKind solver = SolverKind::ddim;
  OptimizerKind optimizer = OptimizerKind::sgd;
  int log_every = 100;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate(const NoiseSchedule& s) const;
};

struct TrainLogRow {
  long long iter = 0;
  double loss = 0.0;  // mean over iterations since the previous row
  std::optional<double> endpoint_error;
  long long wall_ms = 0;
};

// Per-element draws of one training step: n in [1, N - k], omega uniform in
// [omega_min, omega_max], one standard normal noise column.
struct PairDraw {
  std::vector<int> n;
  std::vector<double> omega;
  Mat eps;
};

PairDraw draw_pairs(const TrainConfig& cfg, int N, Eigen::Index dim, Eigen::Index count, Rng& rng);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d theta_online
};

// Distillation loss: online f at (z_{n+k}, n+k) against the target f at the
// guided teacher solver estimate of z_n. Mean over columns.
LossResult lcd_loss(const ConsistencyModel& m, const TeacherModel& T, const Mat& x0, std::span<const ClassId> c,
                    const PairDraw& draw, const TrainConfig& cfg, Exec exec = Exec::parallel);
LossResult lcd_loss(const ConsistencyModel& m, const TeacherModel& T, const Mat& x0, std::span<const ClassId> c,
                    const TrainConfig& cfg, Rng& rng, Exec exec = Exec::parallel);

// Fine-tuning loss: both branch inputs are noisings of x0 with the same noise.
LossResult lcf_loss(const ConsistencyModel& m, const Mat& x0, std::span<const ClassId> c, const PairDraw& draw,
                    const TrainConfig& cfg);
LossResult lcf_loss(const ConsistencyModel& m, const Mat& x0, std::span<const ClassId> c, const TrainConfig& cfg,
                    Rng& rng);

struct TrainHooks {
  // Evaluated at every log row when set.
  std::function<std::optional<double>(const ConsistencyModel&)> endpoint_error;
  // Called every cfg.checkpoint_every iterations and after the last one.
  std::function<void(const ConsistencyModel&, const Optimizer&)> checkpoint;
};

struct TrainResult {
  ConsistencyModel model;
  std::vector<TrainLogRow> log;
  Optimizer optimizer;
};

// Runs cfg.iters further iterations starting at m.iteration. Each iteration
// draws from its own stream seeded by (cfg.seed, iteration), so a resumed run
// matches an uninterrupted one. Pass the saved optimizer to resume Adam state.
TrainResult lcd_train(ConsistencyModel m, const TeacherModel& T, const LabeledData& data, const TrainConfig& cfg,
                      const TrainHooks& hooks = {}, std::optional<Optimizer> optimizer = std::nullopt);

TrainResult lcf_train(ConsistencyModel m, const LabeledData& data, const TrainConfig& cfg,
                      const TrainHooks& hooks = {}, std::optional<Optimizer> optimizer = std::nullopt);

}  // namespace lcm
