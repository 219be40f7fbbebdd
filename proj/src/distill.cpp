// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/distill.hpp"

#include <chrono>
#include <cmath>

namespace lcm {

const char* to_string(MetricKind kind) { return kind == MetricKind::squared_l2 ? "squared_l2" : "huber"; }

MetricKind parse_metric_kind(const std::string& text) {
  if (text == "squared_l2" || text == "l2") return MetricKind::squared_l2;
  if (text == "huber") return MetricKind::huber;
  fail(Errc::config_type, "unknown metric '" + text + "'");
}

double distance(const Metric& metric, const Vec& a, const Vec& b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "distance operands differ in size");
  const Vec d = a - b;
  if (metric.kind == MetricKind::squared_l2) return d.squaredNorm();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x = std::abs(d[i]);
    sum += x <= metric.delta ? 0.5 * x * x : metric.delta * (x - 0.5 * metric.delta);
  }
  return sum;
}

Vec distance_grad(const Metric& metric, const Vec& a, const Vec& b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "distance operands differ in size");
  const Vec d = a - b;
  if (metric.kind == MetricKind::squared_l2) return 2.0 * d;
  Vec g(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i)
    g[i] = std::abs(d[i]) <= metric.delta ? d[i] : (d[i] > 0 ? metric.delta : -metric.delta);
  return g;
}

void TrainConfig::validate(const NoiseSchedule& s) const {
  require(lr > 0.0, Errc::invalid_range, "lr must be positive");
  require(mu >= 0.0 && mu <= 1.0, Errc::invalid_range, "mu must be in [0, 1]");
  require(batch > 0, Errc::invalid_range, "batch must be positive");
  require(iters >= 0, Errc::invalid_range, "iters must be non-negative");
  require(k >= 1 && k <= s.N - 1, Errc::invalid_k, "skipping interval must be in [1, N-1]");
  require(omega_min <= omega_max, Errc::invalid_range, "omega_min exceeds omega_max");
  require(metric.kind != MetricKind::huber || metric.delta > 0.0, Errc::invalid_range, "huber delta must be positive");
  require(log_every > 0, Errc::invalid_range, "log_every must be positive");
  require(checkpoint_every >= 0, Errc::invalid_range, "checkpoint_every must be non-negative");
}

PairDraw draw_pairs(const TrainConfig& cfg, int N, Eigen::Index dim, Eigen::Index count, Rng& rng) {
  PairDraw d;
  d.n.resize(static_cast<std::size_t>(count));
  d.omega.resize(static_cast<std::size_t>(count));
  d.eps.resize(dim, count);
  for (Eigen::Index b = 0; b < count; ++b) {
    const auto i = static_cast<std::size_t>(b);
    d.n[i] = rng.uniform_int(1, N - cfg.k);
    d.omega[i] = cfg.omega_min == cfg.omega_max ? cfg.omega_min : rng.uniform(cfg.omega_min, cfg.omega_max);
    d.eps.col(b) = rng.normal_vec(dim);
  }
  return d;
}

namespace {

void check_batch(const ConsistencyModel& m, const Mat& x0, std::span<const ClassId> c, const PairDraw& draw) {
  const auto B = static_cast<std::size_t>(x0.cols());
  require(c.size() == B && draw.n.size() == B && draw.omega.size() == B, Errc::dimension_mismatch,
          "batch components differ in length");
  require(draw.eps.rows() == x0.rows() && draw.eps.cols() == x0.cols(), Errc::dimension_mismatch,
          "noise draw does not match the batch");
  require(x0.rows() == m.net.config().data_dim, Errc::dimension_mismatch, "batch dimension differs from the model");
}

Mat noised(const NoiseSchedule& s, const Mat& x0, std::span<const int> n, const Mat& eps) {
  Mat z(x0.rows(), x0.cols());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) {
    const int nb = n[static_cast<std::size_t>(b)];
    z.col(b) = s.alpha(nb) * x0.col(b) + s.sigma(nb) * eps.col(b);
  }
  return z;
}

// Mean distance between the online output at (z_hi, n_hi) and the
// stop-gradient target output at (z_lo, n_lo), with its parameter gradient.
LossResult consistency_pair_loss(const ConsistencyModel& m, const Mat& z_hi, const std::vector<int>& n_hi,
                                 const Mat& z_lo, const std::vector<int>& n_lo, const std::vector<double>& omega,
                                 std::span<const ClassId> c, const Metric& metric) {
  const std::vector<ClassId> cls(c.begin(), c.end());
  const ConsistencyForward fwd = consistency_forward(m, {z_hi, n_hi, omega, cls});
  const Mat target = consistency_apply_batch(m, {z_lo, n_lo, omega, cls}, true);
  const auto B = static_cast<double>(z_hi.cols());
  LossResult r;
  Mat g(z_hi.rows(), z_hi.cols());
  for (Eigen::Index b = 0; b < z_hi.cols(); ++b) {
    r.loss += distance(metric, fwd.out.col(b), target.col(b)) / B;
    g.col(b) = distance_grad(metric, fwd.out.col(b), target.col(b)) / B;
  }
  r.grad = consistency_backward(m, fwd, g);
  return r;
}

}  // namespace

LossResult lcd_loss(const ConsistencyModel& m, const TeacherModel& T, const Mat& x0, std::span<const ClassId> c,
                    const PairDraw& draw, const TrainConfig& cfg, Exec exec) {
  check_batch(m, x0, c, draw);
  const NoiseSchedule& s = m.schedule;
  require(T.schedule().N == s.N, Errc::shape_mismatch, "teacher and model schedules differ");
  std::vector<int> n_hi(draw.n.size());
  for (std::size_t i = 0; i < draw.n.size(); ++i) {
    require(draw.n[i] >= 1 && draw.n[i] + cfg.k <= s.N, Errc::index_out_of_range, "pair index outside [1, N-k]");
    n_hi[i] = draw.n[i] + cfg.k;
  }
  const Mat z_hi = noised(s, x0, n_hi, draw.eps);
  const Mat z_lo = cfg_solver_step_batch(T, z_hi, n_hi, draw.n, draw.omega, c, cfg.solver, exec);
  return consistency_pair_loss(m, z_hi, n_hi, z_lo, draw.n, draw.omega, c, cfg.metric);
}

LossResult lcd_loss(const ConsistencyModel& m, const TeacherModel& T, const Mat& x0, std::span<const ClassId> c,
                    const TrainConfig& cfg, Rng& rng, Exec exec) {
  const PairDraw draw = draw_pairs(cfg, m.schedule.N, x0.rows(), x0.cols(), rng);
  return lcd_loss(m, T, x0, c, draw, cfg, exec);
}

LossResult lcf_loss(const ConsistencyModel& m, const Mat& x0, std::span<const ClassId> c, const PairDraw& draw,
                    const TrainConfig& cfg) {
  check_batch(m, x0, c, draw);
  const NoiseSchedule& s = m.schedule;
  std::vector<int> n_hi(draw.n.size());
  for (std::size_t i = 0; i < draw.n.size(); ++i) {
    require(draw.n[i] >= 0 && draw.n[i] + cfg.k <= s.N, Errc::index_out_of_range, "pair index outside [0, N-k]");
    n_hi[i] = draw.n[i] + cfg.k;
  }
  const Mat z_hi = noised(s, x0, n_hi, draw.eps);
  const Mat z_lo = noised(s, x0, draw.n, draw.eps);
  return consistency_pair_loss(m, z_hi, n_hi, z_lo, draw.n, draw.omega, c, cfg.metric);
}

LossResult lcf_loss(const ConsistencyModel& m, const Mat& x0, std::span<const ClassId> c, const TrainConfig& cfg,
                    Rng& rng) {
  const PairDraw draw = draw_pairs(cfg, m.schedule.N, x0.rows(), x0.cols(), rng);
  return lcf_loss(m, x0, c, draw, cfg);
}

namespace {

template <class LossFn>
TrainResult train_loop(ConsistencyModel m, const LabeledData& data, const TrainConfig& cfg, const TrainHooks& hooks,
                       std::optional<Optimizer> optimizer, LossFn&& loss_fn) {
  cfg.validate(m.schedule);
  require(data.size() > 0, Errc::empty_set, "training set is empty");
  require(data.x.rows() == m.net.config().data_dim, Errc::dimension_mismatch, "data dimension differs from model");
  Optimizer opt = optimizer ? *optimizer : Optimizer(cfg.optimizer, cfg.lr);
  std::vector<TrainLogRow> log;
  const auto start = std::chrono::steady_clock::now();
  const long long first = m.iteration;
  const long long last = m.iteration + cfg.iters;
  double window = 0.0;
  long long window_count = 0;
  Mat x0(data.x.rows(), cfg.batch);
  std::vector<ClassId> cls(static_cast<std::size_t>(cfg.batch));
  for (long long it = first; it < last; ++it) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    for (int b = 0; b < cfg.batch; ++b) {
      const int j = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
      x0.col(b) = data.x.col(j);
      cls[static_cast<std::size_t>(b)] = data.labels[static_cast<std::size_t>(j)];
    }
    const LossResult r = loss_fn(m, x0, cls, rng);
    if (!std::isfinite(r.loss) || r.loss > 1e6)
      fail(Errc::divergence, "loss " + std::to_string(r.loss) + " at iteration " + std::to_string(it + 1));
    opt.step(m.ema.theta_online, r.grad);
    ema_update(m.ema, cfg.mu);
    m.iteration = it + 1;
    window += r.loss;
    ++window_count;
    if (m.iteration % cfg.log_every == 0 || m.iteration == last) {
      TrainLogRow row;
      row.iter = m.iteration;
      row.loss = window / static_cast<double>(window_count);
      if (hooks.endpoint_error) row.endpoint_error = hooks.endpoint_error(m);
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                        .count();
      log.push_back(row);
      window = 0.0;
      window_count = 0;
    }
    if (hooks.checkpoint && ((cfg.checkpoint_every > 0 && m.iteration % cfg.checkpoint_every == 0) ||
                             m.iteration == last)) {
      hooks.checkpoint(m, opt);
    }
  }
  return {std::move(m), std::move(log), std::move(opt)};
}

}  // namespace

TrainResult lcd_train(ConsistencyModel m, const TeacherModel& T, const LabeledData& data, const TrainConfig& cfg,
                      const TrainHooks& hooks, std::optional<Optimizer> optimizer) {
  return train_loop(std::move(m), data, cfg, hooks, std::move(optimizer),
                    [&](const ConsistencyModel& cur, const Mat& x0, const std::vector<ClassId>& c, Rng& rng) {
                      return lcd_loss(cur, T, x0, c, cfg, rng);
                    });
}

TrainResult lcf_train(ConsistencyModel m, const LabeledData& data, const TrainConfig& cfg, const TrainHooks& hooks,
                      std::optional<Optimizer> optimizer) {
  return train_loop(std::move(m), data, cfg, hooks, std::move(optimizer),
                    [&](const ConsistencyModel& cur, const Mat& x0, const std::vector<ClassId>& c, Rng& rng) {
                      return lcf_loss(cur, x0, c, cfg, rng);
                    });
}

}  // namespace lcm
