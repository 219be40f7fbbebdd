// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/consistency.hpp"

#include <algorithm>
#include <cmath>

namespace lcm {

std::pair<double, double> boundary_coeffs(const BoundarySpec& b, double t) {
  require(b.sigma_data > 0.0 && b.t_scale > 0.0, Errc::invalid_range, "boundary scales must be positive");
  const double u = t / b.t_scale;
  const double sd2 = b.sigma_data * b.sigma_data;
  const double c_skip = sd2 / (u * u + sd2);
  const double c_out = u / std::sqrt(u * u + sd2);
  return {c_skip, c_out};
}

std::pair<double, double> boundary_coeffs(const BoundarySpec& b, const NoiseSchedule& s, int n) {
  require(n >= 0 && n <= s.N, Errc::index_out_of_range, "boundary index outside schedule");
  return boundary_coeffs(b, s.t(n));
}

Vec data_estimate(PredictionKind kind, const Vec& z, const Vec& net_out, double alpha, double sigma) {
  require(z.size() == net_out.size(), Errc::dimension_mismatch, "z and prediction differ in size");
  switch (kind) {
    case PredictionKind::epsilon:
      require(alpha > 0.0, Errc::invalid_range, "epsilon parameterisation divides by alpha = 0");
      return (z - sigma * net_out) / alpha;
    case PredictionKind::x: return net_out;
    case PredictionKind::v: return alpha * z - sigma * net_out;
  }
  return net_out;
}

double data_estimate_slope(PredictionKind kind, double alpha, double sigma) {
  switch (kind) {
    case PredictionKind::epsilon: return -sigma / alpha;
    case PredictionKind::x: return 1.0;
    case PredictionKind::v: return -sigma;
  }
  return 1.0;
}

ConsistencyModel ConsistencyModel::create(NetConfig cfg, BoundarySpec boundary, NoiseSchedule schedule,
                                          std::uint64_t seed, double mu) {
  cfg.omega_conditioned = true;
  ConsistencyModel m;
  m.net = DenoiserNet(cfg);
  m.ema.theta_online = m.net.init_params(seed);
  m.ema.theta_target = m.ema.theta_online;
  m.ema.mu = mu;
  m.boundary = boundary;
  m.schedule = std::move(schedule);
  return m;
}

namespace {

NetBatch to_net_batch(const ConsistencyModel& m, const ConsistencyBatch& batch) {
  const Eigen::Index B = batch.size();
  require(static_cast<Eigen::Index>(batch.n.size()) == B, Errc::dimension_mismatch, "index batch size");
  require(static_cast<Eigen::Index>(batch.omega.size()) == B, Errc::missing_omega, "omega batch size");
  NetBatch in;
  in.z = batch.z;
  in.t.resize(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const int n = batch.n[static_cast<std::size_t>(b)];
    require(n >= 0 && n <= m.schedule.N, Errc::index_out_of_range, "consistency index outside schedule");
    in.t[static_cast<std::size_t>(b)] = m.schedule.t(n);
  }
  in.omega = batch.omega;
  if (m.net.config().num_classes > 0) in.cls = batch.cls;
  return in;
}

// f = c_skip z + c_out * data_estimate(net_out); returns per-column slope too.
Mat wrap_output(const ConsistencyModel& m, const ConsistencyBatch& batch, const Mat& net_out,
                std::vector<double>* slope) {
  const Eigen::Index B = batch.size();
  Mat out(batch.z.rows(), B);
  if (slope) slope->resize(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const int n = batch.n[static_cast<std::size_t>(b)];
    const auto [c_skip, c_out] = boundary_coeffs(m.boundary, m.schedule, n);
    const double a = m.schedule.alpha(n), sg = m.schedule.sigma(n);
    if (n == 0) {
      // Exact boundary identity, whatever the network says.
      out.col(b) = batch.z.col(b);
    } else {
      out.col(b) = c_skip * batch.z.col(b) +
                   c_out * data_estimate(m.prediction_kind(), batch.z.col(b), net_out.col(b), a, sg);
    }
    if (slope) {
      (*slope)[static_cast<std::size_t>(b)] =
          n == 0 ? 0.0 : c_out * data_estimate_slope(m.prediction_kind(), a, sg);
    }
  }
  return out;
}

}  // namespace

Mat consistency_apply_batch(const ConsistencyModel& m, const ConsistencyBatch& batch, bool use_target) {
  const auto& theta = use_target ? m.ema.theta_target : m.ema.theta_online;
  const Mat net_out = m.net.forward(theta, to_net_batch(m, batch), nullptr);
  return wrap_output(m, batch, net_out, nullptr);
}

Vec consistency_apply(const ConsistencyModel& m, const Vec& z, double omega, ClassId c, int n, bool use_target) {
  ConsistencyBatch batch;
  batch.z = z;
  batch.n = {n};
  batch.omega = {omega};
  batch.cls = {c};
  return consistency_apply_batch(m, batch, use_target).col(0);
}

ConsistencyForward consistency_forward(const ConsistencyModel& m, const ConsistencyBatch& batch) {
  ConsistencyForward fwd;
  const Mat net_out = m.net.forward(m.ema.theta_online, to_net_batch(m, batch), &fwd.cache);
  fwd.out = wrap_output(m, batch, net_out, &fwd.out_slope);
  return fwd;
}

std::vector<double> consistency_backward(const ConsistencyModel& m, const ConsistencyForward& fwd,
                                         const Mat& grad_out) {
  require(grad_out.cols() == fwd.out.cols() && grad_out.rows() == fwd.out.rows(), Errc::stale_cache,
          "upstream gradient does not match the forward batch");
  Mat g = grad_out;
  for (Eigen::Index b = 0; b < g.cols(); ++b) g.col(b) *= fwd.out_slope[static_cast<std::size_t>(b)];
  return m.net.backward(m.ema.theta_online, g, fwd.cache);
}

ConsistencyModel init_from_teacher(ConsistencyModel m, const TeacherModel& T) {
  require(T.kind() == TeacherModel::Kind::learned, Errc::invalid_range, "initialisation needs a learned teacher");
  const DenoiserNet& tnet = T.net()->net;
  NetConfig expect = m.net.config();
  expect.omega_conditioned = false;
  require(tnet.config() == expect, Errc::shape_mismatch, "teacher and consistency architectures differ");
  std::vector<double> theta(m.net.param_count(), 0.0);
  for (const auto& blk : m.net.blocks()) {
    const ParamBlock* src = tnet.find_block(blk.name);
    if (!src) continue;  // the omega projection stays zero
    require(src->size() == blk.size(), Errc::shape_mismatch, "block " + blk.name + " differs in size");
    std::copy_n(T.net()->theta.begin() + static_cast<std::ptrdiff_t>(src->offset), src->size(),
                theta.begin() + static_cast<std::ptrdiff_t>(blk.offset));
  }
  m.ema.theta_online = theta;
  m.ema.theta_target = std::move(theta);
  return m;
}

}  // namespace lcm
