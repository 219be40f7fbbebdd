// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/net.hpp"
#include "lcm/schedule.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

// c_skip(t) = sd^2 / ((t/ts)^2 + sd^2), c_out(t) = (t/ts) / sqrt((t/ts)^2 + sd^2).
// Both are exactly (1, 0) at t = 0.
struct BoundarySpec {
  double sigma_data = 0.5;
  double t_scale = 0.01;
};

std::pair<double, double> boundary_coeffs(const BoundarySpec& b, double t);
std::pair<double, double> boundary_coeffs(const BoundarySpec& b, const NoiseSchedule& s, int n);

// Clean-data estimate implied by a raw network output under each
// parameterisation: epsilon -> (z - sigma out) / alpha, x -> out,
// v -> alpha z - sigma out.
Vec data_estimate(PredictionKind kind, const Vec& z, const Vec& net_out, double alpha, double sigma);

// d(data_estimate)/d(net_out); the estimate is affine in the network output.
double data_estimate_slope(PredictionKind kind, double alpha, double sigma);

// f_theta(z, omega, c, t) wrapped around an omega-conditioned network with
// online/target parameters.
struct ConsistencyModel {
  DenoiserNet net;
  EmaPair ema;
  BoundarySpec boundary;
  NoiseSchedule schedule;
  long long iteration = 0;

  PredictionKind prediction_kind() const { return net.config().kind; }

  // Random online parameters (omega projection zero), target = online.
  static ConsistencyModel create(NetConfig cfg, BoundarySpec boundary, NoiseSchedule schedule,
                                 std::uint64_t seed, double mu = 0.999943);
};

struct ConsistencyBatch {
  Mat z;
  std::vector<int> n;
  std::vector<double> omega;
  std::vector<ClassId> cls;  // may be empty for class-free models
  Eigen::Index size() const { return z.cols(); }
};

Mat consistency_apply_batch(const ConsistencyModel& m, const ConsistencyBatch& batch, bool use_target);

Vec consistency_apply(const ConsistencyModel& m, const Vec& z, double omega, ClassId c, int n, bool use_target);

// Online-parameter evaluation that keeps what the backward pass needs.
struct ConsistencyForward {
  Mat out;
  ForwardCache cache;
  std::vector<double> out_slope;  // d f / d(net output), per column
};

ConsistencyForward consistency_forward(const ConsistencyModel& m, const ConsistencyBatch& batch);

// dL/d(theta_online) from dL/d(f output).
std::vector<double> consistency_backward(const ConsistencyModel& m, const ConsistencyForward& fwd,
                                         const Mat& grad_out);

// Copies a learned epsilon teacher into the model: every shared block is
// copied, the omega projection is zeroed, and the target is reset to online.
ConsistencyModel init_from_teacher(ConsistencyModel m, const TeacherModel& T);

}  // namespace lcm
