// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/schedule.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

enum class SolverKind { ddim, dpm2, dpmpp2, oracle_rk4 };

const char* to_string(SolverKind kind);
SolverKind parse_solver_kind(const std::string& text);

// Batched noise-prediction callback: one prediction per column of z, at grid
// index n[b] under condition c[b].
using EpsBatchFn = std::function<Mat(const Mat& z, std::span<const int> n, std::span<const ClassId> c)>;
// Single-sample callback used by the per-vector step functions.
using EpsFn = std::function<Vec(const Vec& z, int n)>;

EpsBatchFn teacher_callback(const TeacherModel& T, Exec exec = Exec::parallel);

// One invocation record of a solver step.
struct SolverStep {
  Vec z_from;
  int n_from = 0;
  int n_to = 0;
  ClassId condition = kNullClass;
  Vec increment;
};

// Midpoint index used by the second-order solvers: round(n_from - k/2) with
// ties toward n_to.
int solver_midpoint(int n_from, int n_to);

// Solver increments (z_to_estimate - z_from) for every column. Columns with
// n_to == n_from get a zero increment without querying the callback.
Mat solver_increment_batch(SolverKind kind, const NoiseSchedule& s, const EpsBatchFn& eps, const Mat& z,
                           std::span<const int> n_from, std::span<const int> n_to, std::span<const ClassId> c);

Vec ddim_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to);
Vec dpm2_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to);
Vec dpmpp2_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to);

Vec ddim_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c = kNullClass);
Vec dpm2_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c = kNullClass);
Vec dpmpp2_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c = kNullClass);

SolverStep solver_step(SolverKind kind, const TeacherModel& T, const Vec& z, int n_from, int n_to,
                       ClassId c = kNullClass);

// Guided estimate z + (1 + omega) Psi(z, c) - omega Psi(z, null).
Vec cfg_solver_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, double omega, ClassId c,
                    SolverKind kind);

// Batched guided estimate; one (n_from, n_to, omega, c) per column. The
// conditional and unconditional branches are evaluated as one stacked batch.
Mat cfg_solver_step_batch(const TeacherModel& T, const Mat& z, std::span<const int> n_from,
                          std::span<const int> n_to, std::span<const double> omega, std::span<const ClassId> c,
                          SolverKind kind, Exec exec = Exec::parallel);

// Reference solution of the (optionally guided) PF-ODE with an analytic
// teacher: classical RK4 with `substeps` uniform steps in log-SNR. When
// n_to = 0 the final leg to sigma = 0 is integrated in sigma/alpha instead.
Vec oracle_integrate(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c,
                     std::optional<double> omega, int substeps);

// Column-parallel version; the serial path is the reference.
Mat oracle_integrate_batch(const TeacherModel& T, const Mat& z, std::span<const int> n_from,
                           std::span<const int> n_to, std::span<const ClassId> c,
                           std::span<const double> omega, int substeps, Exec exec = Exec::parallel);

// Convergence study: integrate probes from n_hi to n_lo with each step count
// and compare against the oracle.
struct SolverBenchRow {
  SolverKind solver = SolverKind::ddim;
  int k = 0;                // grid indices per step
  double step_size = 0.0;   // k / N
  double endpoint_error = 0.0;
  double fitted_order = 0.0;  // shared by all rows of one solver
};

struct SolverBenchConfig {
  int n_hi = 880;
  int n_lo = 80;
  std::vector<int> step_counts = {5, 10, 20, 40, 80};
  int probes = 32;
  int oracle_substeps = 10000;
  std::uint64_t seed = 0;
  std::vector<SolverKind> solvers = {SolverKind::ddim, SolverKind::dpm2, SolverKind::dpmpp2};
};

std::vector<SolverBenchRow> solver_order_study(const TeacherModel& T, const SolverBenchConfig& cfg);

// Least-squares slope of log(y) against log(x).
double fitted_loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace lcm
