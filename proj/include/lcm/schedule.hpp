// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "lcm/common.hpp"

namespace lcm {

// Discrete variance-preserving schedule on t_n = n / N, n = 0..N.
// Index 0 is the clean-data boundary (alpha = 1, sigma = 0).
struct NoiseSchedule {
  int N = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> alpha_bar;  // size N + 1, alpha_bar[0] = 1
  std::vector<double> t_values;   // size N + 1

  double alpha(int n) const;
  double sigma(int n) const;
  double t(int n) const { return t_values.at(static_cast<std::size_t>(n)); }
  double beta(int n) const;  // per-step variance, 1 <= n <= N
};

NoiseSchedule make_vp_schedule(int N, double beta_min, double beta_max);

std::pair<double, double> alpha_sigma(const NoiseSchedule& s, int n);

struct DriftDiffusion {
  double f = 0.0;   // d log(alpha) / dt
  double g2 = 0.0;  // d sigma^2 / dt - 2 f sigma^2
};

// Central differences on the grid; needs 1 <= n <= N - 1.
DriftDiffusion drift_diffusion(const NoiseSchedule& s, int n);

// log(alpha / sigma); undefined at n = 0.
double log_snr(const NoiseSchedule& s, int n);

Vec forward_sample(const Vec& z0, int n, const Vec& eps, const NoiseSchedule& s);

// Start indices n with 1 <= n and n + k <= N.
struct TimeGrid {
  std::vector<int> indices;
  int k = 1;
  int n_max = 0;
};

TimeGrid make_time_grid(const NoiseSchedule& s, int k);

}  // namespace lcm
