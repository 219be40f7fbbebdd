// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/schedule.hpp"

#include <cmath>
#include <string>

namespace lcm {

namespace {

void check_index(const NoiseSchedule& s, int n, int lo, int hi) {
  if (n < lo || n > hi) {
    fail(Errc::index_out_of_range, "index " + std::to_string(n) + " outside [" +
                                       std::to_string(lo) + ", " + std::to_string(hi) +
                                       "] for N=" + std::to_string(s.N));
  }
}

}  // namespace

double NoiseSchedule::beta(int n) const {
  check_index(*this, n, 1, N);
  return beta_min + (beta_max - beta_min) * static_cast<double>(n - 1) / static_cast<double>(N - 1);
}

double NoiseSchedule::alpha(int n) const {
  check_index(*this, n, 0, N);
  return std::sqrt(alpha_bar[static_cast<std::size_t>(n)]);
}

double NoiseSchedule::sigma(int n) const {
  check_index(*this, n, 0, N);
  return std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(n)]);
}

NoiseSchedule make_vp_schedule(int N, double beta_min, double beta_max) {
  require(N >= 2, Errc::invalid_range, "N must be >= 2");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, Errc::invalid_range,
          "need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.N = N;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.alpha_bar.resize(static_cast<std::size_t>(N) + 1);
  s.t_values.resize(static_cast<std::size_t>(N) + 1);
  s.alpha_bar[0] = 1.0;
  s.t_values[0] = 0.0;
  for (int n = 1; n <= N; ++n) {
    s.alpha_bar[static_cast<std::size_t>(n)] = s.alpha_bar[static_cast<std::size_t>(n - 1)] * (1.0 - s.beta(n));
    s.t_values[static_cast<std::size_t>(n)] = static_cast<double>(n) / static_cast<double>(N);
  }
  return s;
}

std::pair<double, double> alpha_sigma(const NoiseSchedule& s, int n) {
  return {s.alpha(n), s.sigma(n)};
}

DriftDiffusion drift_diffusion(const NoiseSchedule& s, int n) {
  check_index(s, n, 1, s.N - 1);
  const double dt = s.t(n + 1) - s.t(n - 1);
  const double f = (std::log(s.alpha(n + 1)) - std::log(s.alpha(n - 1))) / dt;
  const double sig2_next = 1.0 - s.alpha_bar[static_cast<std::size_t>(n + 1)];
  const double sig2_prev = 1.0 - s.alpha_bar[static_cast<std::size_t>(n - 1)];
  const double sig2 = 1.0 - s.alpha_bar[static_cast<std::size_t>(n)];
  const double dsig2 = (sig2_next - sig2_prev) / dt;
  return {f, dsig2 - 2.0 * f * sig2};
}

double log_snr(const NoiseSchedule& s, int n) {
  if (n == 0) fail(Errc::invalid_range, "log-SNR is infinite at n=0 (sigma=0)");
  check_index(s, n, 1, s.N);
  // 0.5 * log(abar / (1 - abar)), written to keep precision when abar ~ 1.
  const double abar = s.alpha_bar[static_cast<std::size_t>(n)];
  return 0.5 * (std::log(abar) - std::log1p(-abar));
}

Vec forward_sample(const Vec& z0, int n, const Vec& eps, const NoiseSchedule& s) {
  require(z0.size() == eps.size(), Errc::dimension_mismatch, "z0 and eps differ in size");
  const auto [a, sg] = alpha_sigma(s, n);
  return a * z0 + sg * eps;
}

TimeGrid make_time_grid(const NoiseSchedule& s, int k) {
  require(k >= 1 && k <= s.N - 1, Errc::invalid_k,
          "skipping interval k=" + std::to_string(k) + " must be in [1, N-1]");
  TimeGrid g;
  g.k = k;
  g.n_max = s.N - k;
  g.indices.reserve(static_cast<std::size_t>(g.n_max));
  for (int n = 1; n <= g.n_max; ++n) g.indices.push_back(n);
  return g;
}

}  // namespace lcm
