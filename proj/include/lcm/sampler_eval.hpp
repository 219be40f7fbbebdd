// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/consistency.hpp"
#include "lcm/latent.hpp"
#include "lcm/solver.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

// Re-noising indices visited after the initial evaluation at N.
struct SampleSchedule {
  std::vector<int> taus;
  int steps() const { return static_cast<int>(taus.size()) + 1; }
  void validate(const NoiseSchedule& s) const;
};

// taus = round(N (steps - i) / steps) for i = 1 .. steps-1; four steps on
// N = 1000 give {750, 500, 250}.
SampleSchedule uniform_sample_schedule(int N, int steps);

// Sample i uses its own stream seeded by (seed, i), so results do not depend
// on the batch split or thread count. classes.size() samples are produced.
Mat multistep_sample(const ConsistencyModel& m, const SampleSchedule& sched, double omega,
                     std::span<const ClassId> classes, std::uint64_t seed, const LatentCodec& codec,
                     Exec exec = Exec::parallel);

Mat multistep_sample(const ConsistencyModel& m, const SampleSchedule& sched, double omega, ClassId c, int count,
                     std::uint64_t seed, const LatentCodec& codec, Exec exec = Exec::parallel);

// Initial noise of sample i exactly as multistep_sample draws it.
Vec initial_noise(const NoiseSchedule& s, Eigen::Index dim, std::uint64_t seed, std::size_t index);

// Reference sampler: `steps` uniform DDIM steps from N to 0 driven by the
// teacher. Conditional columns use the guided prediction at omega; null-class
// columns use the unconditional prediction.
Mat teacher_ddim_sample(const TeacherModel& T, int steps, double omega, std::span<const ClassId> classes,
                        std::uint64_t seed, Exec exec = Exec::parallel);

// Exact W1 between two empirical 1-D distributions (sizes may differ).
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

// Mean 1-D W1 over the given unit directions (columns of `dirs`).
double sliced_w1(const Mat& a, const Mat& b, const Mat& dirs, Exec exec = Exec::parallel);
// Mean over n_projections directions drawn uniformly on the sphere.
double sliced_w1(const Mat& a, const Mat& b, int n_projections, Rng& rng, Exec exec = Exec::parallel);

Mat random_directions(Eigen::Index dim, int count, Rng& rng);

struct ModeMetrics {
  double coverage = 0.0;
  double purity = 0.0;
};

// Coverage: fraction of components that own at least count / (2 modes) of the
// nearest samples. Purity: minus the mean distance from each sample to its
// conditioned component mean (nearest component carrying the sample's label,
// or nearest overall for unlabeled samples), in units of that component's std.
ModeMetrics mode_metrics(const Mat& samples, const MixtureSpec& mixture, std::optional<ClassId> c = std::nullopt);
ModeMetrics mode_metrics(const Mat& samples, const MixtureSpec& mixture, std::span<const ClassId> classes);

struct ProbeConfig {
  int count = 64;
  int oracle_substeps = 200;
  std::uint64_t seed = 0;
};

// Mean |f(z_n) - z*_0| over probes z_n = forward_sample(x0, n, eps) with x0
// from the teacher mixture and n uniform in [1, N]; z*_0 is the oracle
// solution of the guided flow at omega. When c is unset every probe is
// conditioned on the label of its drawn component.
double endpoint_error(const ConsistencyModel& m, const TeacherModel& T, double omega, std::optional<ClassId> c,
                      const ProbeConfig& probes, Exec exec = Exec::parallel);

// Mean |f(z_n) - f(z_n')| with z_n' the oracle solution from z_n down to
// n' uniform in [0, n].
double self_consistency_gap(const ConsistencyModel& m, const TeacherModel& T, double omega,
                            std::optional<ClassId> c, const ProbeConfig& probes, Exec exec = Exec::parallel);

struct OmegaRow {
  double omega = 0.0;
  double sliced_w1 = 0.0;
  double coverage = 0.0;
  double purity = 0.0;
  double endpoint_error = 0.0;
};

struct EvalReport {
  double sliced_w1 = 0.0;
  double mode_coverage = 0.0;
  double mean_endpoint_error = 0.0;
  std::vector<OmegaRow> per_omega;
};

struct EvalConfig {
  std::vector<double> omegas = {0.0, 2.0, 8.0};
  int steps = 4;
  int samples = 2000;
  int reference_steps = 500;
  int projections = 128;
  ProbeConfig probes;
  std::uint64_t seed = 0;
};

// Per-omega metrics of multistep samples (classes drawn from the mixture
// weights) against teacher reference samples; the summary fields average
// over omegas.
EvalReport evaluate(const ConsistencyModel& m, const TeacherModel& T, const EvalConfig& cfg,
                    const LatentCodec& codec);

}  // namespace lcm
