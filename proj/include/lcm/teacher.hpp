// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/net.hpp"
#include "lcm/schedule.hpp"

namespace lcm {

// Isotropic Gaussian mixture with one class label per component. The
// conditional distribution for label c is the renormalised sub-mixture of the
// components carrying that label; the null condition is the full mixture.
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<double> variances;
  std::vector<ClassId> labels;

  std::size_t size() const { return weights.size(); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  int num_classes() const;
  void validate() const;

  // Overall per-coordinate standard deviation, sqrt(trace(Cov) / dim).
  double data_std() const;
};

MixtureSpec standard_normal_mixture(int dim);
// `modes` components evenly spaced on a circle, each its own class.
MixtureSpec ring_mixture(int modes, double radius, double stddev, const Vec& shift = Vec::Zero(2));
MixtureSpec two_component_mixture();

// Draws `count` samples; returns (dim x count, labels).
struct LabeledData {
  Mat x;
  std::vector<ClassId> labels;
  Eigen::Index size() const { return x.cols(); }
};
LabeledData sample_mixture(const MixtureSpec& m, Eigen::Index count, Rng& rng);

// Exact score of the perturbed marginal sum_i w_i N(alpha m_i, alpha^2 s_i^2 + sigma^2).
Vec gmm_score_at(const MixtureSpec& m, const Vec& z, double alpha, double sigma, ClassId c);
Vec gmm_score(const MixtureSpec& m, const Vec& z, int n, const NoiseSchedule& s, ClassId c = kNullClass);

// Log density of the perturbed marginal (test oracles use it).
double gmm_log_density_at(const MixtureSpec& m, const Vec& z, double alpha, double sigma, ClassId c);

class TeacherModel {
 public:
  enum class Kind { analytic, learned };

  static TeacherModel analytic(MixtureSpec mixture, NoiseSchedule schedule);
  static TeacherModel learned(Denoiser net, NoiseSchedule schedule);

  Kind kind() const { return kind_; }
  bool is_analytic() const { return kind_ == Kind::analytic; }
  const MixtureSpec* mixture() const { return mixture_ ? &*mixture_ : nullptr; }
  const Denoiser* net() const { return net_ ? &*net_ : nullptr; }
  const NoiseSchedule& schedule() const { return schedule_; }
  bool supports_condition(ClassId c) const;

  // Noise prediction at grid index n >= 1.
  Vec eps(const Vec& z, int n, ClassId c = kNullClass) const;
  // Analytic teachers can be evaluated at any (alpha, sigma) on the VP curve.
  Vec eps_at_level(const Vec& z, double alpha, double sigma, ClassId c = kNullClass) const;
  // One prediction per column; n and c hold one entry per column.
  Mat eps_batch(const Mat& z, std::span<const int> n, std::span<const ClassId> c,
                Exec exec = Exec::parallel) const;

  // Number of single-sample predictions served so far.
  std::uint64_t calls() const { return calls_->load(); }

 private:
  TeacherModel() = default;
  void check_condition(ClassId c) const;

  Kind kind_ = Kind::analytic;
  std::optional<MixtureSpec> mixture_;
  std::optional<Denoiser> net_;
  NoiseSchedule schedule_;
  std::shared_ptr<std::atomic<std::uint64_t>> calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

Vec teacher_eps(const TeacherModel& T, const Vec& z, int n, ClassId c = kNullClass);

// (1 + omega) eps(z, c) - omega eps(z, null).
Vec cfg_eps(const TeacherModel& T, const Vec& z, double omega, ClassId c, int n);

struct TeacherTrainConfig {
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  int batch = 64;
  int iters = 1000;
  std::uint64_t seed = 0;
  // Probability of replacing a label by the null condition, so one network
  // serves both guidance branches.
  double cond_drop = 0.1;
};

struct TeacherTrainResult {
  Denoiser net;
  std::vector<double> loss_history;
};

// Plain denoising score matching: minimise E || eps_theta(x_t, t) - eps ||^2.
TeacherTrainResult train_teacher(Denoiser net, const LabeledData& data, const NoiseSchedule& s,
                                 const TeacherTrainConfig& cfg);

// Monte-Carlo estimate of the score-matching loss on fresh noise.
double teacher_loss(const Denoiser& net, const LabeledData& data, const NoiseSchedule& s, int samples,
                    std::uint64_t seed);

}  // namespace lcm
