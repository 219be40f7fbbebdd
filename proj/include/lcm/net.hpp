// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcm/common.hpp"

namespace lcm {

enum class PredictionKind { epsilon, x, v };

const char* to_string(PredictionKind kind);
PredictionKind parse_prediction_kind(const std::string& text);

// Log-spaced angular frequencies f_0 = lo ... f_{count-1} = hi.
Vec log_spaced_freqs(int count, double lo, double hi);

// (sin(f_i v))_i followed by (cos(f_i v))_i.
Vec fourier_embed(double value, int embed_dim, const Vec& base_freqs);

// The omega projection starts as an exact zero matrix so that an
// omega-conditioned network computes the same function as its unconditioned
// parent until training moves it.
Mat zero_init_projection(int proj_rows, int embed_dim);

struct NetConfig {
  int data_dim = 2;
  int hidden = 128;
  int hidden_layers = 3;
  int embed_dim = 16;
  // Number of labelled classes; 0 disables the class input. When enabled, one
  // extra learned embedding represents the null condition.
  int num_classes = 0;
  bool omega_conditioned = false;
  PredictionKind kind = PredictionKind::epsilon;
  double t_freq_min = 1.0;
  double t_freq_max = 1000.0;
  double omega_freq_min = 1.0;
  double omega_freq_max = 1000.0;

  bool operator==(const NetConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Inputs for a batch of B evaluations. `omega` must be empty for unconditioned
// networks and have B entries otherwise; `cls` likewise for class input.
struct NetBatch {
  Mat z;                      // data_dim x B
  std::vector<double> t;      // B
  std::vector<double> omega;  // B or empty
  std::vector<ClassId> cls;   // B or empty
  Eigen::Index size() const { return z.cols(); }
};

struct ForwardCache {
  bool valid = false;
  std::uint64_t theta_fingerprint = 0;
  Mat z, t_embed, omega_embed;
  std::vector<int> class_col;
  std::vector<Mat> pre;  // pre-activations per hidden layer
  std::vector<Mat> act;  // SiLU outputs per hidden layer
};

// Architecture: input layer mixes z, projected t/omega embeddings and a class
// embedding; then `hidden_layers - 1` square SiLU layers; linear output.
class DenoiserNet {
 public:
  DenoiserNet() = default;
  explicit DenoiserNet(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }
  std::size_t param_count() const { return param_count_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock* find_block(const std::string& name) const;

  // Fresh parameters: scaled Gaussian weights, zero biases, zero omega
  // projection.
  std::vector<double> init_params(std::uint64_t seed) const;

  Mat forward(std::span<const double> theta, const NetBatch& in, ForwardCache* cache) const;

  // Reverse accumulation of dL/dtheta given dL/d(output) for the cached batch.
  std::vector<double> backward(std::span<const double> theta, const Mat& grad_out,
                               const ForwardCache& cache) const;

  Vec t_freqs() const { return t_freqs_; }
  Vec omega_freqs() const { return omega_freqs_; }

 private:
  void check_theta(std::span<const double> theta) const;

  NetConfig cfg_;
  std::vector<ParamBlock> blocks_;
  std::size_t param_count_ = 0;
  Vec t_freqs_, omega_freqs_;
};

struct Denoiser {
  DenoiserNet net;
  std::vector<double> theta;

  static Denoiser create(const NetConfig& cfg, std::uint64_t seed);
};

std::uint64_t fingerprint(std::span<const double> theta);

// Single-sample evaluation.
Vec net_forward(const Denoiser& d, const Vec& z, double t_input, std::optional<double> omega,
                ClassId c = kNullClass);

std::vector<double> net_grad(const Denoiser& d, const Mat& loss_grad_at_output,
                             const ForwardCache& cache);

// Applies the learned omega projection block to an embedding.
Vec omega_projection(const Denoiser& d, const Vec& embed);

// Online parameters plus their slow-moving target copy. The target only ever
// changes through ema_update.
struct EmaPair {
  std::vector<double> theta_online;
  std::vector<double> theta_target;
  double mu = 0.999943;
};

void ema_update(EmaPair& p, double mu);

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}
  void step(std::vector<double>& theta, const std::vector<double>& grad);
  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }

  // Adam moment buffers and step count, for checkpointing.
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  long long steps() const { return t_; }
  void set_state(std::vector<double> m, std::vector<double> v, long long t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace lcm
