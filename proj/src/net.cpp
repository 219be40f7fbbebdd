// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/net.hpp"

#include <cmath>
#include <cstring>

namespace lcm {

namespace {

using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

ConstMap block_map(std::span<const double> theta, const ParamBlock& b) {
  return ConstMap(theta.data() + b.offset, b.rows, b.cols);
}

MutMap block_map(std::vector<double>& theta, const ParamBlock& b) {
  return MutMap(theta.data() + b.offset, b.rows, b.cols);
}

// W * X one column at a time, so a column's result does not depend on which
// batch it was evaluated in.
Mat apply_cols(const ConstMap& w, const Mat& x) {
  Mat out(w.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j).noalias() = w * x.col(j);
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void silu_inplace(const Mat& pre, Mat& act) {
  act = pre.unaryExpr([](double x) { return x * sigmoid(x); });
}

Mat silu_grad(const Mat& pre) {
  return pre.unaryExpr([](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  });
}

}  // namespace

const char* to_string(PredictionKind kind) {
  switch (kind) {
    case PredictionKind::epsilon: return "epsilon";
    case PredictionKind::x: return "x";
    case PredictionKind::v: return "v";
  }
  return "?";
}

PredictionKind parse_prediction_kind(const std::string& text) {
  if (text == "epsilon" || text == "eps") return PredictionKind::epsilon;
  if (text == "x") return PredictionKind::x;
  if (text == "v") return PredictionKind::v;
  fail(Errc::config_type, "unknown prediction kind '" + text + "'");
}

Vec log_spaced_freqs(int count, double lo, double hi) {
  require(count >= 1, Errc::invalid_range, "need at least one frequency");
  require(lo > 0.0 && hi >= lo, Errc::invalid_range, "frequency range must satisfy 0 < lo <= hi");
  Vec f(count);
  if (count == 1) {
    f[0] = lo;
    return f;
  }
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(count - 1);
  for (int i = 0; i < count; ++i) f[i] = std::exp(std::log(lo) + step * i);
  return f;
}

Vec fourier_embed(double value, int embed_dim, const Vec& base_freqs) {
  require(embed_dim > 0 && embed_dim % 2 == 0, Errc::odd_dim, "embedding dimension must be even");
  const int half = embed_dim / 2;
  require(base_freqs.size() == half, Errc::dimension_mismatch, "need embed_dim/2 base frequencies");
  Vec e(embed_dim);
  for (int i = 0; i < half; ++i) {
    e[i] = std::sin(base_freqs[i] * value);
    e[half + i] = std::cos(base_freqs[i] * value);
  }
  return e;
}

Mat zero_init_projection(int proj_rows, int embed_dim) { return Mat::Zero(proj_rows, embed_dim); }

DenoiserNet::DenoiserNet(NetConfig cfg) : cfg_(cfg) {
  require(cfg_.data_dim >= 1, Errc::invalid_range, "data_dim must be positive");
  require(cfg_.hidden >= 1 && cfg_.hidden_layers >= 1, Errc::invalid_range, "bad hidden layout");
  require(cfg_.num_classes >= 0, Errc::invalid_range, "num_classes must be >= 0");
  require(cfg_.embed_dim > 0 && cfg_.embed_dim % 2 == 0, Errc::odd_dim, "embedding dimension must be even");
  const int H = cfg_.hidden;
  auto add = [&](const std::string& name, int rows, int cols) {
    blocks_.push_back({name, rows, cols, param_count_});
    param_count_ += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  add("in_z", H, cfg_.data_dim);
  add("in_t", H, cfg_.embed_dim);
  if (cfg_.omega_conditioned) add("in_omega", H, cfg_.embed_dim);
  if (cfg_.num_classes > 0) add("class_embed", H, cfg_.num_classes + 1);
  add("in_b", H, 1);
  for (int l = 1; l < cfg_.hidden_layers; ++l) {
    add("hidden" + std::to_string(l) + "_w", H, H);
    add("hidden" + std::to_string(l) + "_b", H, 1);
  }
  add("out_w", cfg_.data_dim, H);
  add("out_b", cfg_.data_dim, 1);
  t_freqs_ = log_spaced_freqs(cfg_.embed_dim / 2, cfg_.t_freq_min, cfg_.t_freq_max);
  omega_freqs_ = log_spaced_freqs(cfg_.embed_dim / 2, cfg_.omega_freq_min, cfg_.omega_freq_max);
}

const ParamBlock* DenoiserNet::find_block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return &b;
  return nullptr;
}

std::vector<double> DenoiserNet::init_params(std::uint64_t seed) const {
  std::vector<double> theta(param_count_, 0.0);
  Rng rng(seed);
  for (const auto& b : blocks_) {
    const bool is_bias = b.cols == 1 && b.name.ends_with("_b");
    if (is_bias) continue;
    if (b.name == "in_omega") {
      block_map(theta, b) = zero_init_projection(b.rows, b.cols);
      continue;
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(b.cols));
    if (b.name == "class_embed") scale = 0.5;
    auto m = block_map(theta, b);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  }
  return theta;
}

void DenoiserNet::check_theta(std::span<const double> theta) const {
  require(theta.size() == param_count_, Errc::shape_mismatch,
          "parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
              std::to_string(param_count_));
}

Mat DenoiserNet::forward(std::span<const double> theta, const NetBatch& in, ForwardCache* cache) const {
  check_theta(theta);
  const Eigen::Index B = in.size();
  require(in.z.rows() == cfg_.data_dim, Errc::dimension_mismatch, "z has wrong dimension");
  require(static_cast<Eigen::Index>(in.t.size()) == B, Errc::dimension_mismatch, "t batch size");
  if (cfg_.omega_conditioned) {
    require(static_cast<Eigen::Index>(in.omega.size()) == B, Errc::missing_omega,
            "omega-conditioned network needs one omega per sample");
  } else {
    require(in.omega.empty(), Errc::dimension_mismatch, "network is not omega-conditioned");
  }
  if (cfg_.num_classes > 0) {
    require(in.cls.empty() || static_cast<Eigen::Index>(in.cls.size()) == B, Errc::dimension_mismatch,
            "class batch size");
  }

  const int half = cfg_.embed_dim / 2;
  Mat t_embed(cfg_.embed_dim, B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int i = 0; i < half; ++i) {
      const double a = t_freqs_[i] * in.t[static_cast<std::size_t>(b)];
      t_embed(i, b) = std::sin(a);
      t_embed(half + i, b) = std::cos(a);
    }

  const ParamBlock* bz = find_block("in_z");
  const ParamBlock* bt = find_block("in_t");
  const ParamBlock* bb = find_block("in_b");
  Mat pre = apply_cols(block_map(theta, *bz), in.z);
  pre += apply_cols(block_map(theta, *bt), t_embed);
  pre.colwise() += block_map(theta, *bb).col(0);

  Mat omega_embed;
  if (cfg_.omega_conditioned) {
    omega_embed.resize(cfg_.embed_dim, B);
    for (Eigen::Index b = 0; b < B; ++b)
      for (int i = 0; i < half; ++i) {
        const double a = omega_freqs_[i] * in.omega[static_cast<std::size_t>(b)];
        omega_embed(i, b) = std::sin(a);
        omega_embed(half + i, b) = std::cos(a);
      }
    pre += apply_cols(block_map(theta, *find_block("in_omega")), omega_embed);
  }

  std::vector<int> class_col;
  if (cfg_.num_classes > 0) {
    const auto emb = block_map(theta, *find_block("class_embed"));
    class_col.resize(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const ClassId c = in.cls.empty() ? kNullClass : in.cls[static_cast<std::size_t>(b)];
      require(c == kNullClass || (c >= 0 && c < cfg_.num_classes), Errc::index_out_of_range,
              "class id " + std::to_string(c) + " out of range");
      const int col = c == kNullClass ? cfg_.num_classes : c;
      class_col[static_cast<std::size_t>(b)] = col;
      pre.col(b) += emb.col(col);
    }
  }

  std::vector<Mat> pres, acts;
  pres.reserve(static_cast<std::size_t>(cfg_.hidden_layers));
  acts.reserve(static_cast<std::size_t>(cfg_.hidden_layers));
  pres.push_back(std::move(pre));
  acts.emplace_back();
  silu_inplace(pres.back(), acts.back());
  for (int l = 1; l < cfg_.hidden_layers; ++l) {
    const std::string base = "hidden" + std::to_string(l);
    Mat p = apply_cols(block_map(theta, *find_block(base + "_w")), acts.back());
    p.colwise() += block_map(theta, *find_block(base + "_b")).col(0);
    pres.push_back(std::move(p));
    acts.emplace_back();
    silu_inplace(pres.back(), acts.back());
  }
  Mat out = apply_cols(block_map(theta, *find_block("out_w")), acts.back());
  out.colwise() += block_map(theta, *find_block("out_b")).col(0);

  if (cache) {
    cache->valid = true;
    cache->theta_fingerprint = fingerprint(theta);
    cache->z = in.z;
    cache->t_embed = std::move(t_embed);
    cache->omega_embed = std::move(omega_embed);
    cache->class_col = std::move(class_col);
    cache->pre = std::move(pres);
    cache->act = std::move(acts);
  }
  return out;
}

std::vector<double> DenoiserNet::backward(std::span<const double> theta, const Mat& grad_out,
                                          const ForwardCache& cache) const {
  check_theta(theta);
  require(cache.valid, Errc::stale_cache, "no forward pass cached");
  require(cache.theta_fingerprint == fingerprint(theta), Errc::stale_cache,
          "parameters changed since the cached forward pass");
  const Eigen::Index B = cache.z.cols();
  require(grad_out.rows() == cfg_.data_dim && grad_out.cols() == B, Errc::stale_cache,
          "upstream gradient does not match the cached batch");

  std::vector<double> grad(param_count_, 0.0);
  const ParamBlock* bw = find_block("out_w");
  block_map(grad, *bw).noalias() = grad_out * cache.act.back().transpose();
  block_map(grad, *find_block("out_b")).col(0) = grad_out.rowwise().sum();

  Mat delta = (block_map(theta, *bw).transpose() * grad_out).cwiseProduct(silu_grad(cache.pre.back()));
  for (int l = cfg_.hidden_layers - 1; l >= 1; --l) {
    const std::string base = "hidden" + std::to_string(l);
    const ParamBlock* w = find_block(base + "_w");
    const auto& prev_act = cache.act[static_cast<std::size_t>(l - 1)];
    block_map(grad, *w).noalias() = delta * prev_act.transpose();
    block_map(grad, *find_block(base + "_b")).col(0) = delta.rowwise().sum();
    delta = (block_map(theta, *w).transpose() * delta)
                .cwiseProduct(silu_grad(cache.pre[static_cast<std::size_t>(l - 1)]));
  }

  block_map(grad, *find_block("in_z")).noalias() = delta * cache.z.transpose();
  block_map(grad, *find_block("in_t")).noalias() = delta * cache.t_embed.transpose();
  block_map(grad, *find_block("in_b")).col(0) = delta.rowwise().sum();
  if (cfg_.omega_conditioned)
    block_map(grad, *find_block("in_omega")).noalias() = delta * cache.omega_embed.transpose();
  if (cfg_.num_classes > 0) {
    auto g = block_map(grad, *find_block("class_embed"));
    for (Eigen::Index b = 0; b < B; ++b) g.col(cache.class_col[static_cast<std::size_t>(b)]) += delta.col(b);
  }
  return grad;
}

Denoiser Denoiser::create(const NetConfig& cfg, std::uint64_t seed) {
  Denoiser d{DenoiserNet(cfg), {}};
  d.theta = d.net.init_params(seed);
  return d;
}

std::uint64_t fingerprint(std::span<const double> theta) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : theta) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return h ^ theta.size();
}

Vec net_forward(const Denoiser& d, const Vec& z, double t_input, std::optional<double> omega, ClassId c) {
  NetBatch in;
  in.z = z;
  in.t = {t_input};
  if (d.net.config().omega_conditioned) {
    require(omega.has_value(), Errc::missing_omega, "omega-conditioned network needs omega");
    in.omega = {*omega};
  } else {
    require(!omega.has_value(), Errc::dimension_mismatch, "network is not omega-conditioned");
  }
  if (d.net.config().num_classes > 0) in.cls = {c};
  return d.net.forward(d.theta, in, nullptr).col(0);
}

std::vector<double> net_grad(const Denoiser& d, const Mat& loss_grad_at_output, const ForwardCache& cache) {
  return d.net.backward(d.theta, loss_grad_at_output, cache);
}

Vec omega_projection(const Denoiser& d, const Vec& embed) {
  const ParamBlock* b = d.net.find_block("in_omega");
  require(b != nullptr, Errc::missing_omega, "network has no omega pathway");
  require(embed.size() == b->cols, Errc::dimension_mismatch, "embedding size");
  return block_map(std::span<const double>(d.theta), *b) * embed;
}

void ema_update(EmaPair& p, double mu) {
  require(mu >= 0.0 && mu <= 1.0, Errc::invalid_range, "EMA rate must be in [0, 1]");
  require(p.theta_online.size() == p.theta_target.size(), Errc::shape_mismatch, "EMA pair sizes differ");
  p.mu = mu;
  for (std::size_t i = 0; i < p.theta_target.size(); ++i)
    p.theta_target[i] = mu * p.theta_target[i] + (1.0 - mu) * p.theta_online[i];
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  fail(Errc::config_type, "unknown optimizer '" + text + "'");
}

void Optimizer::step(std::vector<double>& theta, const std::vector<double>& grad) {
  require(theta.size() == grad.size(), Errc::shape_mismatch, "gradient size differs from parameters");
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr_ * grad[i];
    return;
  }
  if (m_.size() != theta.size()) {
    m_.assign(theta.size(), 0.0);
    v_.assign(theta.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace lcm
