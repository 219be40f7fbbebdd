// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lcm {

int MixtureSpec::num_classes() const {
  int hi = -1;
  for (ClassId c : labels) hi = std::max(hi, c);
  return hi + 1;
}

void MixtureSpec::validate() const {
  require(!weights.empty(), Errc::invalid_range, "mixture has no components");
  require(means.size() == weights.size() && variances.size() == weights.size() && labels.size() == weights.size(),
          Errc::dimension_mismatch, "mixture component arrays differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require(weights[i] > 0.0, Errc::invalid_range, "mixture weights must be positive");
    require(variances[i] > 0.0, Errc::invalid_range, "mixture variances must be positive");
    require(labels[i] >= 0, Errc::invalid_range, "class labels must be non-negative");
    require(means[i].size() == means.front().size(), Errc::dimension_mismatch, "component means differ in dim");
    total += weights[i];
  }
  require(std::abs(total - 1.0) <= 1e-12, Errc::invalid_range, "mixture weights must sum to 1");
}

double MixtureSpec::data_std() const {
  const int d = dim();
  Vec mu = Vec::Zero(d);
  double second = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    mu += weights[i] * means[i];
    second += weights[i] * (variances[i] * d + means[i].squaredNorm());
  }
  return std::sqrt((second - mu.squaredNorm()) / d);
}

MixtureSpec standard_normal_mixture(int dim) {
  MixtureSpec m;
  m.weights = {1.0};
  m.means = {Vec::Zero(dim)};
  m.variances = {1.0};
  m.labels = {0};
  return m;
}

MixtureSpec ring_mixture(int modes, double radius, double stddev, const Vec& shift) {
  require(modes >= 1, Errc::invalid_range, "ring needs at least one mode");
  require(shift.size() == 2, Errc::dimension_mismatch, "ring mixture lives in 2D");
  MixtureSpec m;
  for (int i = 0; i < modes; ++i) {
    const double a = 2.0 * std::numbers::pi * i / modes;
    Vec mean(2);
    mean << radius * std::cos(a) + shift[0], radius * std::sin(a) + shift[1];
    m.weights.push_back(1.0 / modes);
    m.means.push_back(mean);
    m.variances.push_back(stddev * stddev);
    m.labels.push_back(i);
  }
  return m;
}

MixtureSpec two_component_mixture() {
  MixtureSpec m;
  Vec a(2), b(2);
  a << -1.0, 0.5;
  b << 1.0, -0.5;
  m.weights = {0.4, 0.6};
  m.means = {a, b};
  m.variances = {0.25, 0.16};
  m.labels = {0, 1};
  return m;
}

LabeledData sample_mixture(const MixtureSpec& m, Eigen::Index count, Rng& rng) {
  m.validate();
  LabeledData out;
  out.x.resize(m.dim(), count);
  out.labels.resize(static_cast<std::size_t>(count));
  std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
  for (Eigen::Index j = 0; j < count; ++j) {
    const std::size_t i = pick(rng.engine());
    out.x.col(j) = m.means[i] + std::sqrt(m.variances[i]) * rng.normal_vec(m.dim());
    out.labels[static_cast<std::size_t>(j)] = m.labels[i];
  }
  return out;
}

namespace {

// Per-component log(w_i N(z; alpha m_i, v_i I)) restricted to condition c;
// -inf marks excluded components.
std::vector<double> component_logs(const MixtureSpec& m, const Vec& z, double alpha, double sigma, ClassId c,
                                   std::vector<double>& var) {
  require(z.size() == m.dim(), Errc::dimension_mismatch, "probe dimension differs from mixture");
  const double d = static_cast<double>(m.dim());
  std::vector<double> logs(m.size(), -std::numeric_limits<double>::infinity());
  var.assign(m.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (c != kNullClass && m.labels[i] != c) continue;
    any = true;
    const double v = alpha * alpha * m.variances[i] + sigma * sigma;
    var[i] = v;
    const double r2 = (z - alpha * m.means[i]).squaredNorm();
    logs[i] = std::log(m.weights[i]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) - 0.5 * r2 / v;
  }
  require(any, Errc::missing_condition, "no mixture component carries label " + std::to_string(c));
  return logs;
}

double log_sum_exp(const std::vector<double>& x) {
  const double hi = *std::max_element(x.begin(), x.end());
  double acc = 0.0;
  for (double v : x)
    if (std::isfinite(v)) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

}  // namespace

double gmm_log_density_at(const MixtureSpec& m, const Vec& z, double alpha, double sigma, ClassId c) {
  std::vector<double> var;
  auto logs = component_logs(m, z, alpha, sigma, c, var);
  // Renormalise the selected sub-mixture.
  double wsum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (c == kNullClass || m.labels[i] == c) wsum += m.weights[i];
  return log_sum_exp(logs) - std::log(wsum);
}

Vec gmm_score_at(const MixtureSpec& m, const Vec& z, double alpha, double sigma, ClassId c) {
  std::vector<double> var;
  const auto logs = component_logs(m, z, alpha, sigma, c, var);
  const double norm = log_sum_exp(logs);
  Vec score = Vec::Zero(z.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(logs[i])) continue;
    const double r = std::exp(logs[i] - norm);
    score -= r * (z - alpha * m.means[i]) / var[i];
  }
  return score;
}

Vec gmm_score(const MixtureSpec& m, const Vec& z, int n, const NoiseSchedule& s, ClassId c) {
  require(n >= 1 && n <= s.N, Errc::index_out_of_range, "score needs 1 <= n <= N");
  const auto [a, sg] = alpha_sigma(s, n);
  return gmm_score_at(m, z, a, sg, c);
}

TeacherModel TeacherModel::analytic(MixtureSpec mixture, NoiseSchedule schedule) {
  mixture.validate();
  TeacherModel t;
  t.kind_ = Kind::analytic;
  t.mixture_ = std::move(mixture);
  t.schedule_ = std::move(schedule);
  return t;
}

TeacherModel TeacherModel::learned(Denoiser net, NoiseSchedule schedule) {
  require(net.net.config().kind == PredictionKind::epsilon, Errc::invalid_range,
          "learned teacher must predict epsilon");
  require(!net.net.config().omega_conditioned, Errc::invalid_range, "teacher network takes no omega");
  TeacherModel t;
  t.kind_ = Kind::learned;
  t.net_ = std::move(net);
  t.schedule_ = std::move(schedule);
  return t;
}

bool TeacherModel::supports_condition(ClassId c) const {
  if (c == kNullClass) return true;
  if (c < 0) return false;
  if (mixture_) return std::find(mixture_->labels.begin(), mixture_->labels.end(), c) != mixture_->labels.end();
  return c < net_->net.config().num_classes;
}

void TeacherModel::check_condition(ClassId c) const {
  if (!supports_condition(c)) fail(Errc::missing_condition, "teacher has no condition " + std::to_string(c));
}

Vec TeacherModel::eps_at_level(const Vec& z, double alpha, double sigma, ClassId c) const {
  require(is_analytic(), Errc::invalid_range, "only analytic teachers evaluate off-grid");
  check_condition(c);
  calls_->fetch_add(1, std::memory_order_relaxed);
  return -sigma * gmm_score_at(*mixture_, z, alpha, sigma, c);
}

Vec TeacherModel::eps(const Vec& z, int n, ClassId c) const {
  require(n >= 1 && n <= schedule_.N, Errc::index_out_of_range,
          "teacher prediction needs 1 <= n <= N, got " + std::to_string(n));
  if (is_analytic()) {
    const auto [a, sg] = alpha_sigma(schedule_, n);
    return eps_at_level(z, a, sg, c);
  }
  check_condition(c);
  calls_->fetch_add(1, std::memory_order_relaxed);
  return net_forward(*net_, z, schedule_.t(n), std::nullopt, c);
}

Mat TeacherModel::eps_batch(const Mat& z, std::span<const int> n, std::span<const ClassId> c, Exec exec) const {
  const Eigen::Index B = z.cols();
  require(!is_analytic() || z.rows() == mixture_->dim(), Errc::dimension_mismatch, "batch dimension differs from mixture");
  require(static_cast<Eigen::Index>(n.size()) == B && static_cast<Eigen::Index>(c.size()) == B,
          Errc::dimension_mismatch, "batch index/condition arrays differ from batch size");
  for (Eigen::Index b = 0; b < B; ++b) {
    const int nb = n[static_cast<std::size_t>(b)];
    require(nb >= 1 && nb <= schedule_.N, Errc::index_out_of_range,
            "teacher prediction needs 1 <= n <= N, got " + std::to_string(nb));
    check_condition(c[static_cast<std::size_t>(b)]);
  }
  Mat out(z.rows(), B);
  if (is_analytic()) {
    // Columns are independent; each thread writes only its own column.
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (Eigen::Index b = 0; b < B; ++b) {
      const int nb = n[static_cast<std::size_t>(b)];
      const double a = schedule_.alpha(nb), sg = schedule_.sigma(nb);
      out.col(b) = -sg * gmm_score_at(*mixture_, z.col(b), a, sg, c[static_cast<std::size_t>(b)]);
    }
  } else {
    NetBatch in;
    in.z = z;
    in.t.resize(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) in.t[static_cast<std::size_t>(b)] = schedule_.t(n[static_cast<std::size_t>(b)]);
    if (net_->net.config().num_classes > 0) in.cls.assign(c.begin(), c.end());
    out = net_->net.forward(net_->theta, in, nullptr);
  }
  calls_->fetch_add(static_cast<std::uint64_t>(B), std::memory_order_relaxed);
  return out;
}

Vec teacher_eps(const TeacherModel& T, const Vec& z, int n, ClassId c) { return T.eps(z, n, c); }

Vec cfg_eps(const TeacherModel& T, const Vec& z, double omega, ClassId c, int n) {
  require(c != kNullClass, Errc::missing_condition, "guidance needs a concrete condition");
  require(T.supports_condition(c), Errc::missing_condition, "teacher has no condition " + std::to_string(c));
  const Vec cond = T.eps(z, n, c);
  const Vec uncond = T.eps(z, n, kNullClass);
  return (1.0 + omega) * cond - omega * uncond;
}

namespace {

struct NoisedBatch {
  NetBatch in;
  Mat eps;
};

NoisedBatch draw_noised_batch(const LabeledData& data, const NoiseSchedule& s, int batch, double cond_drop,
                              bool use_labels, Rng& rng) {
  NoisedBatch nb;
  const Eigen::Index d = data.x.rows();
  nb.in.z.resize(d, batch);
  nb.eps.resize(d, batch);
  nb.in.t.resize(static_cast<std::size_t>(batch));
  if (use_labels) nb.in.cls.resize(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const int j = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
    const int n = rng.uniform_int(1, s.N);
    const Vec e = rng.normal_vec(d);
    nb.eps.col(b) = e;
    nb.in.z.col(b) = forward_sample(data.x.col(j), n, e, s);
    nb.in.t[static_cast<std::size_t>(b)] = s.t(n);
    if (use_labels) {
      const bool drop = rng.uniform(0.0, 1.0) < cond_drop;
      nb.in.cls[static_cast<std::size_t>(b)] = drop ? kNullClass : data.labels[static_cast<std::size_t>(j)];
    }
  }
  return nb;
}

}  // namespace

TeacherTrainResult train_teacher(Denoiser net, const LabeledData& data, const NoiseSchedule& s,
                                 const TeacherTrainConfig& cfg) {
  require(data.size() > 0, Errc::empty_set, "teacher training data is empty");
  require(net.net.config().kind == PredictionKind::epsilon, Errc::invalid_range,
          "teacher network must predict epsilon");
  require(data.x.rows() == net.net.config().data_dim, Errc::dimension_mismatch, "data dimension");
  TeacherTrainResult res;
  Rng rng(cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.lr);
  const bool use_labels = net.net.config().num_classes > 0;
  ForwardCache cache;
  for (int it = 0; it < cfg.iters; ++it) {
    NoisedBatch nb = draw_noised_batch(data, s, cfg.batch, cfg.cond_drop, use_labels, rng);
    const Mat out = net.net.forward(net.theta, nb.in, &cache);
    const Mat diff = out - nb.eps;
    const double loss = diff.squaredNorm() / cfg.batch;
    if (!std::isfinite(loss)) fail(Errc::divergence, "teacher loss became non-finite");
    res.loss_history.push_back(loss);
    const Mat grad_out = (2.0 / cfg.batch) * diff;
    const auto grad = net.net.backward(net.theta, grad_out, cache);
    opt.step(net.theta, grad);
  }
  res.net = std::move(net);
  return res;
}

double teacher_loss(const Denoiser& net, const LabeledData& data, const NoiseSchedule& s, int samples,
                    std::uint64_t seed) {
  Rng rng(seed);
  NoisedBatch nb = draw_noised_batch(data, s, samples, 0.0, net.net.config().num_classes > 0, rng);
  const Mat out = net.net.forward(net.theta, nb.in, nullptr);
  return (out - nb.eps).squaredNorm() / samples;
}

}  // namespace lcm
