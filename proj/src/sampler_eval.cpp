// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/sampler_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lcm {

void SampleSchedule::validate(const NoiseSchedule& s) const {
  int prev = s.N;
  for (int tau : taus) {
    require(tau >= 0 && tau < prev, Errc::invalid_schedule,
            "taus must be strictly decreasing and below N, got " + std::to_string(tau));
    prev = tau;
  }
}

SampleSchedule uniform_sample_schedule(int N, int steps) {
  require(steps >= 1 && steps <= N, Errc::invalid_schedule, "steps must be in [1, N]");
  SampleSchedule sched;
  for (int i = 1; i < steps; ++i)
    sched.taus.push_back(static_cast<int>(std::lround(static_cast<double>(N) * (steps - i) / steps)));
  return sched;
}

Vec initial_noise(const NoiseSchedule& s, Eigen::Index dim, std::uint64_t seed, std::size_t index) {
  Rng rng(mix_seed(seed, index));
  return s.sigma(s.N) * rng.normal_vec(dim);
}

namespace {

constexpr Eigen::Index kChunk = 256;

// Online-parameter f over all columns in fixed-size chunks; the chunking is
// the same on both paths so they agree bit for bit.
Mat apply_chunked(const ConsistencyModel& m, const Mat& z, int n, double omega, std::span<const ClassId> classes,
                  Exec exec) {
  const Eigen::Index B = z.cols();
  Mat out(z.rows(), B);
  const Eigen::Index chunks = (B + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel)
  for (Eigen::Index ch = 0; ch < chunks; ++ch) {
    const Eigen::Index lo = ch * kChunk;
    const Eigen::Index len = std::min(kChunk, B - lo);
    ConsistencyBatch batch;
    batch.z = z.middleCols(lo, len);
    batch.n.assign(static_cast<std::size_t>(len), n);
    batch.omega.assign(static_cast<std::size_t>(len), omega);
    batch.cls.assign(classes.begin() + lo, classes.begin() + lo + len);
    out.middleCols(lo, len) = consistency_apply_batch(m, batch, false);
  }
  return out;
}

}  // namespace

Mat multistep_sample(const ConsistencyModel& m, const SampleSchedule& sched, double omega,
                     std::span<const ClassId> classes, std::uint64_t seed, const LatentCodec& codec, Exec exec) {
  const NoiseSchedule& s = m.schedule;
  sched.validate(s);
  const Eigen::Index dim = m.net.config().data_dim;
  require(codec.d_latent == dim, Errc::dimension_mismatch, "codec latent size differs from the model");
  const auto count = static_cast<Eigen::Index>(classes.size());
  // Draw every noise column up front: [initial, tau_1, tau_2, ...] per sample.
  std::vector<Mat> noise(static_cast<std::size_t>(sched.steps()), Mat(dim, count));
  for (Eigen::Index i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    for (auto& block : noise) block.col(i) = rng.normal_vec(dim);
  }
  Mat z = apply_chunked(m, s.sigma(s.N) * noise[0], s.N, omega, classes, exec);
  for (std::size_t j = 0; j < sched.taus.size(); ++j) {
    const int tau = sched.taus[j];
    const Mat renoised = s.alpha(tau) * z + s.sigma(tau) * noise[j + 1];
    z = apply_chunked(m, renoised, tau, omega, classes, exec);
  }
  return decode(codec, z);
}

Mat multistep_sample(const ConsistencyModel& m, const SampleSchedule& sched, double omega, ClassId c, int count,
                     std::uint64_t seed, const LatentCodec& codec, Exec exec) {
  require(count >= 0, Errc::invalid_range, "sample count must be non-negative");
  const std::vector<ClassId> classes(static_cast<std::size_t>(count), c);
  return multistep_sample(m, sched, omega, classes, seed, codec, exec);
}

Mat teacher_ddim_sample(const TeacherModel& T, int steps, double omega, std::span<const ClassId> classes,
                        std::uint64_t seed, Exec exec) {
  const NoiseSchedule& s = T.schedule();
  require(steps >= 1 && steps <= s.N, Errc::invalid_schedule, "reference steps must be in [1, N]");
  const auto count = static_cast<Eigen::Index>(classes.size());
  const Eigen::Index dim = T.is_analytic() ? T.mixture()->dim() : T.net()->net.config().data_dim;
  const bool all_conditioned =
      std::all_of(classes.begin(), classes.end(), [](ClassId c) { return c != kNullClass; });
  require(omega == 0.0 || all_conditioned, Errc::missing_condition, "guided reference sampling needs classes");
  Mat z(dim, count);
  for (Eigen::Index i = 0; i < count; ++i) z.col(i) = initial_noise(s, dim, seed, static_cast<std::size_t>(i));
  const EpsBatchFn eps = teacher_callback(T, exec);
  for (int j = 0; j < steps; ++j) {
    const int from = static_cast<int>(std::lround(static_cast<double>(s.N) * (steps - j) / steps));
    const int to = static_cast<int>(std::lround(static_cast<double>(s.N) * (steps - j - 1) / steps));
    const std::vector<int> nf(static_cast<std::size_t>(count), from), nt(static_cast<std::size_t>(count), to);
    if (all_conditioned) {
      const std::vector<double> w(static_cast<std::size_t>(count), omega);
      z = cfg_solver_step_batch(T, z, nf, nt, w, classes, SolverKind::ddim, exec);
    } else {
      z += solver_increment_batch(SolverKind::ddim, s, eps, z, nf, nt, classes);
    }
  }
  return z;
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), Errc::empty_set, "W1 needs non-empty sets");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a - F_b| over the merged breakpoints.
  const double wa = 1.0 / static_cast<double>(a.size()), wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, total = 0.0;
  double x = std::min(a[0], b[0]);
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    total += std::abs(fa - fb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) { fa += wa; ++i; }
    while (j < b.size() && b[j] == x) { fb += wb; ++j; }
  }
  return total;
}

Mat random_directions(Eigen::Index dim, int count, Rng& rng) {
  Mat dirs(dim, count);
  for (int p = 0; p < count; ++p) {
    Vec u;
    do { u = rng.normal_vec(dim); } while (u.norm() == 0.0);
    dirs.col(p) = u / u.norm();
  }
  return dirs;
}

double sliced_w1(const Mat& a, const Mat& b, const Mat& dirs, Exec exec) {
  require(a.cols() > 0 && b.cols() > 0, Errc::empty_set, "sliced W1 needs non-empty sets");
  require(a.rows() == b.rows() && dirs.rows() == a.rows(), Errc::dimension_mismatch, "sliced W1 dimensions");
  require(dirs.cols() > 0, Errc::invalid_range, "sliced W1 needs at least one direction");
  std::vector<double> per(static_cast<std::size_t>(dirs.cols()));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (Eigen::Index p = 0; p < dirs.cols(); ++p) {
    const Eigen::VectorXd pa = a.transpose() * dirs.col(p);
    const Eigen::VectorXd pb = b.transpose() * dirs.col(p);
    per[static_cast<std::size_t>(p)] = wasserstein1_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
                                                       std::vector<double>(pb.data(), pb.data() + pb.size()));
  }
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / static_cast<double>(per.size());
}

double sliced_w1(const Mat& a, const Mat& b, int n_projections, Rng& rng, Exec exec) {
  require(n_projections > 0, Errc::invalid_range, "sliced W1 needs at least one projection");
  return sliced_w1(a, b, random_directions(a.rows(), n_projections, rng), exec);
}

ModeMetrics mode_metrics(const Mat& samples, const MixtureSpec& mixture, std::span<const ClassId> classes) {
  require(samples.rows() == mixture.dim(), Errc::dimension_mismatch, "sample dimension differs from mixture");
  require(static_cast<Eigen::Index>(classes.size()) == samples.cols(), Errc::dimension_mismatch,
          "one class per sample required");
  const std::size_t modes = mixture.size();
  ModeMetrics out;
  if (samples.cols() == 0 || modes == 0) return out;
  std::vector<long long> owned(modes, 0);
  double dist_sum = 0.0;
  for (Eigen::Index b = 0; b < samples.cols(); ++b) {
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    double best_cond = std::numeric_limits<double>::infinity();
    const ClassId c = classes[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < modes; ++i) {
      const double d = (samples.col(b) - mixture.means[i]).norm();
      if (d < best) { best = d; nearest = i; }
      if (c == kNullClass || mixture.labels[i] == c)
        best_cond = std::min(best_cond, d / std::sqrt(mixture.variances[i]));
    }
    ++owned[nearest];
    require(std::isfinite(best_cond), Errc::missing_condition, "no component carries class " + std::to_string(c));
    dist_sum += best_cond;
  }
  const double threshold = static_cast<double>(samples.cols()) / (2.0 * static_cast<double>(modes));
  const auto covered = std::count_if(owned.begin(), owned.end(),
                                     [&](long long n) { return static_cast<double>(n) >= threshold; });
  out.coverage = static_cast<double>(covered) / static_cast<double>(modes);
  out.purity = -dist_sum / static_cast<double>(samples.cols());
  return out;
}

ModeMetrics mode_metrics(const Mat& samples, const MixtureSpec& mixture, std::optional<ClassId> c) {
  const std::vector<ClassId> classes(static_cast<std::size_t>(samples.cols()), c.value_or(kNullClass));
  return mode_metrics(samples, mixture, classes);
}

namespace {

struct Probes {
  Mat z;
  std::vector<int> n;
  std::vector<ClassId> cls;
  Rng rng{0};
};

Probes draw_probes(const TeacherModel& T, std::optional<ClassId> c, const ProbeConfig& cfg) {
  require(T.is_analytic(), Errc::invalid_range, "probe evaluation needs an analytic teacher");
  require(cfg.count > 0, Errc::invalid_range, "probe count must be positive");
  const NoiseSchedule& s = T.schedule();
  Probes p;
  p.rng = Rng(cfg.seed);
  const LabeledData x0 = sample_mixture(*T.mixture(), cfg.count, p.rng);
  p.z.resize(x0.x.rows(), cfg.count);
  p.n.resize(static_cast<std::size_t>(cfg.count));
  for (int b = 0; b < cfg.count; ++b) {
    const int n = p.rng.uniform_int(1, s.N);
    p.n[static_cast<std::size_t>(b)] = n;
    p.z.col(b) = forward_sample(x0.x.col(b), n, p.rng.normal_vec(x0.x.rows()), s);
  }
  p.cls = c ? std::vector<ClassId>(static_cast<std::size_t>(cfg.count), *c) : x0.labels;
  return p;
}

}  // namespace

double endpoint_error(const ConsistencyModel& m, const TeacherModel& T, double omega, std::optional<ClassId> c,
                      const ProbeConfig& probes, Exec exec) {
  const Probes p = draw_probes(T, c, probes);
  const std::vector<int> zero(p.n.size(), 0);
  const std::vector<double> w(p.n.size(), omega);
  const bool guided = std::all_of(p.cls.begin(), p.cls.end(), [](ClassId k) { return k != kNullClass; });
  const Mat ref = oracle_integrate_batch(T, p.z, p.n, zero, p.cls, guided ? std::span<const double>(w)
                                                                          : std::span<const double>(),
                                         probes.oracle_substeps, exec);
  const Mat f = consistency_apply_batch(m, {p.z, p.n, w, p.cls}, false);
  return (f - ref).colwise().norm().mean();
}

double self_consistency_gap(const ConsistencyModel& m, const TeacherModel& T, double omega,
                            std::optional<ClassId> c, const ProbeConfig& probes, Exec exec) {
  Probes p = draw_probes(T, c, probes);
  std::vector<int> n_lo(p.n.size());
  for (std::size_t i = 0; i < p.n.size(); ++i) n_lo[i] = p.rng.uniform_int(0, p.n[i]);
  const std::vector<double> w(p.n.size(), omega);
  const bool guided = std::all_of(p.cls.begin(), p.cls.end(), [](ClassId k) { return k != kNullClass; });
  const Mat z_lo = oracle_integrate_batch(T, p.z, p.n, n_lo, p.cls, guided ? std::span<const double>(w)
                                                                           : std::span<const double>(),
                                          probes.oracle_substeps, exec);
  const Mat f_hi = consistency_apply_batch(m, {p.z, p.n, w, p.cls}, false);
  const Mat f_lo = consistency_apply_batch(m, {z_lo, n_lo, w, p.cls}, false);
  return (f_hi - f_lo).colwise().norm().mean();
}

EvalReport evaluate(const ConsistencyModel& m, const TeacherModel& T, const EvalConfig& cfg,
                    const LatentCodec& codec) {
  require(T.is_analytic(), Errc::invalid_range, "evaluation needs an analytic teacher");
  require(!cfg.omegas.empty(), Errc::invalid_range, "evaluation needs at least one omega");
  const MixtureSpec& mix = *T.mixture();
  Rng rng(cfg.seed);
  const std::vector<ClassId> classes = sample_mixture(mix, cfg.samples, rng).labels;
  const Mat dirs = random_directions(mix.dim(), cfg.projections, rng);
  const SampleSchedule sched = uniform_sample_schedule(m.schedule.N, cfg.steps);
  EvalReport report;
  for (double omega : cfg.omegas) {
    OmegaRow row;
    row.omega = omega;
    const Mat samples = multistep_sample(m, sched, omega, classes, cfg.seed, codec);
    const Mat ref = teacher_ddim_sample(T, cfg.reference_steps, omega, classes, cfg.seed);
    row.sliced_w1 = sliced_w1(samples, ref, dirs);
    const ModeMetrics unconditional = mode_metrics(samples, mix);
    row.coverage = unconditional.coverage;
    row.purity = mode_metrics(samples, mix, classes).purity;
    row.endpoint_error = endpoint_error(m, T, omega, std::nullopt, cfg.probes);
    report.per_omega.push_back(row);
  }
  const double n = static_cast<double>(report.per_omega.size());
  for (const auto& row : report.per_omega) {
    report.sliced_w1 += row.sliced_w1 / n;
    report.mode_coverage += row.coverage / n;
    report.mean_endpoint_error += row.endpoint_error / n;
  }
  return report;
}

}  // namespace lcm
