// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/solver.hpp"

#include <cmath>

namespace lcm {

const char* to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::ddim: return "ddim";
    case SolverKind::dpm2: return "dpm2";
    case SolverKind::dpmpp2: return "dpmpp2";
    case SolverKind::oracle_rk4: return "oracle_rk4";
  }
  return "?";
}

SolverKind parse_solver_kind(const std::string& text) {
  if (text == "ddim") return SolverKind::ddim;
  if (text == "dpm2" || text == "dpm") return SolverKind::dpm2;
  if (text == "dpmpp2" || text == "dpm++" || text == "dpmpp") return SolverKind::dpmpp2;
  if (text == "oracle_rk4" || text == "oracle") return SolverKind::oracle_rk4;
  fail(Errc::config_type, "unknown solver '" + text + "'");
}

EpsBatchFn teacher_callback(const TeacherModel& T, Exec exec) {
  return [&T, exec](const Mat& z, std::span<const int> n, std::span<const ClassId> c) {
    return T.eps_batch(z, n, c, exec);
  };
}

int solver_midpoint(int n_from, int n_to) {
  const int k = n_from - n_to;
  return n_from - (k + 1) / 2;
}

namespace {

void check_order(const NoiseSchedule& s, int n_from, int n_to, SolverKind kind) {
  if (n_to < 0 || n_from > s.N || n_to > n_from) {
    fail(Errc::index_out_of_range, "solver needs 0 <= n_to <= n_from <= N, got n_from=" +
                                       std::to_string(n_from) + " n_to=" + std::to_string(n_to));
  }
  if ((kind == SolverKind::dpm2 || kind == SolverKind::dpmpp2) && n_to == 0 && n_from > 0) {
    fail(Errc::index_out_of_range, "second-order solvers need n_to >= 1 (log-SNR is infinite at n=0)");
  }
}

Mat gather(const Mat& z, const std::vector<Eigen::Index>& cols) {
  Mat out(z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = z.col(cols[j]);
  return out;
}

}  // namespace

Mat solver_increment_batch(SolverKind kind, const NoiseSchedule& s, const EpsBatchFn& eps, const Mat& z,
                           std::span<const int> n_from, std::span<const int> n_to, std::span<const ClassId> c) {
  require(kind != SolverKind::oracle_rk4, Errc::invalid_range, "oracle is not a single-step solver");
  const Eigen::Index B = z.cols();
  require(static_cast<Eigen::Index>(n_from.size()) == B && static_cast<Eigen::Index>(n_to.size()) == B &&
              static_cast<Eigen::Index>(c.size()) == B,
          Errc::dimension_mismatch, "solver batch arrays differ from batch size");

  std::vector<Eigen::Index> active;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<std::size_t>(b);
    check_order(s, n_from[i], n_to[i], kind);
    if (n_to[i] != n_from[i]) active.push_back(b);
  }
  Mat inc = Mat::Zero(z.rows(), B);
  if (active.empty()) return inc;

  const auto A = static_cast<Eigen::Index>(active.size());
  const Mat za = gather(z, active);
  std::vector<int> nf(static_cast<std::size_t>(A)), nt(static_cast<std::size_t>(A)), nm(static_cast<std::size_t>(A));
  std::vector<ClassId> ca(static_cast<std::size_t>(A));
  for (Eigen::Index j = 0; j < A; ++j) {
    const auto src = static_cast<std::size_t>(active[static_cast<std::size_t>(j)]);
    const auto dst = static_cast<std::size_t>(j);
    nf[dst] = n_from[src];
    nt[dst] = n_to[src];
    nm[dst] = solver_midpoint(nf[dst], nt[dst]);
    ca[dst] = c[src];
  }

  const Mat e_from = eps(za, nf, ca);
  Mat out(z.rows(), A);

  if (kind == SolverKind::ddim) {
    for (Eigen::Index j = 0; j < A; ++j) {
      const auto i = static_cast<std::size_t>(j);
      const double af = s.alpha(nf[i]), sf = s.sigma(nf[i]);
      const double at = s.alpha(nt[i]), st = s.sigma(nt[i]);
      // sigma_to * (sigma_from alpha_to / (alpha_from sigma_to) - 1), kept finite at sigma_to = 0.
      out.col(j) = (at / af) * za.col(j) - (sf * at / af - st) * e_from.col(j) - za.col(j);
    }
  } else {
    Mat z_mid(z.rows(), A);
    std::vector<double> h0(static_cast<std::size_t>(A)), h1(static_cast<std::size_t>(A));
    for (Eigen::Index j = 0; j < A; ++j) {
      const auto i = static_cast<std::size_t>(j);
      const double lf = log_snr(s, nf[i]), lm = log_snr(s, nm[i]), lt = log_snr(s, nt[i]);
      h0[i] = lt - lf;
      h1[i] = lm - lf;
      const double af = s.alpha(nf[i]), sf = s.sigma(nf[i]);
      const double am = s.alpha(nm[i]), sm = s.sigma(nm[i]);
      if (kind == SolverKind::dpm2) {
        z_mid.col(j) = (am / af) * za.col(j) - sm * std::expm1(h1[i]) * e_from.col(j);
      } else {
        const Vec x_from = (za.col(j) - sf * e_from.col(j)) / af;
        z_mid.col(j) = (sm / sf) * za.col(j) - am * std::expm1(-h1[i]) * x_from;
      }
    }
    const Mat e_mid = eps(z_mid, nm, ca);
    for (Eigen::Index j = 0; j < A; ++j) {
      const auto i = static_cast<std::size_t>(j);
      const double r = h1[i] / h0[i];
      const double af = s.alpha(nf[i]), sf = s.sigma(nf[i]);
      const double am = s.alpha(nm[i]), sm = s.sigma(nm[i]);
      const double at = s.alpha(nt[i]), st = s.sigma(nt[i]);
      if (kind == SolverKind::dpm2) {
        const double phi = std::expm1(h0[i]);
        out.col(j) = (at / af) * za.col(j) - st * phi * e_from.col(j) -
                     (st / (2.0 * r)) * phi * (e_mid.col(j) - e_from.col(j)) - za.col(j);
      } else {
        const double phi = std::expm1(-h0[i]);
        const Vec x_from = (za.col(j) - sf * e_from.col(j)) / af;
        const Vec x_mid = (z_mid.col(j) - sm * e_mid.col(j)) / am;
        out.col(j) = (st / sf) * za.col(j) - at * phi * x_from - (at / (2.0 * r)) * phi * (x_mid - x_from) - za.col(j);
      }
    }
  }
  for (Eigen::Index j = 0; j < A; ++j) inc.col(active[static_cast<std::size_t>(j)]) = out.col(j);
  return inc;
}

namespace {

Vec single_step(SolverKind kind, const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to) {
  EpsBatchFn batch = [&eps](const Mat& zz, std::span<const int> n, std::span<const ClassId>) {
    Mat out(zz.rows(), zz.cols());
    for (Eigen::Index b = 0; b < zz.cols(); ++b) out.col(b) = eps(zz.col(b), n[static_cast<std::size_t>(b)]);
    return out;
  };
  const int nf[1] = {n_from};
  const int nt[1] = {n_to};
  const ClassId c[1] = {kNullClass};
  return solver_increment_batch(kind, s, batch, z, nf, nt, c).col(0);
}

EpsFn bind_teacher(const TeacherModel& T, ClassId c) {
  return [&T, c](const Vec& z, int n) { return T.eps(z, n, c); };
}

}  // namespace

Vec ddim_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to) {
  return single_step(SolverKind::ddim, s, eps, z, n_from, n_to);
}
Vec dpm2_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to) {
  return single_step(SolverKind::dpm2, s, eps, z, n_from, n_to);
}
Vec dpmpp2_step(const NoiseSchedule& s, const EpsFn& eps, const Vec& z, int n_from, int n_to) {
  return single_step(SolverKind::dpmpp2, s, eps, z, n_from, n_to);
}

Vec ddim_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c) {
  return ddim_step(T.schedule(), bind_teacher(T, c), z, n_from, n_to);
}
Vec dpm2_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c) {
  return dpm2_step(T.schedule(), bind_teacher(T, c), z, n_from, n_to);
}
Vec dpmpp2_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c) {
  return dpmpp2_step(T.schedule(), bind_teacher(T, c), z, n_from, n_to);
}

SolverStep solver_step(SolverKind kind, const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c) {
  SolverStep step{z, n_from, n_to, c, {}};
  step.increment = single_step(kind, T.schedule(), bind_teacher(T, c), z, n_from, n_to);
  return step;
}

Vec cfg_solver_step(const TeacherModel& T, const Vec& z, int n_from, int n_to, double omega, ClassId c,
                    SolverKind kind) {
  const int nf[1] = {n_from};
  const int nt[1] = {n_to};
  const double w[1] = {omega};
  const ClassId cc[1] = {c};
  return cfg_solver_step_batch(T, z, nf, nt, w, cc, kind, Exec::serial).col(0);
}

Mat cfg_solver_step_batch(const TeacherModel& T, const Mat& z, std::span<const int> n_from,
                          std::span<const int> n_to, std::span<const double> omega, std::span<const ClassId> c,
                          SolverKind kind, Exec exec) {
  const Eigen::Index B = z.cols();
  require(static_cast<Eigen::Index>(omega.size()) == B, Errc::dimension_mismatch, "omega batch size");
  require(static_cast<Eigen::Index>(c.size()) == B, Errc::dimension_mismatch, "condition batch size");
  for (ClassId ci : c) require(T.supports_condition(ci), Errc::missing_condition, "teacher lacks a condition");

  // Columns [0, B) carry the condition, [B, 2B) the null condition.
  Mat zz(z.rows(), 2 * B);
  zz << z, z;
  std::vector<int> nf2(2 * static_cast<std::size_t>(B)), nt2(2 * static_cast<std::size_t>(B));
  std::vector<ClassId> c2(2 * static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<std::size_t>(b);
    const auto k = static_cast<std::size_t>(b + B);
    nf2[i] = nf2[k] = n_from[i];
    nt2[i] = nt2[k] = n_to[i];
    c2[i] = c[i];
    c2[k] = kNullClass;
  }
  const Mat inc = solver_increment_batch(kind, T.schedule(), teacher_callback(T, exec), zz, nf2, nt2, c2);
  Mat out(z.rows(), B);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (Eigen::Index b = 0; b < B; ++b) {
    const double w = omega[static_cast<std::size_t>(b)];
    out.col(b) = z.col(b) + (1.0 + w) * inc.col(b) - w * inc.col(b + B);
  }
  return out;
}

namespace {

// Guided noise prediction at an arbitrary point of the VP curve.
Vec guided_eps(const TeacherModel& T, const Vec& z, double a, double sg, ClassId c, const double* omega) {
  if (!omega || *omega == 0.0) return T.eps_at_level(z, a, sg, c);
  return (1.0 + *omega) * T.eps_at_level(z, a, sg, c) - *omega * T.eps_at_level(z, a, sg, kNullClass);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// dz/dlambda = sigma^2 z - sigma eps, with alpha^2 = sigmoid(2 lambda).
Vec velocity_lambda(const TeacherModel& T, const Vec& z, double lambda, ClassId c, const double* omega) {
  const double a = std::sqrt(sigmoid(2.0 * lambda));
  const double sg = std::sqrt(sigmoid(-2.0 * lambda));
  return sg * sg * z - sg * guided_eps(T, z, a, sg, c, omega);
}

// dz/drho with rho = sigma / alpha, regular down to rho = 0.
Vec velocity_rho(const TeacherModel& T, const Vec& z, double rho, ClassId c, const double* omega) {
  const double a = 1.0 / std::sqrt(1.0 + rho * rho);
  const double sg = rho * a;
  return -(rho / (1.0 + rho * rho)) * z + a * guided_eps(T, z, a, sg, c, omega);
}

template <typename Field>
Vec rk4(const Field& field, Vec z, double from, double to, int steps) {
  const double h = (to - from) / steps;
  for (int i = 0; i < steps; ++i) {
    const double u = from + h * i;
    const Vec k1 = field(z, u);
    const Vec k2 = field(z + 0.5 * h * k1, u + 0.5 * h);
    const Vec k3 = field(z + 0.5 * h * k2, u + 0.5 * h);
    const Vec k4 = field(z + h * k3, u + h);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return z;
}

Vec integrate_one(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c, const double* omega,
                  int substeps) {
  if (n_from == n_to) return z;
  const NoiseSchedule& s = T.schedule();
  const int lambda_end = n_to == 0 ? 1 : n_to;
  Vec out = z;
  if (n_from != lambda_end) {
    auto field = [&](const Vec& y, double lam) { return velocity_lambda(T, y, lam, c, omega); };
    out = rk4(field, out, log_snr(s, n_from), log_snr(s, lambda_end), substeps);
  }
  if (n_to == 0) {
    auto field = [&](const Vec& y, double rho) { return velocity_rho(T, y, rho, c, omega); };
    out = rk4(field, out, s.sigma(1) / s.alpha(1), 0.0, substeps);
  }
  return out;
}

}  // namespace

Vec oracle_integrate(const TeacherModel& T, const Vec& z, int n_from, int n_to, ClassId c,
                     std::optional<double> omega, int substeps) {
  const int nf[1] = {n_from};
  const int nt[1] = {n_to};
  const ClassId cc[1] = {c};
  std::vector<double> w;
  if (omega) w.push_back(*omega);
  return oracle_integrate_batch(T, z, nf, nt, cc, w, substeps, Exec::serial).col(0);
}

Mat oracle_integrate_batch(const TeacherModel& T, const Mat& z, std::span<const int> n_from,
                           std::span<const int> n_to, std::span<const ClassId> c, std::span<const double> omega,
                           int substeps, Exec exec) {
  require(T.is_analytic(), Errc::invalid_range, "oracle integration needs an analytic teacher");
  require(substeps >= 1, Errc::invalid_range, "substeps must be >= 1");
  const Eigen::Index B = z.cols();
  require(static_cast<Eigen::Index>(n_from.size()) == B && static_cast<Eigen::Index>(n_to.size()) == B &&
              static_cast<Eigen::Index>(c.size()) == B,
          Errc::dimension_mismatch, "oracle batch arrays differ from batch size");
  require(omega.empty() || static_cast<Eigen::Index>(omega.size()) == B, Errc::dimension_mismatch,
          "omega batch size");
  require(z.rows() == T.mixture()->dim(), Errc::dimension_mismatch, "oracle state dimension");
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<std::size_t>(b);
    check_order(T.schedule(), n_from[i], n_to[i], SolverKind::oracle_rk4);
    require(T.supports_condition(c[i]), Errc::missing_condition, "teacher lacks a condition");
    if (!omega.empty() && omega[i] != 0.0)
      require(c[i] != kNullClass, Errc::missing_condition, "guided oracle needs a concrete condition");
  }
  Mat out(z.rows(), B);
  bool finite = true;
#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::parallel) reduction(&& : finite)
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto i = static_cast<std::size_t>(b);
    const double* w = omega.empty() ? nullptr : &omega[i];
    out.col(b) = integrate_one(T, z.col(b), n_from[i], n_to[i], c[i], w, substeps);
    finite = finite && out.col(b).allFinite();
  }
  if (!finite) fail(Errc::divergence, "oracle trajectory became non-finite");
  return out;
}

double fitted_loglog_slope(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, Errc::invalid_range, "slope fit needs >= 2 points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<SolverBenchRow> solver_order_study(const TeacherModel& T, const SolverBenchConfig& cfg) {
  require(T.is_analytic(), Errc::invalid_range, "order study needs an analytic teacher");
  const NoiseSchedule& s = T.schedule();
  const int span = cfg.n_hi - cfg.n_lo;
  require(cfg.n_lo >= 1 && cfg.n_hi <= s.N && span > 0, Errc::index_out_of_range, "bad study span");
  for (int m : cfg.step_counts)
    require(m >= 1 && span % m == 0, Errc::invalid_range, "step count must divide the span");

  // Probes: noised data at n_hi.
  Rng rng(cfg.seed);
  const LabeledData data = sample_mixture(*T.mixture(), cfg.probes, rng);
  Mat z(data.x.rows(), cfg.probes);
  for (int p = 0; p < cfg.probes; ++p)
    z.col(p) = forward_sample(data.x.col(p), cfg.n_hi, rng.normal_vec(data.x.rows()), s);

  const std::vector<int> nf(static_cast<std::size_t>(cfg.probes), cfg.n_hi);
  const std::vector<int> nt(static_cast<std::size_t>(cfg.probes), cfg.n_lo);
  const std::vector<ClassId> cls(static_cast<std::size_t>(cfg.probes), kNullClass);
  const Mat reference = oracle_integrate_batch(T, z, nf, nt, cls, {}, cfg.oracle_substeps);
  const EpsBatchFn eps = teacher_callback(T);

  std::vector<SolverBenchRow> rows;
  for (SolverKind kind : cfg.solvers) {
    std::vector<double> sizes, errors;
    const std::size_t first = rows.size();
    for (int m : cfg.step_counts) {
      const int k = span / m;
      Mat state = z;
      for (int step = 0; step < m; ++step) {
        const std::vector<int> from(static_cast<std::size_t>(cfg.probes), cfg.n_hi - step * k);
        const std::vector<int> to(static_cast<std::size_t>(cfg.probes), cfg.n_hi - (step + 1) * k);
        state += solver_increment_batch(kind, s, eps, state, from, to, cls);
      }
      const double err = (state - reference).colwise().norm().mean();
      SolverBenchRow row;
      row.solver = kind;
      row.k = k;
      row.step_size = static_cast<double>(k) / s.N;
      row.endpoint_error = err;
      rows.push_back(row);
      sizes.push_back(row.step_size);
      errors.push_back(err);
    }
    const double slope = fitted_loglog_slope(sizes, errors);
    for (std::size_t i = first; i < rows.size(); ++i) rows[i].fitted_order = slope;
  }
  return rows;
}

}  // namespace lcm
