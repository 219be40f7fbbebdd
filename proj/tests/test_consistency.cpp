// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "lcm/consistency.hpp"
#include "support.hpp"

using namespace lcm;

namespace {

const NoiseSchedule kS = make_vp_schedule(1000, 1e-4, 0.02);

NetConfig small_config(PredictionKind kind) {
  NetConfig c;
  c.data_dim = 2;
  c.hidden = 8;
  c.hidden_layers = 2;
  c.embed_dim = 4;
  c.num_classes = 3;
  c.kind = kind;
  return c;
}

// Online model with a nonzero omega projection so every input path matters.
ConsistencyModel random_model(PredictionKind kind, std::uint64_t seed) {
  ConsistencyModel m = ConsistencyModel::create(small_config(kind), BoundarySpec{}, kS, seed);
  Rng rng(seed + 100);
  const ParamBlock* b = m.net.find_block("in_omega");
  for (std::size_t i = 0; i < b->size(); ++i) m.ema.theta_online[b->offset + i] = 0.2 * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("boundary coefficients") {
  const BoundarySpec b;
  auto [s0, o0] = boundary_coeffs(b, kS, 0);
  CHECK(s0 == 1.0);
  CHECK(o0 == 0.0);
  auto [sh, oh] = boundary_coeffs(b, 0.005);
  CHECK(sh == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(oh == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  auto [sb, ob] = boundary_coeffs(b, 1e6);
  CHECK(sb < 1e-15);
  CHECK(ob == doctest::Approx(1.0).epsilon(1e-12));
  // Continuity near the boundary.
  auto [se, oe] = boundary_coeffs(b, 1e-9);
  CHECK(std::abs(se - 1.0) < 1e-12);
  CHECK(std::abs(oe) < 1e-6);
  CHECK_ERRC(boundary_coeffs(b, kS, -1), Errc::index_out_of_range);
  CHECK_ERRC(boundary_coeffs(b, kS, 1001), Errc::index_out_of_range);
  CHECK_ERRC(boundary_coeffs(BoundarySpec{0.0, 0.01}, 0.5), Errc::invalid_range);
}

TEST_CASE("parameterisations agree on related predictions") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 1000);
    const double a = kS.alpha(n), s = kS.sigma(n);
    const Vec x = rng.normal_vec(2), eps = rng.normal_vec(2);
    const Vec z = a * x + s * eps;
    const Vec v = a * eps - s * x;
    const Vec xe = data_estimate(PredictionKind::epsilon, z, eps, a, s);
    const Vec xx = data_estimate(PredictionKind::x, z, x, a, s);
    const Vec xv = data_estimate(PredictionKind::v, z, v, a, s);
    CHECK((xe - x).norm() < 1e-10);
    CHECK((xx - x).norm() < 1e-10);
    CHECK((xv - x).norm() < 1e-10);
    // The three kinds give the same consistency output.
    const auto [cs, co] = boundary_coeffs(BoundarySpec{}, kS, n);
    const Vec fe = cs * z + co * xe, fv = cs * z + co * xv, fx = cs * z + co * xx;
    CHECK((fe - fx).norm() < 1e-10);
    CHECK((fv - fx).norm() < 1e-10);
  }
  CHECK_ERRC(data_estimate(PredictionKind::epsilon, Vec::Ones(2), Vec::Ones(2), 0.0, 1.0), Errc::invalid_range);
  CHECK_ERRC(data_estimate(PredictionKind::x, Vec::Ones(2), Vec::Ones(3), 0.5, 0.5), Errc::dimension_mismatch);
  CHECK(data_estimate_slope(PredictionKind::epsilon, 0.8, 0.6) == doctest::Approx(-0.75));
  CHECK(data_estimate_slope(PredictionKind::x, 0.8, 0.6) == 1.0);
  CHECK(data_estimate_slope(PredictionKind::v, 0.8, 0.6) == doctest::Approx(-0.6));
}

TEST_CASE("epsilon oracle recovers the known clean point") {
  Rng rng(1);
  const Vec z0 = rng.normal_vec(2), z = rng.normal_vec(2);
  const int n = 420;
  const double a = kS.alpha(n), s = kS.sigma(n);
  const Vec eps_hat = (z - a * z0) / s;
  const auto [cs, co] = boundary_coeffs(BoundarySpec{}, kS, n);
  const Vec f = cs * z + co * data_estimate(PredictionKind::epsilon, z, eps_hat, a, s);
  CHECK((f - (cs * z + co * z0)).norm() < 1e-12);
}

TEST_CASE("apply composes the boundary form with the network") {
  for (PredictionKind kind : {PredictionKind::epsilon, PredictionKind::x, PredictionKind::v}) {
    const ConsistencyModel m = random_model(kind, 4);
    const Denoiser d{m.net, m.ema.theta_online};
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = rng.uniform_int(1, 1000);
      const Vec z = rng.normal_vec(2);
      const double w = rng.uniform(2, 14);
      const ClassId c = trial % 4 == 3 ? kNullClass : trial % 3;
      const auto [cs, co] = boundary_coeffs(m.boundary, kS, n);
      const Vec out = net_forward(d, z, kS.t(n), w, c);
      const Vec expect = cs * z + co * data_estimate(kind, z, out, kS.alpha(n), kS.sigma(n));
      CHECK((consistency_apply(m, z, w, c, n, false) - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("boundary identity at n = 0") {
  for (PredictionKind kind : {PredictionKind::epsilon, PredictionKind::x, PredictionKind::v}) {
    const ConsistencyModel m = random_model(kind, 9);
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec z = 3.0 * rng.normal_vec(2);
      for (bool target : {false, true}) CHECK(consistency_apply(m, z, rng.uniform(0, 20), trial % 3, 0, target) == z);
    }
  }
}

TEST_CASE("target evaluation uses theta minus and mutates nothing") {
  ConsistencyModel m = random_model(PredictionKind::x, 2);
  for (double& v : m.ema.theta_target) v *= 0.5;
  const auto online = m.ema.theta_online, target = m.ema.theta_target;
  const Vec z = Vec::Constant(2, 0.3);
  const Vec a = consistency_apply(m, z, 5.0, 1, 500, false);
  const Vec b = consistency_apply(m, z, 5.0, 1, 500, true);
  CHECK((a - b).norm() > 0.0);
  const Denoiser dt{m.net, target};
  const auto [cs, co] = boundary_coeffs(m.boundary, kS, 500);
  CHECK((b - (cs * z + co * net_forward(dt, z, kS.t(500), 5.0, 1))).norm() < 1e-12);
  CHECK(m.ema.theta_online == online);
  CHECK(m.ema.theta_target == target);
  CHECK_ERRC(consistency_apply(m, z, 5.0, 1, 1001, false), Errc::index_out_of_range);
}

TEST_CASE("batch apply matches single evaluation") {
  const ConsistencyModel m = random_model(PredictionKind::v, 6);
  ConsistencyBatch b;
  Rng rng(8);
  b.z = Mat(2, 7);
  for (int j = 0; j < 7; ++j) {
    b.z.col(j) = rng.normal_vec(2);
    b.n.push_back(j * 150);
    b.omega.push_back(2.0 + j);
    b.cls.push_back(j % 3);
  }
  const Mat out = consistency_apply_batch(m, b, false);
  for (int j = 0; j < 7; ++j)
    CHECK((out.col(j) - consistency_apply(m, b.z.col(j), b.omega[j], b.cls[j], b.n[j], false)).norm() < 1e-13);
  b.omega.pop_back();
  CHECK_ERRC(consistency_apply_batch(m, b, false), Errc::missing_omega);
}

TEST_CASE("backward matches finite differences") {
  for (PredictionKind kind : {PredictionKind::epsilon, PredictionKind::x, PredictionKind::v}) {
    ConsistencyModel m = random_model(kind, 12);
    ConsistencyBatch b;
    Rng rng(1);
    b.z = Mat(2, 4);
    for (int j = 0; j < 4; ++j) {
      b.z.col(j) = rng.normal_vec(2);
      b.n.push_back(j == 0 ? 0 : rng.uniform_int(1, 1000));
      b.omega.push_back(rng.uniform(2, 14));
      b.cls.push_back(j % 3);
    }
    const Mat w = Mat::Random(2, 4);
    const ConsistencyForward fwd = consistency_forward(m, b);
    CHECK((fwd.out - consistency_apply_batch(m, b, false)).norm() < 1e-13);
    const std::vector<double> g = consistency_backward(m, fwd, w);
    auto loss = [&](const std::vector<double>& theta) {
      ConsistencyModel p = m;
      p.ema.theta_online = theta;
      return (consistency_apply_batch(p, b, false).array() * w.array()).sum();
    };
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto tp = m.ema.theta_online, tm = m.ema.theta_online;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (loss(tp) - loss(tm)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i])));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("create") {
  const ConsistencyModel m = ConsistencyModel::create(small_config(PredictionKind::v), BoundarySpec{}, kS, 1);
  CHECK(m.prediction_kind() == PredictionKind::v);
  CHECK(m.net.config().omega_conditioned);
  CHECK(m.ema.theta_target == m.ema.theta_online);
  CHECK(m.ema.mu == 0.999943);
  CHECK(m.iteration == 0);
}

TEST_CASE("initialisation from a learned teacher") {
  NetConfig tc = small_config(PredictionKind::epsilon);
  const Denoiser teacher = Denoiser::create(tc, 21);
  const TeacherModel T = TeacherModel::learned(teacher, kS);
  const ConsistencyModel m = init_from_teacher(ConsistencyModel::create(tc, BoundarySpec{}, kS, 5), T);
  CHECK(m.ema.theta_target == m.ema.theta_online);
  const Denoiser online{m.net, m.ema.theta_online};
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec z = rng.normal_vec(2);
    const int n = rng.uniform_int(1, 1000);
    const ClassId c = trial % 4 == 3 ? kNullClass : trial % 3;
    const Vec a = net_forward(online, z, kS.t(n), rng.uniform(0, 20), c);
    const Vec b = net_forward(teacher, z, kS.t(n), std::nullopt, c);
    CHECK((a.array() == b.array()).all());
    CHECK(consistency_apply(m, z, 8.0, c, 0, false) == z);
  }
  NetConfig wide = tc;
  wide.hidden = 9;
  CHECK_ERRC(init_from_teacher(ConsistencyModel::create(wide, BoundarySpec{}, kS, 5), T), Errc::shape_mismatch);
  const TeacherModel A = TeacherModel::analytic(standard_normal_mixture(2), kS);
  CHECK_ERRC(init_from_teacher(ConsistencyModel::create(tc, BoundarySpec{}, kS, 5), A), Errc::invalid_range);
}
