// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lcm/checkpoint.hpp"
#include "lcm/cli.hpp"
#include "lcm/distill.hpp"
#include "lcm/sampler_eval.hpp"
#include "lcm/solver.hpp"

using namespace lcm;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kDdimOrderLo = 0.8, kDdimOrderHi = 1.2;
constexpr double kSecondOrderLo = 1.6, kSecondOrderHi = 2.4;
constexpr double kExchangeTol = 1e-12;
constexpr int kExchangeProbes = 100;
constexpr double kOracleTol = 1e-9;
constexpr int kOracleSubsteps = 10000;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradNets = 20;
constexpr double kParamTol = 1e-10;
constexpr double kW1Fraction = 0.1;
constexpr double kCoverageMin = 7.0 / 8.0;
constexpr long long kQualityIters = 20000;
constexpr long long kTrendIters = 2000;
constexpr long long kFinetuneIters = 5000;
constexpr double kQualityOmega = 8.0;
constexpr int kEvalSamples = 2000;
constexpr int kReferenceSteps = 500;
constexpr int kProjections = 128;
constexpr int kSeeds = 3;

const NoiseSchedule kS = make_vp_schedule(1000, 1e-4, 0.02);

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  std::printf("[%s] %2d %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <class F>
void criterion(int id, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(id, name, pass, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// Ring mixture used by the training criteria.
const MixtureSpec& ring() {
  static const MixtureSpec m = ring_mixture(8, 1.0, 0.1);
  return m;
}

const TeacherModel& ring_teacher() {
  static const TeacherModel T = TeacherModel::analytic(ring(), kS);
  return T;
}

NetConfig ring_net() {
  NetConfig nc;
  nc.data_dim = 2;
  nc.num_classes = 8;
  nc.kind = PredictionKind::x;
  return nc;
}

TrainConfig ring_train(long long iters, int k, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::adam;
  cfg.lr = 1e-3;
  cfg.mu = 0.99;
  cfg.batch = 64;
  cfg.iters = iters;
  cfg.k = k;
  cfg.omega_min = 2.0;
  cfg.omega_max = 14.0;
  cfg.seed = seed;
  cfg.log_every = 1000;
  return cfg;
}

LabeledData ring_data(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xda7a));
  return sample_mixture(ring(), 50000, rng);
}

struct Trained {
  ConsistencyModel model;
  Optimizer optimizer;
};

Trained train_ring(long long iters, int k, std::uint64_t seed) {
  const ConsistencyModel m0 = ConsistencyModel::create(ring_net(), BoundarySpec{}, kS, 7 + seed, 0.99);
  TrainResult r = lcd_train(m0, ring_teacher(), ring_data(seed), ring_train(iters, k, seed));
  return {std::move(r.model), std::move(r.optimizer)};
}

// Fully trained ring models, one per seed, shared by several criteria.
const Trained& quality_model(std::uint64_t seed) {
  static std::map<std::uint64_t, Trained> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, train_ring(kQualityIters, 10, seed)).first;
  return it->second;
}

std::vector<ClassId> eval_classes(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc1a5));
  return sample_mixture(ring(), kEvalSamples, rng).labels;
}

double max_rel_error(const std::vector<double>& analytic, const std::function<double(std::size_t)>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double fd = numeric(i);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_last_column(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

const char* kCliRun = R"(seed = 3
hidden = 32
hidden_layers = 2
prediction_kind = x
data_samples = 2000
iters = 200
batch = 32
k = 10
mu = 0.99
lr = 1e-3
optimizer = adam
log_every = 50
probe_count = 16
probe_substeps = 50
sample_count = 200
eval_samples = 300
reference_steps = 100
projections = 32
bench_step_counts = 5,10,20,40
bench_probes = 8
bench_oracle_substeps = 2000
)";

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / ("lcmkit_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  criterion(1, "solver convergence order", [](std::string& detail) {
    const TeacherModel T = TeacherModel::analytic(two_component_mixture(), kS);
    SolverBenchConfig cfg;
    cfg.step_counts = {5, 10, 20, 40, 80};
    std::map<SolverKind, double> order;
    for (const auto& row : solver_order_study(T, cfg)) order[row.solver] = row.fitted_order;
    detail = "ddim " + fmt("%.3f", order[SolverKind::ddim]) + ", dpm2 " + fmt("%.3f", order[SolverKind::dpm2]) +
             ", dpmpp2 " + fmt("%.3f", order[SolverKind::dpmpp2]);
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    return in(order[SolverKind::ddim], kDdimOrderLo, kDdimOrderHi) &&
           in(order[SolverKind::dpm2], kSecondOrderLo, kSecondOrderHi) &&
           in(order[SolverKind::dpmpp2], kSecondOrderLo, kSecondOrderHi);
  });

  criterion(2, "guided DDIM exchange identity", [](std::string& detail) {
    const TeacherModel& T = ring_teacher();
    Rng rng(2);
    double worst = 0.0;
    for (int i = 0; i < kExchangeProbes; ++i) {
      const Vec z = 1.5 * rng.normal_vec(2);
      const int n_from = rng.uniform_int(1, 1000);
      const int n_to = rng.uniform_int(0, n_from - 1);
      const double w = rng.uniform(0.0, 14.0);
      const ClassId c = rng.uniform_int(0, 7);
      const Vec a = cfg_solver_step(T, z, n_from, n_to, w, c, SolverKind::ddim);
      const EpsFn guided = [&](const Vec& y, int n) { return cfg_eps(T, y, w, c, n); };
      const Vec b = z + ddim_step(kS, guided, z, n_from, n_to);
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    detail = "max abs difference " + fmt("%.2e", worst) + " over " + std::to_string(kExchangeProbes) + " probes";
    return worst <= kExchangeTol;
  });

  criterion(3, "guided flow oracle sanity", [](std::string& detail) {
    const TeacherModel& T = ring_teacher();
    const TeacherModel N = TeacherModel::analytic(standard_normal_mixture(2), kS);
    Rng rng(3);
    double guided_gap = 0.0, drift = 0.0;
    for (int i = 0; i < 8; ++i) {
      const Vec z = rng.normal_vec(2);
      const int n_from = rng.uniform_int(1, 1000);
      const int n_to = rng.uniform_int(0, n_from - 1);
      const ClassId c = i % 8;
      const Vec a = oracle_integrate(T, z, n_from, n_to, c, 0.0, kOracleSubsteps);
      const Vec b = oracle_integrate(T, z, n_from, n_to, c, std::nullopt, kOracleSubsteps);
      guided_gap = std::max(guided_gap, (a - b).norm());
      drift = std::max(drift, (oracle_integrate(N, z, n_from, n_to, kNullClass, std::nullopt, kOracleSubsteps) - z).norm());
    }
    detail = "omega=0 vs conditional " + fmt("%.2e", guided_gap) + ", standard-normal drift " + fmt("%.2e", drift);
    return guided_gap <= kOracleTol && drift <= kOracleTol;
  });

  criterion(4, "reverse-mode gradients", [](std::string& detail) {
    Rng rng(4);
    double worst = 0.0;
    for (int net_id = 0; net_id < kGradNets; ++net_id) {
      NetConfig nc;
      nc.data_dim = rng.uniform_int(1, 4);
      nc.hidden = rng.uniform_int(3, 10);
      nc.hidden_layers = rng.uniform_int(1, 3);
      nc.embed_dim = 2 * rng.uniform_int(1, 4);
      nc.num_classes = rng.uniform_int(0, 3);
      nc.omega_conditioned = net_id % 2 == 1;
      const Denoiser d = Denoiser::create(nc, 100 + net_id);
      std::vector<double> theta = d.theta;
      for (double& v : theta) v += 0.05 * rng.normal();  // also moves the zero omega block
      const int B = rng.uniform_int(1, 5);
      NetBatch in;
      in.z = Mat(nc.data_dim, B);
      for (int j = 0; j < B; ++j) {
        in.z.col(j) = rng.normal_vec(nc.data_dim);
        in.t.push_back(rng.uniform(0.0, 1.0));
        if (nc.omega_conditioned) in.omega.push_back(rng.uniform(0.0, 14.0));
        if (nc.num_classes > 0) in.cls.push_back(rng.uniform_int(-1, nc.num_classes - 1));
      }
      const Mat w = Mat::Random(nc.data_dim, B);
      ForwardCache cache;
      d.net.forward(theta, in, &cache);
      const std::vector<double> g = d.net.backward(theta, w, cache);
      auto loss = [&](const std::vector<double>& th) { return (d.net.forward(th, in, nullptr).array() * w.array()).sum(); };
      worst = std::max(worst, max_rel_error(g, [&](std::size_t i) {
                         std::vector<double> tp = theta, tm = theta;
                         tp[i] += kGradStep;
                         tm[i] -= kGradStep;
                         return (loss(tp) - loss(tm)) / (2 * kGradStep);
                       }));
    }
    detail = "max relative error " + fmt("%.2e", worst) + " over " + std::to_string(kGradNets) + " nets";
    return worst < kGradRelTol;
  });

  criterion(5, "boundary identity and parameterisations", [](std::string& detail) {
    Rng rng(5);
    bool boundary_exact = true;
    for (PredictionKind kind : {PredictionKind::epsilon, PredictionKind::x, PredictionKind::v}) {
      NetConfig nc = ring_net();
      nc.hidden = 16;
      nc.kind = kind;
      ConsistencyModel m = ConsistencyModel::create(nc, BoundarySpec{}, kS, 5);
      for (double& v : m.ema.theta_online) v += 0.1 * rng.normal();
      for (int i = 0; i < 50; ++i) {
        const Vec z = 2.0 * rng.normal_vec(2);
        boundary_exact &= consistency_apply(m, z, rng.uniform(0, 14), rng.uniform_int(-1, 7), 0, i % 2 == 0) == z;
      }
    }
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const int n = rng.uniform_int(1, 1000);
      const double a = kS.alpha(n), s = kS.sigma(n);
      const Vec x = rng.normal_vec(2), eps = rng.normal_vec(2);
      const Vec z = a * x + s * eps;
      const Vec v = a * eps - s * x;
      const auto [cs, co] = boundary_coeffs(BoundarySpec{}, kS, n);
      const Vec fe = cs * z + co * data_estimate(PredictionKind::epsilon, z, eps, a, s);
      const Vec fx = cs * z + co * data_estimate(PredictionKind::x, z, x, a, s);
      const Vec fv = cs * z + co * data_estimate(PredictionKind::v, z, v, a, s);
      worst = std::max({worst, (fe - fx).cwiseAbs().maxCoeff(), (fv - fx).cwiseAbs().maxCoeff()});
    }
    detail = std::string("boundary ") + (boundary_exact ? "exact" : "NOT exact") + ", max kind disagreement " +
             fmt("%.2e", worst);
    return boundary_exact && worst <= kParamTol;
  });

  criterion(6, "distillation quality on the 8-mode ring", [](std::string& detail) {
    const Trained& t = quality_model(0);
    const std::vector<ClassId> classes = eval_classes(0);
    const Mat smp = multistep_sample(t.model, uniform_sample_schedule(1000, 4), kQualityOmega, classes, 11,
                                     LatentCodec::identity(2));
    const Mat ref = teacher_ddim_sample(ring_teacher(), kReferenceSteps, kQualityOmega, classes, 12);
    Rng rng(6);
    const double sw = sliced_w1(smp, ref, kProjections, rng);
    const double threshold = kW1Fraction * ring().data_std();
    const double cov = mode_metrics(smp, ring()).coverage;
    detail = "omega " + fmt("%.0f", kQualityOmega) + ": sliced-W1 " + fmt("%.4f", sw) + " (< " + fmt("%.4f", threshold) +
             "), coverage " + fmt("%.3f", cov) + " (>= 0.875), " + std::to_string(kQualityIters) + " iters";
    return sw < threshold && cov >= kCoverageMin;
  });

  criterion(7, "skipping-step trend", [](std::string& detail) {
    int wins = 0;
    std::string rows;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const ProbeConfig probes{256, 200, 100 + static_cast<std::uint64_t>(seed)};
      const double e10 = endpoint_error(train_ring(kTrendIters, 10, seed).model, ring_teacher(), kQualityOmega,
                                        std::nullopt, probes);
      const double e1 = endpoint_error(train_ring(kTrendIters, 1, seed).model, ring_teacher(), kQualityOmega,
                                       std::nullopt, probes);
      if (e10 < e1) ++wins;
      rows += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " k=10 " + fmt("%.4f", e10) +
              " vs k=1 " + fmt("%.4f", e1);
    }
    detail = rows + " (" + std::to_string(wins) + "/" + std::to_string(kSeeds) + ")";
    return 2 * wins > kSeeds;
  });

  criterion(8, "guidance-scale purity trend", [](std::string& detail) {
    int wins = 0;
    std::string rows;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const Trained& t = quality_model(static_cast<std::uint64_t>(seed));
      const std::vector<ClassId> classes = eval_classes(static_cast<std::uint64_t>(seed));
      const SampleSchedule sched = uniform_sample_schedule(1000, 4);
      const Mat s0 = multistep_sample(t.model, sched, 0.0, classes, 21 + seed, LatentCodec::identity(2));
      const Mat s8 = multistep_sample(t.model, sched, 8.0, classes, 21 + seed, LatentCodec::identity(2));
      const double p0 = mode_metrics(s0, ring(), std::span<const ClassId>(classes)).purity;
      const double p8 = mode_metrics(s8, ring(), std::span<const ClassId>(classes)).purity;
      if (p8 >= p0) ++wins;
      rows += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " omega=8 " + fmt("%.3f", p8) +
              " vs omega=0 " + fmt("%.3f", p0);
    }
    detail = rows + " (" + std::to_string(wins) + "/" + std::to_string(kSeeds) + ")";
    return 2 * wins > kSeeds;
  });

  criterion(9, "consistency fine-tuning on a shifted ring", [](std::string& detail) {
    Vec shift(2);
    shift << 0.5, 0.5;
    const MixtureSpec moved = ring_mixture(8, 1.0, 0.1, shift);
    Rng rng(9);
    const LabeledData data = sample_mixture(moved, 50000, rng);
    const std::uint64_t calls_before = ring_teacher().calls();
    TrainConfig cfg = ring_train(kFinetuneIters, 10, 9);
    const TrainResult r = lcf_train(quality_model(0).model, data, cfg);
    const std::uint64_t teacher_calls = ring_teacher().calls() - calls_before;
    const std::vector<ClassId> classes = eval_classes(9);
    const Mat smp = multistep_sample(r.model, uniform_sample_schedule(1000, 4), kQualityOmega, classes, 31,
                                     LatentCodec::identity(2));
    Rng r1(91), r2(92), dir_rng(93);
    const Mat new_ref = sample_mixture(moved, kEvalSamples, r1).x;
    const Mat old_ref = sample_mixture(ring(), kEvalSamples, r2).x;
    const Mat dirs = random_directions(2, kProjections, dir_rng);
    const double to_new = sliced_w1(smp, new_ref, dirs), to_old = sliced_w1(smp, old_ref, dirs);
    detail = "sliced-W1 to shifted " + fmt("%.4f", to_new) + " vs original " + fmt("%.4f", to_old) +
             ", teacher calls " + std::to_string(teacher_calls);
    return to_new < to_old && teacher_calls == 0;
  });

  criterion(10, "one-step reduction and determinism", [&scratch](std::string& detail) {
    const ConsistencyModel& m = quality_model(0).model;
    const std::vector<ClassId> classes = eval_classes(0);
    const Mat one = multistep_sample(m, SampleSchedule{}, kQualityOmega, classes, 41, LatentCodec::identity(2));
    bool reduction = true;
    for (Eigen::Index i = 0; i < one.cols(); ++i) {
      const Vec z = initial_noise(kS, 2, 41, static_cast<std::size_t>(i));
      reduction &= one.col(i) == consistency_apply(m, z, kQualityOmega, classes[static_cast<std::size_t>(i)], kS.N, false);
    }
    // Two complete CLI runs in separate directories.
    std::map<std::string, std::string> files[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = scratch / ("det" + std::to_string(run));
      fs::create_directories(dir);
      std::ofstream(dir / "run.cfg") << kCliRun;
      CliOptions opts;
      opts.config = dir / "run.cfg";
      opts.out = dir / "out";
      std::stringstream err;
      if (run_main("distill", opts, err) != 0 || run_main("solver-bench", opts, err) != 0)
        throw std::runtime_error(err.str());
      CliOptions from_model = opts;
      from_model.resume = dir / "out" / "model.ckpt";
      if (run_main("finetune", from_model, err) != 0 || run_main("sample", from_model, err) != 0 ||
          run_main("eval", from_model, err) != 0)
        throw std::runtime_error(err.str());
      for (const char* f : {"samples.csv", "eval.csv", "solver_bench.csv"}) files[run][f] = slurp(dir / "out" / f);
      for (const char* f : {"train_log.csv", "finetune_log.csv"})
        files[run][f] = without_last_column(slurp(dir / "out" / f));
    }
    const bool identical = files[0] == files[1];
    detail = std::string("steps=1 ") + (reduction ? "equals" : "DIFFERS FROM") + " direct f on " +
             std::to_string(one.cols()) + " samples; CLI CSVs " + (identical ? "byte-identical" : "DIFFER") +
             " across runs (train logs without wall_ms)";
    return reduction && identical;
  });

  criterion(11, "persistence and resume", [&scratch](std::string& detail) {
    const Trained& t = quality_model(0);
    const fs::path path = scratch / "quality.ckpt";
    const Checkpoint written = model_to_checkpoint(t.model, &t.optimizer, LatentCodec::identity(2), "seed = 0\n");
    save_checkpoint(path, written);
    const ModelState st = model_from_checkpoint(load_checkpoint(path));
    std::stringstream a, b;
    write_checkpoint(a, written);
    write_checkpoint(b, model_to_checkpoint(st.model, &*st.optimizer, st.codec, "seed = 0\n"));
    const bool bit_exact = same_bits(st.model.ema.theta_online, t.model.ema.theta_online) &&
                           same_bits(st.model.ema.theta_target, t.model.ema.theta_target) &&
                           same_bits(st.optimizer->first_moment(), t.optimizer.first_moment()) &&
                           same_bits(st.optimizer->second_moment(), t.optimizer.second_moment()) &&
                           st.model.iteration == t.model.iteration && a.str() == b.str();

    // distill -> finetune through the CLI.
    const fs::path dir = scratch / "resume";
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << kCliRun;
    CliOptions opts;
    opts.config = dir / "run.cfg";
    opts.out = dir / "out";
    std::stringstream err;
    if (run_main("distill", opts, err) != 0) throw std::runtime_error(err.str());
    opts.resume = dir / "out" / "model.ckpt";
    if (run_main("finetune", opts, err) != 0) throw std::runtime_error(err.str());
    const long long distilled = model_from_checkpoint(load_checkpoint(dir / "out" / "model.ckpt")).model.iteration;
    const long long tuned = model_from_checkpoint(load_checkpoint(dir / "out" / "finetune.ckpt")).model.iteration;
    const std::string log = slurp(dir / "out" / "finetune_log.csv");
    const bool continues = distilled == 200 && tuned == 400 && log.find("\n250,") != std::string::npos;

    // Resumed training reproduces an uninterrupted run exactly.
    const ConsistencyModel m0 = ConsistencyModel::create(ring_net(), BoundarySpec{}, kS, 3, 0.99);
    const LabeledData data = ring_data(3);
    const TrainResult full = lcd_train(m0, ring_teacher(), data, ring_train(60, 10, 3));
    const TrainResult first = lcd_train(m0, ring_teacher(), data, ring_train(25, 10, 3));
    const TrainResult rest = lcd_train(first.model, ring_teacher(), data, ring_train(35, 10, 3), {}, first.optimizer);
    const bool resumed_equal = same_bits(full.model.ema.theta_online, rest.model.ema.theta_online) &&
                               same_bits(full.model.ema.theta_target, rest.model.ema.theta_target);

    detail = std::string("round trip ") + (bit_exact ? "bit-exact" : "NOT bit-exact") + "; distill " +
             std::to_string(distilled) + " -> finetune " + std::to_string(tuned) + " iterations; split training " +
             (resumed_equal ? "matches" : "DIFFERS FROM") + " uninterrupted run";
    return bit_exact && continues && resumed_equal;
  });

  fs::remove_all(scratch);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
