// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "lcm/checkpoint.hpp"
#include "lcm/cli.hpp"
#include "lcm/config.hpp"
#include "lcm/sampler_eval.hpp"
#include "support.hpp"

using namespace lcm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lcmkit_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Drops the last CSV column (wall clock) from every line.
std::string without_last_column(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

const char* kSmallRun = R"(# small, fast run
seed = 5
hidden = 16
hidden_layers = 2
embed_dim = 8
prediction_kind = x
data_samples = 300
iters = 30
batch = 8
k = 10
mu = 0.95
lr = 1e-3
optimizer = adam
log_every = 10
probe_count = 4
probe_substeps = 10
sample_count = 40
eval_samples = 100
reference_steps = 20
projections = 8
bench_step_counts = 5,10,20
bench_probes = 4
bench_oracle_substeps = 500
)";

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("config defaults") {
  const RunConfig cfg = parse_config_text("");
  CHECK(cfg.get_int("k") == 20);
  CHECK(cfg.get_real("omega_min") == 2.0);
  CHECK(cfg.get_real("omega_max") == 14.0);
  CHECK(cfg.get_real("mu") == 0.999943);
  CHECK(cfg.get_real("lr") == 8e-6);
  CHECK(cfg.get_int("N") == 1000);
  const TrainConfig tc = train_config_from(cfg);
  CHECK(tc.k == 20);
  CHECK(tc.mu == 0.999943);
  CHECK(tc.lr == 8e-6);
  CHECK(tc.omega_min == 2.0);
  CHECK(tc.omega_max == 14.0);
  CHECK(schedule_from(cfg).alpha_bar == make_vp_schedule(1000, 1e-4, 0.02).alpha_bar);
  CHECK(eval_config_from(cfg).omegas == std::vector<double>{0.0, 2.0, 8.0});
}

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config_text("# comment\n\n  k = 10   # trailing\nmetric=huber\nomega_min = 3\n");
  CHECK(cfg.get_int("k") == 10);
  CHECK(cfg.is_set("k"));
  CHECK_FALSE(cfg.is_set("mu"));
  CHECK(train_config_from(cfg).metric.kind == MetricKind::huber);
  // echo is itself a valid config that reproduces every value.
  CHECK(parse_config_text(cfg.echo()).values() == cfg.values());
}

TEST_CASE("config errors") {
  CHECK_ERRC(parse_config_text("mu = 2.0\n"), Errc::config_range);
  CHECK_ERRC(parse_config_text("omega_min = 9\nomega_max = 3\n"), Errc::config_range);
  CHECK_ERRC(parse_config_text("bogus_key = 1\n"), Errc::config_unknown_key);
  CHECK_ERRC(parse_config_text("k = twenty\n"), Errc::config_type);
  CHECK_ERRC(parse_config_text("k = 2.5\n"), Errc::config_type);
  CHECK_ERRC(parse_config_text("seed = 1\nthis line has no equals\n"), Errc::config_parse);
  try {
    parse_config_text("seed = 1\nthis line has no equals\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_ERRC(parse_config("/nonexistent/lcmkit.cfg"), Errc::io);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint c;
  c.set_meta("kind", "test");
  c.set_meta("note", "a=b with spaces");
  c.add({"odd", {2, 3},
         {0.0, -0.0, std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::quiet_NaN(), 1.0 / 3.0}});
  c.add({"empty", {0}, {}});
  std::stringstream buf;
  write_checkpoint(buf, c);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == "LCMKIT01");
  std::stringstream in(bytes);
  const Checkpoint r = read_checkpoint(in);
  CHECK(r.metadata == c.metadata);
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.tensors[0].dims == c.tensors[0].dims);
  CHECK(same_bits(r.tensors[0].data, c.tensors[0].data));
  CHECK(r.tensors[1].data.empty());
  CHECK_ERRC(r.require_tensor("odd", 5), Errc::shape_mismatch);
  CHECK_ERRC(r.require_tensor("missing", 1), Errc::shape_mismatch);
  CHECK_ERRC(r.require_meta("missing"), Errc::shape_mismatch);

  // Corruption.
  std::string bad = bytes;
  bad[3] = 'X';
  std::stringstream b1(bad);
  CHECK_ERRC(read_checkpoint(b1), Errc::bad_magic);
  bad = bytes;
  bad[8] = 2;  // schema version, little-endian low byte
  std::stringstream b2(bad);
  CHECK_ERRC(read_checkpoint(b2), Errc::schema_too_new);
  for (std::size_t len = 8; len < bytes.size(); ++len) {
    std::stringstream cut(bytes.substr(0, len));
    CHECK_ERRC(read_checkpoint(cut), Errc::truncated_file);
  }
}

TEST_CASE("checkpoint files") {
  TempDir dir("ckpt");
  Checkpoint c;
  c.set_meta("kind", "test");
  c.add({"t", {3}, {1.0, 2.0, 3.0}});
  save_checkpoint(dir.path / "a.ckpt", c);
  CHECK(fs::exists(dir.path / "a.ckpt"));
  CHECK_FALSE(fs::exists(dir.path / "a.ckpt.tmp"));
  CHECK(same_bits(load_checkpoint(dir.path / "a.ckpt").tensors[0].data, c.tensors[0].data));
  CHECK_ERRC(save_checkpoint(dir.path / "missing_dir" / "b.ckpt", c), Errc::io);
  CHECK_FALSE(fs::exists(dir.path / "missing_dir" / "b.ckpt"));
  CHECK_ERRC(load_checkpoint(dir.path / "nope.ckpt"), Errc::io);
}

TEST_CASE("model state round trip") {
  NetConfig nc;
  nc.data_dim = 3;
  nc.hidden = 6;
  nc.hidden_layers = 2;
  nc.embed_dim = 4;
  nc.num_classes = 2;
  nc.kind = PredictionKind::v;
  nc.omega_freq_max = 50.0;
  const NoiseSchedule s = make_vp_schedule(500, 2e-4, 0.03);
  ConsistencyModel m = ConsistencyModel::create(nc, BoundarySpec{0.7, 0.02}, s, 4, 0.99);
  m.iteration = 1234;
  for (double& v : m.ema.theta_target) v = v * 0.5 + 1e-300;
  Optimizer opt(OptimizerKind::adam, 1e-3);
  std::vector<double> grad(m.ema.theta_online.size(), 0.1);
  opt.step(m.ema.theta_online, grad);
  LatentCodec codec;
  codec.kind = CodecKind::linear;
  codec.d_data = 4;
  codec.d_latent = 3;
  codec.encode_matrix = Mat::Random(3, 4);
  codec.decode_matrix = Mat::Random(4, 3);

  std::stringstream buf;
  write_checkpoint(buf, model_to_checkpoint(m, &opt, codec, "k = 10\nmu = 0.99\n"));
  std::stringstream in(buf.str());
  const ModelState st = model_from_checkpoint(read_checkpoint(in));
  CHECK(st.model.net.config() == m.net.config());
  CHECK(st.model.iteration == 1234);
  CHECK(st.model.ema.mu == 0.99);
  CHECK(same_bits(st.model.ema.theta_online, m.ema.theta_online));
  CHECK(same_bits(st.model.ema.theta_target, m.ema.theta_target));
  CHECK(st.model.boundary.sigma_data == 0.7);
  CHECK(st.model.boundary.t_scale == 0.02);
  CHECK(st.model.schedule.alpha_bar == s.alpha_bar);
  REQUIRE(st.optimizer.has_value());
  CHECK(st.optimizer->kind() == OptimizerKind::adam);
  CHECK(st.optimizer->steps() == 1);
  CHECK(same_bits(st.optimizer->first_moment(), opt.first_moment()));
  CHECK(same_bits(st.optimizer->second_moment(), opt.second_moment()));
  CHECK(st.codec.kind == CodecKind::linear);
  CHECK(st.codec.encode_matrix == codec.encode_matrix);
  CHECK(st.codec.decode_matrix == codec.decode_matrix);
  CHECK(st.config_echo.size() == 2);

  // A teacher checkpoint is not a model checkpoint.
  NetConfig tc = nc;
  tc.kind = PredictionKind::epsilon;
  const Denoiser d = Denoiser::create(tc, 2);
  const Checkpoint tck = teacher_to_checkpoint(d, s);
  const auto [d2, s2] = teacher_from_checkpoint(tck);
  CHECK(same_bits(d2.theta, d.theta));
  CHECK(d2.net.config() == tc);
  CHECK(s2.alpha_bar == s.alpha_bar);
  CHECK_ERRC(model_from_checkpoint(tck), Errc::shape_mismatch);

  const LatentCodec c2 = codec_from_checkpoint(codec_to_checkpoint(codec));
  CHECK(c2.encode_matrix == codec.encode_matrix);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Errc::config_parse) == 3);
  CHECK(exit_code_for(Errc::config_unknown_key) == 3);
  CHECK(exit_code_for(Errc::config_type) == 3);
  CHECK(exit_code_for(Errc::config_range) == 3);
  CHECK(exit_code_for(Errc::bad_magic) == 4);
  CHECK(exit_code_for(Errc::schema_too_new) == 4);
  CHECK(exit_code_for(Errc::truncated_file) == 4);
  CHECK(exit_code_for(Errc::shape_mismatch) == 4);
  CHECK(exit_code_for(Errc::io) == 5);
  CHECK(exit_code_for(Errc::divergence) == 6);
  CHECK(exit_code_for(Errc::invalid_k) == 7);
}

TEST_CASE("commands") {
  TempDir dir("cmd");
  const fs::path cfg_path = dir.path / "run.cfg";
  write_file(cfg_path, kSmallRun);
  CliOptions opts;
  opts.config = cfg_path;
  opts.out = dir.path / "out";
  std::stringstream err;

  SUBCASE("solver bench") {
    REQUIRE(run_main("solver-bench", opts, err) == 0);
    const std::string csv = slurp(*opts.out / "solver_bench.csv");
    CHECK(csv.rfind("solver,k,step_size,endpoint_error,fitted_order\n", 0) == 0);
    CHECK(csv.find("ddim,") != std::string::npos);
    CHECK(csv.find("dpmpp2,") != std::string::npos);
  }

  SUBCASE("distill, finetune, sample, eval") {
    REQUIRE(run_main("distill", opts, err) == 0);
    const fs::path model = *opts.out / "model.ckpt";
    const std::string log1 = slurp(*opts.out / "train_log.csv");
    const std::string ckpt1 = slurp(model);
    CHECK(log1.rfind("iter,loss,endpoint_error,wall_ms\n10,", 0) == 0);

    // Same config and seed: identical artifacts.
    REQUIRE(run_main("distill", opts, err) == 0);
    CHECK(slurp(model) == ckpt1);
    CHECK(without_last_column(slurp(*opts.out / "train_log.csv")) == without_last_column(log1));

    // Resumed fine-tuning continues the iteration counter.
    CliOptions ft = opts;
    ft.resume = model;
    REQUIRE(run_main("finetune", ft, err) == 0);
    const ModelState tuned = model_from_checkpoint(load_checkpoint(*opts.out / "finetune.ckpt"));
    CHECK(tuned.model.iteration == 60);
    CHECK(slurp(*opts.out / "finetune_log.csv").find("\n60,") != std::string::npos);

    // Single-step sampling is one consistency application per sample.
    CliOptions one = opts;
    one.resume = model;
    one.steps = 1;
    one.omega = 4.0;
    REQUIRE(run_main("sample", one, err) == 0);
    const std::string samples1 = slurp(*opts.out / "samples.csv");
    const LabeledData got = read_samples_csv(*opts.out / "samples.csv");
    const ModelState st = model_from_checkpoint(load_checkpoint(model));
    REQUIRE(got.size() == 40);
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      const Vec z = initial_noise(st.model.schedule, 2, 5, static_cast<std::size_t>(i));
      const Vec expect = consistency_apply(st.model, z, 4.0, got.labels[static_cast<std::size_t>(i)], 1000, false);
      CHECK((got.x.col(i) - expect).norm() < 1e-12);
    }
    REQUIRE(run_main("sample", one, err) == 0);
    CHECK(slurp(*opts.out / "samples.csv") == samples1);

    CliOptions ev = opts;
    ev.resume = model;
    REQUIRE(run_main("eval", ev, err) == 0);
    const std::string e1 = slurp(*opts.out / "eval.csv");
    CHECK(e1.rfind("omega,sliced_w1,mode_coverage,purity,endpoint_error\n", 0) == 0);
    CHECK(e1.find("\nmean,") != std::string::npos);
    REQUIRE(run_main("eval", ev, err) == 0);
    CHECK(slurp(*opts.out / "eval.csv") == e1);
  }

  SUBCASE("error paths") {
    write_file(cfg_path, "mu = 2.0\n");
    CHECK(run_main("distill", opts, err) == 3);
    CHECK(err.str().find("lcmkit distill:") == 0);
    write_file(cfg_path, "seed = 1\nnot a pair\n");
    CHECK(run_main("distill", opts, err) == 3);
    write_file(cfg_path, "frobnicate = 1\n");
    CHECK(run_main("distill", opts, err) == 3);
    write_file(cfg_path, kSmallRun);
    write_file(dir.path / "junk.ckpt", "not a checkpoint at all");
    CliOptions bad = opts;
    bad.resume = dir.path / "junk.ckpt";
    CHECK(run_main("sample", bad, err) == 4);
    bad.resume = dir.path / "absent.ckpt";
    CHECK(run_main("sample", bad, err) == 5);
    CHECK(run_main("sample", opts, err) == 3);  // no checkpoint configured
    CHECK(run_main("launch", opts, err) == 3);
    // A failed command leaves no checkpoint behind.
    CHECK_FALSE(fs::exists(*opts.out / "model.ckpt"));
    CHECK_FALSE(fs::exists(*opts.out / "model.ckpt.tmp"));
  }
}

TEST_CASE("samples csv round trip") {
  TempDir dir("csv");
  Mat x(2, 3);
  x << 0.1, -2.5, 1e-20, 3.0, 1.0 / 3.0, -0.0;
  write_samples_csv(dir.path / "s.csv", x, {0, kNullClass, 2}, 8.0);
  const LabeledData d = read_samples_csv(dir.path / "s.csv");
  CHECK(d.x == x);
  CHECK(d.labels == std::vector<ClassId>{0, kNullClass, 2});
  write_scatter_svg(dir.path / "s.svg", x, {0, kNullClass, 2});
  CHECK(slurp(dir.path / "s.svg").find("<svg") != std::string::npos);
}
