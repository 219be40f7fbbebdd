// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace lcm {

namespace {

using VT = ValueType;

const std::vector<KeySpec> kSchema = {
    {"seed", VT::integer, "0", "master seed"},
    {"out_dir", VT::text, "out", "directory for every artifact"},
    // noise schedule
    {"N", VT::integer, "1000", "number of schedule steps"},
    {"beta_min", VT::real, "0.0001", "first beta of the linear schedule"},
    {"beta_max", VT::real, "0.02", "last beta of the linear schedule"},
    // data
    {"dataset", VT::text, "ring", "ring | two_component | standard_normal | csv"},
    {"ring_modes", VT::integer, "8", ""},
    {"ring_radius", VT::real, "1.0", ""},
    {"ring_std", VT::real, "0.1", ""},
    {"ring_shift_x", VT::real, "0", ""},
    {"ring_shift_y", VT::real, "0", ""},
    {"normal_dim", VT::integer, "2", "dimension of the standard_normal dataset"},
    {"data_csv", VT::text, "", "sample CSV for dataset = csv"},
    {"data_samples", VT::integer, "50000", "training points drawn from a mixture dataset"},
    // network
    {"hidden", VT::integer, "128", ""},
    {"hidden_layers", VT::integer, "3", ""},
    {"embed_dim", VT::integer, "16", "Fourier embedding width (even)"},
    {"prediction_kind", VT::text, "epsilon", "epsilon | x | v"},
    {"t_freq_min", VT::real, "1", ""},
    {"t_freq_max", VT::real, "1000", ""},
    {"omega_freq_min", VT::real, "1", ""},
    {"omega_freq_max", VT::real, "1000", ""},
    {"class_conditional", VT::boolean, "true", "feed class labels to the networks"},
    // teacher
    {"teacher", VT::text, "analytic", "analytic | learned"},
    {"teacher_checkpoint", VT::text, "", "learned teacher to distill from"},
    {"teacher_lr", VT::real, "0.001", ""},
    {"teacher_iters", VT::integer, "5000", ""},
    {"teacher_batch", VT::integer, "64", ""},
    {"teacher_optimizer", VT::text, "adam", "sgd | adam"},
    {"cond_drop", VT::real, "0.1", "label dropout while training the teacher"},
    // consistency boundary
    {"sigma_data", VT::real, "0.5", ""},
    {"t_scale", VT::real, "0.01", ""},
    // distillation / fine-tuning
    {"lr", VT::real, "8e-6", ""},
    {"mu", VT::real, "0.999943", "EMA rate of the target network"},
    {"batch", VT::integer, "64", ""},
    {"iters", VT::integer, "1000", ""},
    {"k", VT::integer, "20", "skipping interval"},
    {"omega_min", VT::real, "2", ""},
    {"omega_max", VT::real, "14", ""},
    {"metric", VT::text, "squared_l2", "squared_l2 | huber"},
    {"huber_delta", VT::real, "1", ""},
    {"solver", VT::text, "ddim", "ddim | dpm2 | dpmpp2"},
    {"optimizer", VT::text, "sgd", "sgd | adam"},
    {"log_every", VT::integer, "100", ""},
    {"checkpoint_every", VT::integer, "0", "0 writes only the final checkpoint"},
    {"init_from_teacher", VT::boolean, "true", "copy learned teacher weights before distilling"},
    {"log_endpoint_error", VT::boolean, "true", "oracle endpoint error in train logs (analytic teacher)"},
    {"probe_count", VT::integer, "64", ""},
    {"probe_substeps", VT::integer, "200", ""},
    // latent codec
    {"codec", VT::text, "identity", "identity | linear"},
    {"latent_dim", VT::integer, "0", "0 keeps the data dimension"},
    {"codec_checkpoint", VT::text, "", ""},
    {"codec_data_csv", VT::text, "", "samples the linear codec is fitted on"},
    // sampling
    {"model_checkpoint", VT::text, "", ""},
    {"steps", VT::integer, "4", ""},
    {"taus", VT::int_list, "", "explicit re-noising indices; empty uses the uniform rule"},
    {"omega", VT::real, "8", ""},
    {"class", VT::integer, "-1", "-1 draws classes from the dataset weights"},
    {"sample_count", VT::integer, "1000", ""},
    {"svg", VT::boolean, "false", "also write a scatter plot"},
    // evaluation
    {"eval_omegas", VT::real_list, "0,2,8", ""},
    {"eval_samples", VT::integer, "2000", ""},
    {"reference_steps", VT::integer, "500", ""},
    {"projections", VT::integer, "128", ""},
    // solver bench
    {"bench_n_hi", VT::integer, "880", ""},
    {"bench_n_lo", VT::integer, "80", ""},
    {"bench_step_counts", VT::int_list, "5,10,20,40,80", ""},
    {"bench_probes", VT::integer, "32", ""},
    {"bench_oracle_substeps", VT::integer, "10000", ""},
};

const char* type_name(VT t) {
  switch (t) {
    case VT::integer: return "an integer";
    case VT::real: return "a real";
    case VT::boolean: return "a boolean";
    case VT::text: return "a string";
    case VT::int_list: return "a comma-separated integer list";
    case VT::real_list: return "a comma-separated real list";
  }
  return "?";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_ll(const std::string& s, long long& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && !s.empty();
}

bool parse_double(const std::string& s, double& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && !s.empty();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  if (trim(s).empty()) return parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

bool well_typed(VT t, const std::string& v) {
  long long i;
  double d;
  switch (t) {
    case VT::integer: return parse_ll(v, i);
    case VT::real: return parse_double(v, d);
    case VT::boolean: return v == "true" || v == "false";
    case VT::text: return true;
    case VT::int_list:
      for (const auto& p : split_list(v))
        if (!parse_ll(p, i)) return false;
      return true;
    case VT::real_list:
      for (const auto& p : split_list(v))
        if (!parse_double(p, d)) return false;
      return true;
  }
  return false;
}

void range(bool ok, const std::string& key, const std::string& what) {
  if (!ok) fail(Errc::config_range, key + " " + what);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : kSchema) values_[k.name] = k.default_value;
}

const std::vector<KeySpec>& RunConfig::schema() { return kSchema; }

const KeySpec* RunConfig::find_key(const std::string& key) {
  for (const auto& k : kSchema)
    if (k.name == key) return &k;
  return nullptr;
}

void RunConfig::set(const std::string& key, const std::string& value, int line) {
  const std::string where = line > 0 ? "line " + std::to_string(line) + ": " : "";
  const KeySpec* spec = find_key(key);
  if (!spec) fail(Errc::config_unknown_key, where + "unknown key '" + key + "'");
  if (!well_typed(spec->type, value))
    fail(Errc::config_type, where + "key '" + key + "' expects " + type_name(spec->type) + ", got '" + value + "'");
  values_[key] = value;
  explicit_.insert(key);
}

const std::string& RunConfig::raw(const std::string& key, ValueType expect) const {
  const KeySpec* spec = find_key(key);
  if (!spec) fail(Errc::config_unknown_key, "unknown key '" + key + "'");
  if (spec->type != expect) fail(Errc::config_type, "key '" + key + "' is not " + type_name(expect));
  return values_.at(key);
}

long long RunConfig::get_int(const std::string& key) const {
  long long v = 0;
  parse_ll(raw(key, VT::integer), v);
  return v;
}

double RunConfig::get_real(const std::string& key) const {
  double v = 0;
  parse_double(raw(key, VT::real), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return raw(key, VT::boolean) == "true"; }

const std::string& RunConfig::get_text(const std::string& key) const { return raw(key, VT::text); }

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& p : split_list(raw(key, VT::int_list))) {
    long long v = 0;
    parse_ll(p, v);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& p : split_list(raw(key, VT::real_list))) {
    double v = 0;
    parse_double(p, v);
    out.push_back(v);
  }
  return out;
}

void RunConfig::validate() const {
  range(get_int("N") >= 2, "N", "must be >= 2");
  range(get_real("beta_min") > 0 && get_real("beta_min") <= get_real("beta_max") && get_real("beta_max") < 1,
        "beta_min/beta_max", "must satisfy 0 < beta_min <= beta_max < 1");
  const std::string& ds = get_text("dataset");
  range(ds == "ring" || ds == "two_component" || ds == "standard_normal" || ds == "csv", "dataset",
        "must be ring, two_component, standard_normal or csv");
  range(get_int("ring_modes") >= 1, "ring_modes", "must be >= 1");
  range(get_real("ring_std") > 0, "ring_std", "must be positive");
  range(get_int("normal_dim") >= 1, "normal_dim", "must be >= 1");
  range(get_int("data_samples") >= 1, "data_samples", "must be >= 1");
  range(get_int("hidden") >= 1 && get_int("hidden_layers") >= 1, "hidden/hidden_layers", "must be >= 1");
  range(get_int("embed_dim") >= 2 && get_int("embed_dim") % 2 == 0, "embed_dim", "must be even and >= 2");
  range(get_real("t_freq_min") > 0 && get_real("t_freq_min") <= get_real("t_freq_max"), "t_freq_min/t_freq_max",
        "must satisfy 0 < min <= max");
  range(get_real("omega_freq_min") > 0 && get_real("omega_freq_min") <= get_real("omega_freq_max"),
        "omega_freq_min/omega_freq_max", "must satisfy 0 < min <= max");
  range(get_text("teacher") == "analytic" || get_text("teacher") == "learned", "teacher", "must be analytic or learned");
  range(get_real("teacher_lr") > 0, "teacher_lr", "must be positive");
  range(get_int("teacher_iters") >= 0 && get_int("teacher_batch") >= 1, "teacher_iters/teacher_batch",
        "must be non-negative / positive");
  range(get_real("cond_drop") >= 0 && get_real("cond_drop") <= 1, "cond_drop", "must be in [0, 1]");
  range(get_real("sigma_data") > 0, "sigma_data", "must be positive");
  range(get_real("t_scale") > 0, "t_scale", "must be positive");
  range(get_real("lr") > 0, "lr", "must be positive");
  range(get_real("mu") >= 0 && get_real("mu") <= 1, "mu", "must be in [0, 1]");
  range(get_int("batch") >= 1, "batch", "must be >= 1");
  range(get_int("iters") >= 0, "iters", "must be >= 0");
  range(get_int("k") >= 1 && get_int("k") <= get_int("N") - 1, "k", "must be in [1, N-1]");
  range(get_real("omega_min") <= get_real("omega_max"), "omega_min", "must not exceed omega_max");
  range(get_real("huber_delta") > 0, "huber_delta", "must be positive");
  range(get_int("log_every") >= 1, "log_every", "must be >= 1");
  range(get_int("checkpoint_every") >= 0, "checkpoint_every", "must be >= 0");
  range(get_int("probe_count") >= 1 && get_int("probe_substeps") >= 1, "probe_count/probe_substeps", "must be >= 1");
  range(get_int("latent_dim") >= 0, "latent_dim", "must be >= 0");
  range(get_int("steps") >= 1 && get_int("steps") <= get_int("N"), "steps", "must be in [1, N]");
  range(get_int("sample_count") >= 1, "sample_count", "must be >= 1");
  range(get_int("class") >= -1, "class", "must be >= -1");
  range(!get_reals("eval_omegas").empty(), "eval_omegas", "must not be empty");
  range(get_int("eval_samples") >= 1 && get_int("projections") >= 1, "eval_samples/projections", "must be >= 1");
  range(get_int("reference_steps") >= 1 && get_int("reference_steps") <= get_int("N"), "reference_steps",
        "must be in [1, N]");
  range(get_int("bench_probes") >= 1 && get_int("bench_oracle_substeps") >= 1, "bench_probes", "must be >= 1");
  // Enumerations are checked by their parsers.
  parse_prediction_kind(get_text("prediction_kind"));
  parse_optimizer_kind(get_text("optimizer"));
  parse_optimizer_kind(get_text("teacher_optimizer"));
  parse_metric_kind(get_text("metric"));
  parse_solver_kind(get_text("solver"));
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& k : kSchema) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::config_parse, "line " + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(Errc::config_parse, "line " + std::to_string(number) + ": missing key");
    cfg.set(key, value, number);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

NoiseSchedule schedule_from(const RunConfig& cfg) {
  return make_vp_schedule(static_cast<int>(cfg.get_int("N")), cfg.get_real("beta_min"), cfg.get_real("beta_max"));
}

MixtureSpec mixture_from(const RunConfig& cfg) {
  const std::string& ds = cfg.get_text("dataset");
  if (ds == "ring") {
    Vec shift(2);
    shift << cfg.get_real("ring_shift_x"), cfg.get_real("ring_shift_y");
    return ring_mixture(static_cast<int>(cfg.get_int("ring_modes")), cfg.get_real("ring_radius"),
                        cfg.get_real("ring_std"), shift);
  }
  if (ds == "two_component") return two_component_mixture();
  if (ds == "standard_normal") return standard_normal_mixture(static_cast<int>(cfg.get_int("normal_dim")));
  fail(Errc::config_range, "dataset '" + ds + "' has no analytic mixture");
}

NetConfig net_config_from(const RunConfig& cfg, int data_dim, int num_classes) {
  NetConfig nc;
  nc.data_dim = data_dim;
  nc.hidden = static_cast<int>(cfg.get_int("hidden"));
  nc.hidden_layers = static_cast<int>(cfg.get_int("hidden_layers"));
  nc.embed_dim = static_cast<int>(cfg.get_int("embed_dim"));
  nc.num_classes = cfg.get_bool("class_conditional") ? num_classes : 0;
  nc.kind = parse_prediction_kind(cfg.get_text("prediction_kind"));
  nc.t_freq_min = cfg.get_real("t_freq_min");
  nc.t_freq_max = cfg.get_real("t_freq_max");
  nc.omega_freq_min = cfg.get_real("omega_freq_min");
  nc.omega_freq_max = cfg.get_real("omega_freq_max");
  return nc;
}

BoundarySpec boundary_from(const RunConfig& cfg) { return {cfg.get_real("sigma_data"), cfg.get_real("t_scale")}; }

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.get_real("lr");
  t.mu = cfg.get_real("mu");
  t.batch = static_cast<int>(cfg.get_int("batch"));
  t.iters = cfg.get_int("iters");
  t.k = static_cast<int>(cfg.get_int("k"));
  t.omega_min = cfg.get_real("omega_min");
  t.omega_max = cfg.get_real("omega_max");
  t.metric.kind = parse_metric_kind(cfg.get_text("metric"));
  t.metric.delta = cfg.get_real("huber_delta");
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  t.solver = parse_solver_kind(cfg.get_text("solver"));
  t.optimizer = parse_optimizer_kind(cfg.get_text("optimizer"));
  t.log_every = static_cast<int>(cfg.get_int("log_every"));
  t.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every"));
  return t;
}

TeacherTrainConfig teacher_train_config_from(const RunConfig& cfg) {
  TeacherTrainConfig t;
  t.lr = cfg.get_real("teacher_lr");
  t.optimizer = parse_optimizer_kind(cfg.get_text("teacher_optimizer"));
  t.batch = static_cast<int>(cfg.get_int("teacher_batch"));
  t.iters = static_cast<int>(cfg.get_int("teacher_iters"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  t.cond_drop = cfg.get_real("cond_drop");
  return t;
}

SolverBenchConfig solver_bench_config_from(const RunConfig& cfg) {
  SolverBenchConfig b;
  b.n_hi = static_cast<int>(cfg.get_int("bench_n_hi"));
  b.n_lo = static_cast<int>(cfg.get_int("bench_n_lo"));
  b.step_counts = cfg.get_ints("bench_step_counts");
  b.probes = static_cast<int>(cfg.get_int("bench_probes"));
  b.oracle_substeps = static_cast<int>(cfg.get_int("bench_oracle_substeps"));
  b.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  return b;
}

ProbeConfig probe_config_from(const RunConfig& cfg) {
  ProbeConfig p;
  p.count = static_cast<int>(cfg.get_int("probe_count"));
  p.oracle_substeps = static_cast<int>(cfg.get_int("probe_substeps"));
  p.seed = mix_seed(static_cast<std::uint64_t>(cfg.get_int("seed")), 0x70726f6265ULL);
  return p;
}

EvalConfig eval_config_from(const RunConfig& cfg) {
  EvalConfig e;
  e.omegas = cfg.get_reals("eval_omegas");
  e.steps = static_cast<int>(cfg.get_int("steps"));
  e.samples = static_cast<int>(cfg.get_int("eval_samples"));
  e.reference_steps = static_cast<int>(cfg.get_int("reference_steps"));
  e.projections = static_cast<int>(cfg.get_int("projections"));
  e.probes = probe_config_from(cfg);
  e.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  return e;
}

}  // namespace lcm
