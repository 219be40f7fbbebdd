// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lcm/checkpoint.hpp"
#include "lcm/distill.hpp"
#include "lcm/sampler_eval.hpp"
#include "lcm/solver.hpp"

namespace lcm {

namespace fs = std::filesystem;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::config_parse:
    case Errc::config_unknown_key:
    case Errc::config_type:
    case Errc::config_range: return 3;
    case Errc::bad_magic:
    case Errc::schema_too_new:
    case Errc::truncated_file:
    case Errc::shape_mismatch: return 4;
    case Errc::io: return 5;
    case Errc::divergence:
    case Errc::rank_deficient:
    case Errc::stale_cache: return 6;
    default: return 7;
  }
}

RunConfig resolve_config(const CliOptions& opts) {
  RunConfig cfg = opts.config ? parse_config(*opts.config) : RunConfig();
  if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
  if (opts.out) cfg.set("out_dir", opts.out->string());
  if (opts.steps) cfg.set("steps", std::to_string(*opts.steps));
  if (opts.omega) {
    cfg.set("omega", format_real(*opts.omega));
    cfg.set("eval_omegas", format_real(*opts.omega));
  }
  cfg.validate();
  return cfg;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) fail(Errc::io, "write to " + path.string() + " failed");
}

std::uint64_t seed_of(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

// Stream tags keep each consumer of the master seed independent.
constexpr std::uint64_t kDataStream = 0x64617461;
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kClassStream = 0x636c6173;

struct Dataset {
  LabeledData data;
  std::optional<MixtureSpec> mixture;
  int num_classes = 0;
};

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  if (cfg.get_text("dataset") == "csv") {
    require(!cfg.get_text("data_csv").empty(), Errc::config_range, "dataset = csv needs data_csv");
    d.data = read_samples_csv(cfg.get_text("data_csv"));
    for (ClassId c : d.data.labels) d.num_classes = std::max(d.num_classes, c + 1);
    return d;
  }
  d.mixture = mixture_from(cfg);
  Rng rng(mix_seed(seed_of(cfg), kDataStream));
  d.data = sample_mixture(*d.mixture, cfg.get_int("data_samples"), rng);
  d.num_classes = d.mixture->num_classes();
  return d;
}

LatentCodec load_or_fit_codec(const RunConfig& cfg, const Mat& data) {
  if (!cfg.get_text("codec_checkpoint").empty())
    return codec_from_checkpoint(load_checkpoint(cfg.get_text("codec_checkpoint")));
  const auto dim = static_cast<int>(data.rows());
  if (parse_codec_kind(cfg.get_text("codec")) == CodecKind::identity) return LatentCodec::identity(dim);
  const auto latent = static_cast<int>(cfg.get_int("latent_dim"));
  return fit_linear_codec(data, latent == 0 ? dim : latent);
}

struct Teacher {
  TeacherModel model;
  std::optional<Denoiser> net;  // learned teachers only
};

Teacher load_teacher(const RunConfig& cfg, const Dataset& d, const LatentCodec& codec) {
  if (cfg.get_text("teacher") == "learned") {
    require(!cfg.get_text("teacher_checkpoint").empty(), Errc::config_range, "teacher = learned needs teacher_checkpoint");
    auto [net, sched] = teacher_from_checkpoint(load_checkpoint(cfg.get_text("teacher_checkpoint")));
    require(net.net.config().data_dim == codec.d_latent, Errc::shape_mismatch, "teacher works in another latent space");
    Denoiser copy = net;
    return {TeacherModel::learned(std::move(net), std::move(sched)), std::move(copy)};
  }
  require(d.mixture.has_value(), Errc::config_range, "an analytic teacher needs a mixture dataset");
  require(codec.kind == CodecKind::identity, Errc::config_range, "an analytic teacher needs the identity codec");
  return {TeacherModel::analytic(*d.mixture, schedule_from(cfg)), std::nullopt};
}

void write_train_log(const fs::path& path, const std::vector<TrainLogRow>& log) {
  auto out = open_out(path);
  out << "iter,loss,endpoint_error,wall_ms\n";
  for (const auto& r : log)
    out << r.iter << ',' << format_real(r.loss) << ',' << (r.endpoint_error ? format_real(*r.endpoint_error) : "")
        << ',' << r.wall_ms << '\n';
  close_out(out, path);
}

TrainHooks make_hooks(const RunConfig& cfg, const TeacherModel* analytic, const LatentCodec& codec,
                      const fs::path& ckpt_path) {
  TrainHooks hooks;
  if (analytic && analytic->is_analytic() && cfg.get_bool("log_endpoint_error")) {
    const double omega = 0.5 * (cfg.get_real("omega_min") + cfg.get_real("omega_max"));
    const ProbeConfig probes = probe_config_from(cfg);
    hooks.endpoint_error = [analytic, omega, probes](const ConsistencyModel& m) -> std::optional<double> {
      return endpoint_error(m, *analytic, omega, std::nullopt, probes);
    };
  }
  const std::string echo = cfg.echo();
  hooks.checkpoint = [ckpt_path, codec, echo](const ConsistencyModel& m, const Optimizer& opt) {
    save_checkpoint(ckpt_path, model_to_checkpoint(m, &opt, codec, echo));
  };
  return hooks;
}

ModelState load_model(const RunConfig& cfg, const std::optional<fs::path>& resume) {
  const fs::path path = resume ? *resume : fs::path(cfg.get_text("model_checkpoint"));
  require(!path.empty(), Errc::config_range, "this command needs model_checkpoint or --resume");
  return model_from_checkpoint(load_checkpoint(path));
}

void cmd_teacher_train(const RunConfig& cfg, const fs::path& out) {
  const Dataset d = load_dataset(cfg);
  const LatentCodec codec = load_or_fit_codec(cfg, d.data.x);
  LabeledData latent{encode(codec, d.data.x), d.data.labels};
  NetConfig nc = net_config_from(cfg, codec.d_latent, d.num_classes);
  nc.kind = PredictionKind::epsilon;
  const NoiseSchedule s = schedule_from(cfg);
  const auto res = train_teacher(Denoiser::create(nc, mix_seed(seed_of(cfg), kInitStream)), latent, s,
                                 teacher_train_config_from(cfg));
  save_checkpoint(out / "teacher.ckpt", teacher_to_checkpoint(res.net, s));
  const fs::path log_path = out / "teacher_log.csv";
  auto log = open_out(log_path);
  log << "iter,loss\n";
  const auto every = static_cast<std::size_t>(cfg.get_int("log_every"));
  for (std::size_t i = 0; i < res.loss_history.size(); ++i)
    if ((i + 1) % every == 0 || i + 1 == res.loss_history.size())
      log << i + 1 << ',' << format_real(res.loss_history[i]) << '\n';
  close_out(log, log_path);
}

void cmd_fit_codec(const RunConfig& cfg, const fs::path& out) {
  require(!cfg.get_text("codec_data_csv").empty(), Errc::config_range, "fit-codec needs codec_data_csv");
  const LabeledData d = read_samples_csv(cfg.get_text("codec_data_csv"));
  const auto latent = static_cast<int>(cfg.get_int("latent_dim"));
  const LatentCodec codec = fit_linear_codec(d.x, latent == 0 ? static_cast<int>(d.x.rows()) : latent);
  save_checkpoint(out / "codec.ckpt", codec_to_checkpoint(codec));
}

void cmd_distill(const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& resume) {
  const Dataset d = load_dataset(cfg);
  std::optional<ModelState> state;
  if (resume) state = load_model(cfg, resume);
  const LatentCodec codec = state ? state->codec : load_or_fit_codec(cfg, d.data.x);
  const Teacher teacher = load_teacher(cfg, d, codec);
  LabeledData latent{encode(codec, d.data.x), d.data.labels};
  ConsistencyModel m;
  std::optional<Optimizer> opt;
  if (state) {
    m = std::move(state->model);
    opt = std::move(state->optimizer);
  } else if (teacher.net && cfg.get_bool("init_from_teacher")) {
    NetConfig nc = teacher.net->net.config();
    m = ConsistencyModel::create(nc, boundary_from(cfg), teacher.model.schedule(), mix_seed(seed_of(cfg), kInitStream),
                                 cfg.get_real("mu"));
    m = init_from_teacher(std::move(m), teacher.model);
  } else {
    m = ConsistencyModel::create(net_config_from(cfg, codec.d_latent, d.num_classes), boundary_from(cfg),
                                 teacher.model.schedule(), mix_seed(seed_of(cfg), kInitStream), cfg.get_real("mu"));
  }
  const TrainHooks hooks = make_hooks(cfg, &teacher.model, codec, out / "model.ckpt");
  const TrainResult res = lcd_train(std::move(m), teacher.model, latent, train_config_from(cfg), hooks, opt);
  save_checkpoint(out / "model.ckpt", model_to_checkpoint(res.model, &res.optimizer, codec, cfg.echo()));
  write_train_log(out / "train_log.csv", res.log);
}

void cmd_finetune(const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& resume) {
  ModelState state = load_model(cfg, resume);
  const Dataset d = load_dataset(cfg);
  LabeledData latent{encode(state.codec, d.data.x), d.data.labels};
  // The teacher is only used for logging, never inside the loss.
  std::optional<TeacherModel> probe_teacher;
  if (d.mixture && state.codec.kind == CodecKind::identity && cfg.get_text("teacher") == "analytic")
    probe_teacher = TeacherModel::analytic(*d.mixture, state.model.schedule);
  const TrainHooks hooks =
      make_hooks(cfg, probe_teacher ? &*probe_teacher : nullptr, state.codec, out / "finetune.ckpt");
  const TrainResult res = lcf_train(std::move(state.model), latent, train_config_from(cfg), hooks, state.optimizer);
  save_checkpoint(out / "finetune.ckpt", model_to_checkpoint(res.model, &res.optimizer, state.codec, cfg.echo()));
  write_train_log(out / "finetune_log.csv", res.log);
}

std::vector<ClassId> sample_classes(const ConsistencyModel& m, const RunConfig& cfg, int count) {
  const auto fixed = static_cast<ClassId>(cfg.get_int("class"));
  const int classes = m.net.config().num_classes;
  std::vector<ClassId> out(static_cast<std::size_t>(count), kNullClass);
  if (fixed >= 0) {
    require(fixed < classes, Errc::config_range, "class exceeds the model's class count");
    std::fill(out.begin(), out.end(), fixed);
  } else if (classes > 0) {
    Rng rng(mix_seed(seed_of(cfg), kClassStream));
    for (auto& c : out) c = rng.uniform_int(0, classes - 1);
  }
  return out;
}

void cmd_sample(const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& resume) {
  const ModelState st = load_model(cfg, resume);
  const SampleSchedule sched = cfg.get_ints("taus").empty()
                                   ? uniform_sample_schedule(st.model.schedule.N, static_cast<int>(cfg.get_int("steps")))
                                   : SampleSchedule{cfg.get_ints("taus")};
  const auto count = static_cast<int>(cfg.get_int("sample_count"));
  const std::vector<ClassId> classes = sample_classes(st.model, cfg, count);
  const double omega = cfg.get_real("omega");
  const Mat x = multistep_sample(st.model, sched, omega, classes, seed_of(cfg), st.codec);
  write_samples_csv(out / "samples.csv", x, classes, omega);
  if (cfg.get_bool("svg")) write_scatter_svg(out / "samples.svg", x, classes);
}

void cmd_eval(const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& resume) {
  const ModelState st = load_model(cfg, resume);
  require(st.codec.kind == CodecKind::identity, Errc::config_range, "evaluation runs in data space");
  const TeacherModel T = TeacherModel::analytic(mixture_from(cfg), st.model.schedule);
  const EvalReport rep = evaluate(st.model, T, eval_config_from(cfg), st.codec);
  const fs::path path = out / "eval.csv";
  auto csv = open_out(path);
  csv << "omega,sliced_w1,mode_coverage,purity,endpoint_error\n";
  for (const auto& r : rep.per_omega)
    csv << format_real(r.omega) << ',' << format_real(r.sliced_w1) << ',' << format_real(r.coverage) << ','
        << format_real(r.purity) << ',' << format_real(r.endpoint_error) << '\n';
  csv << "mean," << format_real(rep.sliced_w1) << ',' << format_real(rep.mode_coverage) << ",,"
      << format_real(rep.mean_endpoint_error) << '\n';
  close_out(csv, path);
}

void cmd_solver_bench(const RunConfig& cfg, const fs::path& out) {
  const TeacherModel T = TeacherModel::analytic(mixture_from(cfg), schedule_from(cfg));
  const auto rows = solver_order_study(T, solver_bench_config_from(cfg));
  const fs::path path = out / "solver_bench.csv";
  auto csv = open_out(path);
  csv << "solver,k,step_size,endpoint_error,fitted_order\n";
  for (const auto& r : rows)
    csv << to_string(r.solver) << ',' << r.k << ',' << format_real(r.step_size) << ','
        << format_real(r.endpoint_error) << ',' << format_real(r.fitted_order) << '\n';
  close_out(csv, path);
}

}  // namespace

void run(const std::string& command, const RunConfig& cfg, const std::optional<fs::path>& resume) {
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
    fail(Errc::config_range, "unknown command '" + command + "'");
  const fs::path out = cfg.get_text("out_dir");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(Errc::io, "cannot create " + out.string() + ": " + ec.message());
  if (command == "teacher-train") cmd_teacher_train(cfg, out);
  else if (command == "fit-codec") cmd_fit_codec(cfg, out);
  else if (command == "distill") cmd_distill(cfg, out, resume);
  else if (command == "finetune") cmd_finetune(cfg, out, resume);
  else if (command == "sample") cmd_sample(cfg, out, resume);
  else if (command == "eval") cmd_eval(cfg, out, resume);
  else cmd_solver_bench(cfg, out);
}

int run_main(const std::string& command, const CliOptions& opts, std::ostream& err) {
  try {
    run(command, resolve_config(opts), opts.resume);
    return 0;
  } catch (const Error& e) {
    err << "lcmkit " << command << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "lcmkit " << command << ": " << e.what() << '\n';
    return 1;
  }
}

LabeledData read_samples_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(Errc::empty_set, path.string() + " has no header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<int> coord_cols;
  int class_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    std::string h = header[static_cast<std::size_t>(i)];
    if (!h.empty() && h.back() == '\r') h.pop_back();
    if (h == "class") class_col = i;
    else if (h.size() > 1 && h[0] == 'x') coord_cols.push_back(i);
  }
  require(!coord_cols.empty(), Errc::config_range, path.string() + " has no x0.. columns");
  std::vector<std::vector<double>> cols;
  std::vector<ClassId> labels;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    require(cells.size() == header.size(), Errc::config_parse,
            path.string() + " line " + std::to_string(number) + ": wrong number of fields");
    std::vector<double> row;
    for (int c : coord_cols) {
      const std::string& s = cells[static_cast<std::size_t>(c)];
      double v = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      require(r.ec == std::errc() && r.ptr == s.data() + s.size(), Errc::config_parse,
              path.string() + " line " + std::to_string(number) + ": bad number '" + s + "'");
      row.push_back(v);
    }
    cols.push_back(std::move(row));
    labels.push_back(class_col >= 0 ? std::stoi(cells[static_cast<std::size_t>(class_col)]) : kNullClass);
  }
  require(!cols.empty(), Errc::empty_set, path.string() + " has no samples");
  LabeledData d;
  d.x.resize(static_cast<Eigen::Index>(coord_cols.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < coord_cols.size(); ++i)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  d.labels = std::move(labels);
  return d;
}

void write_samples_csv(const fs::path& path, const Mat& x, const std::vector<ClassId>& classes, double omega) {
  require(static_cast<Eigen::Index>(classes.size()) == x.cols(), Errc::dimension_mismatch, "one class per sample");
  auto out = open_out(path);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out << 'x' << i << ',';
  out << "class,omega\n";
  const std::string w = format_real(omega);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out << format_real(x(i, j)) << ',';
    out << classes[static_cast<std::size_t>(j)] << ',' << w << '\n';
  }
  close_out(out, path);
}

void write_scatter_svg(const fs::path& path, const Mat& x, const std::vector<ClassId>& classes) {
  require(x.rows() >= 2, Errc::dimension_mismatch, "scatter plots need two coordinates");
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double size = 512.0, pad = 16.0;
  const double x0 = x.row(0).minCoeff(), x1 = x.row(0).maxCoeff();
  const double y0 = x.row(1).minCoeff(), y1 = x.row(1).maxCoeff();
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double px = pad + (x(0, j) - x0) / span * (size - 2 * pad);
    const double py = size - pad - (x(1, j) - y0) / span * (size - 2 * pad);
    const ClassId c = classes.empty() ? kNullClass : classes[static_cast<std::size_t>(j)];
    const char* color = c < 0 ? "#000000" : palette[c % 10];
    out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.5\" fill=\"" << color << "\"/>\n";
  }
  out << "</svg>\n";
  close_out(out, path);
}

}  // namespace lcm
