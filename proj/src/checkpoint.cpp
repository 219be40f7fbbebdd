// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lcm {

namespace {

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_bytes(std::ostream& out, const std::string& s) { out.write(s.data(), static_cast<std::streamsize>(s.size())); }

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(Errc::truncated_file, std::string("file ends inside ") + what);
}

template <class T>
T get(std::istream& in, const char* what) {
  T v;
  read_exact(in, reinterpret_cast<char*>(&v), sizeof(T), what);
  return to_le(v);
}

// Upper bound for a single allocation driven by file contents.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

double parse_real(const std::string& s, const std::string& key) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), Errc::shape_mismatch,
          "metadata '" + key + "' is not a number");
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), Errc::shape_mismatch,
          "metadata '" + key + "' is not an integer");
  return v;
}

Tensor vec_tensor(const std::string& name, const std::vector<double>& v) {
  return {name, {static_cast<std::uint64_t>(v.size())}, v};
}

Tensor mat_tensor(const std::string& name, const Mat& m) {
  Tensor t{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.assign(m.data(), m.data() + m.size());  // column-major
  return t;
}

Mat tensor_mat(const Tensor& t) {
  require(t.dims.size() == 2, Errc::shape_mismatch, "tensor " + t.name + " is not a matrix");
  Mat m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

void put_net_config(Checkpoint& c, const NetConfig& n) {
  c.set_meta("net.data_dim", std::to_string(n.data_dim));
  c.set_meta("net.hidden", std::to_string(n.hidden));
  c.set_meta("net.hidden_layers", std::to_string(n.hidden_layers));
  c.set_meta("net.embed_dim", std::to_string(n.embed_dim));
  c.set_meta("net.num_classes", std::to_string(n.num_classes));
  c.set_meta("net.omega_conditioned", n.omega_conditioned ? "1" : "0");
  c.set_meta("prediction_kind", to_string(n.kind));
  c.set_meta("net.t_freq_min", format_real(n.t_freq_min));
  c.set_meta("net.t_freq_max", format_real(n.t_freq_max));
  c.set_meta("net.omega_freq_min", format_real(n.omega_freq_min));
  c.set_meta("net.omega_freq_max", format_real(n.omega_freq_max));
}

NetConfig get_net_config(const Checkpoint& c) {
  auto i = [&](const char* k) { return static_cast<int>(parse_int(c.require_meta(k), k)); };
  auto r = [&](const char* k) { return parse_real(c.require_meta(k), k); };
  NetConfig n;
  n.data_dim = i("net.data_dim");
  n.hidden = i("net.hidden");
  n.hidden_layers = i("net.hidden_layers");
  n.embed_dim = i("net.embed_dim");
  n.num_classes = i("net.num_classes");
  n.omega_conditioned = c.require_meta("net.omega_conditioned") == "1";
  n.kind = parse_prediction_kind(c.require_meta("prediction_kind"));
  n.t_freq_min = r("net.t_freq_min");
  n.t_freq_max = r("net.t_freq_max");
  n.omega_freq_min = r("net.omega_freq_min");
  n.omega_freq_max = r("net.omega_freq_max");
  return n;
}

void put_schedule(Checkpoint& c, const NoiseSchedule& s) {
  c.set_meta("schedule.N", std::to_string(s.N));
  c.set_meta("schedule.beta_min", format_real(s.beta_min));
  c.set_meta("schedule.beta_max", format_real(s.beta_max));
}

NoiseSchedule get_schedule(const Checkpoint& c) {
  return make_vp_schedule(static_cast<int>(parse_int(c.require_meta("schedule.N"), "schedule.N")),
                          parse_real(c.require_meta("schedule.beta_min"), "schedule.beta_min"),
                          parse_real(c.require_meta("schedule.beta_max"), "schedule.beta_max"));
}

void put_codec(Checkpoint& c, const LatentCodec& codec) {
  c.set_meta("codec.kind", to_string(codec.kind));
  c.set_meta("codec.d_data", std::to_string(codec.d_data));
  c.set_meta("codec.d_latent", std::to_string(codec.d_latent));
  if (codec.kind == CodecKind::linear) {
    c.add(mat_tensor("codec.encode", codec.encode_matrix));
    c.add(mat_tensor("codec.decode", codec.decode_matrix));
  }
}

LatentCodec get_codec(const Checkpoint& c) {
  LatentCodec codec;
  codec.kind = parse_codec_kind(c.require_meta("codec.kind"));
  codec.d_data = static_cast<int>(parse_int(c.require_meta("codec.d_data"), "codec.d_data"));
  codec.d_latent = static_cast<int>(parse_int(c.require_meta("codec.d_latent"), "codec.d_latent"));
  if (codec.kind == CodecKind::linear) {
    const auto n = static_cast<std::size_t>(codec.d_data) * static_cast<std::size_t>(codec.d_latent);
    codec.encode_matrix = tensor_mat(c.require_tensor("codec.encode", n));
    codec.decode_matrix = tensor_mat(c.require_tensor("codec.decode", n));
    require(codec.encode_matrix.rows() == codec.d_latent && codec.decode_matrix.rows() == codec.d_data,
            Errc::shape_mismatch, "codec matrices have the wrong orientation");
  } else {
    require(codec.d_data == codec.d_latent, Errc::shape_mismatch, "identity codec with differing dimensions");
  }
  return codec;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  require(key.find_first_of("=\n") == std::string::npos && value.find('\n') == std::string::npos,
          Errc::invalid_range, "metadata entries cannot contain '=' in keys or newlines");
  for (auto& kv : metadata) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
  for (const auto& kv : metadata)
    if (kv.first == key) return kv.second;
  return std::nullopt;
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  for (const auto& kv : metadata)
    if (kv.first == key) return kv.second;
  fail(Errc::shape_mismatch, "checkpoint lacks metadata '" + key + "'");
}

void Checkpoint::add(Tensor t) {
  std::uint64_t n = 1;
  for (auto d : t.dims) n *= d;
  require(n == t.data.size(), Errc::shape_mismatch, "tensor " + t.name + " payload differs from its shape");
  tensors.push_back(std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor& Checkpoint::require_tensor(const std::string& name, std::size_t elements) const {
  const Tensor* t = find(name);
  if (!t) fail(Errc::shape_mismatch, "checkpoint lacks tensor '" + name + "'");
  require(t->data.size() == elements, Errc::shape_mismatch,
          "tensor '" + name + "' has " + std::to_string(t->data.size()) + " elements, expected " +
              std::to_string(elements));
  return *t;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 8);
  put<std::uint32_t>(out, ckpt.schema_version);
  std::string meta;
  for (const auto& [k, v] : ckpt.metadata) meta += k + "=" + v + "\n";
  put<std::uint64_t>(out, meta.size());
  put_bytes(out, meta);
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    put_bytes(out, t.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    for (double x : t.data) put<double>(out, x);
  }
  if (!out) fail(Errc::io, "checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8) fail(Errc::truncated_file, "file ends inside the magic tag");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(Errc::bad_magic, "not an lcmkit checkpoint");
  Checkpoint ckpt;
  ckpt.schema_version = get<std::uint32_t>(in, "the schema version");
  if (ckpt.schema_version > kCheckpointSchema)
    fail(Errc::schema_too_new, "schema " + std::to_string(ckpt.schema_version) + " is newer than supported " +
                                   std::to_string(kCheckpointSchema));
  const auto meta_len = get<std::uint64_t>(in, "the metadata length");
  require(meta_len < kMaxElements, Errc::truncated_file, "implausible metadata length");
  std::string meta(meta_len, '\0');
  read_exact(in, meta.data(), meta_len, "the metadata block");
  std::istringstream lines(meta);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::shape_mismatch, "malformed metadata line");
    ckpt.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const auto count = get<std::uint64_t>(in, "the tensor count");
  require(count < kMaxElements, Errc::truncated_file, "implausible tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor t;
    const auto name_len = get<std::uint32_t>(in, "a tensor name length");
    t.name.resize(name_len);
    read_exact(in, t.name.data(), name_len, "a tensor name");
    const auto ndim = get<std::uint32_t>(in, "a tensor rank");
    require(ndim <= 16, Errc::shape_mismatch, "tensor rank too large");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(get<std::uint64_t>(in, "tensor dimensions"));
      n *= t.dims.back();
      require(n < kMaxElements, Errc::shape_mismatch, "tensor " + t.name + " is implausibly large");
    }
    t.data.resize(n);
    read_exact(in, reinterpret_cast<char*>(t.data.data()), n * sizeof(double), "a tensor payload");
    for (double& x : t.data) x = to_le(x);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + tmp.string());
    write_checkpoint(out, ckpt);
    out.close();
    if (!out) {
      std::filesystem::remove(tmp);
      fail(Errc::io, "cannot finish " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(Errc::io, "cannot rename checkpoint into " + path.string() + ": " + ec.message());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  return read_checkpoint(in);
}

Checkpoint model_to_checkpoint(const ConsistencyModel& m, const Optimizer* opt, const LatentCodec& codec,
                               const std::string& config_echo) {
  Checkpoint c;
  c.set_meta("kind", "consistency");
  c.set_meta("iteration", std::to_string(m.iteration));
  put_net_config(c, m.net.config());
  put_schedule(c, m.schedule);
  c.set_meta("boundary.sigma_data", format_real(m.boundary.sigma_data));
  c.set_meta("boundary.t_scale", format_real(m.boundary.t_scale));
  c.set_meta("ema.mu", format_real(m.ema.mu));
  put_codec(c, codec);
  c.add(vec_tensor("theta_online", m.ema.theta_online));
  c.add(vec_tensor("theta_target", m.ema.theta_target));
  if (opt) {
    c.set_meta("optimizer.kind", to_string(opt->kind()));
    c.set_meta("optimizer.lr", format_real(opt->lr()));
    c.set_meta("optimizer.steps", std::to_string(opt->steps()));
    c.add(vec_tensor("optimizer.m", opt->first_moment()));
    c.add(vec_tensor("optimizer.v", opt->second_moment()));
  }
  std::istringstream lines(config_echo);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    k.erase(k.find_last_not_of(' ') + 1);
    v.erase(0, v.find_first_not_of(' '));
    c.set_meta("config." + k, v);
  }
  return c;
}

ModelState model_from_checkpoint(const Checkpoint& c) {
  require(c.meta("kind") == std::optional<std::string>("consistency"), Errc::shape_mismatch,
          "checkpoint does not hold a consistency model");
  NetConfig nc = get_net_config(c);
  require(nc.omega_conditioned, Errc::shape_mismatch, "consistency network must take omega");
  ModelState st{ConsistencyModel{}, std::nullopt, get_codec(c), {}};
  ConsistencyModel& m = st.model;
  m.net = DenoiserNet(nc);
  m.schedule = get_schedule(c);
  m.boundary.sigma_data = parse_real(c.require_meta("boundary.sigma_data"), "boundary.sigma_data");
  m.boundary.t_scale = parse_real(c.require_meta("boundary.t_scale"), "boundary.t_scale");
  m.ema.mu = parse_real(c.require_meta("ema.mu"), "ema.mu");
  m.iteration = parse_int(c.require_meta("iteration"), "iteration");
  m.ema.theta_online = c.require_tensor("theta_online", m.net.param_count()).data;
  m.ema.theta_target = c.require_tensor("theta_target", m.net.param_count()).data;
  if (auto kind = c.meta("optimizer.kind")) {
    Optimizer opt(parse_optimizer_kind(*kind), parse_real(c.require_meta("optimizer.lr"), "optimizer.lr"));
    const Tensor* mt = c.find("optimizer.m");
    const Tensor* vt = c.find("optimizer.v");
    require(mt && vt && mt->data.size() == vt->data.size(), Errc::shape_mismatch, "optimizer moments differ");
    opt.set_state(mt->data, vt->data, parse_int(c.require_meta("optimizer.steps"), "optimizer.steps"));
    st.optimizer = std::move(opt);
  }
  for (const auto& [k, v] : c.metadata)
    if (k.rfind("config.", 0) == 0) st.config_echo.emplace_back(k.substr(7), v);
  return st;
}

Checkpoint teacher_to_checkpoint(const Denoiser& net, const NoiseSchedule& s) {
  Checkpoint c;
  c.set_meta("kind", "teacher");
  put_net_config(c, net.net.config());
  put_schedule(c, s);
  c.add(vec_tensor("theta", net.theta));
  return c;
}

std::pair<Denoiser, NoiseSchedule> teacher_from_checkpoint(const Checkpoint& c) {
  require(c.meta("kind") == std::optional<std::string>("teacher"), Errc::shape_mismatch,
          "checkpoint does not hold a teacher");
  Denoiser d;
  d.net = DenoiserNet(get_net_config(c));
  d.theta = c.require_tensor("theta", d.net.param_count()).data;
  return {std::move(d), get_schedule(c)};
}

Checkpoint codec_to_checkpoint(const LatentCodec& codec) {
  Checkpoint c;
  c.set_meta("kind", "codec");
  put_codec(c, codec);
  return c;
}

LatentCodec codec_from_checkpoint(const Checkpoint& c) {
  require(c.meta("kind") == std::optional<std::string>("codec"), Errc::shape_mismatch,
          "checkpoint does not hold a codec");
  return get_codec(c);
}

}  // namespace lcm
