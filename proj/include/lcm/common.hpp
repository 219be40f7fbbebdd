// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lcm {

using Vec = Eigen::VectorXd;
// Batches are stored column-major: one sample per column.
using Mat = Eigen::MatrixXd;

// Class label; kNullClass selects the unconditional (empty) condition.
using ClassId = int;
inline constexpr ClassId kNullClass = -1;

enum class Errc {
  invalid_range,
  index_out_of_range,
  dimension_mismatch,
  invalid_k,
  missing_omega,
  missing_condition,
  stale_cache,
  odd_dim,
  shape_mismatch,
  rank_deficient,
  invalid_schedule,
  empty_set,
  divergence,
  config_parse,
  config_unknown_key,
  config_type,
  config_range,
  bad_magic,
  schema_too_new,
  truncated_file,
  io,
};

const char* errc_name(Errc code);

// Every library failure is reported through this type; the code selects the
// CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

// Seeded generator used for every random draw in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }
  Vec normal_vec(Eigen::Index dim) {
    Vec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// SplitMix64 finalizer; derives independent child seeds from a parent seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Selects between the OpenMP kernels and their serial reference versions.
enum class Exec { serial, parallel };

}  // namespace lcm
