// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/common.hpp"

namespace lcm {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_range: return "invalid-range";
    case Errc::index_out_of_range: return "index-out-of-range";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::invalid_k: return "invalid-k";
    case Errc::missing_omega: return "missing-omega";
    case Errc::missing_condition: return "missing-condition";
    case Errc::stale_cache: return "stale-cache";
    case Errc::odd_dim: return "odd-dim";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::rank_deficient: return "rank-deficiency";
    case Errc::invalid_schedule: return "invalid-schedule";
    case Errc::empty_set: return "empty-set";
    case Errc::divergence: return "divergence";
    case Errc::config_parse: return "parse-error";
    case Errc::config_unknown_key: return "unknown-key";
    case Errc::config_type: return "type-error";
    case Errc::config_range: return "out-of-range";
    case Errc::bad_magic: return "bad-magic";
    case Errc::schema_too_new: return "schema-too-new";
    case Errc::truncated_file: return "truncated-file";
    case Errc::io: return "io-error";
  }
  return "unknown";
}

void fail(Errc code, const std::string& what) {
  throw Error(code, std::string(errc_name(code)) + ": " + what);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace lcm
