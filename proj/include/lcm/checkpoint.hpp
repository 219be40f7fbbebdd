// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lcm/consistency.hpp"
#include "lcm/latent.hpp"
#include "lcm/net.hpp"
#include "lcm/schedule.hpp"

namespace lcm {

// File layout (all integers little-endian):
//   "LCMKIT01" | u32 schema | u64 metadata bytes | metadata text
//   | u64 tensor count | per tensor: u32 name bytes, name, u32 ndim,
//   u64 dims[ndim], f64 payload[prod(dims)]
// Metadata text is one `key=value` line per entry.
inline constexpr char kCheckpointMagic[9] = "LCMKIT01";
inline constexpr std::uint32_t kCheckpointSchema = 1;

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

struct Checkpoint {
  std::uint32_t schema_version = kCheckpointSchema;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<Tensor> tensors;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  // Throws shape-mismatch when missing.
  const std::string& require_meta(const std::string& key) const;

  void add(Tensor t);
  const Tensor* find(const std::string& name) const;
  // Throws shape-mismatch when missing or when the element count differs.
  const Tensor& require_tensor(const std::string& name, std::size_t elements) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

// Writes to `path.tmp` then renames, so a failed save never leaves a partial file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Round-trip text form of a double.
std::string format_real(double v);

// Model state <-> checkpoint.
struct ModelState {
  ConsistencyModel model;
  std::optional<Optimizer> optimizer;
  LatentCodec codec;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

Checkpoint model_to_checkpoint(const ConsistencyModel& m, const Optimizer* opt, const LatentCodec& codec,
                               const std::string& config_echo);
ModelState model_from_checkpoint(const Checkpoint& ckpt);

Checkpoint teacher_to_checkpoint(const Denoiser& net, const NoiseSchedule& s);
std::pair<Denoiser, NoiseSchedule> teacher_from_checkpoint(const Checkpoint& ckpt);

Checkpoint codec_to_checkpoint(const LatentCodec& codec);
LatentCodec codec_from_checkpoint(const Checkpoint& ckpt);

}  // namespace lcm
