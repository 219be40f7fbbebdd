// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lcm/consistency.hpp"
#include "lcm/distill.hpp"
#include "lcm/net.hpp"
#include "lcm/sampler_eval.hpp"
#include "lcm/schedule.hpp"
#include "lcm/solver.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

enum class ValueType { integer, real, boolean, text, int_list, real_list };

struct KeySpec {
  std::string name;
  ValueType type;
  std::string default_value;
  std::string help;
};

// Flat `key = value` run configuration. Every key has a typed default; values
// are type-checked when set and range-checked by validate().
class RunConfig {
 public:
  RunConfig();

  static const std::vector<KeySpec>& schema();
  static const KeySpec* find_key(const std::string& key);

  // Throws unknown-key or type-error; `line` only decorates the message.
  void set(const std::string& key, const std::string& value, int line = 0);
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;

  // Range and cross-field checks; throws out-of-range.
  void validate() const;

  // All keys in schema order, `key = value` per line.
  std::string echo() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string& raw(const std::string& key, ValueType expect) const;
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

// Typed views of a validated configuration.
NoiseSchedule schedule_from(const RunConfig& cfg);
MixtureSpec mixture_from(const RunConfig& cfg);
NetConfig net_config_from(const RunConfig& cfg, int data_dim, int num_classes);
BoundarySpec boundary_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);
TeacherTrainConfig teacher_train_config_from(const RunConfig& cfg);
SolverBenchConfig solver_bench_config_from(const RunConfig& cfg);
EvalConfig eval_config_from(const RunConfig& cfg);
ProbeConfig probe_config_from(const RunConfig& cfg);

}  // namespace lcm
