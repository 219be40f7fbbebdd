// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lcm/common.hpp"
#include "lcm/config.hpp"
#include "lcm/latent.hpp"
#include "lcm/teacher.hpp"

namespace lcm {

inline const std::vector<std::string> kCommands = {"teacher-train", "fit-codec", "distill", "finetune",
                                                   "sample",        "eval",      "solver-bench"};

// Command-line overrides applied on top of the config file.
struct CliOptions {
  std::optional<std::filesystem::path> config;
  std::optional<long long> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> steps;
  std::optional<double> omega;
  std::optional<std::filesystem::path> resume;
};

// Exit status per error family: 3 config, 4 checkpoint, 5 io, 6 numerical,
// 7 precondition; 1 is reserved for anything unexpected.
int exit_code_for(Errc code);

RunConfig resolve_config(const CliOptions& opts);

// Executes one command; throws lcm::Error on failure.
void run(const std::string& command, const RunConfig& cfg, const std::optional<std::filesystem::path>& resume);

// run() with error reporting: one diagnostic line on `err`, mapped exit code.
int run_main(const std::string& command, const CliOptions& opts, std::ostream& err);

// Sample CSV: columns named x0, x1, ... and an optional `class` column.
LabeledData read_samples_csv(const std::filesystem::path& path);
void write_samples_csv(const std::filesystem::path& path, const Mat& x, const std::vector<ClassId>& classes,
                       double omega);

void write_scatter_svg(const std::filesystem::path& path, const Mat& x, const std::vector<ClassId>& classes);

}  // namespace lcm
