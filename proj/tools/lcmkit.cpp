// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "lcm/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lcmkit: latent consistency distillation on toy data"};
  app.require_subcommand(1);

  std::map<std::string, lcm::CliOptions> opts;
  std::map<std::string, std::string> config, out, resume;
  for (const auto& name : lcm::kCommands) {
    CLI::App* sub = app.add_subcommand(name);
    auto& o = opts[name];
    sub->add_option("--config", config[name], "key = value run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", out[name], "output directory");
    if (name == "sample") sub->add_option("--steps", o.steps, "number of sampling steps");
    if (name == "sample" || name == "eval") sub->add_option("--omega", o.omega, "guidance scale");
    if (name == "distill" || name == "finetune" || name == "sample" || name == "eval")
      sub->add_option("--resume", resume[name], "model checkpoint to start from");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (const auto& name : lcm::kCommands) {
    if (!app.got_subcommand(name)) continue;
    auto& o = opts[name];
    if (!config[name].empty()) o.config = config[name];
    if (!out[name].empty()) o.out = out[name];
    if (!resume[name].empty()) o.resume = resume[name];
    return lcm::run_main(name, o, std::cerr);
  }
  return 2;
}
