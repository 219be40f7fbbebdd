// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>

#include "lcm/common.hpp"

namespace lcm_test {

// Code of the lcm::Error thrown by f, or nullopt when nothing (or something
// else) was thrown.
inline std::optional<lcm::Errc> error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const lcm::Error& e) {
    return e.code();
  } catch (...) {
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace lcm_test

#define CHECK_ERRC(expr, errc) \
  CHECK(lcm_test::error_code([&] { (void)(expr); }) == std::optional<lcm::Errc>(errc))
