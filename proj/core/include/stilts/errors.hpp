/*
 * Copyright 2026 The stilts-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace stilts {

/// Bad input data, malformed files, or inconsistent configuration.
/// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A training run hit a non-recoverable numerical condition
/// (non-finite loss or gradients). The CLI maps this to exit code 3;
/// the sweep harness records the run as degenerate instead of dropping it.
class RunAbort : public std::runtime_error {
 public:
  explicit RunAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stilts
