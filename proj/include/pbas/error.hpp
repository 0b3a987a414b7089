// Copyright 2026 The PBAS Engine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <stdexcept>
#include <string>

namespace pbas {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid configuration: even p, empty level set, unknown keys, bad ranges.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, "config error: " + what) {}
};

// Malformed or inconsistent input data, including dimension mismatches.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ExitCode::kData, "data error: " + what) {}
};

// Corrupt TensorFile / PGM contents. Carries the byte offset of the fault.
class FormatError : public Error {
 public:
  FormatError(const std::string& path, std::size_t offset, const std::string& what)
      : Error(ExitCode::kData, "format error in " + path + " at byte " +
                                   std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ManifestError : public Error {
 public:
  explicit ManifestError(const std::string& what)
      : Error(ExitCode::kData, "manifest error: " + what) {}
};

// Non-finite gradients or losses during training.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ExitCode::kDivergence, "training diverged: " + what) {}
};

// A metric was requested on input where it is undefined (e.g. one class only).
class MetricUndefinedError : public Error {
 public:
  explicit MetricUndefinedError(const std::string& what)
      : Error(ExitCode::kData, "metric undefined: " + what) {}
};

// Synthesis direction u - c is (numerically) zero while the synthesis length is positive.
class DegenerateDirectionError : public Error {
 public:
  DegenerateDirectionError(std::size_t vector_index, const std::string& what)
      : Error(ExitCode::kData, "degenerate synthesis direction at vector " +
                                   std::to_string(vector_index) + ": " + what),
        vector_index_(vector_index) {}
  std::size_t vector_index() const noexcept { return vector_index_; }

 private:
  std::size_t vector_index_;
};

}  // namespace pbas
