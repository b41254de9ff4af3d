// Copyright 2026 The mrmllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mrml {

/// Error categories. The numeric values double as CLI exit codes where it
/// makes sense (runtime = 1, everything caused by bad input = 2).
enum class ErrorCode : int {
  kRuntime = 1,
  kInvalidArgument = 2,
  kIo = 3,
  kFormat = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Shape or argument contract violated by a caller.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorCode::kInvalidArgument, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

/// Malformed file contents (checkpoint, dataset, detections, config).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorCode::kFormat, what) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& what)
      : Error(ErrorCode::kRuntime, what) {}
};

}  // namespace mrml
