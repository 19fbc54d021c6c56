// Copyright 2026 The hccrop Authors.
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

namespace hccrop {

// Bad caller input: malformed boxes, empty lists, shape mismatches,
// schema violations. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Candidate generation produced nothing under the requested constraints.
class EmptyCandidatesError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Checkpoint written by a different format version or model shape.
class IncompatibleCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored digest does not match the archive payload.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a NaN or infinite loss. `diagnostic` is a JSON dump of
// the failing step.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::string diagnostic)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic)) {}
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  std::string diagnostic_;
};

}  // namespace hccrop
