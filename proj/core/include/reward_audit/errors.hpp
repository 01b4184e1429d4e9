// Copyright 2026 The Reward Audit Authors.
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

#ifndef REWARD_AUDIT_ERRORS_HPP_
#define REWARD_AUDIT_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reward_audit {

// Base of every error thrown by the library.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public AuditError {
 public:
  using AuditError::AuditError;
};

class DimensionMismatch : public AuditError {
 public:
  DimensionMismatch(const std::string& what, std::size_t expected,
                    std::size_t actual)
      : AuditError(what + ": expected dimension " + std::to_string(expected) +
                   ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

}  // namespace reward_audit

#endif  // REWARD_AUDIT_ERRORS_HPP_
