// Copyright 2026 The seqvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace seqvc {

// Process exit codes used by the CLI. Library errors carry the code they
// should terminate with so main() can map exceptions mechanically.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,   // bad flags, bad config file, invalid model configuration
  kData = 3,     // missing/corrupt files, malformed manifests, empty inputs
  kNumeric = 4,  // shape mismatch, non-finite values, failed checks
  kDecode = 5,   // step-cap exhaustion, degenerate attention
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ExitCode::kConfig, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ExitCode::kData, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ExitCode::kNumeric, w) {}
};
struct DecodeError : Error {
  explicit DecodeError(const std::string& w) : Error(ExitCode::kDecode, w) {}
};

}  // namespace seqvc
