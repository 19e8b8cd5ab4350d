// Copyright 2026 The watchlabel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WATCHLABEL_ERROR_HPP_
#define WATCHLABEL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace watchlabel {

enum class ErrorCode {
  kNonPositiveDuration,
  kNegativeWatchTime,
  kMissingField,
  kInvalidRatios,
  kNonMonotoneCurve,
  kEmptyDataset,
  kNegativeValue,
  kModeMismatch,
  kEmptySummary,
  kPercentileOutOfRange,
  kMissingGroupSummary,
  kConfigInvalid,
  kNoEligibleUsers,
  kMissingLabelColumn,
  kNonFiniteLoss,
  kMissingInverseMap,
  kDegenerateLabels,
  kEmptyInput,
  kEmptyGroup,
  kMissingTruthFile,
  kIo,
  kFormat,
};

std::string_view ErrorCodeName(ErrorCode code);

// All recoverable failures surface as this exception. The code lets the CLI
// distinguish bad input (exit 2) from internal failures (exit 1).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace watchlabel

#endif  // WATCHLABEL_ERROR_HPP_
