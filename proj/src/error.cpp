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

#include "watchlabel/error.hpp"

namespace watchlabel {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveDuration: return "NonPositiveDuration";
    case ErrorCode::kNegativeWatchTime: return "NegativeWatchTime";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kInvalidRatios: return "InvalidRatios";
    case ErrorCode::kNonMonotoneCurve: return "NonMonotoneCurve";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kNegativeValue: return "NegativeValue";
    case ErrorCode::kModeMismatch: return "ModeMismatch";
    case ErrorCode::kEmptySummary: return "EmptySummary";
    case ErrorCode::kPercentileOutOfRange: return "PercentileOutOfRange";
    case ErrorCode::kMissingGroupSummary: return "MissingGroupSummary";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kNoEligibleUsers: return "NoEligibleUsers";
    case ErrorCode::kMissingLabelColumn: return "MissingLabelColumn";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingInverseMap: return "MissingInverseMap";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kMissingTruthFile: return "MissingTruthFile";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
  }
  return "Unknown";
}

}  // namespace watchlabel
