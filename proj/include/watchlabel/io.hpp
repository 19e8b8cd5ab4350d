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

// CSV and file plumbing for the pipeline. Input rows are
// `user_id,video_id,duration_s,watch_time_s` with a header; extra columns
// (such as label columns in a labeled file) are carried by name.

#ifndef WATCHLABEL_IO_HPP_
#define WATCHLABEL_IO_HPP_

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "watchlabel/core.hpp"
#include "watchlabel/datagen.hpp"
#include "watchlabel/labeling.hpp"

namespace watchlabel {

// Records plus named real-valued label columns; absent values are NaN.
struct LabeledData {
  Dataset records;
  std::map<std::string, std::vector<double>, std::less<>> columns;
};

Dataset read_interactions(std::istream& in);
Dataset read_interactions(const std::filesystem::path& path);
std::string interactions_csv(std::span<const Interaction> records);

SyntheticTruth read_truth(const std::filesystem::path& path, std::size_t n_records);
std::string truth_csv(const SyntheticTruth& truth);

// Input columns followed by the label columns; the ablation-only columns
// are written only when at least one record carries them.
std::string labeled_csv(std::span<const Interaction> records,
                        std::span<const LabelSet> labels);
LabeledData read_labeled(std::istream& in);
LabeledData read_labeled(const std::filesystem::path& path);
LabeledData to_labeled(Dataset records, std::span<const LabelSet> labels);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace watchlabel

#endif  // WATCHLABEL_IO_HPP_
