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

#include "watchlabel/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "watchlabel/error.hpp"

#include <unistd.h>

namespace watchlabel {
namespace {

constexpr std::array<std::string_view, 4> kInputColumns = {"user_id", "video_id",
                                                          "duration_s", "watch_time_s"};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

struct Header {
  std::vector<std::string> names;
  std::array<std::size_t, 4> input{};
};

Header read_header(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line.empty()) {
    throw Error(ErrorCode::kFormat, "input has no header row");
  }
  Header h;
  for (auto f : split_fields(line)) h.names.emplace_back(f);
  for (std::size_t c = 0; c < kInputColumns.size(); ++c) {
    auto it = std::find(h.names.begin(), h.names.end(), kInputColumns[c]);
    if (it == h.names.end()) {
      throw Error(ErrorCode::kMissingField,
                  fmt::format("header lacks column '{}'", kInputColumns[c]));
    }
    h.input[c] = static_cast<std::size_t>(it - h.names.begin());
  }
  return h;
}

// Calls `row(fields, row_index)` for every non-empty data line.
template <typename Fn>
void for_each_row(std::istream& in, const Header& header, Fn&& row) {
  std::string line;
  std::uint64_t index = 0;
  while (next_line(in, line)) {
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.names.size()) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("row {} has {} fields, header has {}", index, fields.size(),
                              header.names.size()));
    }
    row(fields, index);
    ++index;
  }
}

Interaction parse_record(const std::vector<std::string_view>& fields, const Header& h,
                         std::uint64_t index) {
  auto field = [&](std::size_t c) -> std::optional<std::string> {
    const auto v = fields[h.input[c]];
    if (v.empty()) return std::nullopt;
    return std::string(v);
  };
  RawRecord raw{field(0), field(1), field(2), field(3)};
  return validate_interaction(raw, index);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open '{}'", path.string()));
  return in;
}

void append_input_fields(std::string& out, const Interaction& r) {
  fmt::format_to(std::back_inserter(out), "{},{},{},{}", r.user_id, r.video_id,
                 r.duration_s, r.watch_time_s);
}

}  // namespace

Dataset read_interactions(std::istream& in) {
  const Header header = read_header(in);
  Dataset out;
  for_each_row(in, header, [&](const auto& fields, std::uint64_t index) {
    out.push_back(parse_record(fields, header, index));
  });
  return out;
}

Dataset read_interactions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_interactions(in);
}

std::string interactions_csv(std::span<const Interaction> records) {
  std::string out = "user_id,video_id,duration_s,watch_time_s\n";
  for (const auto& r : records) {
    append_input_fields(out, r);
    out += '\n';
  }
  return out;
}

SyntheticTruth read_truth(const std::filesystem::path& path, std::size_t n_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingTruthFile,
                fmt::format("truth file '{}' is missing", path.string()));
  }
  std::string line;
  if (!next_line(in, line) || line != "row_index,m,f_mean") {
    throw Error(ErrorCode::kFormat, "truth file needs header 'row_index,m,f_mean'");
  }
  SyntheticTruth truth;
  truth.m.assign(n_records, std::numeric_limits<double>::quiet_NaN());
  truth.f_mean.assign(n_records, std::numeric_limits<double>::quiet_NaN());
  std::size_t seen = 0;
  while (next_line(in, line)) {
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 3) throw Error(ErrorCode::kFormat, "truth rows need 3 fields");
    const double row = parse_real(f[0], "row_index", seen);
    if (row < 0 || row >= static_cast<double>(n_records) || row != std::floor(row)) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("truth row_index {} does not match the records", f[0]));
    }
    const auto r = static_cast<std::size_t>(row);
    truth.m[r] = parse_real(f[1], "m", seen);
    truth.f_mean[r] = parse_real(f[2], "f_mean", seen);
    ++seen;
  }
  if (seen != n_records) {
    throw Error(ErrorCode::kFormat,
                fmt::format("truth file has {} rows for {} records", seen, n_records));
  }
  return truth;
}

std::string truth_csv(const SyntheticTruth& truth) {
  std::string out = "row_index,m,f_mean\n";
  for (std::size_t i = 0; i < truth.m.size(); ++i) {
    fmt::format_to(std::back_inserter(out), "{},{},{}\n", i, truth.m[i], truth.f_mean[i]);
  }
  return out;
}

std::string labeled_csv(std::span<const Interaction> records,
                        std::span<const LabelSet> labels) {
  std::vector<std::string_view> columns(kLabelColumns.begin(), kLabelColumns.end() - 2);
  for (auto extra : {"ef_wpr", "ew_wpr"}) {
    for (const auto& l : labels) {
      if (l.get(extra)) {
        columns.push_back(extra);
        break;
      }
    }
  }
  std::string out = "user_id,video_id,duration_s,watch_time_s";
  for (auto c : columns) fmt::format_to(std::back_inserter(out), ",{}", c);
  out += '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    append_input_fields(out, records[i]);
    for (auto c : columns) {
      out += ',';
      const auto v = labels[i].get(c);
      if (!v) continue;
      if (c.starts_with("ev") || c.starts_with("lv")) {
        out += *v > 0.5 ? '1' : '0';
      } else {
        fmt::format_to(std::back_inserter(out), "{:.6f}", *v);
      }
    }
    out += '\n';
  }
  return out;
}

LabeledData read_labeled(std::istream& in) {
  const Header header = read_header(in);
  LabeledData out;
  std::vector<std::pair<std::size_t, std::vector<double>*>> label_columns;
  for (std::size_t c = 0; c < header.names.size(); ++c) {
    if (std::find(header.input.begin(), header.input.end(), c) != header.input.end()) {
      continue;
    }
    label_columns.emplace_back(c, &out.columns[header.names[c]]);
  }
  for_each_row(in, header, [&](const auto& fields, std::uint64_t index) {
    out.records.push_back(parse_record(fields, header, index));
    for (auto& [c, column] : label_columns) {
      column->push_back(fields[c].empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : parse_real(fields[c], header.names[c], index));
    }
  });
  // Columns with no value at all were disabled when labeling.
  std::erase_if(out.columns, [](const auto& entry) {
    return std::all_of(entry.second.begin(), entry.second.end(),
                       [](double v) { return std::isnan(v); });
  });
  return out;
}

LabeledData read_labeled(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_labeled(in);
}

LabeledData to_labeled(Dataset records, std::span<const LabelSet> labels) {
  LabeledData out;
  for (auto column : kLabelColumns) {
    std::vector<double> values(records.size());
    bool any = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto v = labels[i].get(column);
      values[i] = v ? *v : std::numeric_limits<double>::quiet_NaN();
      any = any || v.has_value();
    }
    if (any) out.columns.emplace(std::string(column), std::move(values));
  }
  out.records = std::move(records);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  const auto parent = path.parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  auto tmp = path;
  tmp += fmt::format(".tmp.{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", tmp.string()));
    writer(out);
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::kIo, fmt::format("failed writing '{}'", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, fmt::format("cannot replace '{}'", path.string()));
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  write_file_atomic(path, [&](std::ostream& out) {
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  });
}

}  // namespace watchlabel
