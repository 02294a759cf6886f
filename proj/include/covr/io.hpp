// Copyright 2026 The covr-forge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace covr {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary and renames, so readers never see partial files.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

// Calls fn(object, line_number) for each non-blank line.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const Json&, std::size_t)>& fn);

class JsonlWriter {
public:
    void add(const OrderedJson& row);
    void write(const std::filesystem::path& path) const { write_text_file(path, buffer_); }
    const std::string& str() const { return buffer_; }
    std::size_t rows() const { return rows_; }

private:
    std::string buffer_;
    std::size_t rows_ = 0;
};

// Compact dump with fixed float formatting (nlohmann round-trips doubles).
std::string dump_compact(const OrderedJson& j);

}  // namespace covr
