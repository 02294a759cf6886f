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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace covr {

using Tokens = std::vector<std::string>;

// Unicode-aware lowercase, whitespace split, per-token punctuation trim.
// Tokens that trim to nothing are dropped.
Tokens normalize_caption(std::string_view raw);

// Tokens joined by single spaces; the canonical caption key.
std::string join_tokens(const Tokens& tokens);

struct CaptionRecord {
    std::string video_id;
    std::string caption_raw;
    Tokens tokens;
    std::optional<double> duration_s;
    std::optional<double> flow_magnitude;
    std::vector<std::string> categories;

    std::string key() const { return join_tokens(tokens); }
    bool operator==(const CaptionRecord&) const = default;
};

enum class CorpusFormat { csv, jsonl };

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<CaptionRecord> records);

    const std::vector<CaptionRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const CaptionRecord* find(std::string_view video_id) const;
    bool contains(std::string_view video_id) const { return find(video_id) != nullptr; }

    // Distinct normalized captions, sorted by key.
    std::vector<Tokens> distinct_captions() const;
    // Caption key -> video ids in corpus order.
    std::unordered_map<std::string, std::vector<std::string>> videos_by_caption() const;

private:
    std::vector<CaptionRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

CorpusFormat corpus_format_from_path(const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
inline Corpus load_corpus(const std::filesystem::path& path) {
    return load_corpus(path, corpus_format_from_path(path));
}
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

class Lexicon {
public:
    Lexicon() = default;
    Lexicon(std::unordered_set<std::string> dictionary, std::unordered_map<std::string, double> zipf);

    bool in_dictionary(std::string_view word) const;
    // nullopt means the word has no frequency entry at all.
    std::optional<double> zipf(std::string_view word) const;

    std::size_t dictionary_size() const { return dictionary_.size(); }
    std::size_t zipf_size() const { return zipf_.size(); }

private:
    std::unordered_set<std::string> dictionary_;
    std::unordered_map<std::string, double> zipf_;
};

Lexicon load_lexicon(const std::filesystem::path& dict_path, const std::filesystem::path& zipf_path);

}  // namespace covr
