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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "covr/corpus.hpp"
#include "covr/io.hpp"

namespace covr {

enum class EditKind { substitute, insert, del };

const char* to_string(EditKind kind);
EditKind edit_kind_from_string(std::string_view s);

struct CaptionPair {
    std::string caption_a;
    std::string caption_b;
    EditKind edit_kind = EditKind::substitute;
    std::optional<std::string> diff_a;
    std::optional<std::string> diff_b;
    std::size_t position = 0;

    auto operator<=>(const CaptionPair&) const = default;

    // The same pair seen from caption_b's side.
    CaptionPair reversed() const;
};

// Classifies a token-level edit of distance exactly one. The position is the
// length of the common prefix, i.e. the lowest valid edit index. Returns
// nullopt when the distance is not exactly one.
std::optional<CaptionPair> classify_single_edit(const Tokens& a, const Tokens& b);

inline constexpr std::size_t kMaxMiningTokens = 64;

// Maps each caption's full key and each single-token deletion key to the
// captions that produced it. Entries remember the deletion position so that
// candidate generation never pairs deletions taken at different positions.
class DeletionIndex {
public:
    static constexpr std::int32_t kFullKey = -1;

    struct Entry {
        std::uint32_t caption;
        std::int32_t position;  // kFullKey for the caption itself
        auto operator<=>(const Entry&) const = default;
    };

    const std::vector<Tokens>& captions() const { return captions_; }
    const std::unordered_map<std::string, std::vector<Entry>>& buckets() const { return buckets_; }
    std::size_t skipped() const { return skipped_; }

    // Distinct keys contributed by one caption (full key first).
    static std::vector<std::string> keys_for(const Tokens& caption);

private:
    friend DeletionIndex build_index(std::span<const Tokens> captions, unsigned workers);

    std::vector<Tokens> captions_;
    std::unordered_map<std::string, std::vector<Entry>> buckets_;
    std::size_t skipped_ = 0;
};

// Captions must be distinct; longer than kMaxMiningTokens are skipped.
DeletionIndex build_index(std::span<const Tokens> captions, unsigned workers = 1);

// Every unordered caption pair at token edit distance exactly one, sorted by
// (caption_a, caption_b) with caption_a < caption_b.
std::vector<CaptionPair> mine_pairs(const DeletionIndex& index, unsigned workers = 1);

OrderedJson pair_to_json(const CaptionPair& p);
CaptionPair pair_from_json(const Json& j);

void write_pairs_jsonl(const std::vector<CaptionPair>& pairs, const std::filesystem::path& path);
std::vector<CaptionPair> read_pairs_jsonl(const std::filesystem::path& path);

}  // namespace covr
