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
#include <unordered_map>
#include <vector>

#include "covr/corpus.hpp"
#include "covr/embedspace.hpp"
#include "covr/pairminer.hpp"

namespace covr {

struct FilterConfig {
    NormalizedSimilarity sim_max{0.96};
    NormalizedSimilarity sim_min{0.6};
    double zipf_min = 3.0;
    std::vector<std::string> template_blocklist{"abstract of", "concept of", "flag of", "background", "hologram"};
    std::size_t max_video_pairs_per_caption_pair = 10;
    std::optional<NormalizedSimilarity> visual_sim_min;

    void validate() const;
};

enum class FilterReason { kept, too_similar, too_dissimilar, digit_diff, oov_diff, rare_diff, template_caption };

const char* to_string(FilterReason reason);

struct FilterDecision {
    FilterReason reason = FilterReason::kept;
    NormalizedSimilarity text_sim{0.0};
    bool kept() const { return reason == FilterReason::kept; }
};

// Lookup of caption-key text embeddings; implemented over a store or the toy embedder.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const = 0;
    // Unit vector; throws when the text has no embedding.
    virtual Vec embed(const std::string& text) const = 0;
};

class StoreTextEncoder final : public TextEncoder {
public:
    explicit StoreTextEncoder(const EmbeddingStore& store) : store_(store) {}
    std::size_t dim() const override { return store_.dim(); }
    Vec embed(const std::string& text) const override;

private:
    const EmbeddingStore& store_;
};

class ToyTextEncoder final : public TextEncoder {
public:
    explicit ToyTextEncoder(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Vec embed(const std::string& text) const override { return toy_embed(text, dim_); }

private:
    std::size_t dim_;
};

// Rules are checked in the order template, digit, oov, rare, similarity.
// Keeping requires sim_min < s < sim_max.
FilterDecision filter_caption_pair(const CaptionPair& pair, const TextEncoder& text, const Lexicon& lexicon,
                                   const FilterConfig& cfg);

struct VideoPair {
    std::string query_video;
    std::string target_video;
    NormalizedSimilarity visual_sim{0.0};
    bool operator==(const VideoPair&) const = default;
};

using FramesManifest = std::unordered_map<std::string, std::size_t>;

FramesManifest load_frames_manifest(const std::filesystem::path& path);
std::size_t middle_frame(std::size_t frame_count);

// Scores every cross pair of videos by middle-frame similarity, drops
// self-pairs and pairs below visual_sim_min, sorts by similarity descending
// (ties by ascending ids) and truncates to the configured cap.
std::vector<VideoPair> select_video_pairs(const CaptionPair& pair,
                                          const std::unordered_map<std::string, std::vector<std::string>>& videos_by_caption,
                                          const FramesManifest& frames, const EmbeddingStore& frame_embs,
                                          const FilterConfig& cfg);

}  // namespace covr
