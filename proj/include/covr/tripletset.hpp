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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covr/corpus.hpp"
#include "covr/io.hpp"
#include "covr/embedspace.hpp"
#include "covr/filtering.hpp"
#include "covr/mtg.hpp"

namespace covr {

struct CoVRTriplet {
    std::string query_video;
    std::string target_video;
    ModificationText modification;
    std::string caption_a;  // query caption key
    std::string caption_b;  // target caption key
    NormalizedSimilarity text_sim{0.0};
    NormalizedSimilarity visual_sim{0.0};
    std::optional<double> flow_magnitude_target;

    bool operator==(const CoVRTriplet&) const = default;
};

// A kept caption pair in one query direction together with its videos.
struct DirectedVideoPair {
    std::string caption_a;
    std::string caption_b;
    VideoPair videos;
    NormalizedSimilarity text_sim{0.0};
};

// texts[i] belongs to pairs[i]. Output sorted by (target, query, text).
std::vector<CoVRTriplet> build_triplets(const std::vector<DirectedVideoPair>& pairs,
                                        const std::vector<ModificationText>& texts, const Corpus* corpus = nullptr);

struct DatasetStats {
    std::size_t n_triplets = 0;
    std::size_t n_distinct_videos = 0;
    std::size_t n_distinct_texts = 0;
    double avg_text_words = 0.0;
    // target id -> triplet count, and (triplet count -> number of targets)
    std::map<std::string, std::size_t> triplets_per_target;
    std::map<std::size_t, std::size_t> text_word_length;
    std::optional<double> static_fraction;
    double flow_threshold = 1.0;

    double avg_triplets_per_target() const;
};

inline constexpr double kDefaultFlowThreshold = 1.0;

std::size_t count_words(const std::string& text);
DatasetStats compute_stats(const std::vector<CoVRTriplet>& triplets, double flow_threshold = kDefaultFlowThreshold);

struct StaticDynamicSplit {
    std::vector<CoVRTriplet> static_set;
    std::vector<CoVRTriplet> dynamic_set;
};

// static: flow < threshold, dynamic: flow >= threshold.
StaticDynamicSplit split_static_dynamic(const std::vector<CoVRTriplet>& triplets,
                                        double threshold = kDefaultFlowThreshold);

OrderedJson triplet_to_json(const CoVRTriplet& t);
CoVRTriplet triplet_from_json(const Json& j);
void write_triplets_jsonl(const std::vector<CoVRTriplet>& triplets, const std::filesystem::path& path);
std::vector<CoVRTriplet> read_triplets_jsonl(const std::filesystem::path& path);

OrderedJson stats_to_json(const DatasetStats& stats);
std::string stats_triplets_per_target_csv(const DatasetStats& stats);
std::string stats_text_length_csv(const DatasetStats& stats);

struct SplitFractions {
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplits {
    std::vector<CoVRTriplet> train;
    std::vector<CoVRTriplet> val;
    std::vector<CoVRTriplet> test;
};

// Groups by unordered caption pair so both directions land in the same split.
DatasetSplits split_dataset(const std::vector<CoVRTriplet>& triplets, const SplitFractions& fractions,
                            std::uint64_t seed);

// Held-out corpus must share no video id with the training corpus.
void check_disjoint(const Corpus& heldout, const Corpus& training);

struct EvalPools {
    std::vector<CoVRTriplet> validation;
    std::vector<CoVRTriplet> annotation;
};

EvalPools sample_eval_pools(const std::vector<CoVRTriplet>& candidates, std::size_t val_size,
                            std::size_t annotate_size, std::uint64_t seed);

}  // namespace covr
