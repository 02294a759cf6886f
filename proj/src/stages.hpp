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

// Stage building blocks shared by the pipeline stages and make-eval-set.

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "covr/pipeline.hpp"

namespace covr::stages {

struct KeptPair {
    CaptionPair pair;
    NormalizedSimilarity text_sim{0.0};
};

using DirectedKey = std::pair<std::string, std::string>;  // (query caption, target caption)

std::vector<CaptionPair> mine_corpus(const Corpus& corpus, unsigned workers);

struct FilterOutcome {
    std::vector<std::pair<CaptionPair, FilterDecision>> decisions;
    std::vector<KeptPair> kept;
};

FilterOutcome filter_pairs(const std::vector<CaptionPair>& pairs, const TextEncoder& text, const Lexicon& lexicon,
                           const FilterConfig& cfg);

// First raw caption seen for each caption key.
std::unordered_map<std::string, std::string> raw_captions(const Corpus& corpus);

struct TextFailure {
    DirectedKey key;
    std::string error;
};

struct TextOutcome {
    std::map<DirectedKey, ModificationText> texts;
    std::vector<TextFailure> failures;
};

// Generates texts for every requested direction. Requests run concurrently up
// to max_in_flight; results are keyed, so output order never depends on timing.
TextOutcome generate_texts(const std::vector<CaptionPair>& directed, const std::unordered_map<std::string, std::string>& raw,
                           const MtgConfig& cfg, int n_candidates, std::uint64_t seed, MtgClient* client);

std::vector<CaptionPair> directed_pairs(const std::vector<KeptPair>& kept, bool both_directions);

struct CaptionVideoPairs {
    std::string caption_a;
    std::string caption_b;
    std::vector<VideoPair> videos;
};

std::vector<CaptionVideoPairs> select_videos(const std::vector<KeptPair>& kept, const Corpus& corpus,
                                             const FramesManifest& frames, const EmbeddingStore& frame_embs,
                                             const FilterConfig& cfg);

std::vector<CoVRTriplet> assemble_triplets(const std::vector<KeptPair>& kept, const std::vector<CaptionVideoPairs>& videos,
                                           const std::map<DirectedKey, ModificationText>& texts, bool both_directions,
                                           const Corpus& corpus);

// Frame vectors of a video at the given indices.
std::vector<Vec> load_frames(const EmbeddingStore& frame_embs, const std::string& video_id,
                             const std::vector<std::size_t>& indices);

std::unique_ptr<TextEncoder> make_text_encoder(const PipelineConfig& cfg, std::unique_ptr<EmbeddingStore>& storage);

}  // namespace covr::stages
