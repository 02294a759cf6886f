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

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covr/embedspace.hpp"
#include "covr/hnnce.hpp"
#include "covr/io.hpp"

namespace covr {

struct ComposedQuery {
    std::string query_id;
    Vec f;
    std::string target_id;
    std::optional<std::vector<std::string>> subset_ids;
};

struct GalleryEntry {
    std::string video_id;
    Vec h;
};

inline const std::vector<std::size_t> kRecallKs{1, 5, 10, 50};
inline const std::vector<std::size_t> kSubsetRecallKs{1, 2, 3};

struct RecallReport {
    std::map<std::size_t, double> r_at;
    double mean_r = 0.0;
    std::map<std::size_t, double> subset_r_at;
    std::size_t n_queries = 0;
};

// Softmax over cosine(frame, text) / temp.
std::vector<double> frame_weights(std::span<const Vec> frames, std::span<const double> text, double temp = 1.0);
std::vector<double> uniform_weights(std::size_t n);

// normalize(sum_i w_i frame_i); degenerate sums are a validation error.
Vec video_embedding(std::span<const Vec> frames, std::span<const double> weights);

// Indices of n equally spaced frames; n = 1 picks the middle frame.
std::vector<std::size_t> sample_frame_indices(std::size_t frame_count, std::size_t n);

enum class FusionKind { avg, mlp };
FusionKind fusion_kind_from_string(std::string_view s);

// Video queries pass several frames; they are averaged first.
Vec compose_query(std::span<const Vec> query_visual, std::span<const double> text, FusionKind fusion,
                  const FusionHead* head = nullptr);
Vec mean_direction(std::span<const Vec> vectors);

// Gallery ids by descending cosine with ties on ascending id; restricted to
// subset_ids when the query has them.
std::vector<std::string> retrieve(const ComposedQuery& query, std::span<const GalleryEntry> gallery);

// 1-based rank: 1 + #strictly greater + #equal with smaller id.
std::size_t target_rank(const ComposedQuery& query, std::span<const GalleryEntry> gallery, bool within_subset = false);

RecallReport recall_report_from_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> subset_ranks = {});

// Every query's target must be in the gallery (and in its subset, if any).
RecallReport recall_report(std::span<const ComposedQuery> queries, std::span<const GalleryEntry> gallery);

OrderedJson recall_to_json(const RecallReport& report);

}  // namespace covr
