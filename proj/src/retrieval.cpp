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

#include "covr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "covr/error.hpp"

namespace covr {

std::vector<double> frame_weights(std::span<const Vec> frames, std::span<const double> text, double temp) {
    if (frames.empty()) fail(ErrorKind::invalid_argument, "frame_weights needs at least one frame");
    if (!(temp > 0.0)) fail(ErrorKind::invalid_argument, "frame weight temperature must be > 0");
    std::vector<double> logits(frames.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        logits[i] = dot(frames[i], text) / temp;
        max_logit = std::max(max_logit, logits[i]);
    }
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - max_logit);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

std::vector<double> uniform_weights(std::size_t n) {
    if (n == 0) fail(ErrorKind::invalid_argument, "uniform_weights needs n >= 1");
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

Vec video_embedding(std::span<const Vec> frames, std::span<const double> weights) {
    if (frames.empty() || frames.size() != weights.size())
        fail(ErrorKind::invalid_argument, "video_embedding needs one weight per frame");
    Vec acc(frames[0].size(), 0.0);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].size() != acc.size()) fail(ErrorKind::invalid_argument, "frame dimension mismatch");
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += weights[i] * frames[i][k];
    }
    const double n = l2_norm(acc);
    if (!(n > 1e-12)) fail(ErrorKind::validation, "weighted frame mean is the zero vector");
    for (auto& x : acc) x /= n;
    return acc;
}

std::vector<std::size_t> sample_frame_indices(std::size_t frame_count, std::size_t n) {
    if (frame_count == 0 || n == 0) fail(ErrorKind::invalid_argument, "sample_frame_indices needs frames and n >= 1");
    if (n == 1) return {frame_count / 2};
    std::vector<std::size_t> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = static_cast<std::size_t>(
            std::llround(static_cast<double>(k) * static_cast<double>(frame_count - 1) / static_cast<double>(n - 1)));
    return out;
}

FusionKind fusion_kind_from_string(std::string_view s) {
    if (s == "avg") return FusionKind::avg;
    if (s == "mlp") return FusionKind::mlp;
    fail(ErrorKind::config, "unknown fusion '" + std::string(s) + "' (expected avg|mlp)");
}

Vec mean_direction(std::span<const Vec> vectors) {
    if (vectors.empty()) fail(ErrorKind::invalid_argument, "mean of no vectors");
    return video_embedding(vectors, uniform_weights(vectors.size()));
}

Vec compose_query(std::span<const Vec> query_visual, std::span<const double> text, FusionKind fusion,
                  const FusionHead* head) {
    const Vec visual = mean_direction(query_visual);
    if (visual.size() != text.size()) fail(ErrorKind::invalid_argument, "visual/text dimension mismatch");
    if (fusion == FusionKind::mlp) {
        if (!head) fail(ErrorKind::invalid_argument, "mlp fusion needs a trained head");
        return fusion_forward(*head, visual, text);
    }
    Vec sum(visual.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = 0.5 * (visual[i] + text[i]);
    const double n = l2_norm(sum);
    if (!(n > 1e-12)) fail(ErrorKind::validation, "average fusion produced the zero vector");
    for (auto& x : sum) x /= n;
    return sum;
}

namespace {

struct Scored {
    double score;
    const std::string* id;
};

std::vector<Scored> score_gallery(const ComposedQuery& query, std::span<const GalleryEntry> gallery, bool use_subset) {
    std::unordered_set<std::string> subset;
    const bool restrict = use_subset && query.subset_ids.has_value();
    if (restrict) subset.insert(query.subset_ids->begin(), query.subset_ids->end());
    std::vector<Scored> out;
    out.reserve(restrict ? subset.size() : gallery.size());
    for (const auto& g : gallery) {
        if (restrict && !subset.count(g.video_id)) continue;
        out.push_back({dot(query.f, g.h), &g.video_id});
    }
    return out;
}

}  // namespace

std::vector<std::string> retrieve(const ComposedQuery& query, std::span<const GalleryEntry> gallery) {
    if (gallery.empty()) fail(ErrorKind::invalid_argument, "empty gallery");
    auto scored = score_gallery(query, gallery, true);
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.id < *b.id;
    });
    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& s : scored) out.push_back(*s.id);
    return out;
}

std::size_t target_rank(const ComposedQuery& query, std::span<const GalleryEntry> gallery, bool within_subset) {
    const auto scored = score_gallery(query, gallery, within_subset);
    const Scored* target = nullptr;
    for (const auto& s : scored)
        if (*s.id == query.target_id) target = &s;
    if (!target) fail(ErrorKind::validation, "target '" + query.target_id + "' missing from gallery");
    std::size_t rank = 1;
    for (const auto& s : scored) {
        if (&s == target) continue;
        if (s.score > target->score || (s.score == target->score && *s.id < query.target_id)) ++rank;
    }
    return rank;
}

RecallReport recall_report_from_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> subset_ranks) {
    RecallReport r;
    r.n_queries = ranks.size();
    if (ranks.empty()) fail(ErrorKind::invalid_argument, "recall over zero queries");
    const auto n = static_cast<double>(ranks.size());
    double sum = 0.0;
    for (auto k : kRecallKs) {
        const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t rank) { return rank <= k; });
        r.r_at[k] = static_cast<double>(hits) / n;
        sum += r.r_at[k];
    }
    r.mean_r = sum / static_cast<double>(kRecallKs.size());
    if (!subset_ranks.empty()) {
        const auto ns = static_cast<double>(subset_ranks.size());
        for (auto k : kSubsetRecallKs) {
            const auto hits =
                std::count_if(subset_ranks.begin(), subset_ranks.end(), [k](std::size_t rank) { return rank <= k; });
            r.subset_r_at[k] = static_cast<double>(hits) / ns;
        }
    }
    return r;
}

RecallReport recall_report(std::span<const ComposedQuery> queries, std::span<const GalleryEntry> gallery) {
    std::vector<std::size_t> ranks;
    std::vector<std::size_t> subset_ranks;
    ranks.reserve(queries.size());
    for (const auto& q : queries) {
        ranks.push_back(target_rank(q, gallery, false));
        if (q.subset_ids) {
            if (std::find(q.subset_ids->begin(), q.subset_ids->end(), q.target_id) == q.subset_ids->end())
                fail(ErrorKind::validation, "query " + q.query_id + ": target not in its subset");
            subset_ranks.push_back(target_rank(q, gallery, true));
        }
    }
    return recall_report_from_ranks(ranks, subset_ranks);
}

OrderedJson recall_to_json(const RecallReport& report) {
    OrderedJson j;
    j["n_queries"] = report.n_queries;
    for (const auto& [k, v] : report.r_at) j["R@" + std::to_string(k)] = v;
    j["MeanR"] = report.mean_r;
    for (const auto& [k, v] : report.subset_r_at) j["Rsubset@" + std::to_string(k)] = v;
    return j;
}

}  // namespace covr
