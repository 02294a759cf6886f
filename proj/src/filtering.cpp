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

#include "covr/filtering.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "covr/error.hpp"

namespace covr {

void FilterConfig::validate() const {
    if (!(0.0 <= sim_min.value && sim_min.value < sim_max.value && sim_max.value <= 1.0))
        fail(ErrorKind::config, "filter thresholds must satisfy 0 <= sim_min < sim_max <= 1");
    if (max_video_pairs_per_caption_pair < 1) fail(ErrorKind::config, "max_video_pairs_per_caption_pair must be >= 1");
    if (visual_sim_min && !(visual_sim_min->value >= 0.0 && visual_sim_min->value <= 1.0))
        fail(ErrorKind::config, "visual_sim_min must lie in [0, 1]");
}

const char* to_string(FilterReason reason) {
    switch (reason) {
        case FilterReason::kept: return "kept";
        case FilterReason::too_similar: return "too_similar";
        case FilterReason::too_dissimilar: return "too_dissimilar";
        case FilterReason::digit_diff: return "digit_diff";
        case FilterReason::oov_diff: return "oov_diff";
        case FilterReason::rare_diff: return "rare_diff";
        case FilterReason::template_caption: return "template_caption";
    }
    return "?";
}

Vec StoreTextEncoder::embed(const std::string& text) const {
    auto v = store_.find(text);
    if (!v) fail(ErrorKind::validation, "missing text embedding for caption '" + text + "'");
    return Vec(v->begin(), v->end());
}

namespace {

std::vector<const std::string*> diff_tokens(const CaptionPair& pair) {
    std::vector<const std::string*> out;
    if (pair.diff_a) out.push_back(&*pair.diff_a);
    if (pair.diff_b) out.push_back(&*pair.diff_b);
    return out;
}

bool has_digit(const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

bool is_templated(const std::string& caption, const std::vector<std::string>& blocklist) {
    return std::any_of(blocklist.begin(), blocklist.end(),
                       [&](const std::string& b) { return !b.empty() && caption.find(b) != std::string::npos; });
}

}  // namespace

FilterDecision filter_caption_pair(const CaptionPair& pair, const TextEncoder& text, const Lexicon& lexicon,
                                   const FilterConfig& cfg) {
    FilterDecision d;
    const auto ea = text.embed(pair.caption_a);
    const auto eb = text.embed(pair.caption_b);
    d.text_sim = normalized_similarity(ea, eb);

    const auto diffs = diff_tokens(pair);
    if (is_templated(pair.caption_a, cfg.template_blocklist) || is_templated(pair.caption_b, cfg.template_blocklist))
        d.reason = FilterReason::template_caption;
    else if (std::any_of(diffs.begin(), diffs.end(), [](const auto* t) { return has_digit(*t); }))
        d.reason = FilterReason::digit_diff;
    else if (std::any_of(diffs.begin(), diffs.end(), [&](const auto* t) { return !lexicon.in_dictionary(*t); }))
        d.reason = FilterReason::oov_diff;
    else if (std::any_of(diffs.begin(), diffs.end(), [&](const auto* t) {
                 auto z = lexicon.zipf(*t);
                 return !z || *z < cfg.zipf_min;
             }))
        d.reason = FilterReason::rare_diff;
    else if (d.text_sim >= cfg.sim_max)
        d.reason = FilterReason::too_similar;
    else if (d.text_sim <= cfg.sim_min)
        d.reason = FilterReason::too_dissimilar;
    return d;
}

FramesManifest load_frames_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::missing_artifact, "cannot open " + path.string());
    FramesManifest out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != "video_id,frame_count") throw ParseError(path.string(), lineno, "header must be video_id,frame_count");
            continue;
        }
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0) throw ParseError(path.string(), lineno, "expected video_id,frame_count");
        std::size_t count = 0;
        const char* b = line.data() + comma + 1;
        const char* e = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(b, e, count);
        if (ec != std::errc() || ptr != e || count == 0)
            throw ParseError(path.string(), lineno, "frame_count must be a positive integer");
        if (!out.emplace(line.substr(0, comma), count).second)
            throw ParseError(path.string(), lineno, "duplicate video_id " + line.substr(0, comma));
    }
    return out;
}

std::size_t middle_frame(std::size_t frame_count) { return frame_count / 2; }

std::vector<VideoPair> select_video_pairs(const CaptionPair& pair,
                                          const std::unordered_map<std::string, std::vector<std::string>>& videos_by_caption,
                                          const FramesManifest& frames, const EmbeddingStore& frame_embs,
                                          const FilterConfig& cfg) {
    auto videos_of = [&](const std::string& caption) -> const std::vector<std::string>& {
        auto it = videos_by_caption.find(caption);
        if (it == videos_by_caption.end() || it->second.empty())
            fail(ErrorKind::validation, "caption has no videos: '" + caption + "'");
        return it->second;
    };
    auto middle = [&](const std::string& video) {
        auto it = frames.find(video);
        if (it == frames.end()) fail(ErrorKind::validation, "video missing from frames manifest: " + video);
        return frame_embs.at(frame_id(video, middle_frame(it->second)));
    };

    const auto& va = videos_of(pair.caption_a);
    const auto& vb = videos_of(pair.caption_b);
    std::vector<VideoPair> out;
    out.reserve(va.size() * vb.size());
    for (const auto& a : va) {
        const auto ea = middle(a);
        for (const auto& b : vb) {
            if (a == b) continue;
            const auto sim = normalized_similarity(ea, middle(b));
            if (cfg.visual_sim_min && sim < *cfg.visual_sim_min) continue;
            out.push_back({a, b, sim});
        }
    }
    std::sort(out.begin(), out.end(), [](const VideoPair& l, const VideoPair& r) {
        if (l.visual_sim != r.visual_sim) return l.visual_sim > r.visual_sim;
        return std::tie(l.query_video, l.target_video) < std::tie(r.query_video, r.target_video);
    });
    if (out.size() > cfg.max_video_pairs_per_caption_pair) out.resize(cfg.max_video_pairs_per_caption_pair);
    return out;
}

}  // namespace covr
