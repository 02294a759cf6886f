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

#include "covr/tripletset.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "covr/error.hpp"
#include "covr/hash.hpp"
#include "covr/rng.hpp"

namespace covr {

std::vector<CoVRTriplet> build_triplets(const std::vector<DirectedVideoPair>& pairs,
                                        const std::vector<ModificationText>& texts, const Corpus* corpus) {
    if (pairs.size() != texts.size())
        fail(ErrorKind::validation, "text/pair count mismatch: " + std::to_string(texts.size()) + " texts for " +
                                        std::to_string(pairs.size()) + " video pairs");
    std::vector<CoVRTriplet> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.videos.query_video == p.videos.target_video)
            fail(ErrorKind::validation, "query and target video coincide: " + p.videos.query_video);
        if (texts[i].text.empty()) fail(ErrorKind::validation, "empty modification text for pair " + std::to_string(i));
        CoVRTriplet t;
        t.query_video = p.videos.query_video;
        t.target_video = p.videos.target_video;
        t.modification = texts[i];
        t.caption_a = p.caption_a;
        t.caption_b = p.caption_b;
        t.text_sim = p.text_sim;
        t.visual_sim = p.videos.visual_sim;
        if (corpus)
            if (const auto* rec = corpus->find(t.target_video)) t.flow_magnitude_target = rec->flow_magnitude;
        out.push_back(std::move(t));
    }
    std::sort(out.begin(), out.end(), [](const CoVRTriplet& a, const CoVRTriplet& b) {
        return std::tie(a.target_video, a.query_video, a.modification.text) <
               std::tie(b.target_video, b.query_video, b.modification.text);
    });
    return out;
}

std::size_t count_words(const std::string& text) {
    std::istringstream ss(text);
    std::size_t n = 0;
    std::string w;
    while (ss >> w) ++n;
    return n;
}

double DatasetStats::avg_triplets_per_target() const {
    if (triplets_per_target.empty()) return 0.0;
    return static_cast<double>(n_triplets) / static_cast<double>(triplets_per_target.size());
}

DatasetStats compute_stats(const std::vector<CoVRTriplet>& triplets, double flow_threshold) {
    DatasetStats s;
    s.flow_threshold = flow_threshold;
    s.n_triplets = triplets.size();
    std::set<std::string> videos;
    std::set<std::string> texts;
    std::size_t words = 0;
    std::size_t with_flow = 0;
    std::size_t static_count = 0;
    for (const auto& t : triplets) {
        videos.insert(t.query_video);
        videos.insert(t.target_video);
        texts.insert(t.modification.text);
        const auto w = count_words(t.modification.text);
        words += w;
        ++s.text_word_length[w];
        ++s.triplets_per_target[t.target_video];
        if (t.flow_magnitude_target) {
            ++with_flow;
            if (*t.flow_magnitude_target < flow_threshold) ++static_count;
        }
    }
    s.n_distinct_videos = videos.size();
    s.n_distinct_texts = texts.size();
    s.avg_text_words = triplets.empty() ? 0.0 : static_cast<double>(words) / static_cast<double>(triplets.size());
    if (with_flow > 0) s.static_fraction = static_cast<double>(static_count) / static_cast<double>(with_flow);
    return s;
}

StaticDynamicSplit split_static_dynamic(const std::vector<CoVRTriplet>& triplets, double threshold) {
    StaticDynamicSplit out;
    for (const auto& t : triplets) {
        if (!t.flow_magnitude_target)
            fail(ErrorKind::validation, "triplet " + t.query_video + " -> " + t.target_video + " has no flow magnitude");
        (*t.flow_magnitude_target < threshold ? out.static_set : out.dynamic_set).push_back(t);
    }
    return out;
}

OrderedJson triplet_to_json(const CoVRTriplet& t) {
    OrderedJson j{{"query_video", t.query_video},
                  {"target_video", t.target_video},
                  {"text", t.modification.text},
                  {"source", to_string(t.modification.source)},
                  {"caption_a", t.caption_a},
                  {"caption_b", t.caption_b},
                  {"text_sim", t.text_sim.value},
                  {"visual_sim", t.visual_sim.value}};
    j["flow_magnitude_target"] = t.flow_magnitude_target ? OrderedJson(*t.flow_magnitude_target) : OrderedJson(nullptr);
    if (t.modification.template_id) j["template_id"] = *t.modification.template_id;
    if (!t.modification.candidates.empty()) j["candidates"] = t.modification.candidates;
    return j;
}

CoVRTriplet triplet_from_json(const Json& j) {
    CoVRTriplet t;
    t.query_video = j.at("query_video").get<std::string>();
    t.target_video = j.at("target_video").get<std::string>();
    t.modification.text = j.at("text").get<std::string>();
    t.modification.source = text_source_from_string(j.at("source").get<std::string>());
    if (j.contains("template_id") && !j["template_id"].is_null()) t.modification.template_id = j["template_id"].get<int>();
    if (j.contains("candidates")) t.modification.candidates = j["candidates"].get<std::vector<std::string>>();
    t.caption_a = j.at("caption_a").get<std::string>();
    t.caption_b = j.at("caption_b").get<std::string>();
    t.text_sim = {j.at("text_sim").get<double>()};
    t.visual_sim = {j.at("visual_sim").get<double>()};
    if (j.contains("flow_magnitude_target") && !j["flow_magnitude_target"].is_null())
        t.flow_magnitude_target = j["flow_magnitude_target"].get<double>();
    if (t.query_video == t.target_video) fail(ErrorKind::validation, "triplet with query == target: " + t.query_video);
    if (t.modification.text.empty()) fail(ErrorKind::validation, "triplet with empty text");
    return t;
}

void write_triplets_jsonl(const std::vector<CoVRTriplet>& triplets, const std::filesystem::path& path) {
    JsonlWriter w;
    for (const auto& t : triplets) w.add(triplet_to_json(t));
    w.write(path);
}

std::vector<CoVRTriplet> read_triplets_jsonl(const std::filesystem::path& path) {
    std::vector<CoVRTriplet> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(triplet_from_json(j)); });
    return out;
}

OrderedJson stats_to_json(const DatasetStats& s) {
    OrderedJson per_target = OrderedJson::object();
    std::map<std::size_t, std::size_t> targets_by_count;
    for (const auto& [id, n] : s.triplets_per_target) ++targets_by_count[n];
    for (const auto& [n, count] : targets_by_count) per_target[std::to_string(n)] = count;
    OrderedJson lengths = OrderedJson::object();
    for (const auto& [w, count] : s.text_word_length) lengths[std::to_string(w)] = count;
    OrderedJson j{{"n_triplets", s.n_triplets},
                  {"n_distinct_videos", s.n_distinct_videos},
                  {"n_distinct_texts", s.n_distinct_texts},
                  {"n_distinct_targets", s.triplets_per_target.size()},
                  {"avg_text_words", s.avg_text_words},
                  {"avg_triplets_per_target", s.avg_triplets_per_target()},
                  {"targets_by_triplet_count", per_target},
                  {"text_word_length", lengths},
                  {"flow_threshold", s.flow_threshold}};
    j["static_fraction"] = s.static_fraction ? OrderedJson(*s.static_fraction) : OrderedJson(nullptr);
    return j;
}

std::string stats_triplets_per_target_csv(const DatasetStats& s) {
    std::string out = "target_video,triplets\n";
    for (const auto& [id, n] : s.triplets_per_target) out += id + "," + std::to_string(n) + "\n";
    return out;
}

std::string stats_text_length_csv(const DatasetStats& s) {
    std::string out = "words,triplets\n";
    for (const auto& [w, n] : s.text_word_length) out += std::to_string(w) + "," + std::to_string(n) + "\n";
    return out;
}

DatasetSplits split_dataset(const std::vector<CoVRTriplet>& triplets, const SplitFractions& fractions,
                            std::uint64_t seed) {
    if (fractions.val < 0 || fractions.test < 0 || fractions.val + fractions.test > 1.0)
        fail(ErrorKind::config, "split fractions must be nonnegative and sum to at most 1");
    auto group_key = [](const CoVRTriplet& t) {
        return t.caption_a < t.caption_b ? t.caption_a + "\n" + t.caption_b : t.caption_b + "\n" + t.caption_a;
    };
    std::vector<std::string> groups;
    std::unordered_set<std::string> seen;
    for (const auto& t : triplets)
        if (auto k = group_key(t); seen.insert(k).second) groups.push_back(std::move(k));
    std::sort(groups.begin(), groups.end());
    Rng rng(seed);
    shuffle(std::span<std::string>(groups), rng);
    const auto n = groups.size();
    const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * fractions.test);
    const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * fractions.val);
    std::unordered_map<std::string, int> assignment;
    for (std::size_t i = 0; i < n; ++i) assignment[groups[i]] = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);

    DatasetSplits out;
    for (const auto& t : triplets) {
        switch (assignment[group_key(t)]) {
            case 2: out.test.push_back(t); break;
            case 1: out.val.push_back(t); break;
            default: out.train.push_back(t); break;
        }
    }
    return out;
}

void check_disjoint(const Corpus& heldout, const Corpus& training) {
    std::vector<std::string> overlap;
    for (const auto& r : heldout.records())
        if (training.contains(r.video_id)) overlap.push_back(r.video_id);
    if (overlap.empty()) return;
    std::string msg = "held-out corpus shares " + std::to_string(overlap.size()) + " video ids with the training corpus:";
    for (std::size_t i = 0; i < overlap.size() && i < 20; ++i) msg += " " + overlap[i];
    if (overlap.size() > 20) msg += " ...";
    fail(ErrorKind::validation, msg);
}

EvalPools sample_eval_pools(const std::vector<CoVRTriplet>& candidates, std::size_t val_size,
                            std::size_t annotate_size, std::uint64_t seed) {
    if (val_size + annotate_size > candidates.size())
        fail(ErrorKind::config, "requested " + std::to_string(val_size) + " validation + " + std::to_string(annotate_size) +
                                    " annotation triplets from a pool of " + std::to_string(candidates.size()));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    shuffle(std::span<std::size_t>(order), rng);
    EvalPools out;
    for (std::size_t i = 0; i < val_size; ++i) out.validation.push_back(candidates[order[i]]);
    for (std::size_t i = 0; i < annotate_size; ++i) out.annotation.push_back(candidates[order[val_size + i]]);
    return out;
}

}  // namespace covr
