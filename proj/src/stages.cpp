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

#include "stages.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "covr/error.hpp"
#include "covr/hash.hpp"
#include "covr/rng.hpp"

namespace covr::stages {

std::vector<CaptionPair> mine_corpus(const Corpus& corpus, unsigned workers) {
    const auto captions = corpus.distinct_captions();
    const auto index = build_index(captions, workers);
    return mine_pairs(index, workers);
}

FilterOutcome filter_pairs(const std::vector<CaptionPair>& pairs, const TextEncoder& text, const Lexicon& lexicon,
                           const FilterConfig& cfg) {
    FilterOutcome out;
    out.decisions.reserve(pairs.size());
    for (const auto& p : pairs) {
        auto d = filter_caption_pair(p, text, lexicon, cfg);
        if (d.kept()) out.kept.push_back({p, d.text_sim});
        out.decisions.emplace_back(p, d);
    }
    return out;
}

std::unordered_map<std::string, std::string> raw_captions(const Corpus& corpus) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& r : corpus.records()) out.emplace(r.key(), r.caption_raw);
    return out;
}

std::vector<CaptionPair> directed_pairs(const std::vector<KeptPair>& kept, bool both_directions) {
    std::vector<CaptionPair> out;
    out.reserve(kept.size() * (both_directions ? 2 : 1));
    for (const auto& k : kept) {
        out.push_back(k.pair);
        if (both_directions) out.push_back(k.pair.reversed());
    }
    return out;
}

namespace {

std::uint64_t pair_seed(std::uint64_t seed, const CaptionPair& p, int variant) {
    std::uint64_t state = seed ^ fnv1a64(p.caption_a + "\n" + p.caption_b);
    state += static_cast<std::uint64_t>(variant) * 0x9E3779B97F4A7C15ULL;
    return splitmix64(state);
}

ModificationText generate_one(const CaptionPair& p, const std::unordered_map<std::string, std::string>& raw,
                              const MtgConfig& cfg, int n_candidates, std::uint64_t seed, MtgClient* client) {
    if (cfg.mode == MtgMode::llm) {
        auto raw_of = [&](const std::string& key) {
            auto it = raw.find(key);
            return it == raw.end() ? key : it->second;
        };
        MtgRequest req{raw_of(p.caption_a), raw_of(p.caption_b), cfg.top_k, cfg.temperature, n_candidates};
        return llm_generate(req, *client, cfg.select, cfg.retry);
    }
    std::vector<ModificationText> variants;
    for (int k = 0; k < n_candidates; ++k) {
        auto m = rule_based_text(p, pair_seed(seed, p, k));
        if (cfg.mode == MtgMode::rule_paraphrase) m = paraphrase(m, *client, cfg.retry);
        variants.push_back(std::move(m));
    }
    if (n_candidates == 1) return variants.front();
    std::vector<std::string> texts;
    for (const auto& v : variants) texts.push_back(v.text);
    const auto chosen = select_candidate(texts, cfg.select);
    auto pick = *std::find_if(variants.begin(), variants.end(), [&](const auto& v) { return v.text == chosen; });
    pick.candidates = std::move(texts);
    return pick;
}

}  // namespace

TextOutcome generate_texts(const std::vector<CaptionPair>& directed, const std::unordered_map<std::string, std::string>& raw,
                           const MtgConfig& cfg, int n_candidates, std::uint64_t seed, MtgClient* client) {
    if (cfg.mode != MtgMode::rule && !client) fail(ErrorKind::config, "MTG mode needs a service client");
    std::vector<std::optional<ModificationText>> results(directed.size());
    std::vector<std::string> errors(directed.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < directed.size(); i = next++) {
            try {
                results[i] = generate_one(directed[i], raw, cfg, n_candidates, seed, client);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::service) throw;
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n_threads =
        cfg.mode == MtgMode::rule ? 1 : std::max<std::size_t>(1, std::min(cfg.max_in_flight, directed.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        std::exception_ptr first_error;
        std::mutex mu;
        for (std::size_t t = 0; t < n_threads; ++t) {
            threads.emplace_back([&] {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    next = directed.size();
                }
            });
        }
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    TextOutcome out;
    for (std::size_t i = 0; i < directed.size(); ++i) {
        const DirectedKey key{directed[i].caption_a, directed[i].caption_b};
        if (results[i])
            out.texts.emplace(key, std::move(*results[i]));
        else
            out.failures.push_back({key, errors[i]});
    }
    return out;
}

std::vector<CaptionVideoPairs> select_videos(const std::vector<KeptPair>& kept, const Corpus& corpus,
                                             const FramesManifest& frames, const EmbeddingStore& frame_embs,
                                             const FilterConfig& cfg) {
    const auto by_caption = corpus.videos_by_caption();
    std::vector<CaptionVideoPairs> out;
    out.reserve(kept.size());
    for (const auto& k : kept)
        out.push_back({k.pair.caption_a, k.pair.caption_b, select_video_pairs(k.pair, by_caption, frames, frame_embs, cfg)});
    return out;
}

std::vector<CoVRTriplet> assemble_triplets(const std::vector<KeptPair>& kept, const std::vector<CaptionVideoPairs>& videos,
                                           const std::map<DirectedKey, ModificationText>& texts, bool both_directions,
                                           const Corpus& corpus) {
    std::map<std::pair<std::string, std::string>, NormalizedSimilarity> text_sim;
    for (const auto& k : kept) text_sim[{k.pair.caption_a, k.pair.caption_b}] = k.text_sim;
    auto text_for = [&](const std::string& a, const std::string& b) -> const ModificationText& {
        auto it = texts.find({a, b});
        if (it == texts.end()) fail(ErrorKind::missing_artifact, "no modification text for '" + a + "' -> '" + b + "'");
        return it->second;
    };

    std::vector<DirectedVideoPair> directed;
    std::vector<ModificationText> mods;
    for (const auto& cv : videos) {
        auto sim_it = text_sim.find({cv.caption_a, cv.caption_b});
        if (sim_it == text_sim.end())
            fail(ErrorKind::validation, "video pairs reference a caption pair that was not kept: '" + cv.caption_a + "'");
        for (const auto& v : cv.videos) {
            directed.push_back({cv.caption_a, cv.caption_b, v, sim_it->second});
            mods.push_back(text_for(cv.caption_a, cv.caption_b));
            if (both_directions) {
                directed.push_back({cv.caption_b, cv.caption_a, VideoPair{v.target_video, v.query_video, v.visual_sim},
                                    sim_it->second});
                mods.push_back(text_for(cv.caption_b, cv.caption_a));
            }
        }
    }
    return build_triplets(directed, mods, &corpus);
}

std::vector<Vec> load_frames(const EmbeddingStore& frame_embs, const std::string& video_id,
                             const std::vector<std::size_t>& indices) {
    std::vector<Vec> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(frame_embs.at_double(frame_id(video_id, i)));
    return out;
}

std::unique_ptr<TextEncoder> make_text_encoder(const PipelineConfig& cfg, std::unique_ptr<EmbeddingStore>& storage) {
    if (cfg.text_encoder == "toy") return std::make_unique<ToyTextEncoder>(cfg.toy_dim);
    if (cfg.text_encoder != "store") fail(ErrorKind::config, "text_encoder must be store or toy");
    if (cfg.paths.text_embeddings.empty()) fail(ErrorKind::config, "paths.text_embeddings is required for the store encoder");
    storage = std::make_unique<EmbeddingStore>(load_embeddings(cfg.paths.text_embeddings));
    return std::make_unique<StoreTextEncoder>(*storage);
}

}  // namespace covr::stages
