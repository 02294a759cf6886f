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

#include "covr/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include "covr/error.hpp"
#include "covr/hash.hpp"
#include "stages.hpp"

namespace covr {

namespace fs = std::filesystem;

MtgMode mtg_mode_from_string(std::string_view s) {
    if (s == "rule") return MtgMode::rule;
    if (s == "rule-paraphrase" || s == "rule_paraphrase") return MtgMode::rule_paraphrase;
    if (s == "llm") return MtgMode::llm;
    fail(ErrorKind::config, "unknown MTG mode '" + std::string(s) + "' (rule, rule-paraphrase, llm)");
}

const char* to_string(MtgMode m) {
    switch (m) {
        case MtgMode::rule: return "rule";
        case MtgMode::rule_paraphrase: return "rule-paraphrase";
        case MtgMode::llm: return "llm";
    }
    return "?";
}

namespace {

const char* select_name(SelectStrategy s) { return s == SelectStrategy::first ? "first" : "longest"; }
const char* fusion_name(FusionKind f) { return f == FusionKind::avg ? "avg" : "mlp"; }
const char* batch_mode_name(BatchMode m) { return m == BatchMode::by_target ? "by_target" : "by_triplet"; }

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

// Rejects keys that the default configuration does not have.
void check_known_keys(const Json& given, const Json& known, const std::string& prefix) {
    if (!given.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        const auto name = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!known.contains(it.key())) fail(ErrorKind::config, "unknown config key '" + name + "'");
        if (known[it.key()].is_object()) check_known_keys(it.value(), known[it.key()], name);
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

}  // namespace

OrderedJson PipelineConfig::to_json() const {
    OrderedJson j;
    j["paths"] = {{"corpus", paths.corpus.string()},
                  {"text_embeddings", paths.text_embeddings.string()},
                  {"frame_embeddings", paths.frame_embeddings.string()},
                  {"frames_manifest", paths.frames_manifest.string()},
                  {"dictionary", paths.dictionary.string()},
                  {"zipf", paths.zipf.string()},
                  {"output_dir", paths.output_dir.string()},
                  {"heldout_corpus", paths.heldout_corpus.string()}};
    j["text_encoder"] = text_encoder;
    j["toy_dim"] = toy_dim;
    j["filter"] = {{"sim_max", filter.sim_max.value},
                   {"sim_min", filter.sim_min.value},
                   {"zipf_min", filter.zipf_min},
                   {"template_blocklist", filter.template_blocklist},
                   {"max_video_pairs_per_caption_pair", filter.max_video_pairs_per_caption_pair},
                   {"visual_sim_min", filter.visual_sim_min ? OrderedJson(filter.visual_sim_min->value) : OrderedJson()}};
    j["mtg"] = {{"mode", to_string(mtg.mode)},
                {"url", mtg.url},
                {"top_k", mtg.top_k},
                {"temperature", mtg.temperature},
                {"candidates", mtg.candidates},
                {"select", select_name(mtg.select)},
                {"max_in_flight", mtg.max_in_flight},
                {"retry_attempts", mtg.retry.max_attempts},
                {"retry_backoff_ms", mtg.retry.initial_backoff.count()},
                {"both_directions", mtg.both_directions}};
    j["train"] = {{"tau", train.tau},
                  {"alpha", train.alpha},
                  {"beta", train.beta},
                  {"batch_size", train.batch_size},
                  {"learning_rate", train.learning_rate},
                  {"epochs", train.epochs},
                  {"hidden", train.hidden},
                  {"batch_mode", batch_mode_name(batch_mode)}};
    j["eval"] = {{"fusion", fusion_name(eval.fusion)},
                 {"query_frames", eval.query_frames},
                 {"gallery_frames", eval.gallery_frames},
                 {"frame_temperature", eval.frame_temperature},
                 {"frame_sweep", eval.frame_sweep},
                 {"baselines", eval.baselines}};
    j["splits"] = {{"val", splits.val}, {"test", splits.test}};
    j["eval_set"] = {{"val_size", eval_set.val_size}, {"annotate_size", eval_set.annotate_size}};
    j["annotate"] = {{"host", annotate.host},
                     {"port", annotate.port},
                     {"lease_seconds", annotate.lease.count()},
                     {"pool", annotate.pool.string()},
                     {"log", annotate.log.string()},
                     {"frames_dir", annotate.frames_dir.string()}};
    j["flow_threshold"] = flow_threshold;
    j["seed"] = seed;
    j["workers"] = workers;
    return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j, const fs::path& base_dir) {
    if (!j.is_object()) fail(ErrorKind::config, "config must be a JSON object");
    PipelineConfig c;
    check_known_keys(j, Json::parse(c.to_json().dump()), "");
    try {
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            auto path = [&](const char* key, fs::path& out) {
                std::string s;
                read(p, key, s);
                if (!s.empty()) out = resolve(base_dir, s);
            };
            path("corpus", c.paths.corpus);
            path("text_embeddings", c.paths.text_embeddings);
            path("frame_embeddings", c.paths.frame_embeddings);
            path("frames_manifest", c.paths.frames_manifest);
            path("dictionary", c.paths.dictionary);
            path("zipf", c.paths.zipf);
            path("output_dir", c.paths.output_dir);
            path("heldout_corpus", c.paths.heldout_corpus);
        }
        read(j, "text_encoder", c.text_encoder);
        read(j, "toy_dim", c.toy_dim);
        if (j.contains("filter")) {
            const auto& f = j["filter"];
            read(f, "sim_max", c.filter.sim_max.value);
            read(f, "sim_min", c.filter.sim_min.value);
            read(f, "zipf_min", c.filter.zipf_min);
            read(f, "template_blocklist", c.filter.template_blocklist);
            read(f, "max_video_pairs_per_caption_pair", c.filter.max_video_pairs_per_caption_pair);
            if (f.contains("visual_sim_min")) {
                if (f["visual_sim_min"].is_null())
                    c.filter.visual_sim_min.reset();
                else
                    c.filter.visual_sim_min = NormalizedSimilarity{f["visual_sim_min"].get<double>()};
            }
        }
        if (j.contains("mtg")) {
            const auto& m = j["mtg"];
            if (m.contains("mode")) c.mtg.mode = mtg_mode_from_string(m["mode"].get<std::string>());
            read(m, "url", c.mtg.url);
            read(m, "top_k", c.mtg.top_k);
            read(m, "temperature", c.mtg.temperature);
            read(m, "candidates", c.mtg.candidates);
            if (m.contains("select")) c.mtg.select = select_strategy_from_string(m["select"].get<std::string>());
            read(m, "max_in_flight", c.mtg.max_in_flight);
            read(m, "retry_attempts", c.mtg.retry.max_attempts);
            if (m.contains("retry_backoff_ms"))
                c.mtg.retry.initial_backoff = std::chrono::milliseconds(m["retry_backoff_ms"].get<std::int64_t>());
            read(m, "both_directions", c.mtg.both_directions);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            read(t, "tau", c.train.tau);
            read(t, "alpha", c.train.alpha);
            read(t, "beta", c.train.beta);
            read(t, "batch_size", c.train.batch_size);
            read(t, "learning_rate", c.train.learning_rate);
            read(t, "epochs", c.train.epochs);
            read(t, "hidden", c.train.hidden);
            if (t.contains("batch_mode")) c.batch_mode = batch_mode_from_string(t["batch_mode"].get<std::string>());
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            if (e.contains("fusion")) c.eval.fusion = fusion_kind_from_string(e["fusion"].get<std::string>());
            read(e, "query_frames", c.eval.query_frames);
            read(e, "gallery_frames", c.eval.gallery_frames);
            read(e, "frame_temperature", c.eval.frame_temperature);
            read(e, "frame_sweep", c.eval.frame_sweep);
            read(e, "baselines", c.eval.baselines);
        }
        if (j.contains("splits")) {
            read(j["splits"], "val", c.splits.val);
            read(j["splits"], "test", c.splits.test);
        }
        if (j.contains("eval_set")) {
            read(j["eval_set"], "val_size", c.eval_set.val_size);
            read(j["eval_set"], "annotate_size", c.eval_set.annotate_size);
        }
        if (j.contains("annotate")) {
            const auto& a = j["annotate"];
            read(a, "host", c.annotate.host);
            read(a, "port", c.annotate.port);
            if (a.contains("lease_seconds")) c.annotate.lease = std::chrono::seconds(a["lease_seconds"].get<std::int64_t>());
            std::string s;
            read(a, "pool", s);
            c.annotate.pool = resolve(base_dir, s);
            s.clear();
            read(a, "log", s);
            c.annotate.log = resolve(base_dir, s);
            s.clear();
            read(a, "frames_dir", s);
            c.annotate.frames_dir = resolve(base_dir, s);
        }
        read(j, "flow_threshold", c.flow_threshold);
        read(j, "seed", c.seed);
        read(j, "workers", c.workers);
    } catch (const Json::exception& e) {
        fail(ErrorKind::config, std::string("bad config value: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) throw;
        fail(ErrorKind::config, e.what());
    }
    c.train.seed = c.seed;
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorKind::config, "config file not found: " + path.string());
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        fail(ErrorKind::config, "cannot parse " + path.string() + ": " + e.what());
    }
    auto cfg = from_json(j, fs::absolute(path).parent_path());
    if (const char* url = std::getenv("COVR_FORGE_MTG_URL"); url && *url) cfg.mtg.url = url;
    cfg.validate();
    return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    Json j = Json::parse(to_json().dump());
    Json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) fail(ErrorKind::config, "empty config key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) fail(ErrorKind::config, "unknown config key '" + key + "'");
        node = &(*node)[parts[i]];
    }
    if (!node->is_object() || !node->contains(parts.back())) fail(ErrorKind::config, "unknown config key '" + key + "'");
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const Json::parse_error&) {
        parsed = value;
    }
    // Keep string-typed fields strings even when the text looks like JSON.
    if ((*node)[parts.back()].is_string() && !parsed.is_string()) parsed = value;
    (*node)[parts.back()] = parsed;
    *this = from_json(j, {});
}

void PipelineConfig::validate() const {
    filter.validate();
    train.validate();
    if (text_encoder != "store" && text_encoder != "toy") fail(ErrorKind::config, "text_encoder must be store or toy");
    if (toy_dim < 2) fail(ErrorKind::config, "toy_dim must be at least 2");
    if (mtg.candidates < 1) fail(ErrorKind::config, "mtg.candidates must be at least 1");
    if (mtg.top_k < 1) fail(ErrorKind::config, "mtg.top_k must be at least 1");
    if (!(mtg.temperature > 0)) fail(ErrorKind::config, "mtg.temperature must be positive");
    if (mtg.max_in_flight < 1) fail(ErrorKind::config, "mtg.max_in_flight must be at least 1");
    if (mtg.retry.max_attempts < 1) fail(ErrorKind::config, "mtg.retry_attempts must be at least 1");
    if (eval.query_frames < 1 || eval.gallery_frames < 1) fail(ErrorKind::config, "eval frame counts must be positive");
    if (!(eval.frame_temperature > 0)) fail(ErrorKind::config, "eval.frame_temperature must be positive");
    for (auto n : eval.frame_sweep)
        if (n < 1) fail(ErrorKind::config, "eval.frame_sweep entries must be positive");
    if (splits.val < 0 || splits.test < 0 || splits.val + splits.test >= 1.0)
        fail(ErrorKind::config, "splits.val and splits.test must be nonnegative and sum below 1");
    if (workers < 1) fail(ErrorKind::config, "workers must be at least 1");
    if (paths.output_dir.empty()) fail(ErrorKind::config, "paths.output_dir is required");
}

OrderedJson PipelineConfig::stage_config(const std::string& stage) const {
    const auto all = to_json();
    OrderedJson j{{"stage", stage}};
    auto encoder = [&] {
        j["text_encoder"] = text_encoder;
        if (text_encoder == "toy") j["toy_dim"] = toy_dim;
    };
    // The service URL and concurrency settings do not change what a
    // deterministic service returns, so they stay out of the hash.
    auto mtg_json = [&] {
        OrderedJson m = all["mtg"];
        m.erase("url");
        m.erase("max_in_flight");
        m.erase("retry_attempts");
        m.erase("retry_backoff_ms");
        return m;
    };
    if (stage == "mine") {
        j["max_tokens"] = kMaxMiningTokens;
    } else if (stage == "filter-pairs") {
        encoder();
        OrderedJson f = all["filter"];
        f.erase("max_video_pairs_per_caption_pair");
        f.erase("visual_sim_min");
        j["filter"] = f;
    } else if (stage == "gen-text") {
        j["mtg"] = mtg_json();
        j["seed"] = seed;
    } else if (stage == "filter-videos") {
        j["max_video_pairs_per_caption_pair"] = all["filter"]["max_video_pairs_per_caption_pair"];
        j["visual_sim_min"] = all["filter"]["visual_sim_min"];
    } else if (stage == "build-triplets") {
        j["both_directions"] = mtg.both_directions;
        j["splits"] = all["splits"];
        j["seed"] = seed;
    } else if (stage == "stats") {
        j["flow_threshold"] = flow_threshold;
    } else if (stage == "train") {
        encoder();
        j["train"] = all["train"];
        j["query_frames"] = eval.query_frames;
        j["gallery_frames"] = eval.gallery_frames;
        j["frame_temperature"] = eval.frame_temperature;
        j["seed"] = seed;
    } else if (stage == "eval") {
        encoder();
        j["eval"] = all["eval"];
    } else if (stage == "make-eval-set") {
        encoder();
        j["filter"] = all["filter"];
        j["mtg"] = mtg_json();
        j["eval_set"] = all["eval_set"];
        j["seed"] = seed;
    } else if (stage != "serve-annotate") {
        fail(ErrorKind::config, "unknown stage '" + stage + "'");
    }
    return j;
}

// ---------------------------------------------------------------------------

namespace {

struct Input {
    std::string name;   // logical name recorded in the manifest
    fs::path path;
    std::string producer;  // stage that writes it; empty for external inputs
};

struct StageSpec {
    std::vector<Input> inputs;
    std::vector<std::string> outputs;  // relative to output_dir
};

const std::map<std::string, std::string>& producers() {
    static const std::map<std::string, std::string> m{
        {"pairs.jsonl", "mine"},
        {"filter_report.jsonl", "filter-pairs"},
        {"kept_pairs.jsonl", "filter-pairs"},
        {"texts.jsonl", "gen-text"},
        {"video_pairs.jsonl", "filter-videos"},
        {"triplets.jsonl", "build-triplets"},
        {"splits/train.jsonl", "build-triplets"},
        {"splits/val.jsonl", "build-triplets"},
        {"splits/test.jsonl", "build-triplets"},
        {"stats.json", "stats"},
        {"stats_triplets_per_target.csv", "stats"},
        {"stats_text_length.csv", "stats"},
        {"head.ckpt", "train"},
        {"loss_curve.csv", "train"},
        {"eval_report.json", "eval"},
        {"eval_set/candidates.jsonl", "make-eval-set"},
        {"eval_set/val.jsonl", "make-eval-set"},
        {"eval_set/annotate_pool.jsonl", "make-eval-set"},
    };
    return m;
}

std::vector<std::string> outputs_of(const std::string& stage) {
    std::vector<std::string> out;
    for (const auto& [name, producer] : producers())
        if (producer == stage) out.push_back(name);
    return out;
}

OrderedJson texts_row(const CaptionPair& p, const ModificationText& m) {
    OrderedJson j{{"caption_a", p.caption_a}, {"caption_b", p.caption_b}, {"text", m.text}, {"source", to_string(m.source)}};
    if (m.template_id) j["template_id"] = *m.template_id;
    if (!m.candidates.empty()) j["candidates"] = m.candidates;
    return j;
}

std::map<stages::DirectedKey, ModificationText> read_texts(const fs::path& path) {
    std::map<stages::DirectedKey, ModificationText> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        ModificationText m;
        m.text = j.at("text").get<std::string>();
        m.source = text_source_from_string(j.at("source").get<std::string>());
        if (j.contains("template_id")) m.template_id = j["template_id"].get<int>();
        if (j.contains("candidates")) m.candidates = j["candidates"].get<std::vector<std::string>>();
        out.emplace(stages::DirectedKey{j.at("caption_a").get<std::string>(), j.at("caption_b").get<std::string>()},
                    std::move(m));
    });
    return out;
}

void write_kept(const std::vector<stages::KeptPair>& kept, const fs::path& path) {
    JsonlWriter w;
    for (const auto& k : kept) {
        auto j = pair_to_json(k.pair);
        j["text_sim"] = k.text_sim.value;
        w.add(j);
    }
    w.write(path);
}

std::vector<stages::KeptPair> read_kept(const fs::path& path) {
    std::vector<stages::KeptPair> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        out.push_back({pair_from_json(j), NormalizedSimilarity{j.at("text_sim").get<double>()}});
    });
    return out;
}

void write_video_pairs(const std::vector<stages::CaptionVideoPairs>& all, const fs::path& path) {
    JsonlWriter w;
    for (const auto& cv : all)
        for (const auto& v : cv.videos)
            w.add(OrderedJson{{"caption_a", cv.caption_a},
                              {"caption_b", cv.caption_b},
                              {"query_video", v.query_video},
                              {"target_video", v.target_video},
                              {"visual_sim", v.visual_sim.value}});
    w.write(path);
}

std::vector<stages::CaptionVideoPairs> read_video_pairs(const fs::path& path) {
    std::vector<stages::CaptionVideoPairs> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        auto a = j.at("caption_a").get<std::string>();
        auto b = j.at("caption_b").get<std::string>();
        if (out.empty() || out.back().caption_a != a || out.back().caption_b != b) out.push_back({a, b, {}});
        out.back().videos.push_back({j.at("query_video").get<std::string>(), j.at("target_video").get<std::string>(),
                                     NormalizedSimilarity{j.at("visual_sim").get<double>()}});
    });
    return out;
}

// Frame vectors per video, loaded on first use.
class FrameCache {
public:
    FrameCache(const FramesManifest& frames, const EmbeddingStore& store) : frames_(frames), store_(store) {}

    std::size_t count(const std::string& video) const {
        auto it = frames_.find(video);
        if (it == frames_.end()) fail(ErrorKind::validation, "video '" + video + "' is missing from the frames manifest");
        return it->second;
    }

    // n equally spaced frames of a video.
    const std::vector<Vec>& sampled(const std::string& video, std::size_t n) {
        auto key = std::make_pair(video, n);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto c = count(video);
        auto idx = sample_frame_indices(c, std::min(n, c));
        return cache_.emplace(key, stages::load_frames(store_, video, idx)).first->second;
    }

private:
    const FramesManifest& frames_;
    const EmbeddingStore& store_;
    std::map<std::pair<std::string, std::size_t>, std::vector<Vec>> cache_;
};

Vec scored_video(FrameCache& frames, const std::string& video, std::size_t n, std::span<const double> text, double temp) {
    const auto& f = frames.sampled(video, n);
    return video_embedding(f, frame_weights(f, text, temp));
}

std::vector<TrainingRow> training_rows(const std::vector<CoVRTriplet>& triplets, const TextEncoder& text, FrameCache& frames,
                                       const PipelineConfig& cfg) {
    std::vector<TrainingRow> rows;
    rows.reserve(triplets.size());
    for (const auto& t : triplets) {
        TrainingRow r;
        r.target_id = t.target_video;
        r.text = text.embed(t.modification.text);
        r.query_visual = mean_direction(frames.sampled(t.query_video, cfg.eval.query_frames));
        r.target = scored_video(frames, t.target_video, cfg.eval.gallery_frames, r.text, cfg.eval.frame_temperature);
        rows.push_back(std::move(r));
    }
    return rows;
}

enum class Method { composed, text_only, visual_only };

// Ranks each test triplet's target among the split's distinct target videos.
RecallReport evaluate(const std::vector<CoVRTriplet>& test, const std::vector<std::string>& gallery_ids,
                      const TextEncoder& text, FrameCache& frames, const PipelineConfig& cfg, Method method,
                      FusionKind fusion, const FusionHead* head, std::size_t gallery_frames) {
    std::vector<std::size_t> ranks;
    ranks.reserve(test.size());
    std::vector<GalleryEntry> gallery(gallery_ids.size());
    for (std::size_t g = 0; g < gallery_ids.size(); ++g) gallery[g].video_id = gallery_ids[g];
    std::vector<Vec> uniform_gallery;
    if (method == Method::visual_only) {
        for (auto& g : gallery) {
            const auto& f = frames.sampled(g.video_id, gallery_frames);
            g.h = video_embedding(f, uniform_weights(f.size()));
        }
    }
    for (const auto& t : test) {
        const auto t_emb = text.embed(t.modification.text);
        const auto& q = frames.sampled(t.query_video, cfg.eval.query_frames);
        ComposedQuery query;
        query.query_id = t.query_video;
        query.target_id = t.target_video;
        switch (method) {
            case Method::composed: query.f = compose_query(q, t_emb, fusion, head); break;
            case Method::text_only: query.f = t_emb; break;
            case Method::visual_only: query.f = mean_direction(q); break;
        }
        if (method != Method::visual_only)
            for (auto& g : gallery)
                g.h = scored_video(frames, g.video_id, gallery_frames, t_emb, cfg.eval.frame_temperature);
        ranks.push_back(target_rank(query, gallery));
    }
    return recall_report_from_ranks(ranks);
}

OrderedJson with_frames(OrderedJson j, std::size_t frames) {
    OrderedJson out{{"frames", frames}};
    for (auto& [k, v] : j.items()) out[k] = v;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

EvalCandidates make_eval_candidates(const EvalSetInputs& in, const PipelineConfig& cfg) {
    if (!in.heldout || !in.training || !in.text || !in.lexicon || !in.frames || !in.frame_embs)
        fail(ErrorKind::invalid_argument, "make_eval_candidates: missing input");
    check_disjoint(*in.heldout, *in.training);
    FilterConfig fc = cfg.filter;
    fc.max_video_pairs_per_caption_pair = 1;
    const auto mined = stages::mine_corpus(*in.heldout, cfg.workers);
    const auto filtered = stages::filter_pairs(mined, *in.text, *in.lexicon, fc);
    const auto videos = stages::select_videos(filtered.kept, *in.heldout, *in.frames, *in.frame_embs, fc);
    std::vector<stages::KeptPair> with_videos;
    std::vector<stages::CaptionVideoPairs> used_videos;
    for (std::size_t i = 0; i < filtered.kept.size(); ++i) {
        if (videos[i].videos.empty()) continue;
        with_videos.push_back(filtered.kept[i]);
        used_videos.push_back(videos[i]);
    }
    const auto directed = stages::directed_pairs(with_videos, cfg.mtg.both_directions);
    auto texts = stages::generate_texts(directed, stages::raw_captions(*in.heldout), cfg.mtg, 3, cfg.seed, in.client);
    if (!texts.failures.empty())
        fail(ErrorKind::service, std::to_string(texts.failures.size()) + " caption pairs failed text generation; first: " +
                                     texts.failures.front().error);
    EvalCandidates out;
    out.candidates = stages::assemble_triplets(with_videos, used_videos, texts.texts, cfg.mtg.both_directions, *in.heldout);
    out.pools = sample_eval_pools(out.candidates, cfg.eval_set.val_size, cfg.eval_set.annotate_size, cfg.seed);
    return out;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

fs::path Pipeline::artifact(const std::string& name) const { return cfg_.paths.output_dir / name; }

fs::path Pipeline::manifest_path(const std::string& stage) const {
    return cfg_.paths.output_dir / "manifests" / (stage + ".json");
}

namespace {

class StageRunner {
public:
    StageRunner(const Pipeline& p, const PipelineConfig& cfg) : p_(p), cfg_(cfg) {}

    StageSpec spec(const std::string& stage) const {
        StageSpec s;
        s.outputs = outputs_of(stage);
        auto ext = [&](const char* name, const fs::path& path) {
            if (path.empty()) fail(ErrorKind::config, std::string("paths.") + name + " is required for stage " + stage);
            s.inputs.push_back({name, path, ""});
        };
        auto art = [&](const std::string& name) { s.inputs.push_back({name, p_.artifact(name), producers().at(name)}); };
        auto text_store = [&] {
            if (cfg_.text_encoder == "store") ext("text_embeddings", cfg_.paths.text_embeddings);
        };
        if (stage == "mine") {
            ext("corpus", cfg_.paths.corpus);
        } else if (stage == "filter-pairs") {
            art("pairs.jsonl");
            ext("dictionary", cfg_.paths.dictionary);
            ext("zipf", cfg_.paths.zipf);
            text_store();
        } else if (stage == "gen-text") {
            art("kept_pairs.jsonl");
            ext("corpus", cfg_.paths.corpus);
        } else if (stage == "filter-videos") {
            art("kept_pairs.jsonl");
            ext("corpus", cfg_.paths.corpus);
            ext("frames_manifest", cfg_.paths.frames_manifest);
            ext("frame_embeddings", cfg_.paths.frame_embeddings);
        } else if (stage == "build-triplets") {
            art("pairs.jsonl");
            art("kept_pairs.jsonl");
            art("texts.jsonl");
            art("video_pairs.jsonl");
            ext("corpus", cfg_.paths.corpus);
        } else if (stage == "stats") {
            art("triplets.jsonl");
        } else if (stage == "train") {
            art("splits/train.jsonl");
            ext("frames_manifest", cfg_.paths.frames_manifest);
            ext("frame_embeddings", cfg_.paths.frame_embeddings);
            text_store();
        } else if (stage == "eval") {
            art("splits/test.jsonl");
            if (cfg_.eval.fusion == FusionKind::mlp) art("head.ckpt");
            ext("frames_manifest", cfg_.paths.frames_manifest);
            ext("frame_embeddings", cfg_.paths.frame_embeddings);
            text_store();
        } else if (stage == "make-eval-set") {
            ext("heldout_corpus", cfg_.paths.heldout_corpus);
            ext("corpus", cfg_.paths.corpus);
            ext("dictionary", cfg_.paths.dictionary);
            ext("zipf", cfg_.paths.zipf);
            ext("frames_manifest", cfg_.paths.frames_manifest);
            ext("frame_embeddings", cfg_.paths.frame_embeddings);
            text_store();
        } else {
            fail(ErrorKind::config, "unknown stage '" + stage + "'");
        }
        return s;
    }

    std::map<std::string, std::uint64_t> run(const std::string& stage) {
        if (stage == "mine") return mine();
        if (stage == "filter-pairs") return filter_pairs();
        if (stage == "gen-text") return gen_text();
        if (stage == "filter-videos") return filter_videos();
        if (stage == "build-triplets") return build_triplets();
        if (stage == "stats") return stats();
        if (stage == "train") return train_stage();
        if (stage == "eval") return eval_stage();
        if (stage == "make-eval-set") return eval_set();
        fail(ErrorKind::config, "unknown stage '" + stage + "'");
    }

private:
    const Corpus& corpus() {
        if (!corpus_) corpus_ = load_corpus(cfg_.paths.corpus);
        return *corpus_;
    }
    const TextEncoder& text() {
        if (!text_) text_ = stages::make_text_encoder(cfg_, text_store_);
        return *text_;
    }
    const Lexicon& lexicon() {
        if (!lexicon_) lexicon_ = load_lexicon(cfg_.paths.dictionary, cfg_.paths.zipf);
        return *lexicon_;
    }
    const FramesManifest& frames() {
        if (!frames_) frames_ = load_frames_manifest(cfg_.paths.frames_manifest);
        return *frames_;
    }
    const EmbeddingStore& frame_embs() {
        if (!frame_embs_) frame_embs_ = std::make_unique<EmbeddingStore>(load_embeddings(cfg_.paths.frame_embeddings));
        return *frame_embs_;
    }
    MtgClient* client() {
        if (cfg_.mtg.mode == MtgMode::rule) return nullptr;
        if (!client_) client_ = std::make_unique<HttpMtgClient>(cfg_.mtg.url);
        return client_.get();
    }

    std::map<std::string, std::uint64_t> mine() {
        const auto& c = corpus();
        const auto captions = c.distinct_captions();
        const auto index = build_index(captions, cfg_.workers);
        const auto pairs = mine_pairs(index, cfg_.workers);
        write_pairs_jsonl(pairs, p_.artifact("pairs.jsonl"));
        return {{"records", c.size()}, {"captions", captions.size()}, {"skipped_long", index.skipped()}, {"pairs", pairs.size()}};
    }

    std::map<std::string, std::uint64_t> filter_pairs() {
        const auto pairs = read_pairs_jsonl(p_.artifact("pairs.jsonl"));
        const auto out = stages::filter_pairs(pairs, text(), lexicon(), cfg_.filter);
        JsonlWriter report;
        std::map<std::string, std::uint64_t> counts{{"pairs", pairs.size()}, {"kept", out.kept.size()}};
        for (const auto& [p, d] : out.decisions) {
            report.add(OrderedJson{{"caption_a", p.caption_a},
                                   {"caption_b", p.caption_b},
                                   {"kept", d.kept()},
                                   {"reason", to_string(d.reason)},
                                   {"text_sim", d.text_sim.value}});
            if (!d.kept()) ++counts[std::string("reason.") + to_string(d.reason)];
        }
        report.write(p_.artifact("filter_report.jsonl"));
        write_kept(out.kept, p_.artifact("kept_pairs.jsonl"));
        return counts;
    }

    std::map<std::string, std::uint64_t> gen_text() {
        const auto kept = read_kept(p_.artifact("kept_pairs.jsonl"));
        const auto directed = stages::directed_pairs(kept, cfg_.mtg.both_directions);
        const auto failures_path = p_.artifact("gen_text_failures.jsonl");
        auto out = stages::generate_texts(directed, stages::raw_captions(corpus()), cfg_.mtg, cfg_.mtg.candidates,
                                          cfg_.seed, client());
        if (!out.failures.empty()) {
            JsonlWriter w;
            for (const auto& f : out.failures)
                w.add(OrderedJson{{"caption_a", f.key.first}, {"caption_b", f.key.second}, {"error", f.error}});
            w.write(failures_path);
            fs::remove(p_.artifact("texts.jsonl"));
            fail(ErrorKind::service, std::to_string(out.failures.size()) + " of " + std::to_string(directed.size()) +
                                         " caption pairs failed text generation; see " + failures_path.string());
        }
        fs::remove(failures_path);
        JsonlWriter w;
        for (const auto& p : directed) w.add(texts_row(p, out.texts.at({p.caption_a, p.caption_b})));
        w.write(p_.artifact("texts.jsonl"));
        return {{"directed_pairs", directed.size()}, {"texts", out.texts.size()}};
    }

    std::map<std::string, std::uint64_t> filter_videos() {
        const auto kept = read_kept(p_.artifact("kept_pairs.jsonl"));
        const auto videos = stages::select_videos(kept, corpus(), frames(), frame_embs(), cfg_.filter);
        write_video_pairs(videos, p_.artifact("video_pairs.jsonl"));
        std::uint64_t n = 0, with = 0;
        for (const auto& v : videos) {
            n += v.videos.size();
            with += v.videos.empty() ? 0 : 1;
        }
        return {{"caption_pairs", kept.size()}, {"caption_pairs_with_videos", with}, {"video_pairs", n}};
    }

    std::map<std::string, std::uint64_t> build_triplets() {
        const auto mined = read_pairs_jsonl(p_.artifact("pairs.jsonl"));
        const auto kept = read_kept(p_.artifact("kept_pairs.jsonl"));
        const std::set<CaptionPair> mined_set(mined.begin(), mined.end());
        for (const auto& k : kept)
            if (!mined_set.count(k.pair))
                fail(ErrorKind::validation, "kept pair '" + k.pair.caption_a + "' / '" + k.pair.caption_b +
                                                "' is not among the mined pairs; rerun filter-pairs");
        const auto texts = read_texts(p_.artifact("texts.jsonl"));
        const auto videos = read_video_pairs(p_.artifact("video_pairs.jsonl"));
        const auto triplets = stages::assemble_triplets(kept, videos, texts, cfg_.mtg.both_directions, corpus());
        write_triplets_jsonl(triplets, p_.artifact("triplets.jsonl"));
        const auto splits = split_dataset(triplets, cfg_.splits, cfg_.seed);
        fs::create_directories(p_.artifact("splits"));
        write_triplets_jsonl(splits.train, p_.artifact("splits/train.jsonl"));
        write_triplets_jsonl(splits.val, p_.artifact("splits/val.jsonl"));
        write_triplets_jsonl(splits.test, p_.artifact("splits/test.jsonl"));
        std::uint64_t undirected = 0;
        for (const auto& v : videos) undirected += v.videos.size();
        return {{"mined_pairs", mined.size()}, {"kept_pairs", kept.size()},       {"video_pairs", undirected},
                {"triplets", triplets.size()}, {"train", splits.train.size()},     {"val", splits.val.size()},
                {"test", splits.test.size()}};
    }

    std::map<std::string, std::uint64_t> stats() {
        const auto triplets = read_triplets_jsonl(p_.artifact("triplets.jsonl"));
        const auto s = compute_stats(triplets, cfg_.flow_threshold);
        auto j = stats_to_json(s);
        std::vector<CoVRTriplet> with_flow;
        for (const auto& t : triplets)
            if (t.flow_magnitude_target) with_flow.push_back(t);
        const auto sd = split_static_dynamic(with_flow, cfg_.flow_threshold);
        j["n_static"] = sd.static_set.size();
        j["n_dynamic"] = sd.dynamic_set.size();
        write_text_file(p_.artifact("stats.json"), j.dump(2) + "\n");
        write_text_file(p_.artifact("stats_triplets_per_target.csv"), stats_triplets_per_target_csv(s));
        write_text_file(p_.artifact("stats_text_length.csv"), stats_text_length_csv(s));
        return {{"triplets", s.n_triplets}, {"videos", s.n_distinct_videos}, {"texts", s.n_distinct_texts}};
    }

    std::map<std::string, std::uint64_t> train_stage() {
        const auto triplets = read_triplets_jsonl(p_.artifact("splits/train.jsonl"));
        if (triplets.empty()) fail(ErrorKind::validation, "the training split is empty");
        FrameCache cache(frames(), frame_embs());
        const auto rows = training_rows(triplets, text(), cache, cfg_);
        auto tc = cfg_.train;
        tc.seed = cfg_.seed;
        const auto result = covr::train(rows, tc, cfg_.batch_mode);
        save_head(result.head, tc, p_.artifact("head.ckpt"));
        write_text_file(p_.artifact("loss_curve.csv"), loss_curve_csv(result.epoch_loss));
        return {{"rows", rows.size()}, {"epochs", result.epoch_loss.size()}, {"parameters", result.head.parameter_count()}};
    }

    std::map<std::string, std::uint64_t> eval_stage() {
        const auto test = read_triplets_jsonl(p_.artifact("splits/test.jsonl"));
        if (test.empty()) fail(ErrorKind::validation, "the test split is empty");
        std::optional<FusionHead> head;
        if (cfg_.eval.fusion == FusionKind::mlp) head = load_head(p_.artifact("head.ckpt"));
        std::set<std::string> ids;
        for (const auto& t : test) ids.insert(t.target_video);
        const std::vector<std::string> gallery(ids.begin(), ids.end());
        FrameCache cache(frames(), frame_embs());
        const FusionHead* h = head ? &*head : nullptr;
        const auto n = cfg_.eval.gallery_frames;

        OrderedJson report{{"split", "test"}, {"queries", test.size()}, {"gallery", gallery.size()},
                           {"fusion", fusion_name(cfg_.eval.fusion)}};
        report["composed"] = recall_to_json(evaluate(test, gallery, text(), cache, cfg_, Method::composed, cfg_.eval.fusion, h, n));
        if (cfg_.eval.baselines) {
            OrderedJson b;
            if (cfg_.eval.fusion == FusionKind::mlp)
                b["avg"] = recall_to_json(evaluate(test, gallery, text(), cache, cfg_, Method::composed, FusionKind::avg, nullptr, n));
            b["text_only"] = recall_to_json(evaluate(test, gallery, text(), cache, cfg_, Method::text_only, cfg_.eval.fusion, h, n));
            b["visual_only"] =
                recall_to_json(evaluate(test, gallery, text(), cache, cfg_, Method::visual_only, cfg_.eval.fusion, h, n));
            report["baselines"] = b;
        }
        OrderedJson sweep = OrderedJson::array();
        for (auto frames_n : cfg_.eval.frame_sweep)
            sweep.push_back(with_frames(
                recall_to_json(evaluate(test, gallery, text(), cache, cfg_, Method::composed, cfg_.eval.fusion, h, frames_n)),
                frames_n));
        report["frame_sweep"] = sweep;
        write_text_file(p_.artifact("eval_report.json"), report.dump(2) + "\n");
        return {{"queries", test.size()}, {"gallery", gallery.size()}};
    }

    std::map<std::string, std::uint64_t> eval_set() {
        const auto heldout = load_corpus(cfg_.paths.heldout_corpus);
        EvalSetInputs in;
        in.heldout = &heldout;
        in.training = &corpus();
        in.text = &text();
        in.lexicon = &lexicon();
        in.frames = &frames();
        in.frame_embs = &frame_embs();
        in.client = client();
        const auto out = make_eval_candidates(in, cfg_);
        fs::create_directories(p_.artifact("eval_set"));
        write_triplets_jsonl(out.candidates, p_.artifact("eval_set/candidates.jsonl"));
        write_triplets_jsonl(out.pools.validation, p_.artifact("eval_set/val.jsonl"));
        std::vector<AnnotationCandidate> pool;
        for (const auto& t : out.pools.annotation)
            pool.push_back(candidate_from_triplet(t, frames().at(t.query_video), frames().at(t.target_video)));
        write_candidate_pool(pool, p_.artifact("eval_set/annotate_pool.jsonl"));
        return {{"candidates", out.candidates.size()}, {"val", out.pools.validation.size()}, {"annotate", pool.size()}};
    }

    const Pipeline& p_;
    const PipelineConfig& cfg_;
    std::optional<Corpus> corpus_;
    std::unique_ptr<EmbeddingStore> text_store_;
    std::unique_ptr<TextEncoder> text_;
    std::optional<Lexicon> lexicon_;
    std::optional<FramesManifest> frames_;
    std::unique_ptr<EmbeddingStore> frame_embs_;
    std::unique_ptr<MtgClient> client_;
};

std::optional<Json> read_manifest(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    try {
        return Json::parse(read_text_file(path));
    } catch (const Json::exception&) {
        return std::nullopt;
    }
}

}  // namespace

StageResult Pipeline::run_stage(const std::string& name, const RunOptions& opts) {
    StageResult result;
    result.stage = name;
    if (name == "serve-annotate") {
        AnnotateServerOptions o;
        o.pool = cfg_.annotate.pool.empty() ? artifact("eval_set/annotate_pool.jsonl") : cfg_.annotate.pool;
        o.log = cfg_.annotate.log.empty() ? artifact("eval_set/decisions.jsonl") : cfg_.annotate.log;
        o.frames_dir = cfg_.annotate.frames_dir;
        o.lease = cfg_.annotate.lease;
        if (!fs::exists(o.pool)) fail(ErrorKind::missing_artifact, "missing candidate pool " + o.pool.string() + " (run make-eval-set)");
        AnnotateServer server(o);
        std::cerr << "serving annotation on http://" << cfg_.annotate.host << ":" << cfg_.annotate.port << "\n";
        server.listen(cfg_.annotate.host, cfg_.annotate.port);
        return result;
    }

    const auto start = std::chrono::steady_clock::now();
    StageRunner runner(*this, cfg_);
    const auto spec = runner.spec(name);
    for (const auto& in : spec.inputs) {
        if (fs::exists(in.path)) continue;
        if (in.producer.empty()) fail(ErrorKind::missing_artifact, "missing input " + in.name + ": " + in.path.string());
        fail(ErrorKind::missing_artifact,
             "missing artifact " + in.name + " (produced by stage " + in.producer + "): " + in.path.string());
    }

    std::map<std::string, std::string> input_hashes;
    for (const auto& in : spec.inputs) input_hashes[in.name] = sha256_file(in.path);

    if (opts.strict) {
        for (const auto& in : spec.inputs) {
            if (in.producer.empty()) continue;
            const auto m = read_manifest(manifest_path(in.producer));
            if (!m) fail(ErrorKind::missing_artifact, "--strict: no manifest for stage " + in.producer);
            const auto outputs = m->value("outputs", Json::object());
            if (!outputs.contains(in.name) || outputs[in.name].get<std::string>() != input_hashes[in.name])
                fail(ErrorKind::missing_artifact, "--strict: hash mismatch for " + in.name + " against the " + in.producer +
                                                      " manifest");
        }
    }

    const auto config_hash = sha256_hex(cfg_.stage_config(name).dump());
    if (!opts.force) {
        if (const auto m = read_manifest(manifest_path(name))) {
            bool hit = m->value("config_hash", "") == config_hash &&
                       m->value("input_hashes", Json::object()) == Json(input_hashes);
            const auto outputs = m->value("outputs", Json::object());
            for (const auto& o : spec.outputs) {
                if (!hit) break;
                hit = outputs.contains(o) && fs::exists(artifact(o)) && outputs[o].get<std::string>() == sha256_file(artifact(o));
            }
            if (hit) {
                result.skipped = true;
                const auto counts = m->value("counts", Json::object());
                for (auto& [k, v] : counts.items()) result.counts[k] = v.get<std::uint64_t>();
                return result;
            }
        }
    }

    fs::create_directories(cfg_.paths.output_dir);
    fs::create_directories(manifest_path(name).parent_path());
    result.counts = runner.run(name);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    OrderedJson manifest;
    manifest["stage"] = name;
    manifest["input_hashes"] = input_hashes;
    manifest["config_hash"] = config_hash;
    manifest["seed"] = cfg_.seed;
    manifest["counts"] = result.counts;
    manifest["wall_time"] = result.wall_time_s;
    OrderedJson outputs = OrderedJson::object();
    for (const auto& o : spec.outputs) outputs[o] = sha256_file(artifact(o));
    manifest["outputs"] = outputs;
    write_text_file(manifest_path(name), manifest.dump(2) + "\n");
    return result;
}

std::vector<StageResult> Pipeline::run_all(const RunOptions& opts) {
    std::vector<StageResult> out;
    for (const auto& s : kBatchStages) out.push_back(run_stage(s, opts));
    return out;
}

}  // namespace covr
