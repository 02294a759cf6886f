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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covr/annotate.hpp"
#include "covr/filtering.hpp"
#include "covr/hnnce.hpp"
#include "covr/io.hpp"
#include "covr/mtg.hpp"
#include "covr/retrieval.hpp"
#include "covr/tripletset.hpp"

namespace covr {

enum class MtgMode { rule, rule_paraphrase, llm };
MtgMode mtg_mode_from_string(std::string_view s);
const char* to_string(MtgMode m);

struct MtgConfig {
    MtgMode mode = MtgMode::rule;
    std::string url = "http://127.0.0.1:8080";
    int top_k = 200;
    double temperature = 0.8;
    int candidates = 1;
    SelectStrategy select = SelectStrategy::first;
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
    bool both_directions = true;
};

struct EvalConfig {
    FusionKind fusion = FusionKind::mlp;
    std::size_t query_frames = 5;
    std::size_t gallery_frames = 15;
    double frame_temperature = 1.0;
    std::vector<std::size_t> frame_sweep{1, 3, 5, 9, 15};
    bool baselines = true;
};

struct EvalSetConfig {
    std::size_t val_size = 0;
    std::size_t annotate_size = 0;
};

struct AnnotateConfig {
    std::string host = "127.0.0.1";
    int port = 8090;
    std::chrono::seconds lease{600};
    std::filesystem::path pool;
    std::filesystem::path log;
    std::filesystem::path frames_dir;
};

struct PipelinePaths {
    std::filesystem::path corpus;
    std::filesystem::path text_embeddings;   // optional when text_encoder is toy
    std::filesystem::path frame_embeddings;
    std::filesystem::path frames_manifest;
    std::filesystem::path dictionary;
    std::filesystem::path zipf;
    std::filesystem::path output_dir;
    std::filesystem::path heldout_corpus;  // make-eval-set input; must not share videos with corpus
};

struct PipelineConfig {
    PipelinePaths paths;
    std::string text_encoder = "store";  // store | toy
    std::size_t toy_dim = 64;
    FilterConfig filter;
    MtgConfig mtg;
    HnNceConfig train;
    BatchMode batch_mode = BatchMode::by_target;
    EvalConfig eval;
    SplitFractions splits;
    EvalSetConfig eval_set;
    AnnotateConfig annotate;
    double flow_threshold = kDefaultFlowThreshold;
    std::uint64_t seed = 0;
    unsigned workers = 1;

    // Relative paths resolve against base_dir.
    static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    // Dotted-key override, e.g. ("mtg.mode", "llm"). The value is parsed as
    // JSON when possible and taken as a string otherwise.
    void set(const std::string& key, const std::string& value);
    // Stage-relevant configuration without paths; hashed into manifests.
    OrderedJson stage_config(const std::string& stage) const;
    OrderedJson to_json() const;
    void validate() const;
};

inline const std::vector<std::string> kStages{"mine",  "filter-pairs", "gen-text", "filter-videos", "build-triplets",
                                              "stats", "train",        "eval",     "make-eval-set", "serve-annotate"};
// Stages that `all` runs, in order.
inline const std::vector<std::string> kBatchStages{"mine",           "filter-pairs", "gen-text", "filter-videos",
                                                   "build-triplets", "stats",        "train",    "eval"};

struct RunOptions {
    bool force = false;
    bool strict = false;
};

struct StageResult {
    std::string stage;
    bool skipped = false;
    std::map<std::string, std::uint64_t> counts;
    double wall_time_s = 0.0;
};

// Runs stages against one config. Each stage writes its artifacts under
// output_dir plus manifests/<stage>.json recording input and config hashes;
// an unchanged rerun is a no-op unless forced.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const { return cfg_; }
    PipelineConfig& mutable_config() { return cfg_; }

    StageResult run_stage(const std::string& name, const RunOptions& opts = {});
    std::vector<StageResult> run_all(const RunOptions& opts = {});

    std::filesystem::path artifact(const std::string& name) const;
    std::filesystem::path manifest_path(const std::string& stage) const;

private:
    PipelineConfig cfg_;
};

// Candidate triplets for annotation from a held-out corpus: one video pair
// per caption pair, three texts per pair, seeded validation/annotation pools.
// The held-out corpus must not share video ids with the training corpus.
struct EvalCandidates {
    std::vector<CoVRTriplet> candidates;
    EvalPools pools;
};

struct EvalSetInputs {
    const Corpus* heldout = nullptr;
    const Corpus* training = nullptr;
    const TextEncoder* text = nullptr;
    const Lexicon* lexicon = nullptr;
    const FramesManifest* frames = nullptr;
    const EmbeddingStore* frame_embs = nullptr;
    MtgClient* client = nullptr;  // required for llm modes
};

EvalCandidates make_eval_candidates(const EvalSetInputs& inputs, const PipelineConfig& cfg);

}  // namespace covr
