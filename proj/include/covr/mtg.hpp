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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "covr/pairminer.hpp"

namespace covr {

enum class TextSource { rule, rule_paraphrased, llm };
const char* to_string(TextSource source);
TextSource text_source_from_string(std::string_view s);

struct ModificationText {
    std::string text;
    TextSource source = TextSource::rule;
    std::optional<int> template_id;
    std::vector<std::string> candidates;

    bool operator==(const ModificationText&) const = default;
};

struct MtgRequest {
    std::string caption_a;
    std::string caption_b;
    int top_k = 200;
    double temperature = 0.8;
    int n_candidates = 1;

    void validate() const;
};

enum class SelectStrategy { first, longest };
SelectStrategy select_strategy_from_string(std::string_view s);

struct RuleTemplate {
    int id;
    const char* pattern;
    bool needs_d1;
    bool needs_d2;
};

const std::vector<RuleTemplate>& rule_templates();

// Picks one applicable template uniformly with a generator seeded by rng_seed.
ModificationText rule_based_text(const CaptionPair& pair, std::uint64_t rng_seed);

inline constexpr const char* kPromptSeparator = "\n&&\n";
inline constexpr const char* kResponseMarker = "### Response:";

std::string format_llm_prompt(const std::string& caption_a, const std::string& caption_b);
// Inverse of format_llm_prompt; nullopt when the prompt does not have that shape.
std::optional<std::pair<std::string, std::string>> parse_llm_prompt(const std::string& prompt);

// Drops everything through the response marker, cuts at the first newline
// after it, and trims surrounding whitespace.
std::string clean_completion(const std::string& completion);

std::string select_candidate(const std::vector<std::string>& candidates, SelectStrategy strategy);

struct GenerateParams {
    std::string prompt;
    int top_k = 200;
    double temperature = 0.8;
    int n = 1;
    std::vector<std::string> stop{"\n"};
};

// Transport to a text-generation service.
class MtgClient {
public:
    virtual ~MtgClient() = default;
    // Throws Error(service) on transport failure.
    virtual std::vector<std::string> generate(const GenerateParams& params) = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
};

// POST /v1/generate against a base URL such as http://127.0.0.1:8080.
class HttpMtgClient final : public MtgClient {
public:
    explicit HttpMtgClient(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    std::vector<std::string> generate(const GenerateParams& params) override;

private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
};

// Retries with exponential backoff; throws Error(service) once attempts run out.
std::vector<std::string> generate_with_retry(MtgClient& client, const GenerateParams& params, const RetryPolicy& retry);

ModificationText llm_generate(const MtgRequest& req, MtgClient& client, SelectStrategy strategy,
                              const RetryPolicy& retry = {});

inline constexpr const char* kParaphrasePrefix = "Paraphrase the following sentence: ";

ModificationText paraphrase(const ModificationText& rule_text, MtgClient& client, const RetryPolicy& retry = {});

// Deterministic stand-in for the generation service, used by tests and the
// bundled toy pipeline. Reads the caption pair back out of the prompt and
// answers "change it to <new token>" style texts.
std::vector<std::string> stub_completions(const GenerateParams& params);

// Serves stub_completions over the /v1/generate protocol.
class StubMtgServer {
public:
    StubMtgServer();
    ~StubMtgServer();
    StubMtgServer(const StubMtgServer&) = delete;
    StubMtgServer& operator=(const StubMtgServer&) = delete;

    // Binds to host:port (port 0 picks a free one) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Blocks on the calling thread.
    void listen(const std::string& host, int port);
    void stop();
    std::size_t requests() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace covr
