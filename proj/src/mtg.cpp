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

#include "covr/mtg.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <httplib.h>

#include "covr/corpus.hpp"
#include "covr/error.hpp"
#include "covr/io.hpp"
#include "covr/rng.hpp"

namespace covr {

const char* to_string(TextSource source) {
    switch (source) {
        case TextSource::rule: return "rule";
        case TextSource::rule_paraphrased: return "rule_paraphrased";
        case TextSource::llm: return "llm";
    }
    return "?";
}

TextSource text_source_from_string(std::string_view s) {
    if (s == "rule") return TextSource::rule;
    if (s == "rule_paraphrased") return TextSource::rule_paraphrased;
    if (s == "llm") return TextSource::llm;
    fail(ErrorKind::parse, "unknown text source '" + std::string(s) + "'");
}

void MtgRequest::validate() const {
    if (caption_a.empty() || caption_b.empty()) fail(ErrorKind::invalid_argument, "MTG request needs two captions");
    if (top_k < 1) fail(ErrorKind::invalid_argument, "top_k must be >= 1");
    if (!(temperature > 0.0)) fail(ErrorKind::invalid_argument, "temperature must be > 0");
    if (n_candidates < 1) fail(ErrorKind::invalid_argument, "n_candidates must be >= 1");
}

SelectStrategy select_strategy_from_string(std::string_view s) {
    if (s == "first") return SelectStrategy::first;
    if (s == "longest") return SelectStrategy::longest;
    fail(ErrorKind::config, "unknown selection strategy '" + std::string(s) + "' (expected first|longest)");
}

const std::vector<RuleTemplate>& rule_templates() {
    static const std::vector<RuleTemplate> kTemplates{
        {0, "Remove {d1}", true, false},
        {1, "Take out {d1} and add {d2}", true, true},
        {2, "Change {d1} for {d2}", true, true},
        {3, "Replace {d1} with {d2}", true, true},
        {4, "Replace {d1} by {d2}", true, true},
        {5, "Make the {d1} into {d2}", true, true},
        {6, "Add {d2}", false, true},
        {7, "Change it to {d2}", false, true},
    };
    return kTemplates;
}

namespace {

void replace_all(std::string& s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

}  // namespace

ModificationText rule_based_text(const CaptionPair& pair, std::uint64_t rng_seed) {
    std::vector<const RuleTemplate*> applicable;
    for (const auto& t : rule_templates()) {
        if (t.needs_d1 && !pair.diff_a) continue;
        if (t.needs_d2 && !pair.diff_b) continue;
        applicable.push_back(&t);
    }
    if (applicable.empty()) fail(ErrorKind::internal, "caption pair has no diff tokens");
    Rng rng(rng_seed);
    const auto* t = applicable[uniform_index(rng, applicable.size())];
    std::string text = t->pattern;
    if (pair.diff_a) replace_all(text, "{d1}", *pair.diff_a);
    if (pair.diff_b) replace_all(text, "{d2}", *pair.diff_b);
    return {text, TextSource::rule, t->id, {}};
}

std::string format_llm_prompt(const std::string& caption_a, const std::string& caption_b) {
    return caption_a + kPromptSeparator + caption_b + " \n\n" + kResponseMarker;
}

std::optional<std::pair<std::string, std::string>> parse_llm_prompt(const std::string& prompt) {
    const std::string tail = std::string(" \n\n") + kResponseMarker;
    if (prompt.size() < tail.size() || prompt.compare(prompt.size() - tail.size(), tail.size(), tail) != 0)
        return std::nullopt;
    const std::string body = prompt.substr(0, prompt.size() - tail.size());
    const auto sep = body.find(kPromptSeparator);
    if (sep == std::string::npos) return std::nullopt;
    return std::make_pair(body.substr(0, sep), body.substr(sep + std::char_traits<char>::length(kPromptSeparator)));
}

std::string clean_completion(const std::string& completion) {
    std::string s = completion;
    if (auto m = s.find(kResponseMarker); m != std::string::npos)
        s.erase(0, m + std::char_traits<char>::length(kResponseMarker));
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    s.erase(0, begin);
    if (auto nl = s.find('\n'); nl != std::string::npos) s.erase(nl);
    const auto end = s.find_last_not_of(" \t\r");
    s.erase(end + 1);
    return s;
}

std::string select_candidate(const std::vector<std::string>& candidates, SelectStrategy strategy) {
    if (candidates.empty()) fail(ErrorKind::invalid_argument, "no candidates to select from");
    if (strategy == SelectStrategy::first) return candidates.front();
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i].size() > candidates[best].size()) best = i;
    return candidates[best];
}

HttpMtgClient::HttpMtgClient(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::vector<std::string> HttpMtgClient::generate(const GenerateParams& params) {
    httplib::Client client(base_url_);
    if (!client.is_valid()) fail(ErrorKind::config, "invalid MTG url '" + base_url_ + "'");
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_).count(),
                                  static_cast<time_t>((timeout_.count() % 1000) * 1000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_).count(),
                            static_cast<time_t>((timeout_.count() % 1000) * 1000));
    const OrderedJson body{{"prompt", params.prompt},
                           {"top_k", params.top_k},
                           {"temperature", params.temperature},
                           {"n", params.n},
                           {"stop", params.stop}};
    auto res = client.Post("/v1/generate", dump_compact(body), "application/json");
    if (!res) fail(ErrorKind::service, "MTG service unreachable at " + base_url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
        fail(ErrorKind::service, "MTG service returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
        const auto j = Json::parse(res->body);
        return j.at("completions").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        fail(ErrorKind::service, std::string("malformed MTG response: ") + e.what());
    }
}

std::vector<std::string> generate_with_retry(MtgClient& client, const GenerateParams& params, const RetryPolicy& retry) {
    auto backoff = retry.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return client.generate(params);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::service || attempt >= retry.max_attempts)
                throw Error(e.kind(), std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

namespace {

std::vector<std::string> cleaned(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    out.reserve(raw.size());
    for (const auto& c : raw) {
        auto s = clean_completion(c);
        if (s.empty()) fail(ErrorKind::service, "MTG service returned an empty completion");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

ModificationText llm_generate(const MtgRequest& req, MtgClient& client, SelectStrategy strategy, const RetryPolicy& retry) {
    req.validate();
    GenerateParams params;
    params.prompt = format_llm_prompt(req.caption_a, req.caption_b);
    params.top_k = req.top_k;
    params.temperature = req.temperature;
    params.n = req.n_candidates;
    auto candidates = cleaned(generate_with_retry(client, params, retry));
    if (candidates.size() != static_cast<std::size_t>(req.n_candidates))
        fail(ErrorKind::service, "MTG service returned " + std::to_string(candidates.size()) + " completions, expected " +
                                     std::to_string(req.n_candidates));
    ModificationText out;
    out.text = select_candidate(candidates, strategy);
    out.source = TextSource::llm;
    if (candidates.size() > 1) out.candidates = std::move(candidates);
    return out;
}

ModificationText paraphrase(const ModificationText& rule_text, MtgClient& client, const RetryPolicy& retry) {
    GenerateParams params;
    params.prompt = kParaphrasePrefix + rule_text.text;
    params.n = 1;
    auto out = cleaned(generate_with_retry(client, params, retry));
    if (out.empty()) fail(ErrorKind::service, "MTG service returned no completion");
    ModificationText m = rule_text;
    m.text = out.front();
    m.source = TextSource::rule_paraphrased;
    return m;
}

std::vector<std::string> stub_completions(const GenerateParams& params) {
    const std::string prefix = kParaphrasePrefix;
    std::vector<std::string> variants;
    if (params.prompt.rfind(prefix, 0) == 0) {
        variants.push_back(params.prompt.substr(prefix.size()));
    } else if (auto captions = parse_llm_prompt(params.prompt)) {
        auto edit = classify_single_edit(normalize_caption(captions->first), normalize_caption(captions->second));
        if (!edit) {
            variants = {"change the scene", "show something different", "make it look different"};
        } else if (edit->edit_kind == EditKind::del) {
            const auto& d1 = *edit->diff_a;
            variants = {"remove " + d1, "without the " + d1, "take the " + d1 + " out of the scene"};
        } else {
            const auto& d2 = *edit->diff_b;
            variants = {"change it to " + d2, "show " + d2 + " instead", "make it " + d2 + " in the shot"};
        }
    } else {
        variants.push_back("no change");
    }
    std::vector<std::string> out;
    for (int i = 0; i < std::max(1, params.n); ++i) out.push_back(variants[static_cast<std::size_t>(i) % variants.size()]);
    return out;
}

struct StubMtgServer::Impl {
    httplib::Server server;
    std::thread thread;
    std::atomic<std::size_t> requests{0};
};

StubMtgServer::StubMtgServer() : impl_(std::make_unique<Impl>()) {
    impl_->server.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
        ++impl_->requests;
        try {
            const auto j = Json::parse(req.body);
            GenerateParams p;
            p.prompt = j.at("prompt").get<std::string>();
            p.n = j.value("n", 1);
            const OrderedJson body{{"completions", stub_completions(p)}};
            res.set_content(dump_compact(body), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
        }
    });
}

StubMtgServer::~StubMtgServer() { stop(); }

int StubMtgServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorKind::io, "cannot bind stub MTG server to " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void StubMtgServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) fail(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void StubMtgServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t StubMtgServer::requests() const { return impl_->requests.load(); }

}  // namespace covr
