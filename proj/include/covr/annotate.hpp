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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "covr/error.hpp"
#include "covr/io.hpp"
#include "covr/tripletset.hpp"

namespace covr {

struct AnnotationCandidate {
    std::string candidate_id;
    std::string query_video;
    std::string target_video;
    std::vector<std::string> texts;  // exactly 3
    std::vector<std::string> query_frames;   // first, middle, last
    std::vector<std::string> target_frames;  // first, middle, last
    // Provenance carried into the exported triplet.
    std::string caption_a;
    std::string caption_b;
    NormalizedSimilarity text_sim{0.0};
    NormalizedSimilarity visual_sim{0.0};
    std::optional<double> flow_magnitude_target;

    void validate() const;
};

enum class Verdict { keep, discard };
enum class DiscardReason { bad_text, too_similar, too_different, low_quality, captions_too_similar };

const char* to_string(Verdict v);
const char* to_string(DiscardReason r);
DiscardReason discard_reason_from_string(std::string_view s);

struct AnnotationDecision {
    std::string candidate_id;
    Verdict verdict = Verdict::keep;
    std::optional<int> chosen_index;
    std::string annotator;
    std::string timestamp;  // ISO-8601 UTC
    std::optional<DiscardReason> discard_reason;

    void validate() const;
    // Equal verdict, choice and reason; timestamps are ignored.
    bool same_payload(const AnnotationDecision& other) const;
    bool operator==(const AnnotationDecision&) const = default;
};

OrderedJson candidate_to_json(const AnnotationCandidate& c);
AnnotationCandidate candidate_from_json(const Json& j);
OrderedJson decision_to_json(const AnnotationDecision& d);
AnnotationDecision decision_from_json(const Json& j);

// Frame references for the first, middle and last frames of a video.
std::vector<std::string> three_frame_refs(const std::string& video_id, std::size_t frame_count);
AnnotationCandidate candidate_from_triplet(const CoVRTriplet& t, std::size_t query_frames, std::size_t target_frames);

using Clock = std::function<std::chrono::system_clock::time_point()>;

enum class SubmitOutcome { accepted, duplicate };

// Rejected submissions; http_status is what the REST layer answers with.
class AnnotationError : public Error {
public:
    AnnotationError(int http_status, const std::string& what)
        : Error(ErrorKind::validation, what), http_status_(http_status) {}
    int http_status() const noexcept { return http_status_; }

private:
    int http_status_;
};

struct AnnotationExport {
    std::vector<CoVRTriplet> triplets;
    std::size_t decided = 0;
    std::size_t kept = 0;
    std::size_t discarded = 0;
    std::optional<double> discard_rate;
    std::map<std::string, std::size_t> discard_reasons;
};

// Lease queue over a fixed candidate pool, event-sourced from an append-only
// JSONL log of lease and decision events. All methods are linearizable.
class AnnotationQueue {
public:
    AnnotationQueue(std::vector<AnnotationCandidate> pool, std::chrono::seconds lease_duration, Clock clock = {});

    // Replays an existing log, then appends new events to it.
    void attach_log(const std::filesystem::path& path);

    std::optional<AnnotationCandidate> next_candidate(const std::string& annotator);
    SubmitOutcome submit_decision(AnnotationDecision decision);
    AnnotationExport export_test_set() const;

    struct State {
        std::map<std::string, AnnotationDecision> decisions;
        std::map<std::string, std::pair<std::string, std::chrono::system_clock::time_point>> leases;
        bool operator==(const State&) const = default;
    };
    State state() const;
    std::size_t pool_size() const { return pool_.size(); }
    std::size_t pending() const;

    // Rebuilds state from a log from scratch.
    static State replay(const std::filesystem::path& log_path);

private:
    void append_event(const OrderedJson& event);
    std::chrono::system_clock::time_point now() const;

    std::vector<AnnotationCandidate> pool_;
    std::map<std::string, std::size_t> by_id_;
    std::chrono::seconds lease_duration_;
    Clock clock_;
    mutable std::mutex mu_;
    State state_;
    std::filesystem::path log_path_;
};

std::vector<AnnotationCandidate> load_candidate_pool(const std::filesystem::path& path);
void write_candidate_pool(const std::vector<AnnotationCandidate>& pool, const std::filesystem::path& path);

struct AnnotateServerOptions {
    std::filesystem::path pool;
    std::filesystem::path log;
    std::filesystem::path frames_dir;
    std::chrono::seconds lease{600};
};

// REST front end over AnnotationQueue.
class AnnotateServer {
public:
    explicit AnnotateServer(const AnnotateServerOptions& options, Clock clock = {});
    ~AnnotateServer();
    AnnotateServer(const AnnotateServer&) = delete;
    AnnotateServer& operator=(const AnnotateServer&) = delete;

    // Serves on a background thread; port 0 picks a free port which is returned.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Blocks until stop().
    void listen(const std::string& host, int port);
    void stop();
    AnnotationQueue& queue();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace covr
