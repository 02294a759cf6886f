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

#include "covr/annotate.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "covr/error.hpp"

namespace covr {

namespace {

using TimePoint = std::chrono::system_clock::time_point;

std::int64_t to_ms(TimePoint t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}
TimePoint from_ms(std::int64_t ms) { return TimePoint(std::chrono::milliseconds(ms)); }

std::string iso_utc(TimePoint t) {
    const auto ms = to_ms(t);
    const std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

}  // namespace

const char* to_string(Verdict v) { return v == Verdict::keep ? "keep" : "discard"; }

const char* to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::bad_text: return "bad_text";
        case DiscardReason::too_similar: return "too_similar";
        case DiscardReason::too_different: return "too_different";
        case DiscardReason::low_quality: return "low_quality";
        case DiscardReason::captions_too_similar: return "captions_too_similar";
    }
    return "?";
}

DiscardReason discard_reason_from_string(std::string_view s) {
    for (auto r : {DiscardReason::bad_text, DiscardReason::too_similar, DiscardReason::too_different,
                   DiscardReason::low_quality, DiscardReason::captions_too_similar})
        if (s == to_string(r)) return r;
    throw AnnotationError(400, "unknown discard reason '" + std::string(s) + "'");
}

void AnnotationCandidate::validate() const {
    if (candidate_id.empty()) fail(ErrorKind::validation, "candidate without id");
    if (texts.size() != 3) fail(ErrorKind::validation, "candidate " + candidate_id + " must carry exactly 3 texts");
    if (query_frames.size() != 3 || target_frames.size() != 3)
        fail(ErrorKind::validation, "candidate " + candidate_id + " must carry 3 frames per video");
}

void AnnotationDecision::validate() const {
    if (candidate_id.empty()) throw AnnotationError(400, "decision without candidate_id");
    if (annotator.empty()) throw AnnotationError(400, "decision without annotator");
    if (verdict == Verdict::keep) {
        if (!chosen_index) throw AnnotationError(400, "keep requires chosen_index");
        if (*chosen_index < 0 || *chosen_index > 2) throw AnnotationError(400, "chosen_index must be 0, 1 or 2");
        if (discard_reason) throw AnnotationError(400, "keep cannot carry a discard_reason");
    } else if (chosen_index) {
        throw AnnotationError(400, "discard must not carry chosen_index");
    }
}

bool AnnotationDecision::same_payload(const AnnotationDecision& o) const {
    return candidate_id == o.candidate_id && verdict == o.verdict && chosen_index == o.chosen_index &&
           annotator == o.annotator && discard_reason == o.discard_reason;
}

OrderedJson candidate_to_json(const AnnotationCandidate& c) {
    OrderedJson j{{"candidate_id", c.candidate_id},     {"query_video", c.query_video},
                  {"target_video", c.target_video},     {"texts", c.texts},
                  {"query_frames", c.query_frames},     {"target_frames", c.target_frames},
                  {"caption_a", c.caption_a},           {"caption_b", c.caption_b},
                  {"text_sim", c.text_sim.value},       {"visual_sim", c.visual_sim.value}};
    j["flow_magnitude_target"] = c.flow_magnitude_target ? OrderedJson(*c.flow_magnitude_target) : OrderedJson(nullptr);
    return j;
}

AnnotationCandidate candidate_from_json(const Json& j) {
    AnnotationCandidate c;
    c.candidate_id = j.at("candidate_id").get<std::string>();
    c.query_video = j.at("query_video").get<std::string>();
    c.target_video = j.at("target_video").get<std::string>();
    c.texts = j.at("texts").get<std::vector<std::string>>();
    c.query_frames = j.at("query_frames").get<std::vector<std::string>>();
    c.target_frames = j.at("target_frames").get<std::vector<std::string>>();
    c.caption_a = j.value("caption_a", "");
    c.caption_b = j.value("caption_b", "");
    c.text_sim = {j.value("text_sim", 0.0)};
    c.visual_sim = {j.value("visual_sim", 0.0)};
    if (j.contains("flow_magnitude_target") && !j["flow_magnitude_target"].is_null())
        c.flow_magnitude_target = j["flow_magnitude_target"].get<double>();
    c.validate();
    return c;
}

OrderedJson decision_to_json(const AnnotationDecision& d) {
    OrderedJson j{{"candidate_id", d.candidate_id}, {"verdict", to_string(d.verdict)}};
    j["chosen_index"] = d.chosen_index ? OrderedJson(*d.chosen_index) : OrderedJson(nullptr);
    j["annotator"] = d.annotator;
    j["timestamp"] = d.timestamp;
    j["discard_reason"] = d.discard_reason ? OrderedJson(to_string(*d.discard_reason)) : OrderedJson(nullptr);
    return j;
}

AnnotationDecision decision_from_json(const Json& j) {
    AnnotationDecision d;
    try {
        d.candidate_id = j.at("candidate_id").get<std::string>();
        const auto verdict = j.at("verdict").get<std::string>();
        if (verdict == "keep")
            d.verdict = Verdict::keep;
        else if (verdict == "discard")
            d.verdict = Verdict::discard;
        else
            throw AnnotationError(400, "verdict must be keep or discard");
        if (j.contains("chosen_index") && !j["chosen_index"].is_null()) d.chosen_index = j["chosen_index"].get<int>();
        d.annotator = j.at("annotator").get<std::string>();
        if (j.contains("timestamp") && j["timestamp"].is_string()) d.timestamp = j["timestamp"].get<std::string>();
        if (j.contains("discard_reason") && !j["discard_reason"].is_null())
            d.discard_reason = discard_reason_from_string(j["discard_reason"].get<std::string>());
    } catch (const Json::exception& e) {
        throw AnnotationError(400, std::string("malformed decision: ") + e.what());
    }
    return d;
}

std::vector<std::string> three_frame_refs(const std::string& video_id, std::size_t frame_count) {
    if (frame_count == 0) fail(ErrorKind::validation, "video " + video_id + " has no frames");
    return {frame_id(video_id, 0), frame_id(video_id, frame_count / 2), frame_id(video_id, frame_count - 1)};
}

AnnotationCandidate candidate_from_triplet(const CoVRTriplet& t, std::size_t query_frames, std::size_t target_frames) {
    AnnotationCandidate c;
    c.candidate_id = t.query_video + ">" + t.target_video;
    c.query_video = t.query_video;
    c.target_video = t.target_video;
    c.texts = t.modification.candidates;
    c.query_frames = three_frame_refs(t.query_video, query_frames);
    c.target_frames = three_frame_refs(t.target_video, target_frames);
    c.caption_a = t.caption_a;
    c.caption_b = t.caption_b;
    c.text_sim = t.text_sim;
    c.visual_sim = t.visual_sim;
    c.flow_magnitude_target = t.flow_magnitude_target;
    c.validate();
    return c;
}

namespace {

OrderedJson lease_event(const std::string& id, const std::string& annotator, TimePoint expires) {
    return OrderedJson{{"event", "lease"}, {"candidate_id", id}, {"annotator", annotator}, {"expires_ms", to_ms(expires)}};
}

OrderedJson decision_event(const AnnotationDecision& d) {
    OrderedJson j{{"event", "decision"}};
    j.update(decision_to_json(d));
    return j;
}

// Single transition function shared by live updates and replay.
void apply_event(AnnotationQueue::State& state, const Json& e) {
    const auto kind = e.at("event").get<std::string>();
    const auto id = e.at("candidate_id").get<std::string>();
    if (kind == "lease") {
        state.leases[id] = {e.at("annotator").get<std::string>(), from_ms(e.at("expires_ms").get<std::int64_t>())};
    } else if (kind == "decision") {
        state.decisions[id] = decision_from_json(e);
        state.leases.erase(id);
    } else {
        fail(ErrorKind::parse, "unknown annotation event '" + kind + "'");
    }
}

}  // namespace

AnnotationQueue::AnnotationQueue(std::vector<AnnotationCandidate> pool, std::chrono::seconds lease_duration, Clock clock)
    : pool_(std::move(pool)), lease_duration_(lease_duration), clock_(std::move(clock)) {
    if (!clock_) clock_ = [] { return std::chrono::system_clock::now(); };
    for (std::size_t i = 0; i < pool_.size(); ++i) {
        pool_[i].validate();
        if (!by_id_.emplace(pool_[i].candidate_id, i).second)
            fail(ErrorKind::validation, "duplicate candidate id " + pool_[i].candidate_id);
    }
}

std::chrono::system_clock::time_point AnnotationQueue::now() const {
    return from_ms(to_ms(clock_()));
}

void AnnotationQueue::attach_log(const std::filesystem::path& path) {
    std::lock_guard lock(mu_);
    if (std::filesystem::exists(path)) {
        State replayed = replay(path);
        for (const auto& [id, d] : replayed.decisions)
            if (!by_id_.count(id)) fail(ErrorKind::validation, "log references unknown candidate " + id);
        state_ = std::move(replayed);
    } else if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    log_path_ = path;
}

void AnnotationQueue::append_event(const OrderedJson& event) {
    if (log_path_.empty()) return;
    std::ofstream out(log_path_, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorKind::io, "cannot append to " + log_path_.string());
    out << dump_compact(event) << '\n';
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for " + log_path_.string());
}

std::optional<AnnotationCandidate> AnnotationQueue::next_candidate(const std::string& annotator) {
    if (annotator.empty()) throw AnnotationError(400, "annotator id required");
    std::lock_guard lock(mu_);
    const auto t = now();
    const AnnotationCandidate* pick = nullptr;
    for (const auto& c : pool_) {
        if (state_.decisions.count(c.candidate_id)) continue;
        auto lease = state_.leases.find(c.candidate_id);
        if (lease != state_.leases.end() && lease->second.second > t) {
            // Hand a live lease back to its holder.
            if (lease->second.first == annotator) {
                pick = &c;
                break;
            }
            continue;
        }
        if (!pick) pick = &c;
        // Keep scanning only to prefer a lease this annotator already holds.
    }
    if (!pick) return std::nullopt;
    const auto event = lease_event(pick->candidate_id, annotator, t + lease_duration_);
    append_event(event);
    apply_event(state_, event);
    return *pick;
}

SubmitOutcome AnnotationQueue::submit_decision(AnnotationDecision decision) {
    decision.validate();
    std::lock_guard lock(mu_);
    if (!by_id_.count(decision.candidate_id)) throw AnnotationError(404, "unknown candidate " + decision.candidate_id);
    if (auto it = state_.decisions.find(decision.candidate_id); it != state_.decisions.end()) {
        if (it->second.same_payload(decision)) return SubmitOutcome::duplicate;
        throw AnnotationError(409, "candidate " + decision.candidate_id + " already decided by " + it->second.annotator);
    }
    if (decision.timestamp.empty()) decision.timestamp = iso_utc(now());
    const auto event = decision_event(decision);
    append_event(event);
    apply_event(state_, Json::parse(dump_compact(event)));
    return SubmitOutcome::accepted;
}

AnnotationExport AnnotationQueue::export_test_set() const {
    std::lock_guard lock(mu_);
    AnnotationExport out;
    for (const auto& c : pool_) {
        auto it = state_.decisions.find(c.candidate_id);
        if (it == state_.decisions.end()) continue;
        const auto& d = it->second;
        ++out.decided;
        if (d.verdict == Verdict::discard) {
            ++out.discarded;
            ++out.discard_reasons[d.discard_reason ? to_string(*d.discard_reason) : "unspecified"];
            continue;
        }
        ++out.kept;
        CoVRTriplet t;
        t.query_video = c.query_video;
        t.target_video = c.target_video;
        t.modification.text = c.texts.at(static_cast<std::size_t>(*d.chosen_index));
        t.modification.source = TextSource::llm;
        t.modification.candidates = c.texts;
        t.caption_a = c.caption_a;
        t.caption_b = c.caption_b;
        t.text_sim = c.text_sim;
        t.visual_sim = c.visual_sim;
        t.flow_magnitude_target = c.flow_magnitude_target;
        out.triplets.push_back(std::move(t));
    }
    if (out.decided > 0) out.discard_rate = static_cast<double>(out.discarded) / static_cast<double>(out.decided);
    return out;
}

AnnotationQueue::State AnnotationQueue::state() const {
    std::lock_guard lock(mu_);
    return state_;
}

std::size_t AnnotationQueue::pending() const {
    std::lock_guard lock(mu_);
    return pool_.size() - state_.decisions.size();
}

AnnotationQueue::State AnnotationQueue::replay(const std::filesystem::path& log_path) {
    State state;
    for_each_jsonl(log_path, [&](const Json& e, std::size_t) { apply_event(state, e); });
    return state;
}

std::vector<AnnotationCandidate> load_candidate_pool(const std::filesystem::path& path) {
    std::vector<AnnotationCandidate> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(candidate_from_json(j)); });
    return out;
}

void write_candidate_pool(const std::vector<AnnotationCandidate>& pool, const std::filesystem::path& path) {
    JsonlWriter w;
    for (const auto& c : pool) w.add(candidate_to_json(c));
    w.write(path);
}

namespace {

std::string frame_url(const std::string& ref) {
    const auto hash = ref.rfind('#');
    if (hash == std::string::npos) return "/frames/" + ref;
    return "/frames/" + ref.substr(0, hash) + "/" + ref.substr(hash + 1) + ".jpg";
}

OrderedJson export_stats_json(const AnnotationExport& e, std::size_t pool_size) {
    OrderedJson reasons = OrderedJson::object();
    for (const auto& [r, n] : e.discard_reasons) reasons[r] = n;
    OrderedJson j{{"pool", pool_size},       {"decided", e.decided},   {"kept", e.kept},
                  {"discarded", e.discarded}, {"pending", pool_size - e.decided}};
    j["discard_rate"] = e.discard_rate ? OrderedJson(*e.discard_rate) : OrderedJson(nullptr);
    j["discard_reasons"] = reasons;
    return j;
}

void json_reply(httplib::Response& res, int status, const OrderedJson& body) {
    res.status = status;
    res.set_content(dump_compact(body), "application/json");
}

}  // namespace

struct AnnotateServer::Impl {
    explicit Impl(const AnnotateServerOptions& o, Clock clock)
        : options(o), queue(load_candidate_pool(o.pool), o.lease, std::move(clock)) {
        if (!o.log.empty()) queue.attach_log(o.log);
    }
    AnnotateServerOptions options;
    AnnotationQueue queue;
    httplib::Server server;
    std::thread thread;
};

AnnotateServer::AnnotateServer(const AnnotateServerOptions& options, Clock clock)
    : impl_(std::make_unique<Impl>(options, std::move(clock))) {
    auto& srv = impl_->server;
    auto& queue = impl_->queue;

    auto guarded = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const AnnotationError& e) {
                json_reply(res, e.http_status(), {{"error", e.what()}});
            } catch (const std::exception& e) {
                json_reply(res, 500, {{"error", e.what()}});
            }
        };
    };

    srv.Get("/api/candidate/next", guarded([&queue](const httplib::Request& req, httplib::Response& res) {
                const auto annotator = req.get_param_value("annotator");
                auto c = queue.next_candidate(annotator);
                if (!c) {
                    json_reply(res, 200, {{"candidate", nullptr}, {"done", true}});
                    return;
                }
                OrderedJson urls{{"query", OrderedJson::array()}, {"target", OrderedJson::array()}};
                for (const auto& f : c->query_frames) urls["query"].push_back(frame_url(f));
                for (const auto& f : c->target_frames) urls["target"].push_back(frame_url(f));
                json_reply(res, 200, {{"candidate", candidate_to_json(*c)}, {"frame_urls", urls}, {"done", false}});
            }));

    srv.Post("/api/decision", guarded([&queue](const httplib::Request& req, httplib::Response& res) {
                 Json body;
                 try {
                     body = Json::parse(req.body);
                 } catch (const Json::exception& e) {
                     throw AnnotationError(400, std::string("invalid JSON: ") + e.what());
                 }
                 const auto outcome = queue.submit_decision(decision_from_json(body));
                 json_reply(res, 200, {{"status", outcome == SubmitOutcome::accepted ? "accepted" : "duplicate"}});
             }));

    srv.Get("/api/stats", guarded([&queue](const httplib::Request&, httplib::Response& res) {
                json_reply(res, 200, export_stats_json(queue.export_test_set(), queue.pool_size()));
            }));

    srv.Get("/api/export", guarded([&queue](const httplib::Request& req, httplib::Response& res) {
                const auto e = queue.export_test_set();
                if (req.get_param_value("format") == "jsonl") {
                    JsonlWriter w;
                    for (const auto& t : e.triplets) w.add(triplet_to_json(t));
                    res.set_content(w.str(), "application/x-ndjson");
                    return;
                }
                OrderedJson triplets = OrderedJson::array();
                for (const auto& t : e.triplets) triplets.push_back(triplet_to_json(t));
                json_reply(res, 200, {{"triplets", triplets}, {"stats", export_stats_json(e, queue.pool_size())}});
            }));

    if (!options.frames_dir.empty()) srv.set_mount_point("/frames", options.frames_dir.string());
}

AnnotateServer::~AnnotateServer() { stop(); }

int AnnotateServer::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorKind::io, "cannot bind annotation server to " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return bound;
}

void AnnotateServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) fail(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void AnnotateServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

AnnotationQueue& AnnotateServer::queue() { return impl_->queue; }

}  // namespace covr
