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

#include "covr_forge.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "covr/annotate.hpp"
#include "covr/corpus.hpp"
#include "covr/embedspace.hpp"
#include "covr/error.hpp"
#include "covr/hnnce.hpp"
#include "covr/mtg.hpp"
#include "covr/pipeline.hpp"
#include "covr/toydata.hpp"

struct covr_pipeline {
    covr::PipelineConfig cfg;
};

struct covr_embeddings {
    covr::EmbeddingStore store;
};

struct covr_annotate_server {
    covr::AnnotateServer server;
    explicit covr_annotate_server(const covr::AnnotateServerOptions& o) : server(o) {}
};

struct covr_mtg_stub {
    covr::StubMtgServer server;
};

namespace {

thread_local std::string g_last_error;

covr_status status_of(covr::ErrorKind kind) {
    switch (kind) {
        case covr::ErrorKind::internal: return COVR_ERR_INTERNAL;
        case covr::ErrorKind::config: return COVR_ERR_CONFIG;
        case covr::ErrorKind::missing_artifact: return COVR_ERR_MISSING_ARTIFACT;
        case covr::ErrorKind::service: return COVR_ERR_SERVICE;
        case covr::ErrorKind::parse: return COVR_ERR_PARSE;
        case covr::ErrorKind::validation: return COVR_ERR_VALIDATION;
        case covr::ErrorKind::io: return COVR_ERR_IO;
        case covr::ErrorKind::invalid_argument: return COVR_ERR_INVALID_ARGUMENT;
    }
    return COVR_ERR_INTERNAL;
}

template <typename F>
covr_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return COVR_OK;
    } catch (const covr::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return COVR_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return COVR_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(const void* p, const char* what) {
    if (!p) covr::fail(covr::ErrorKind::invalid_argument, std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* covr_last_error(void) { return g_last_error.c_str(); }

const char* covr_status_name(covr_status status) {
    switch (status) {
        case COVR_OK: return "ok";
        case COVR_ERR_INTERNAL: return "internal";
        case COVR_ERR_CONFIG: return "config";
        case COVR_ERR_MISSING_ARTIFACT: return "missing_artifact";
        case COVR_ERR_SERVICE: return "service";
        case COVR_ERR_PARSE: return "parse";
        case COVR_ERR_VALIDATION: return "validation";
        case COVR_ERR_IO: return "io";
        case COVR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    }
    return "unknown";
}

const char* covr_version(void) { return "0.1.0"; }

void covr_string_free(char* s) { std::free(s); }

covr_status covr_pipeline_open(const char* config_path, covr_pipeline** out) {
    return guarded([&] {
        require(config_path, "config_path");
        require(out, "out");
        auto cfg = covr::PipelineConfig::load(config_path);
        *out = new covr_pipeline{std::move(cfg)};
    });
}

covr_status covr_pipeline_set(covr_pipeline* p, const char* key, const char* value) {
    return guarded([&] {
        require(p, "pipeline");
        require(key, "key");
        require(value, "value");
        p->cfg.set(key, value);
    });
}

covr_status covr_pipeline_run_stage(covr_pipeline* p, const char* stage, int force, int strict, char** result_json) {
    return guarded([&] {
        require(p, "pipeline");
        require(stage, "stage");
        covr::Pipeline pipeline(p->cfg);
        covr::RunOptions opts{force != 0, strict != 0};
        std::vector<covr::StageResult> results;
        if (std::string(stage) == "all")
            results = pipeline.run_all(opts);
        else
            results.push_back(pipeline.run_stage(stage, opts));
        if (result_json) {
            covr::OrderedJson j = covr::OrderedJson::array();
            for (const auto& r : results)
                j.push_back({{"stage", r.stage}, {"skipped", r.skipped}, {"counts", r.counts}, {"wall_time", r.wall_time_s}});
            *result_json = dup_string(j.dump());
        }
    });
}

covr_status covr_pipeline_config_json(const covr_pipeline* p, char** out_json) {
    return guarded([&] {
        require(p, "pipeline");
        require(out_json, "out_json");
        *out_json = dup_string(p->cfg.to_json().dump(2));
    });
}

void covr_pipeline_free(covr_pipeline* p) { delete p; }

covr_status covr_make_toy_dataset(const char* dir, uint64_t seed) {
    return guarded([&] {
        require(dir, "dir");
        covr::ToyDatasetOptions o;
        o.seed = seed;
        covr::make_toy_dataset(dir, o);
    });
}

covr_status covr_normalize_caption(const char* raw, char** out) {
    return guarded([&] {
        require(raw, "raw");
        require(out, "out");
        *out = dup_string(covr::join_tokens(covr::normalize_caption(raw)));
    });
}

covr_status covr_format_llm_prompt(const char* caption_a, const char* caption_b, char** out) {
    return guarded([&] {
        require(caption_a, "caption_a");
        require(caption_b, "caption_b");
        require(out, "out");
        *out = dup_string(covr::format_llm_prompt(caption_a, caption_b));
    });
}

covr_status covr_hn_nce_loss(const double* s, size_t n, double tau, double alpha, double beta, double* out) {
    return guarded([&] {
        require(s, "s");
        require(out, "out");
        covr::Matrix m(n, n);
        std::copy(s, s + n * n, m.data.begin());
        covr::HnNceConfig cfg;
        cfg.tau = tau;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.validate();
        *out = covr::hn_nce_loss(m, cfg);
    });
}

covr_status covr_embeddings_load(const char* path, covr_embeddings** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new covr_embeddings{covr::load_embeddings(path)};
    });
}

size_t covr_embeddings_dim(const covr_embeddings* e) { return e ? e->store.dim() : 0; }

size_t covr_embeddings_count(const covr_embeddings* e) { return e ? e->store.size() : 0; }

covr_status covr_embeddings_get(const covr_embeddings* e, const char* id, float* out, size_t out_len) {
    return guarded([&] {
        require(e, "embeddings");
        require(id, "id");
        require(out, "out");
        if (out_len < e->store.dim()) covr::fail(covr::ErrorKind::invalid_argument, "output buffer shorter than dim");
        const auto v = e->store.at(id);
        std::copy(v.begin(), v.end(), out);
    });
}

void covr_embeddings_free(covr_embeddings* e) { delete e; }

covr_status covr_annotate_server_create(const char* pool_path, const char* log_path, const char* frames_dir,
                                        int lease_seconds, covr_annotate_server** out) {
    return guarded([&] {
        require(pool_path, "pool_path");
        require(log_path, "log_path");
        require(out, "out");
        if (lease_seconds <= 0) covr::fail(covr::ErrorKind::invalid_argument, "lease_seconds must be positive");
        covr::AnnotateServerOptions o;
        o.pool = pool_path;
        o.log = log_path;
        if (frames_dir) o.frames_dir = frames_dir;
        o.lease = std::chrono::seconds(lease_seconds);
        *out = new covr_annotate_server(o);
    });
}

covr_status covr_annotate_server_start(covr_annotate_server* s, const char* host, int port, int* bound_port) {
    return guarded([&] {
        require(s, "server");
        const int bound = s->server.start(host ? host : "127.0.0.1", port);
        if (bound_port) *bound_port = bound;
    });
}

covr_status covr_annotate_server_listen(covr_annotate_server* s, const char* host, int port) {
    return guarded([&] {
        require(s, "server");
        s->server.listen(host ? host : "127.0.0.1", port);
    });
}

void covr_annotate_server_stop(covr_annotate_server* s) {
    if (s) s->server.stop();
}

void covr_annotate_server_free(covr_annotate_server* s) { delete s; }

covr_status covr_mtg_stub_create(covr_mtg_stub** out) {
    return guarded([&] {
        require(out, "out");
        *out = new covr_mtg_stub();
    });
}

covr_status covr_mtg_stub_start(covr_mtg_stub* s, const char* host, int port, int* bound_port) {
    return guarded([&] {
        require(s, "stub");
        const int bound = s->server.start(host ? host : "127.0.0.1", port);
        if (bound_port) *bound_port = bound;
    });
}

covr_status covr_mtg_stub_listen(covr_mtg_stub* s, const char* host, int port) {
    return guarded([&] {
        require(s, "stub");
        s->server.listen(host ? host : "127.0.0.1", port);
    });
}

void covr_mtg_stub_stop(covr_mtg_stub* s) {
    if (s) s->server.stop();
}

size_t covr_mtg_stub_requests(const covr_mtg_stub* s) { return s ? s->server.requests() : 0; }

void covr_mtg_stub_free(covr_mtg_stub* s) { delete s; }

}  // extern "C"
