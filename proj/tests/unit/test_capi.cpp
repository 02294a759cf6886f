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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <covr_forge.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "temp_dir.hpp"

using testing_support::TempDir;

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    covr_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("status names and version") {
    CHECK(std::string(covr_status_name(COVR_ERR_MISSING_ARTIFACT)) == "missing_artifact");
    CHECK(std::string(covr_version()) == "0.1.0");
}

TEST_CASE("primitives") {
    char* out = nullptr;
    REQUIRE(covr_normalize_caption("Aerial shot of a lake.", &out) == COVR_OK);
    CHECK(take(out) == "aerial shot of a lake");
    REQUIRE(covr_format_llm_prompt("Clouds in the sky", "Airplane in the sky", &out) == COVR_OK);
    CHECK(take(out) == "Clouds in the sky\n&&\nAirplane in the sky \n\n### Response:");

    const double s1[] = {0.4};
    double loss = -1;
    REQUIRE(covr_hn_nce_loss(s1, 1, 0.07, 1.0, 0.5, &loss) == COVR_OK);
    CHECK(loss == 0.0);
    CHECK(covr_hn_nce_loss(s1, 1, 0.0, 1.0, 0.5, &loss) == COVR_ERR_CONFIG);
    CHECK(std::string(covr_last_error()).find("tau") != std::string::npos);
}

TEST_CASE("null arguments are rejected") {
    CHECK(covr_normalize_caption(nullptr, nullptr) == COVR_ERR_INVALID_ARGUMENT);
    CHECK(std::string(covr_last_error()).size() > 0);
    covr_pipeline* p = nullptr;
    CHECK(covr_pipeline_open(nullptr, &p) == COVR_ERR_INVALID_ARGUMENT);
    CHECK(covr_pipeline_run_stage(nullptr, "mine", 0, 0, nullptr) == COVR_ERR_INVALID_ARGUMENT);
}

TEST_CASE("pipeline through the C interface") {
    TempDir dir;
    REQUIRE(covr_make_toy_dataset(dir.path().c_str(), 0) == COVR_OK);

    covr_mtg_stub* stub = nullptr;
    REQUIRE(covr_mtg_stub_create(&stub) == COVR_OK);
    int port = 0;
    REQUIRE(covr_mtg_stub_start(stub, "127.0.0.1", 0, &port) == COVR_OK);

    covr_pipeline* p = nullptr;
    REQUIRE(covr_pipeline_open((dir.path() / "config.json").c_str(), &p) == COVR_OK);
    REQUIRE(covr_pipeline_set(p, "mtg.url", ("http://127.0.0.1:" + std::to_string(port)).c_str()) == COVR_OK);
    CHECK(covr_pipeline_set(p, "no.such.key", "1") == COVR_ERR_CONFIG);

    char* json = nullptr;
    CHECK(covr_pipeline_run_stage(p, "build-triplets", 0, 0, &json) == COVR_ERR_MISSING_ARTIFACT);
    CHECK(covr_pipeline_run_stage(p, "nonsense", 0, 0, &json) != COVR_OK);
    for (const char* s : {"mine", "filter-pairs", "gen-text"}) {
        REQUIRE(covr_pipeline_run_stage(p, s, 0, 0, &json) == COVR_OK);
        const auto r = nlohmann::json::parse(take(json));
        CHECK(r[0]["stage"] == s);
        CHECK(r[0]["skipped"] == false);
    }
    CHECK(covr_mtg_stub_requests(stub) > 0);
    REQUIRE(covr_pipeline_run_stage(p, "mine", 0, 0, &json) == COVR_OK);
    CHECK(nlohmann::json::parse(take(json))[0]["skipped"] == true);

    REQUIRE(covr_pipeline_config_json(p, &json) == COVR_OK);
    CHECK(nlohmann::json::parse(take(json))["mtg"]["url"] == "http://127.0.0.1:" + std::to_string(port));

    covr_embeddings* e = nullptr;
    REQUIRE(covr_embeddings_load((dir.path() / "frames.cvem").c_str(), &e) == COVR_OK);
    CHECK(covr_embeddings_dim(e) == 64);
    CHECK(covr_embeddings_count(e) == 600 * 15 + 140 * 15);
    float v[64];
    REQUIRE(covr_embeddings_get(e, "v0001#0", v, 64) == COVR_OK);
    double norm = 0;
    for (float x : v) norm += static_cast<double>(x) * x;
    CHECK(std::abs(norm - 1.0) < 1e-4);
    CHECK(covr_embeddings_get(e, "v0001#0", v, 10) == COVR_ERR_INVALID_ARGUMENT);
    CHECK(covr_embeddings_get(e, "nope", v, 64) == COVR_ERR_VALIDATION);
    covr_embeddings_free(e);

    covr_pipeline_free(p);
    covr_mtg_stub_stop(stub);
    covr_mtg_stub_free(stub);
}

TEST_CASE("annotation server handle") {
    TempDir dir;
    {
        std::ofstream pool(dir / "pool.jsonl");
        pool << R"({"candidate_id":"c0","query_video":"q","target_video":"t","texts":["a","b","c"],)"
             << R"("query_frames":["q#0","q#1","q#2"],"target_frames":["t#0","t#1","t#2"]})" << "\n";
    }
    covr_annotate_server* s = nullptr;
    CHECK(covr_annotate_server_create((dir / "missing.jsonl").c_str(), (dir / "log.jsonl").c_str(), nullptr, 600, &s) !=
          COVR_OK);
    REQUIRE(covr_annotate_server_create((dir / "pool.jsonl").c_str(), (dir / "log.jsonl").c_str(), nullptr, 600, &s) ==
            COVR_OK);
    int port = 0;
    REQUIRE(covr_annotate_server_start(s, "127.0.0.1", 0, &port) == COVR_OK);
    CHECK(port > 0);
    covr_annotate_server_stop(s);
    covr_annotate_server_free(s);
}
