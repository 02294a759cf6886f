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

// covr-forge command line. Links only the C interface.

#include <covr_forge.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

namespace {

const std::vector<std::string> kCommands{"mine",  "filter-pairs", "gen-text",      "filter-videos",  "build-triplets",
                                         "stats", "train",        "eval",          "make-eval-set",  "serve-annotate",
                                         "all",   "make-toy",     "show-config"};

int exit_code(covr_status s) {
    switch (s) {
        case COVR_OK: return 0;
        case COVR_ERR_CONFIG: return 2;
        case COVR_ERR_MISSING_ARTIFACT: return 3;
        case COVR_ERR_SERVICE: return 4;
        default: return 1;
    }
}

int report(covr_status s) {
    if (s != COVR_OK) std::cerr << "covr-forge: " << covr_status_name(s) << " error: " << covr_last_error() << "\n";
    return exit_code(s);
}

void print_results(const char* json) {
    for (const auto& r : nlohmann::json::parse(json)) {
        std::cout << r["stage"].get<std::string>() << ": ";
        if (r["skipped"].get<bool>()) {
            std::cout << "up to date";
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f s", r["wall_time"].get<double>());
            std::cout << "done in " << buf;
        }
        for (auto& [k, v] : r["counts"].items()) std::cout << " " << k << "=" << v.dump();
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Composed video retrieval triplet toolkit", "covr-forge"};
    std::string command;
    std::string config;
    std::string dir;
    bool force = false;
    bool strict = false;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::vector<std::string> sets;
    std::uint64_t toy_seed = 0;

    app.add_option("command", command, "Stage to run, 'all', 'make-toy' or 'show-config'")
        ->required()
        ->check(CLI::IsMember(kCommands));
    app.add_option("--config,-c", config, "Pipeline config JSON");
    app.add_option("--dir", dir, "Output directory for make-toy");
    app.add_flag("--force", force, "Rerun even when the manifest says the stage is up to date");
    app.add_flag("--strict", strict, "Check upstream artifacts against their producing manifests");

    auto flag = [&](const char* name, const char* key, const char* help) {
        app.add_option_function<std::string>(
            name, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
    };
    flag("--mtg-url", "mtg.url", "Generation service base URL");
    flag("--mtg-mode", "mtg.mode", "rule | rule-paraphrase | llm");
    flag("--candidates", "mtg.candidates", "Texts generated per caption pair");
    flag("--select", "mtg.select", "first | longest");
    flag("--seed", "seed", "Seed for every random choice");
    flag("--workers", "workers", "Mining threads");
    flag("--port", "annotate.port", "Annotation service port");
    flag("--lease-seconds", "annotate.lease_seconds", "Annotation lease duration");
    flag("--pool", "annotate.pool", "Annotation candidate pool JSONL");
    flag("--log", "annotate.log", "Annotation decision log JSONL");
    flag("--frames-dir", "annotate.frames_dir", "Directory of extracted frame images");
    app.add_option("--set", sets, "Config override key=value (repeatable)");
    app.add_option("--toy-seed", toy_seed, "Seed for make-toy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (command == "make-toy") {
        if (dir.empty()) {
            std::cerr << "covr-forge: make-toy needs --dir\n";
            return 2;
        }
        const auto s = covr_make_toy_dataset(dir.c_str(), toy_seed);
        if (s == COVR_OK) std::cout << "toy dataset written to " << dir << "\n";
        return report(s);
    }
    if (config.empty()) {
        std::cerr << "covr-forge: --config is required\n";
        return 2;
    }

    covr_pipeline* p = nullptr;
    if (auto s = covr_pipeline_open(config.c_str(), &p); s != COVR_OK) return report(s);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "covr-forge: --set expects key=value, got '" << kv << "'\n";
            covr_pipeline_free(p);
            return 2;
        }
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : overrides) {
        if (auto s = covr_pipeline_set(p, k.c_str(), v.c_str()); s != COVR_OK) {
            covr_pipeline_free(p);
            return report(s);
        }
    }

    covr_status s = COVR_OK;
    if (command == "show-config") {
        char* json = nullptr;
        s = covr_pipeline_config_json(p, &json);
        if (s == COVR_OK) std::cout << json << "\n";
        covr_string_free(json);
    } else {
        char* json = nullptr;
        s = covr_pipeline_run_stage(p, command.c_str(), force ? 1 : 0, strict ? 1 : 0, &json);
        if (s == COVR_OK && json) print_results(json);
        covr_string_free(json);
    }
    covr_pipeline_free(p);
    return report(s);
}
