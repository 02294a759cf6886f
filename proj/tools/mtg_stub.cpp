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

// Deterministic stand-in for the modification-text generation service.

#include <covr_forge.h>

#include <CLI11.hpp>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Stub generation service speaking the /v1/generate protocol", "covr-mtg-stub"};
    std::string host = "127.0.0.1";
    int port = 8080;
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port");
    CLI11_PARSE(app, argc, argv);

    covr_mtg_stub* stub = nullptr;
    if (covr_mtg_stub_create(&stub) != COVR_OK) {
        std::cerr << "covr-mtg-stub: " << covr_last_error() << "\n";
        return 1;
    }
    std::cerr << "stub generation service on http://" << host << ":" << port << "\n";
    const auto s = covr_mtg_stub_listen(stub, host.c_str(), port);
    if (s != COVR_OK) std::cerr << "covr-mtg-stub: " << covr_last_error() << "\n";
    covr_mtg_stub_free(stub);
    return s == COVR_OK ? 0 : 1;
}
