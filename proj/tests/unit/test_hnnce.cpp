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

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "covr/error.hpp"
#include "covr/hnnce.hpp"
#include "covr/retrieval.hpp"
#include "gradient_check.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace covr;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
    return m;
}

std::vector<std::vector<double>> random_cosines(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> s(n, std::vector<double>(n));
    for (auto& row : s)
        for (auto& x : row) x = u(rng);
    return s;
}

TrainingBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    TrainingBatch b;
    for (std::size_t i = 0; i < n; ++i)
        b.rows.push_back({"t" + std::to_string(i), oracle::random_unit(rng, d), oracle::random_unit(rng, d),
                          oracle::random_unit(rng, d)});
    return b;
}

}  // namespace

TEST_CASE("single row with alpha one has zero loss") {
    HnNceConfig cfg;
    CHECK(hn_nce_loss(to_matrix({{0.3}}), cfg) == 0.0);
    CHECK(hn_nce_loss(to_matrix({{-0.9}}), cfg) == 0.0);
}

TEST_CASE("2x2 example matches the direct formula") {
    HnNceConfig cfg;  // tau 0.07, alpha 1, beta 0.5
    const std::vector<std::vector<double>> s{{0.9, 0.1}, {0.2, 0.8}};
    CHECK(std::abs(hn_nce_loss(to_matrix(s), cfg) - oracle::hn_nce_direct(s, 0.07, 1.0, 0.5)) < 1e-9);
}

TEST_CASE("beta zero is symmetric InfoNCE") {
    std::mt19937_64 rng(1);
    HnNceConfig cfg;
    cfg.beta = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto s = random_cosines(rng, 2 + rng() % 7);
        CHECK(std::abs(hn_nce_loss(to_matrix(s), cfg) - oracle::info_nce_symmetric(s, cfg.tau)) < 1e-9);
    }
}

TEST_CASE("random matrices match the direct formula") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        HnNceConfig cfg;
        cfg.tau = 0.2 + 0.3 * (rng() % 3);
        cfg.alpha = 0.5 * (rng() % 3);
        cfg.beta = 0.25 * (rng() % 4);
        const auto s = random_cosines(rng, 2 + rng() % 6);
        const double direct = oracle::hn_nce_direct(s, cfg.tau, cfg.alpha, cfg.beta);
        CHECK(std::abs(hn_nce_loss(to_matrix(s), cfg) - direct) < 1e-9 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("weights sum to B - 1 and are zero on the diagonal") {
    std::mt19937_64 rng(3);
    HnNceConfig cfg;
    for (int t = 0; t < 10; ++t) {
        const std::size_t n = 2 + rng() % 10;
        const auto s = to_matrix(random_cosines(rng, n));
        const auto w = hn_nce_row_weights(s, cfg);
        const auto wc = hn_nce_column_weights(s, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0, col = 0;
            for (std::size_t j = 0; j < n; ++j) {
                row += w(i, j);
                col += wc(j, i);
            }
            CHECK(w(i, i) == 0.0);
            CHECK(std::abs(row - static_cast<double>(n - 1)) < 1e-9);
            CHECK(std::abs(col - static_cast<double>(n - 1)) < 1e-9);
        }
    }
}

TEST_CASE("loss is nonnegative with alpha one") {
    std::mt19937_64 rng(4);
    HnNceConfig cfg;
    for (int t = 0; t < 50; ++t) CHECK(hn_nce_loss(to_matrix(random_cosines(rng, 2 + rng() % 8)), cfg) >= 0.0);
}

TEST_CASE("bad similarity matrices") {
    HnNceConfig cfg;
    Matrix rect(2, 3);
    CHECK_THROWS_AS(hn_nce_loss(rect, cfg), Error);
    Matrix nan(2, 2);
    nan(0, 1) = std::nan("");
    CHECK_THROWS_AS(hn_nce_loss(nan, cfg), Error);
}

TEST_CASE("dL/dS matches finite differences") {
    std::mt19937_64 rng(5);
    HnNceConfig cfg;
    const auto s = to_matrix(random_cosines(rng, 5));
    Matrix g;
    hn_nce_loss_and_grad(s, cfg, g);
    for (std::size_t k = 0; k < s.data.size(); ++k) {
        auto plus = s, minus = s;
        plus.data[k] += 1e-6;
        minus.data[k] -= 1e-6;
        const double fd = (hn_nce_loss(plus, cfg) - hn_nce_loss(minus, cfg)) / 2e-6;
        CHECK(std::abs(fd - g.data[k]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("parameter gradient matches central finite differences") {
    std::mt19937_64 rng(6);
    HnNceConfig cfg;
    for (int t = 0; t < 5; ++t) {
        const std::size_t n = 2 + rng() % 7, d = 2 + rng() % 15;
        const auto batch = random_batch(rng, n, d);
        const auto head = FusionHead::random(d, 0, rng());
        CHECK(std::abs(loss_gradient(batch, head, cfg).loss - batch_loss(batch, head, cfg)) < 1e-12);
        const auto r = testing_support::check_parameter_gradient(batch, head, cfg, 1e-4);
        CHECK(r.worst_rel < 1e-4);
        CHECK(r.skipped * 100 <= r.checked + r.skipped);
    }
}

TEST_CASE("constant head: only the output bias and W2 see gradient") {
    std::mt19937_64 rng(7);
    const std::size_t d = 4;
    auto head = FusionHead::random(d, 0, 1);
    std::fill(head.w2.data.begin(), head.w2.data.end(), 0.0);
    std::fill(head.b2.begin(), head.b2.end(), 0.0);
    head.b2[0] = 1.0;
    const auto batch = random_batch(rng, 4, d);
    for (const auto& r : batch.rows) {
        const auto f = fusion_forward(head, r.query_visual, r.text);
        CHECK(f[0] == doctest::Approx(1.0));
    }
    const auto g = loss_gradient(batch, head, HnNceConfig{});
    // W1 and b1 only reach the output through W2 = 0.
    const std::size_t upstream = head.w1.data.size() + head.b1.size();
    for (std::size_t k = 0; k < upstream; ++k) CHECK(g.grad[k] == 0.0);
}

TEST_CASE("identity-like head at d = 2 passes the input through") {
    FusionHead h;
    h.w1 = Matrix(4, 4);
    for (std::size_t i = 0; i < 4; ++i) h.w1(i, i) = 1.0;
    h.b1.assign(4, 0.0);
    h.w2 = Matrix(2, 4);
    h.w2(0, 0) = 1.0;
    h.w2(1, 1) = 1.0;
    h.b2.assign(2, 0.0);
    const Vec v{0.6, 0.8}, t{1.0, 0.0};
    const auto f = fusion_forward(h, v, t);
    CHECK(f[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.8).epsilon(1e-12));
    std::mt19937_64 rng(8);
    const auto r = FusionHead::random(8, 0, 3);
    for (int i = 0; i < 10; ++i) {
        const auto out = fusion_forward(r, oracle::random_unit(rng, 8), oracle::random_unit(rng, 8));
        CHECK(std::abs(l2_norm(out) - 1.0) < 1e-9);
    }
}

TEST_CASE("batches with a repeated target are rejected") {
    std::mt19937_64 rng(9);
    auto batch = random_batch(rng, 3, 4);
    batch.rows[2].target_id = batch.rows[0].target_id;
    CHECK_FALSE(batch.targets_distinct());
    CHECK_THROWS_AS(loss_gradient(batch, FusionHead::random(4, 0, 1), HnNceConfig{}), Error);
}

TEST_CASE("by_target batch sizes and distinct targets") {
    std::vector<std::string> targets;
    for (int t = 0; t < 10; ++t)
        for (int k = 0; k <= t % 3; ++k) targets.push_back("t" + std::to_string(t));
    Rng rng(1);
    const auto batches = sample_batches(targets, 4, rng, BatchMode::by_target);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 4);
    CHECK(batches[1].size() == 4);
    CHECK(batches[2].size() == 2);
    std::set<std::string> seen;
    for (const auto& b : batches)
        for (auto i : b) CHECK(seen.insert(targets[i]).second);
    CHECK(seen.size() == 10);
    CHECK_THROWS_AS(sample_batches(targets, 1, rng, BatchMode::by_target), Error);
}

TEST_CASE("by_triplet may repeat targets") {
    std::vector<std::string> targets(20, "same");
    targets.push_back("other");
    Rng rng(2);
    bool repeated = false;
    for (const auto& b : sample_batches(targets, 4, rng, BatchMode::by_triplet)) {
        std::set<std::string> s;
        for (auto i : b) s.insert(targets[i]);
        repeated = repeated || s.size() < b.size();
    }
    CHECK(repeated);
}

TEST_CASE("per-target selection is uniform") {
    std::vector<std::string> targets{"x", "a", "a", "a", "a", "a", "y"};
    std::map<std::size_t, std::size_t> counts;
    Rng rng(3);
    const int draws = 10000;
    for (int k = 0; k < draws; ++k)
        for (const auto& b : sample_batches(targets, 2, rng, BatchMode::by_target))
            for (auto i : b)
                if (targets[i] == "a") ++counts[i];
    double chi2 = 0;
    for (std::size_t i = 1; i <= 5; ++i) {
        const double e = draws / 5.0;
        chi2 += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
    }
    CHECK(oracle::chi_square_sf(chi2, 4) > 0.01);
}

TEST_CASE("training: zero learning rate changes nothing") {
    std::mt19937_64 rng(10);
    std::vector<TrainingRow> rows;
    for (int i = 0; i < 12; ++i)
        rows.push_back({"t" + std::to_string(i), oracle::random_unit(rng, 6), oracle::random_unit(rng, 6),
                        oracle::random_unit(rng, 6)});
    HnNceConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 4;
    cfg.batch_size = 12;
    const auto r = train(rows, cfg);
    CHECK(r.head == FusionHead::random(6, 0, cfg.seed));
    for (double l : r.epoch_loss) CHECK(l == doctest::Approx(r.epoch_loss.front()).epsilon(1e-12));
}

namespace {

// Targets clustered by text token: text k always leads to the target nearest
// direction k, independent of the query.
struct Separable {
    std::vector<Vec> target_dirs, text_dirs;
    std::vector<TrainingRow> rows;
    std::vector<TrainingRow> heldout;

    explicit Separable(std::size_t k, std::size_t d, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < k; ++i) {
            target_dirs.push_back(oracle::random_unit(rng, d));
            text_dirs.push_back(oracle::random_unit(rng, d));
        }
        auto make = [&](std::size_t i) {
            return TrainingRow{"t" + std::to_string(i), oracle::random_unit(rng, d), text_dirs[i], target_dirs[i]};
        };
        for (int rep = 0; rep < 4; ++rep)
            for (std::size_t i = 0; i < k; ++i) rows.push_back(make(i));
        for (std::size_t i = 0; i < k; ++i) heldout.push_back(make(i));
    }
};

}  // namespace

TEST_CASE("training on separable data decreases the loss and retrieves held-out queries") {
    Separable data(12, 16, 11);
    HnNceConfig cfg;
    cfg.epochs = 60;
    const auto r = train(data.rows, cfg);
    for (std::size_t e = 1; e < 5; ++e) CHECK(r.epoch_loss[e] < r.epoch_loss[e - 1]);

    std::vector<GalleryEntry> gallery;
    for (std::size_t i = 0; i < data.target_dirs.size(); ++i) gallery.push_back({"t" + std::to_string(i), data.target_dirs[i]});
    std::vector<ComposedQuery> queries;
    for (const auto& row : data.heldout)
        queries.push_back({"q", fusion_forward(r.head, row.query_visual, row.text), row.target_id, std::nullopt});
    CHECK(recall_report(queries, gallery).r_at.at(1) >= 0.9);

    const auto again = train(data.rows, cfg);
    CHECK(again.epoch_loss == r.epoch_loss);
    CHECK(again.head == r.head);
}

TEST_CASE("checkpoint round trip and loss curve") {
    testing_support::TempDir dir;
    const auto head = FusionHead::random(5, 7, 3);
    save_head(head, HnNceConfig{}, dir / "h.ckpt");
    const auto back = load_head(dir / "h.ckpt");
    REQUIRE(back.parameter_count() == head.parameter_count());
    const auto a = head.flatten(), b = back.flatten();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));
    CHECK(loss_curve_csv({1.5, 0.25}).rfind("epoch,mean_loss\n", 0) == 0);
}

TEST_CASE("config validation") {
    HnNceConfig cfg;
    cfg.tau = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.beta = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
