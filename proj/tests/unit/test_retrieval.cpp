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
#include <random>

#include "covr/error.hpp"
#include "covr/retrieval.hpp"
#include "oracles.hpp"

using namespace covr;

namespace {

Vec at_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

}  // namespace

TEST_CASE("frame weights") {
    const std::vector<Vec> same(4, Vec{0.6, 0.8});
    const Vec text{1, 0};
    for (double w : frame_weights(same, text)) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(frame_weights(std::vector<Vec>{Vec{0, 1}}, text) == std::vector<double>{1.0});

    // Two frames with cosines 0.9 and 0.1 to the text.
    const std::vector<Vec> frames{Vec{0.9, std::sqrt(1 - 0.81)}, Vec{0.1, std::sqrt(1 - 0.01)}};
    const auto w = frame_weights(frames, text, 1.0);
    const double z = std::exp(0.9) + std::exp(0.1);
    CHECK(std::abs(w[0] - std::exp(0.9) / z) < 1e-12);
    CHECK(std::abs(w[1] - std::exp(0.1) / z) < 1e-12);
    CHECK(std::abs(w[0] + w[1] - 1.0) < 1e-9);
}

TEST_CASE("video embedding") {
    CHECK(video_embedding(std::vector<Vec>{Vec{0.6, 0.8}}, std::vector<double>{1.0}) == Vec{0.6, 0.8});
    CHECK_THROWS_AS(video_embedding(std::vector<Vec>{Vec{1, 0}, Vec{-1, 0}}, uniform_weights(2)), Error);

    std::mt19937_64 rng(3);
    std::vector<Vec> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(oracle::random_unit(rng, 12));
    const std::vector<double> w{0.5, 0.3, 0.2};
    const auto h = video_embedding(frames, w);
    const auto ref = oracle::weighted_direction(frames, w);
    for (std::size_t k = 0; k < h.size(); ++k) CHECK(std::abs(h[k] - ref[k]) < 1e-12);
}

TEST_CASE("identical frames never change h as N grows") {
    const Vec f{0.0, 0.6, 0.8};
    const Vec text{1.0, 0.0, 0.0};
    for (std::size_t n = 1; n <= 15; n += 2) {
        const std::vector<Vec> frames(n, f);
        const auto h = video_embedding(frames, frame_weights(frames, text));
        for (std::size_t k = 0; k < 3; ++k) CHECK(h[k] == doctest::Approx(f[k]).epsilon(1e-12));
    }
}

TEST_CASE("low temperature selects the best frame") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> frames;
        for (int i = 0; i < 7; ++i) frames.push_back(oracle::random_unit(rng, 16));
        const auto text = oracle::random_unit(rng, 16);
        std::size_t best = 0;
        for (std::size_t i = 1; i < frames.size(); ++i)
            if (dot(frames[i], text) > dot(frames[best], text)) best = i;
        const auto h = video_embedding(frames, frame_weights(frames, text, 1e-6));
        CHECK(cosine(std::span<const double>(h), std::span<const double>(frames[best])).value > 0.999);
    }
}

TEST_CASE("sample frame indices") {
    CHECK(sample_frame_indices(15, 1) == std::vector<std::size_t>{7});
    CHECK(sample_frame_indices(15, 15).size() == 15);
    const auto five = sample_frame_indices(15, 5);
    CHECK(five.size() == 5);
    CHECK(five.front() == 0);
    CHECK(five.back() == 14);
    for (std::size_t i = 1; i < five.size(); ++i) CHECK(five[i] > five[i - 1]);
}

TEST_CASE("compose query") {
    const Vec v{0.6, 0.8};
    CHECK(compose_query(std::vector<Vec>{v}, v, FusionKind::avg) == v);
    const Vec neg{-0.6, -0.8};
    CHECK_THROWS_AS(compose_query(std::vector<Vec>{v}, neg, FusionKind::avg), Error);
    const Vec t{1, 0};
    const auto many = compose_query(std::vector<Vec>(5, v), t, FusionKind::avg);
    const auto one = compose_query(std::vector<Vec>{v}, t, FusionKind::avg);
    for (std::size_t k = 0; k < 2; ++k) CHECK(many[k] == doctest::Approx(one[k]).epsilon(1e-12));
    const Vec three{1, 0, 0};
    CHECK_THROWS_AS(compose_query(std::vector<Vec>{v}, three, FusionKind::avg), Error);
    CHECK_THROWS_AS(compose_query(std::vector<Vec>{v}, t, FusionKind::mlp), Error);
}

TEST_CASE("retrieve orders by cosine with ties on id") {
    // Hand-set cosines 0.9, 0.7, 0.7, 0.1 to f = e1.
    std::vector<GalleryEntry> g{{"d", at_angle(std::acos(0.1))},
                                {"c", at_angle(std::acos(0.7))},
                                {"b", at_angle(-std::acos(0.7))},
                                {"a", at_angle(std::acos(0.9))}};
    const ComposedQuery q{"q", {1, 0}, "c", std::nullopt};
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& e : g) scored.emplace_back(e.video_id, e.h[0]);
    CHECK(retrieve(q, g) == oracle::sort_ranking(scored));
    CHECK(retrieve(q, g) == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(target_rank(q, g) == 3);
}

TEST_CASE("target equal to f ranks first and subsets restrict") {
    std::mt19937_64 rng(8);
    std::vector<GalleryEntry> g;
    for (int i = 0; i < 20; ++i) g.push_back({"g" + std::to_string(i), oracle::random_unit(rng, 8)});
    ComposedQuery q{"q", g[13].h, "g13", std::nullopt};
    CHECK(retrieve(q, g).front() == "g13");
    CHECK(target_rank(q, g) == 1);
    q.subset_ids = std::vector<std::string>{"g1", "g2", "g3", "g4", "g5", "g13"};
    CHECK(retrieve(q, g).size() == 6);
}

TEST_CASE("ranking is invariant to positive rescaling") {
    std::mt19937_64 rng(9);
    std::vector<GalleryEntry> g;
    for (int i = 0; i < 30; ++i) g.push_back({"g" + std::to_string(i), oracle::random_unit(rng, 8)});
    const auto f = oracle::random_unit(rng, 8);
    auto scaled = f;
    for (auto& x : scaled) x *= 3.5;
    CHECK(retrieve({"q", f, "g0", std::nullopt}, g) == retrieve({"q", scaled, "g0", std::nullopt}, g));
}

TEST_CASE("recall from ranks 1, 4, 12") {
    const std::vector<std::size_t> ranks{1, 4, 12};
    const auto r = recall_report_from_ranks(ranks);
    CHECK(r.r_at.at(1) == 1.0 / 3.0);
    CHECK(r.r_at.at(5) == 2.0 / 3.0);
    CHECK(r.r_at.at(10) == 2.0 / 3.0);
    CHECK(r.r_at.at(50) == 1.0);
    CHECK(r.mean_r == (1.0 / 3.0 + 2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 4.0);
    const auto j = recall_to_json(r);
    CHECK(j["R@1"] == 1.0 / 3.0);
    CHECK(j["n_queries"] == 3);
}

TEST_CASE("perfect queries give recall one") {
    std::mt19937_64 rng(10);
    std::vector<GalleryEntry> g;
    std::vector<ComposedQuery> qs;
    for (int i = 0; i < 25; ++i) {
        g.push_back({"g" + std::to_string(i), oracle::random_unit(rng, 8)});
        qs.push_back({"q" + std::to_string(i), g.back().h, g.back().video_id, std::nullopt});
    }
    const auto r = recall_report(qs, g);
    for (auto k : kRecallKs) CHECK(r.r_at.at(k) == 1.0);
}

TEST_CASE("subset recall") {
    std::vector<GalleryEntry> g{{"a", {1, 0}}, {"b", at_angle(0.1)}, {"c", at_angle(0.2)}, {"d", at_angle(0.3)}};
    std::vector<ComposedQuery> qs{{"q1", {1, 0}, "c", std::vector<std::string>{"c", "d"}},
                                  {"q2", {1, 0}, "d", std::vector<std::string>{"a", "b", "d"}}};
    const auto r = recall_report(qs, g);
    CHECK(r.subset_r_at.at(1) == 0.5);
    CHECK(r.subset_r_at.at(2) == 0.5);
    CHECK(r.subset_r_at.at(3) == 1.0);
}

TEST_CASE("missing target") {
    std::vector<GalleryEntry> g{{"a", {1, 0}}};
    std::vector<ComposedQuery> qs{{"q", {1, 0}, "zzz", std::nullopt}};
    CHECK_THROWS_AS(recall_report(qs, g), Error);
}

TEST_CASE("recall is nondecreasing in K") {
    std::mt19937_64 rng(11);
    std::vector<std::size_t> ranks;
    for (int i = 0; i < 500; ++i) ranks.push_back(1 + rng() % 120);
    const auto r = recall_report_from_ranks(ranks);
    double prev = 0;
    for (auto k : kRecallKs) {
        CHECK(r.r_at.at(k) >= prev);
        prev = r.r_at.at(k);
    }
}
