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
#include <limits>
#include <set>

#include "covr/error.hpp"
#include "covr/tripletset.hpp"
#include "temp_dir.hpp"

using namespace covr;

namespace {

CoVRTriplet triplet(const std::string& q, const std::string& t, const std::string& text, std::optional<double> flow = {}) {
    CoVRTriplet x;
    x.query_video = q;
    x.target_video = t;
    x.modification = {text, TextSource::llm, std::nullopt, {}};
    x.caption_a = "caption " + q;
    x.caption_b = "caption " + t;
    x.text_sim = {0.8};
    x.visual_sim = {0.7};
    x.flow_magnitude_target = flow;
    return x;
}

DirectedVideoPair directed(const std::string& ca, const std::string& cb, const std::string& q, const std::string& t) {
    return {ca, cb, VideoPair{q, t, {0.9}}, {0.75}};
}

}  // namespace

TEST_CASE("both directions give two swapped triplets") {
    std::vector<DirectedVideoPair> pairs{directed("old woman", "young woman", "v1", "v2"),
                                         directed("young woman", "old woman", "v2", "v1")};
    std::vector<ModificationText> texts{{"Make her young", TextSource::llm, {}, {}},
                                        {"Make her old", TextSource::llm, {}, {}}};
    const auto out = build_triplets(pairs, texts);
    REQUIRE(out.size() == 2);
    CHECK(out[0].query_video == "v2");
    CHECK(out[0].target_video == "v1");
    CHECK(out[0].modification.text == "Make her old");
    CHECK(out[1].query_video == "v1");
    CHECK(out[1].modification.text == "Make her young");
}

TEST_CASE("build_triplets edge cases") {
    CHECK(build_triplets({}, {}).empty());
    std::vector<DirectedVideoPair> pairs{directed("a", "b", "v1", "v2")};
    CHECK_THROWS_AS(build_triplets(pairs, {}), Error);
    pairs[0].videos.target_video = "v1";
    CHECK_THROWS_AS(build_triplets(pairs, {{"x", TextSource::llm, {}, {}}}), Error);
}

TEST_CASE("order is (target, query, text)") {
    std::vector<DirectedVideoPair> pairs{directed("a", "b", "q2", "t1"), directed("a", "b", "q1", "t2"),
                                         directed("a", "b", "q1", "t1")};
    std::vector<ModificationText> texts(3, {"x", TextSource::llm, {}, {}});
    const auto out = build_triplets(pairs, texts);
    CHECK(out[0].query_video == "q1");
    CHECK(out[0].target_video == "t1");
    CHECK(out[1].query_video == "q2");
    CHECK(out[2].target_video == "t2");
}

TEST_CASE("flow taken from the corpus") {
    CaptionRecord r;
    r.video_id = "v2";
    r.caption_raw = "x";
    r.tokens = {"x"};
    r.flow_magnitude = 2.5;
    const Corpus c({r});
    std::vector<DirectedVideoPair> pairs{directed("a", "b", "v1", "v2")};
    const auto out = build_triplets(pairs, {{"x", TextSource::llm, {}, {}}}, &c);
    CHECK(out[0].flow_magnitude_target == 2.5);
}

TEST_CASE("stats examples") {
    auto s = compute_stats({triplet("a", "b", "one two three four")});
    CHECK(s.avg_text_words == 4.0);
    CHECK_FALSE(s.static_fraction.has_value());

    s = compute_stats({triplet("a", "t", "w w"), triplet("b", "t", "w w w w"), triplet("c", "t", "w w w w w w")});
    CHECK(s.avg_text_words == 4.0);
    CHECK(s.text_word_length == std::map<std::size_t, std::size_t>{{2, 1}, {4, 1}, {6, 1}});
    CHECK(s.triplets_per_target.at("t") == 3);
    CHECK(s.n_distinct_videos == 4);
    CHECK(s.n_distinct_texts == 3);
}

TEST_CASE("stats histograms are consistent and static fraction counts only flows present") {
    std::vector<CoVRTriplet> ts{triplet("a", "t1", "x y", 0.5), triplet("b", "t1", "x", 1.0), triplet("c", "t2", "x y z"),
                                triplet("d", "t3", "x", 0.2)};
    const auto s = compute_stats(ts);
    std::size_t mass = 0, words = 0, target_mass = 0;
    for (auto [len, n] : s.text_word_length) {
        mass += n;
        words += len * n;
    }
    for (const auto& [t, n] : s.triplets_per_target) target_mass += n;
    CHECK(mass == s.n_triplets);
    CHECK(target_mass == s.n_triplets);
    CHECK(std::abs(static_cast<double>(words) / static_cast<double>(mass) - s.avg_text_words) < 1e-9);
    CHECK(*s.static_fraction == doctest::Approx(2.0 / 3.0));
    CHECK(s.avg_triplets_per_target() == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("static/dynamic split") {
    std::vector<CoVRTriplet> ts{triplet("a", "b", "x", 0.2), triplet("a", "c", "x", 1.0), triplet("a", "d", "x", 3.5)};
    auto split = split_static_dynamic(ts, 1.0);
    REQUIRE(split.static_set.size() == 1);
    CHECK(split.static_set[0].flow_magnitude_target == 0.2);
    CHECK(split.dynamic_set.size() == 2);
    CHECK(split_static_dynamic(ts, 0.0).dynamic_set.size() == 3);
    CHECK(split_static_dynamic(ts, std::numeric_limits<double>::infinity()).static_set.size() == 3);
    ts.push_back(triplet("a", "e", "x"));
    CHECK_THROWS_AS(split_static_dynamic(ts), Error);
}

TEST_CASE("triplets and stats round trip through JSONL") {
    testing_support::TempDir dir;
    std::vector<CoVRTriplet> ts{triplet("a", "b", "add a dog", 0.3), triplet("c", "d", "remove it")};
    ts[1].modification = {"remove it", TextSource::rule, 0, {}};
    ts[0].modification.candidates = {"add a dog", "a dog", "dog"};
    write_triplets_jsonl(ts, dir / "t.jsonl");
    const auto back = read_triplets_jsonl(dir / "t.jsonl");
    CHECK(back == ts);
    CHECK(stats_to_json(compute_stats(back)) == stats_to_json(compute_stats(ts)));
    const auto j = triplet_to_json(ts[1]);
    CHECK(j["flow_magnitude_target"].is_null());
    CHECK(j["source"] == "rule");
}

TEST_CASE("splits keep both directions together and are seeded") {
    std::vector<CoVRTriplet> ts;
    for (int i = 0; i < 50; ++i) {
        auto a = triplet("q" + std::to_string(i), "t" + std::to_string(i), "x");
        a.caption_a = "c" + std::to_string(i);
        a.caption_b = "d" + std::to_string(i);
        auto b = a;
        std::swap(b.query_video, b.target_video);
        std::swap(b.caption_a, b.caption_b);
        ts.push_back(a);
        ts.push_back(b);
    }
    const auto s = split_dataset(ts, {0.1, 0.2}, 7);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 20);
    CHECK(s.train.size() == 70);
    std::set<std::string> train_caps;
    for (const auto& t : s.train) train_caps.insert(t.caption_a);
    for (const auto& t : s.test) {
        CHECK_FALSE(train_caps.count(t.caption_a));
        CHECK_FALSE(train_caps.count(t.caption_b));
    }
    CHECK(split_dataset(ts, {0.1, 0.2}, 7).test == s.test);
}

TEST_CASE("eval pools") {
    std::vector<CoVRTriplet> pool;
    for (int i = 0; i < 100; ++i) pool.push_back(triplet("q" + std::to_string(i), "t" + std::to_string(i), "x"));
    const auto p = sample_eval_pools(pool, 30, 50, 3);
    CHECK(p.validation.size() == 30);
    CHECK(p.annotation.size() == 50);
    std::set<std::string> ids;
    for (const auto& t : p.validation) ids.insert(t.query_video);
    for (const auto& t : p.annotation) CHECK_FALSE(ids.count(t.query_video));
    const auto again = sample_eval_pools(pool, 30, 50, 3);
    CHECK(again.validation == p.validation);
    CHECK(again.annotation == p.annotation);
    CHECK_THROWS_AS(sample_eval_pools(pool, 60, 50, 3), Error);
}

TEST_CASE("held-out overlap error lists ids") {
    auto rec = [](const std::string& id) {
        CaptionRecord r;
        r.video_id = id;
        r.caption_raw = id;
        r.tokens = {id};
        return r;
    };
    const Corpus train({rec("v1"), rec("v2")});
    CHECK_NOTHROW(check_disjoint(Corpus({rec("h1")}), train));
    CHECK_THROWS_WITH_AS(check_disjoint(Corpus({rec("h1"), rec("v2")}), train), doctest::Contains("v2"), Error);
}
