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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "covr/error.hpp"
#include "covr/filtering.hpp"
#include "covr/io.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace covr;

namespace {

// Text encoder with hand-set similarities: every caption maps to a direction at
// a chosen angle from e1.
class FixedEncoder final : public TextEncoder {
public:
    std::map<std::string, Vec> table;
    std::size_t dim() const override { return 2; }
    Vec embed(const std::string& text) const override {
        auto it = table.find(text);
        if (it == table.end()) fail(ErrorKind::validation, "no embedding for caption '" + text + "'");
        return it->second;
    }
    // Places b so that normalized similarity with a = s.
    void set_pair(const std::string& a, const std::string& b, double s) {
        table[a] = {1.0, 0.0};
        const double c = 2.0 * s - 1.0;
        table[b] = {c, std::sqrt(std::max(0.0, 1.0 - c * c))};
    }
};

Lexicon lexicon() {
    std::unordered_set<std::string> dict{"playing", "play", "zebra", "coins", "fit", "happy", "young", "couple",
                                         "cat", "dog", "obscure", "navigation", "on", "the", "moscow"};
    std::unordered_map<std::string, double> zipf{{"playing", 4.5}, {"play", 5.0}, {"zebra", 3.8}, {"coins", 4.0},
                                                 {"cat", 5.0},     {"dog", 5.1},  {"obscure", 2.0}};
    return Lexicon(dict, zipf);
}

CaptionPair sub(const std::string& a, const std::string& b, const std::string& da, const std::string& db) {
    CaptionPair p;
    p.caption_a = a;
    p.caption_b = b;
    p.diff_a = da;
    p.diff_b = db;
    return p;
}

}  // namespace

TEST_CASE("reference filter decisions") {
    FixedEncoder enc;
    const FilterConfig cfg;
    const auto lex = lexicon();

    auto p1 = sub("fit and happy young couple playing", "fit and happy young couple play", "playing", "play");
    enc.set_pair(p1.caption_a, p1.caption_b, 0.97);
    CHECK(filter_caption_pair(p1, enc, lex, cfg).reason == FilterReason::too_similar);

    auto p2 = sub("zebra on a white plain", "coins on a white plain", "zebra", "coins");
    enc.set_pair(p2.caption_a, p2.caption_b, 0.55);
    CHECK(filter_caption_pair(p2, enc, lex, cfg).reason == FilterReason::too_dissimilar);

    auto p3 = sub("23.09.2015 navigation on the moscow", "24.09.2015 navigation on the moscow", "23.09.2015", "24.09.2015");
    enc.set_pair(p3.caption_a, p3.caption_b, 0.8);
    CHECK(filter_caption_pair(p3, enc, lex, cfg).reason == FilterReason::digit_diff);
}

TEST_CASE("keep band is strict at both ends") {
    FixedEncoder enc;
    const FilterConfig cfg;
    const auto lex = lexicon();
    auto p = sub("a cat", "a dog", "cat", "dog");
    const std::vector<std::pair<double, FilterReason>> cases{
        {0.96, FilterReason::too_similar}, {0.9599, FilterReason::kept},  {0.6001, FilterReason::kept},
        {0.6, FilterReason::too_dissimilar}, {0.3, FilterReason::too_dissimilar}, {0.99, FilterReason::too_similar}};
    for (auto [s, reason] : cases) {
        // Build the encoder so the library's own similarity equals s up to rounding; compare decisions
        // against the exactly computed value.
        enc.set_pair(p.caption_a, p.caption_b, s);
        const auto d = filter_caption_pair(p, enc, lex, cfg);
        const auto ea = enc.embed(p.caption_a), eb = enc.embed(p.caption_b);
        const double exact = (1.0 + ea[0] * eb[0] + ea[1] * eb[1]) / 2.0;
        CHECK(d.text_sim.value == doctest::Approx(exact).epsilon(1e-15));
        const bool keep = exact > cfg.sim_min.value && exact < cfg.sim_max.value;
        CHECK(d.kept() == keep);
        if (std::abs(exact - s) < 1e-12 && (s == 0.96 || s == 0.6)) continue;  // boundary may round either way
        CHECK(d.reason == reason);
    }
}

TEST_CASE("exact threshold values are excluded") {
    // Identical embeddings give s = 1 exactly; configure sim_max = 1 to hit the boundary.
    FixedEncoder enc;
    enc.table["a cat"] = {1, 0};
    enc.table["a dog"] = {1, 0};
    FilterConfig cfg;
    cfg.sim_max = {1.0};
    CHECK(filter_caption_pair(sub("a cat", "a dog", "cat", "dog"), enc, lexicon(), cfg).reason == FilterReason::too_similar);
    enc.table["a dog"] = {0, 1};  // s = 0.5
    cfg.sim_min = {0.5};
    CHECK(filter_caption_pair(sub("a cat", "a dog", "cat", "dog"), enc, lexicon(), cfg).reason == FilterReason::too_dissimilar);
}

TEST_CASE("rule order is fixed") {
    FixedEncoder enc;
    const FilterConfig cfg;
    const auto lex = lexicon();
    // Template + digit + oov + similarity all fail; template wins.
    auto p = sub("flag of 1 qqq", "flag of 2 qqq", "1", "2");
    enc.set_pair(p.caption_a, p.caption_b, 0.99);
    CHECK(filter_caption_pair(p, enc, lex, cfg).reason == FilterReason::template_caption);
    p = sub("x 1 y", "x 2y y", "1", "2y");
    enc.set_pair(p.caption_a, p.caption_b, 0.99);
    CHECK(filter_caption_pair(p, enc, lex, cfg).reason == FilterReason::digit_diff);
    p = sub("a cat", "a qwzx", "cat", "qwzx");
    enc.set_pair(p.caption_a, p.caption_b, 0.99);
    CHECK(filter_caption_pair(p, enc, lex, cfg).reason == FilterReason::oov_diff);
    p = sub("a cat", "a obscure", "cat", "obscure");
    enc.set_pair(p.caption_a, p.caption_b, 0.99);
    CHECK(filter_caption_pair(p, enc, lex, cfg).reason == FilterReason::rare_diff);
    // In dictionary but without a zipf entry counts as rare.
    p = sub("a cat", "a fit", "cat", "fit");
    enc.set_pair(p.caption_a, p.caption_b, 0.8);
    CHECK(filter_caption_pair(p, enc, lex, cfg).reason == FilterReason::rare_diff);
}

TEST_CASE("missing embedding names the caption") {
    FixedEncoder enc;
    CHECK_THROWS_WITH_AS(filter_caption_pair(sub("a cat", "a dog", "cat", "dog"), enc, lexicon(), FilterConfig{}),
                         doctest::Contains("a cat"), Error);
}

TEST_CASE("config validation") {
    FilterConfig cfg;
    cfg.sim_min = {0.97};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.max_video_pairs_per_caption_pair = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

namespace {

struct VideoFixture {
    EmbeddingStore frames{8};
    FramesManifest manifest;
    std::unordered_map<std::string, std::vector<std::string>> by_caption;
    std::map<std::string, Vec> mid;

    VideoFixture(std::size_t na, std::size_t nb, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto add = [&](const std::string& cap, const std::string& id) {
            const std::size_t count = 3 + rng() % 5;
            manifest[id] = count;
            for (std::size_t f = 0; f < count; ++f) {
                const auto v = oracle::random_unit(rng, 8);
                frames.add(frame_id(id, f), std::span<const double>(v));
                if (f == count / 2) mid[id] = v;
            }
            by_caption[cap].push_back(id);
        };
        for (std::size_t i = 0; i < na; ++i) add("cap a", "a" + std::to_string(i));
        for (std::size_t i = 0; i < nb; ++i) add("cap b", "b" + std::to_string(i));
    }

    CaptionPair pair() const {
        CaptionPair p;
        p.caption_a = "cap a";
        p.caption_b = "cap b";
        p.diff_a = "a";
        p.diff_b = "b";
        return p;
    }

    // Full score-and-sort oracle over the float-rounded middle frames.
    std::vector<std::pair<std::string, std::string>> oracle_top(std::size_t cap, std::optional<double> min_sim) const {
        std::vector<std::tuple<double, std::string, std::string>> all;
        for (const auto& a : by_caption.at("cap a"))
            for (const auto& b : by_caption.at("cap b")) {
                const auto fa = frames.at(frame_id(a, manifest.at(a) / 2));
                const auto fb = frames.at(frame_id(b, manifest.at(b) / 2));
                double d = 0;
                for (std::size_t k = 0; k < 8; ++k) d += static_cast<double>(fa[k]) * fb[k];
                const double s = (1.0 + d) / 2.0;
                if (min_sim && s < *min_sim) continue;
                all.emplace_back(-s, a, b);
            }
        std::sort(all.begin(), all.end());
        std::vector<std::pair<std::string, std::string>> out;
        for (std::size_t i = 0; i < std::min(cap, all.size()); ++i) out.emplace_back(std::get<1>(all[i]), std::get<2>(all[i]));
        return out;
    }
};

std::vector<std::pair<std::string, std::string>> ids(const std::vector<VideoPair>& v) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : v) out.emplace_back(p.query_video, p.target_video);
    return out;
}

}  // namespace

TEST_CASE("one video each gives exactly one pair") {
    VideoFixture fx(1, 1, 1);
    FilterConfig cfg;
    CHECK(select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, cfg).size() == 1);
    cfg.max_video_pairs_per_caption_pair = 1;
    CHECK(select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, cfg).size() == 1);
}

TEST_CASE("4x5 videos with cap 10 match full sort; cap 1 is the argmax") {
    VideoFixture fx(4, 5, 2);
    FilterConfig cfg;
    const auto top = select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, cfg);
    CHECK(ids(top) == fx.oracle_top(10, std::nullopt));
    cfg.max_video_pairs_per_caption_pair = 1;
    CHECK(ids(select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, cfg)) == fx.oracle_top(1, std::nullopt));
}

TEST_CASE("self pairs dropped") {
    VideoFixture fx(2, 0, 3);
    fx.by_caption["cap b"] = fx.by_caption["cap a"];
    const auto out = select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, FilterConfig{});
    CHECK(out.size() == 2);
    for (const auto& p : out) CHECK(p.query_video != p.target_video);
}

TEST_CASE("visual thresholds nest") {
    VideoFixture fx(6, 6, 4);
    FilterConfig cfg;
    cfg.max_video_pairs_per_caption_pair = 100;
    std::vector<std::set<std::pair<std::string, std::string>>> sets;
    for (std::optional<double> t : {std::optional<double>{}, std::optional<double>{0.55}, std::optional<double>{0.65},
                                    std::optional<double>{0.70}}) {
        cfg.visual_sim_min = t ? std::optional<NormalizedSimilarity>{NormalizedSimilarity{*t}} : std::nullopt;
        const auto out = select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, cfg);
        CHECK(ids(out) == fx.oracle_top(100, t));
        const auto v = ids(out);
        sets.emplace_back(v.begin(), v.end());
    }
    for (std::size_t i = 1; i < sets.size(); ++i)
        CHECK(std::includes(sets[i - 1].begin(), sets[i - 1].end(), sets[i].begin(), sets[i].end()));
}

TEST_CASE("missing frame embedding") {
    VideoFixture fx(1, 1, 5);
    fx.manifest["a0"] = 40;
    CHECK_THROWS_AS(select_video_pairs(fx.pair(), fx.by_caption, fx.manifest, fx.frames, FilterConfig{}), Error);
}

TEST_CASE("middle frame") {
    CHECK(middle_frame(1) == 0);
    CHECK(middle_frame(15) == 7);
    CHECK(middle_frame(4) == 2);
}

TEST_CASE("frames manifest loads") {
    testing_support::TempDir dir;
    write_text_file(dir / "f.csv", "video_id,frame_count\nv1,15\nv2,3\n");
    const auto m = load_frames_manifest(dir / "f.csv");
    CHECK(m.at("v1") == 15);
    CHECK(m.at("v2") == 3);
}
