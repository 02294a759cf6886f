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

#include "covr/toydata.hpp"

#include <array>
#include <set>
#include <sstream>

#include "covr/corpus.hpp"
#include "covr/embedspace.hpp"
#include "covr/error.hpp"
#include "covr/hash.hpp"
#include "covr/io.hpp"
#include "covr/rng.hpp"

namespace covr {

namespace fs = std::filesystem;

namespace {

const std::array<const char*, 10> kAdjectives{"red", "blue", "green", "yellow", "black",
                                              "white", "small", "large", "old", "young"};
const std::array<const char*, 10> kNouns{"car", "dog", "cat", "horse", "boat", "bird", "child", "man", "woman", "train"};
const std::array<const char*, 8> kVerbs{"running", "walking", "standing", "sitting",
                                        "jumping", "waiting", "playing", "moving"};
const std::array<const char*, 6> kPlaces{"city", "park", "forest", "beach", "street", "field"};

// Captions that exercise the caption filters. Each gets one video.
const std::vector<std::string> kSpecialCaptions{
    "Sunset",
    "Sunrise",
    "A very long and slow panoramic view of the quiet harbor with many little boats and a lighthouse at dusk",
    "A very long and slow panoramic view of the quiet harbor with many little boats and a lighthouse at dawn",
    "Abstract of colorful shapes drifting",
    "Abstract of colorful lines drifting",
    "Flag of france waving",
    "Flag of italy waving",
    "Countdown timer showing 10",
    "Countdown timer showing 20",
    "Golden kite floating above hills",
    "Golden kite floating above qwzx",
    "Golden kite floating above fjords",
    "Hologram of a spinning globe",
    "Hologram of a spinning planet",
    "Timelapse of clouds",
    "Timelapse of stars",
    "Sky timelapse.",
    "Clouds sky timelapse",
    "Sky",
};

const std::set<std::string> kRareWords{"fjords"};
const std::set<std::string> kUnknownWords{"qwzx"};

Vec random_unit(Rng& rng, std::size_t dim) {
    Vec v(dim);
    for (auto& x : v) x = standard_normal(rng);
    return normalized(v);
}

std::string video_name(char prefix, std::size_t i) {
    std::ostringstream ss;
    ss << prefix;
    ss.width(4);
    ss.fill('0');
    ss << i;
    return ss.str();
}

struct ToyVideo {
    std::string id;
    std::string caption;
    int scene;
};

std::vector<std::string> template_captions(std::size_t n, Rng& rng, const std::set<std::string>& exclude) {
    std::vector<std::string> all;
    for (auto a : kAdjectives)
        for (auto n_ : kNouns)
            for (auto v : kVerbs)
                for (auto p : kPlaces) {
                    std::string c = std::string(a) + " " + n_ + " " + v + " in the " + p;
                    c[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(c[0])));
                    if (!exclude.count(c)) all.push_back(std::move(c));
                }
    if (n > all.size()) fail(ErrorKind::invalid_argument, "toy dataset: too many captions requested");
    shuffle(std::span<std::string>(all), rng);
    all.resize(n);
    return all;
}

// Assigns videos: every caption gets one, the first (videos - captions) get a second.
std::vector<ToyVideo> assign_videos(const std::vector<std::string>& captions, std::size_t videos, char prefix) {
    if (videos < captions.size() || videos > 2 * captions.size())
        fail(ErrorKind::invalid_argument, "toy dataset: videos must be between captions and twice captions");
    std::vector<ToyVideo> out;
    const std::size_t doubled = videos - captions.size();
    std::size_t next = 1;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        out.push_back({video_name(prefix, next++), captions[i], 0});
        if (i < doubled) out.push_back({video_name(prefix, next++), captions[i], 1});
    }
    return out;
}

}  // namespace

void make_toy_dataset(const fs::path& dir, const ToyDatasetOptions& o) {
    if (o.dim < 2 || o.frames_per_video < 1) fail(ErrorKind::invalid_argument, "toy dataset: bad dimensions");
    if (o.captions <= kSpecialCaptions.size())
        fail(ErrorKind::invalid_argument, "toy dataset: need more captions than the special set");
    fs::create_directories(dir);
    Rng rng(o.seed);

    auto train_captions = template_captions(o.captions - kSpecialCaptions.size(), rng, {});
    const std::set<std::string> used(train_captions.begin(), train_captions.end());
    const auto heldout_captions = template_captions(o.heldout_captions, rng, used);
    train_captions.insert(train_captions.end(), kSpecialCaptions.begin(), kSpecialCaptions.end());

    const auto train_videos = assign_videos(train_captions, o.videos, 'v');
    const auto heldout_videos = assign_videos(heldout_captions, o.heldout_videos, 'h');

    const std::array<Vec, 2> scenes{random_unit(rng, o.dim), random_unit(rng, o.dim)};
    EmbeddingStore frames(o.dim);
    std::string manifest = "video_id,frame_count\n";
    auto add_frames = [&](const ToyVideo& v) {
        Vec content = toy_embed(v.caption, o.dim);
        for (std::size_t k = 0; k < o.dim; ++k) content[k] += o.scene_weight * scenes[static_cast<std::size_t>(v.scene)][k];
        content = normalized(content);
        for (std::size_t f = 0; f < o.frames_per_video; ++f) {
            const auto noise = random_unit(rng, o.dim);
            Vec frame(o.dim);
            for (std::size_t k = 0; k < o.dim; ++k) frame[k] = content[k] + o.frame_noise * noise[k];
            frames.add(frame_id(v.id, f), std::span<const double>(frame));
        }
        manifest += v.id + "," + std::to_string(o.frames_per_video) + "\n";
    };

    auto corpus_of = [&](const std::vector<ToyVideo>& videos) {
        std::vector<CaptionRecord> records;
        for (const auto& v : videos) {
            CaptionRecord r;
            r.video_id = v.id;
            r.caption_raw = v.caption;
            r.tokens = normalize_caption(v.caption);
            r.duration_s = 5.0 + 25.0 * uniform_unit(rng);
            r.flow_magnitude = 3.0 * uniform_unit(rng);
            r.categories = {v.scene == 0 ? "scene-a" : "scene-b"};
            records.push_back(std::move(r));
            add_frames(v);
        }
        return Corpus(std::move(records));
    };
    save_corpus(corpus_of(train_videos), dir / "corpus.csv", CorpusFormat::csv);
    save_corpus(corpus_of(heldout_videos), dir / "heldout.csv", CorpusFormat::csv);
    save_embeddings(frames, dir / "frames.cvem");
    write_text_file(dir / "frames.csv", manifest);

    std::set<std::string> words;
    for (const auto& c : train_captions)
        for (auto& t : normalize_caption(c)) words.insert(t);
    for (const auto& c : heldout_captions)
        for (auto& t : normalize_caption(c)) words.insert(t);
    std::string dict, zipf;
    for (const auto& w : words) {
        if (kUnknownWords.count(w)) continue;
        dict += w + "\n";
        const bool digits = w.find_first_of("0123456789") != std::string::npos;
        if (digits) continue;
        // Deterministic score in [3.5, 6) for ordinary words.
        const double score = kRareWords.count(w) ? 2.1 : 3.5 + static_cast<double>(fnv1a64(w) % 250) / 100.0;
        std::ostringstream line;
        line << w << '\t' << score << '\n';
        zipf += line.str();
    }
    write_text_file(dir / "dictionary.txt", dict);
    write_text_file(dir / "zipf.tsv", zipf);

    OrderedJson cfg;
    cfg["paths"] = {{"corpus", "corpus.csv"},
                    {"heldout_corpus", "heldout.csv"},
                    {"frame_embeddings", "frames.cvem"},
                    {"frames_manifest", "frames.csv"},
                    {"dictionary", "dictionary.txt"},
                    {"zipf", "zipf.tsv"},
                    {"output_dir", "out"}};
    cfg["text_encoder"] = "toy";
    cfg["toy_dim"] = o.dim;
    cfg["filter"] = {{"visual_sim_min", 0.8}};
    cfg["mtg"] = {{"mode", "llm"}, {"url", "http://127.0.0.1:8080"}};
    cfg["eval_set"] = {{"val_size", 20}, {"annotate_size", 20}};
    cfg["seed"] = o.seed;
    write_text_file(dir / "config.json", cfg.dump(2) + "\n");
}

}  // namespace covr
