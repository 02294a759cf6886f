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

#include "covr/pairminer.hpp"

#include <algorithm>
#include <iostream>
#include <thread>
#include <unordered_set>

#include "covr/error.hpp"
#include "covr/io.hpp"

namespace covr {

const char* to_string(EditKind kind) {
    switch (kind) {
        case EditKind::substitute: return "substitute";
        case EditKind::insert: return "insert";
        case EditKind::del: return "delete";
    }
    return "?";
}

EditKind edit_kind_from_string(std::string_view s) {
    if (s == "substitute") return EditKind::substitute;
    if (s == "insert") return EditKind::insert;
    if (s == "delete") return EditKind::del;
    fail(ErrorKind::parse, "unknown edit kind '" + std::string(s) + "'");
}

CaptionPair CaptionPair::reversed() const {
    CaptionPair r;
    r.caption_a = caption_b;
    r.caption_b = caption_a;
    r.diff_a = diff_b;
    r.diff_b = diff_a;
    r.position = position;
    r.edit_kind = edit_kind == EditKind::insert ? EditKind::del
                  : edit_kind == EditKind::del  ? EditKind::insert
                                                : EditKind::substitute;
    return r;
}

std::optional<CaptionPair> classify_single_edit(const Tokens& a, const Tokens& b) {
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    if (na > nb + 1 || nb > na + 1) return std::nullopt;
    std::size_t prefix = 0;
    while (prefix < na && prefix < nb && a[prefix] == b[prefix]) ++prefix;
    if (prefix == na && prefix == nb) return std::nullopt;

    CaptionPair p;
    p.caption_a = join_tokens(a);
    p.caption_b = join_tokens(b);
    p.position = prefix;
    if (na == nb) {
        // Tail after the mismatch must agree.
        if (!std::equal(a.begin() + prefix + 1, a.end(), b.begin() + prefix + 1)) return std::nullopt;
        p.edit_kind = EditKind::substitute;
        p.diff_a = a[prefix];
        p.diff_b = b[prefix];
    } else if (na + 1 == nb) {
        if (!std::equal(a.begin() + prefix, a.end(), b.begin() + prefix + 1)) return std::nullopt;
        p.edit_kind = EditKind::insert;
        p.diff_b = b[prefix];
    } else {
        if (!std::equal(b.begin() + prefix, b.end(), a.begin() + prefix + 1)) return std::nullopt;
        p.edit_kind = EditKind::del;
        p.diff_a = a[prefix];
    }
    return p;
}

namespace {

std::string join_without(const Tokens& tokens, std::size_t skip) {
    std::string out;
    bool first = true;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i == skip) continue;
        if (!first) out += ' ';
        out += tokens[i];
        first = false;
    }
    return out;
}

// Full key plus one (key, position) per deletion. Runs of equal tokens yield
// repeated keys at different positions; all are kept so that substitutions
// inside a run still meet their partner at the same position.
std::vector<std::pair<std::string, std::int32_t>> keyed_variants(const Tokens& caption) {
    std::vector<std::pair<std::string, std::int32_t>> out;
    out.emplace_back(join_tokens(caption), DeletionIndex::kFullKey);
    for (std::size_t p = 0; p < caption.size(); ++p)
        out.emplace_back(join_without(caption, p), static_cast<std::int32_t>(p));
    return out;
}

using BucketMap = std::unordered_map<std::string, std::vector<DeletionIndex::Entry>>;

unsigned clamp_workers(unsigned workers, std::size_t items) {
    if (workers == 0) workers = 1;
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(workers, items)));
}

}  // namespace

std::vector<std::string> DeletionIndex::keys_for(const Tokens& caption) {
    std::vector<std::string> keys;
    for (auto& [key, pos] : keyed_variants(caption))
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(std::move(key));
    return keys;
}

DeletionIndex build_index(std::span<const Tokens> captions, unsigned workers) {
    DeletionIndex index;
    std::unordered_set<std::string> seen;
    for (const auto& c : captions) {
        if (c.size() > kMaxMiningTokens) {
            ++index.skipped_;
            continue;
        }
        auto key = join_tokens(c);
        if (!seen.insert(key).second) fail(ErrorKind::validation, "duplicate caption in index input: '" + key + "'");
        index.captions_.push_back(c);
    }
    if (index.skipped_ > 0)
        std::cerr << "warning: skipped " << index.skipped_ << " captions longer than " << kMaxMiningTokens << " tokens\n";

    const auto& caps = index.captions_;
    const unsigned n_workers = clamp_workers(workers, caps.size());
    std::vector<BucketMap> shards(n_workers);
    auto build_shard = [&](unsigned w) {
        const std::size_t lo = caps.size() * w / n_workers;
        const std::size_t hi = caps.size() * (w + 1) / n_workers;
        auto& local = shards[w];
        for (std::size_t id = lo; id < hi; ++id) {
            for (auto& [key, pos] : keyed_variants(caps[id]))
                local[std::move(key)].push_back({static_cast<std::uint32_t>(id), pos});
        }
    };
    if (n_workers == 1) {
        build_shard(0);
    } else {
        std::vector<std::thread> threads;
        for (unsigned w = 0; w < n_workers; ++w) threads.emplace_back(build_shard, w);
        for (auto& t : threads) t.join();
    }
    // Shards cover ascending id ranges, so merging in shard order keeps entries sorted by id.
    index.buckets_ = std::move(shards[0]);
    for (unsigned w = 1; w < n_workers; ++w) {
        for (auto& [key, entries] : shards[w]) {
            auto& dst = index.buckets_[key];
            dst.insert(dst.end(), entries.begin(), entries.end());
        }
    }
    return index;
}

std::vector<CaptionPair> mine_pairs(const DeletionIndex& index, unsigned workers) {
    const auto& caps = index.captions();
    std::vector<std::string> keys;
    keys.reserve(caps.size());
    for (const auto& c : caps) keys.push_back(join_tokens(c));

    std::vector<const std::vector<DeletionIndex::Entry>*> buckets;
    buckets.reserve(index.buckets().size());
    for (const auto& [key, entries] : index.buckets())
        if (entries.size() > 1) buckets.push_back(&entries);

    auto emit = [&](std::uint32_t x, std::uint32_t y, std::vector<CaptionPair>& out) {
        if (keys[y] < keys[x]) std::swap(x, y);
        auto p = classify_single_edit(caps[x], caps[y]);
        if (!p) fail(ErrorKind::internal, "index produced a non-neighbour candidate: '" + keys[x] + "' / '" + keys[y] + "'");
        out.push_back(std::move(*p));
    };

    auto mine_range = [&](std::size_t lo, std::size_t hi, std::vector<CaptionPair>& out) {
        std::vector<DeletionIndex::Entry> dels;
        for (std::size_t b = lo; b < hi; ++b) {
            const auto& entries = *buckets[b];
            std::optional<std::uint32_t> full;
            dels.clear();
            for (const auto& e : entries) {
                if (e.position == DeletionIndex::kFullKey)
                    full = e.caption;
                else
                    dels.push_back(e);
            }
            if (full)
                for (const auto& d : dels) emit(*full, d.caption, out);
            // Same-position deletions agree everywhere except that position.
            std::sort(dels.begin(), dels.end(), [](const auto& l, const auto& r) {
                return std::tie(l.position, l.caption) < std::tie(r.position, r.caption);
            });
            for (std::size_t i = 0; i < dels.size();) {
                std::size_t j = i;
                while (j < dels.size() && dels[j].position == dels[i].position) ++j;
                for (std::size_t x = i; x < j; ++x)
                    for (std::size_t y = x + 1; y < j; ++y) emit(dels[x].caption, dels[y].caption, out);
                i = j;
            }
        }
    };

    std::vector<CaptionPair> pairs;
    const unsigned n_workers = clamp_workers(workers, buckets.size());
    if (n_workers == 1) {
        mine_range(0, buckets.size(), pairs);
    } else {
        std::vector<std::vector<CaptionPair>> partial(n_workers);
        std::vector<std::thread> threads;
        for (unsigned w = 0; w < n_workers; ++w) {
            threads.emplace_back([&, w] {
                mine_range(buckets.size() * w / n_workers, buckets.size() * (w + 1) / n_workers, partial[w]);
            });
        }
        for (auto& t : threads) t.join();
        std::size_t total = 0;
        for (const auto& p : partial) total += p.size();
        pairs.reserve(total);
        for (auto& p : partial) std::move(p.begin(), p.end(), std::back_inserter(pairs));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

OrderedJson pair_to_json(const CaptionPair& p) {
    OrderedJson j{{"caption_a", p.caption_a}, {"caption_b", p.caption_b}, {"edit_kind", to_string(p.edit_kind)}};
    j["diff_a"] = p.diff_a ? OrderedJson(*p.diff_a) : OrderedJson(nullptr);
    j["diff_b"] = p.diff_b ? OrderedJson(*p.diff_b) : OrderedJson(nullptr);
    j["position"] = p.position;
    return j;
}

CaptionPair pair_from_json(const Json& j) {
    CaptionPair p;
    p.caption_a = j.at("caption_a").get<std::string>();
    p.caption_b = j.at("caption_b").get<std::string>();
    p.edit_kind = edit_kind_from_string(j.at("edit_kind").get<std::string>());
    if (j.contains("diff_a") && !j["diff_a"].is_null()) p.diff_a = j["diff_a"].get<std::string>();
    if (j.contains("diff_b") && !j["diff_b"].is_null()) p.diff_b = j["diff_b"].get<std::string>();
    p.position = j.at("position").get<std::size_t>();
    return p;
}

void write_pairs_jsonl(const std::vector<CaptionPair>& pairs, const std::filesystem::path& path) {
    JsonlWriter w;
    for (const auto& p : pairs) w.add(pair_to_json(p));
    w.write(path);
}

std::vector<CaptionPair> read_pairs_jsonl(const std::filesystem::path& path) {
    std::vector<CaptionPair> out;
    for_each_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(pair_from_json(j)); });
    return out;
}

}  // namespace covr
