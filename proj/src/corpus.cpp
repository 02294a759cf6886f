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

#include "covr/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_set>

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "covr/error.hpp"
#include "covr/io.hpp"

namespace covr {

Tokens normalize_caption(std::string_view raw) {
    icu::UnicodeString text = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
    text.toLower(icu::Locale::getRoot());

    Tokens tokens;
    const int32_t n = text.length();
    int32_t i = 0;
    while (i < n) {
        while (i < n && u_isUWhiteSpace(text.char32At(i))) i = text.moveIndex32(i, 1);
        if (i >= n) break;
        int32_t end = i;
        while (end < n && !u_isUWhiteSpace(text.char32At(end))) end = text.moveIndex32(end, 1);

        int32_t lo = i;
        int32_t hi = end;
        while (lo < hi && u_ispunct(text.char32At(lo))) lo = text.moveIndex32(lo, 1);
        while (hi > lo) {
            const int32_t prev = text.moveIndex32(hi, -1);
            if (!u_ispunct(text.char32At(prev))) break;
            hi = prev;
        }
        if (lo < hi) {
            std::string token;
            text.tempSubStringBetween(lo, hi).toUTF8String(token);
            tokens.push_back(std::move(token));
        }
        i = end;
    }
    return tokens;
}

std::string join_tokens(const Tokens& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

Corpus::Corpus(std::vector<CaptionRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto [it, inserted] = by_id_.emplace(records_[i].video_id, i);
        if (!inserted) fail(ErrorKind::validation, "duplicate video_id '" + records_[i].video_id + "'");
    }
}

const CaptionRecord* Corpus::find(std::string_view video_id) const {
    auto it = by_id_.find(std::string(video_id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::vector<Tokens> Corpus::distinct_captions() const {
    std::vector<std::pair<std::string, const Tokens*>> keyed;
    std::unordered_set<std::string> seen;
    for (const auto& r : records_) {
        if (r.tokens.empty()) continue;
        auto key = r.key();
        if (seen.insert(key).second) keyed.emplace_back(std::move(key), &r.tokens);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Tokens> out;
    out.reserve(keyed.size());
    for (const auto& [key, tokens] : keyed) out.push_back(*tokens);
    return out;
}

std::unordered_map<std::string, std::vector<std::string>> Corpus::videos_by_caption() const {
    std::unordered_map<std::string, std::vector<std::string>> out;
    for (const auto& r : records_) out[r.key()].push_back(r.video_id);
    return out;
}

CorpusFormat corpus_format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return CorpusFormat::csv;
    if (ext == ".jsonl" || ext == ".ndjson") return CorpusFormat::jsonl;
    fail(ErrorKind::config, "cannot infer corpus format from '" + path.string() + "' (expected .csv or .jsonl)");
}

namespace {

// One RFC 4180 record per line; quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(const std::string& line, const std::string& source, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            if (!field.empty()) throw ParseError(source, lineno, "stray quote inside unquoted field");
            quoted = was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else {
            if (was_quoted) throw ParseError(source, lineno, "characters after closing quote");
            field += c;
        }
    }
    if (quoted) throw ParseError(source, lineno, "unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::optional<double> parse_nonneg(const std::string& s, const std::string& field, const std::string& source,
                                   std::size_t lineno) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(source, lineno, field + " is not a number: '" + s + "'");
    if (!(v >= 0.0)) throw ParseError(source, lineno, field + " must be nonnegative");
    return v;
}

std::string format_double(double v) {
    // Shortest representation that round-trips.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

CaptionRecord make_record(std::string id, std::string caption) {
    CaptionRecord r;
    r.video_id = std::move(id);
    r.caption_raw = std::move(caption);
    r.tokens = normalize_caption(r.caption_raw);
    return r;
}

std::vector<CaptionRecord> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::missing_artifact, "cannot open " + path.string());
    const std::string source = path.string();
    std::string line;
    std::size_t lineno = 0;
    std::vector<CaptionRecord> out;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen) {
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            auto header = split_csv_line(line, source, lineno);
            if (header.size() < 2 || header[0] != "video_id" || header[1] != "caption")
                throw ParseError(source, lineno, "header must start with video_id,caption");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        // Quoted fields may span lines.
        const std::size_t first_line = lineno;
        std::string next;
        while (std::count(line.begin(), line.end(), '"') % 2 == 1 && std::getline(in, next)) {
            ++lineno;
            if (!next.empty() && next.back() == '\r') next.pop_back();
            line += '\n';
            line += next;
        }
        auto f = split_csv_line(line, source, first_line);
        if (f.size() < 2 || f.size() > 5) throw ParseError(source, lineno, "expected 2 to 5 columns, got " + std::to_string(f.size()));
        f.resize(5);
        if (f[0].empty()) throw ParseError(source, lineno, "empty video_id");
        auto r = make_record(std::move(f[0]), std::move(f[1]));
        r.duration_s = parse_nonneg(f[2], "duration_s", source, lineno);
        r.flow_magnitude = parse_nonneg(f[3], "flow_magnitude", source, lineno);
        std::size_t start = 0;
        while (!f[4].empty() && start <= f[4].size()) {
            auto end = f[4].find(';', start);
            if (end == std::string::npos) end = f[4].size();
            if (end > start) r.categories.push_back(f[4].substr(start, end - start));
            start = end + 1;
        }
        out.push_back(std::move(r));
    }
    if (!header_seen) throw ParseError(source, 1, "missing header");
    return out;
}

std::vector<CaptionRecord> read_jsonl(const std::filesystem::path& path) {
    std::vector<CaptionRecord> out;
    const std::string source = path.string();
    for_each_jsonl(path, [&](const Json& j, std::size_t lineno) {
        if (!j.contains("video_id") || !j["video_id"].is_string()) throw ParseError(source, lineno, "missing string field video_id");
        if (!j.contains("caption") || !j["caption"].is_string()) throw ParseError(source, lineno, "missing string field caption");
        auto r = make_record(j["video_id"].get<std::string>(), j["caption"].get<std::string>());
        if (r.video_id.empty()) throw ParseError(source, lineno, "empty video_id");
        for (const char* field : {"duration_s", "flow_magnitude"}) {
            if (!j.contains(field) || j[field].is_null()) continue;
            if (!j[field].is_number()) throw ParseError(source, lineno, std::string(field) + " must be a number");
            const double v = j[field].get<double>();
            if (!(v >= 0.0)) throw ParseError(source, lineno, std::string(field) + " must be nonnegative");
            (std::string_view(field) == "duration_s" ? r.duration_s : r.flow_magnitude) = v;
        }
        if (j.contains("categories") && !j["categories"].is_null()) {
            if (!j["categories"].is_array()) throw ParseError(source, lineno, "categories must be an array");
            for (const auto& c : j["categories"]) {
                if (!c.is_string()) throw ParseError(source, lineno, "categories must hold strings");
                r.categories.push_back(c.get<std::string>());
            }
        }
        out.push_back(std::move(r));
    });
    return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    return Corpus(format == CorpusFormat::csv ? read_csv(path) : read_jsonl(path));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
    std::string out;
    if (format == CorpusFormat::csv) {
        out = "video_id,caption,duration_s,flow_magnitude,categories\n";
        for (const auto& r : corpus.records()) {
            std::string cats;
            for (std::size_t i = 0; i < r.categories.size(); ++i) cats += (i ? ";" : "") + r.categories[i];
            out += csv_escape(r.video_id) + ',' + csv_escape(r.caption_raw) + ',' +
                   (r.duration_s ? format_double(*r.duration_s) : "") + ',' +
                   (r.flow_magnitude ? format_double(*r.flow_magnitude) : "") + ',' + csv_escape(cats) + '\n';
        }
    } else {
        JsonlWriter w;
        for (const auto& r : corpus.records()) {
            OrderedJson j{{"video_id", r.video_id}, {"caption", r.caption_raw}};
            if (r.duration_s) j["duration_s"] = *r.duration_s;
            if (r.flow_magnitude) j["flow_magnitude"] = *r.flow_magnitude;
            if (!r.categories.empty()) j["categories"] = r.categories;
            w.add(j);
        }
        out = w.str();
    }
    write_text_file(path, out);
}

Lexicon::Lexicon(std::unordered_set<std::string> dictionary, std::unordered_map<std::string, double> zipf)
    : dictionary_(std::move(dictionary)), zipf_(std::move(zipf)) {}

bool Lexicon::in_dictionary(std::string_view word) const { return dictionary_.count(std::string(word)) != 0; }

std::optional<double> Lexicon::zipf(std::string_view word) const {
    auto it = zipf_.find(std::string(word));
    if (it == zipf_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string to_lower_utf8(const std::string& s) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(s);
    u.toLower(icu::Locale::getRoot());
    std::string out;
    u.toUTF8String(out);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Lexicon load_lexicon(const std::filesystem::path& dict_path, const std::filesystem::path& zipf_path) {
    std::unordered_set<std::string> dict;
    {
        std::ifstream in(dict_path, std::ios::binary);
        if (!in) fail(ErrorKind::missing_artifact, "cannot open " + dict_path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto word = trim(line);
            if (word.empty()) continue;
            if (word.find_first_of(" \t") != std::string::npos)
                throw ParseError(dict_path.string(), lineno, "expected one word per line");
            dict.insert(to_lower_utf8(word));
        }
    }
    std::unordered_map<std::string, double> zipf;
    {
        std::ifstream in(zipf_path, std::ios::binary);
        if (!in) fail(ErrorKind::missing_artifact, "cannot open " + zipf_path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw ParseError(zipf_path.string(), lineno, "expected word<TAB>score");
            const auto word = trim(line.substr(0, tab));
            const auto score_str = trim(line.substr(tab + 1));
            double score = 0.0;
            auto [ptr, ec] = std::from_chars(score_str.data(), score_str.data() + score_str.size(), score);
            if (word.empty() || score_str.empty() || ec != std::errc() || ptr != score_str.data() + score_str.size())
                throw ParseError(zipf_path.string(), lineno, "expected word<TAB>score");
            zipf[to_lower_utf8(word)] = score;
        }
    }
    return Lexicon(std::move(dict), std::move(zipf));
}

}  // namespace covr
