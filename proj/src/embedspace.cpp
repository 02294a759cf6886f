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

#include "covr/embedspace.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "covr/corpus.hpp"
#include "covr/error.hpp"
#include "covr/hash.hpp"
#include "covr/io.hpp"
#include "covr/rng.hpp"

namespace covr {

namespace {

void check_dims(std::size_t a, std::size_t b) {
    if (a != b) fail(ErrorKind::invalid_argument, "dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double dot(std::span<const double> u, std::span<const double> v) {
    check_dims(u.size(), v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double dot(std::span<const float> u, std::span<const float> v) {
    check_dims(u.size(), v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vec normalized(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::validation, "cannot normalize a zero or non-finite vector");
    Vec out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return out;
}

RawCosine cosine(std::span<const double> u, std::span<const double> v) { return {dot(u, v)}; }
RawCosine cosine(std::span<const float> u, std::span<const float> v) { return {dot(u, v)}; }

NormalizedSimilarity normalized_similarity(std::span<const double> u, std::span<const double> v) {
    return to_normalized(cosine(u, v));
}
NormalizedSimilarity normalized_similarity(std::span<const float> u, std::span<const float> v) {
    return to_normalized(cosine(u, v));
}

Vec toy_embed(std::string_view text, std::size_t dim) {
    if (dim < 2) fail(ErrorKind::invalid_argument, "toy_embed needs dim >= 2");
    Vec acc(dim, 0.0);
    const auto tokens = normalize_caption(text);
    if (tokens.empty()) {
        acc[0] = 1.0;
        return acc;
    }
    for (const auto& tok : tokens) {
        Rng rng(fnv1a64(tok));
        for (std::size_t i = 0; i < dim; ++i) acc[i] += standard_normal(rng);
    }
    return normalized(acc);
}

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) fail(ErrorKind::invalid_argument, "embedding dim must be positive");
}

void EmbeddingStore::add(std::string id, std::span<const double> v) {
    check_dims(v.size(), dim_);
    if (index_.count(id)) fail(ErrorKind::validation, "duplicate embedding id '" + id + "'");
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::validation, "embedding '" + id + "' has zero or non-finite norm");
    // Vectors already unit-norm at f32 precision are stored untouched so that
    // save/load round-trips bit-exactly.
    const bool unit = std::abs(n - 1.0) <= 1e-6;
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    for (double x : v) data_.push_back(static_cast<float>(unit ? x : x / n));
}

void EmbeddingStore::add(std::string id, std::span<const float> v) {
    Vec d(v.begin(), v.end());
    add(std::move(id), std::span<const double>(d));
}

std::optional<std::span<const float>> EmbeddingStore::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return row(it->second);
}

std::span<const float> EmbeddingStore::at(std::string_view id) const {
    auto r = find(id);
    if (!r) fail(ErrorKind::validation, "missing embedding for '" + std::string(id) + "'");
    return *r;
}

Vec EmbeddingStore::at_double(std::string_view id) const {
    auto r = at(id);
    return Vec(r.begin(), r.end());
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
    if (dim_ != other.dim_ || ids_ != other.ids_ || data_.size() != other.data_.size()) return false;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

namespace {

static_assert(std::endian::native == std::endian::little, "CVEM I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(ErrorKind::parse, source_ + ": truncated CVEM file at byte " + std::to_string(pos_));
    }
    std::string_view bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_cvem(const EmbeddingStore& store) {
    std::string out;
    out.reserve(20 + store.size() * (2 + 16 + 4 * store.dim()));
    out.append("CVEM", 4);
    put<std::uint32_t>(out, kCvemVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    put<std::uint64_t>(out, store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& id = store.ids()[i];
        if (id.size() > UINT16_MAX) fail(ErrorKind::validation, "embedding id too long: " + id.substr(0, 32) + "...");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out += id;
        for (float x : store.row(i)) put<float>(out, x);
    }
    return out;
}

EmbeddingStore decode_cvem(std::string_view bytes, const std::string& source) {
    Reader r(bytes, source);
    if (r.take(4) != "CVEM") fail(ErrorKind::parse, source + ": bad magic (not a CVEM file)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCvemVersion)
        fail(ErrorKind::parse, source + ": unsupported CVEM version " + std::to_string(version));
    const auto dim = r.get<std::uint32_t>();
    const auto count = r.get<std::uint64_t>();
    if (dim == 0) fail(ErrorKind::parse, source + ": dim must be positive");
    EmbeddingStore store(dim);
    std::vector<float> v(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>();
        std::string id(r.take(len));
        for (auto& x : v) x = r.get<float>();
        store.add(std::move(id), std::span<const float>(v));
    }
    if (!r.done()) fail(ErrorKind::parse, source + ": trailing bytes after " + std::to_string(count) + " records");
    return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    return decode_cvem(read_text_file(path), path.string());
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
    write_text_file(path, encode_cvem(store));
}

std::string frame_id(std::string_view video_id, std::size_t frame_index) {
    return std::string(video_id) + "#" + std::to_string(frame_index);
}

}  // namespace covr
