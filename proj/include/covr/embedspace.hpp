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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace covr {

using Vec = std::vector<double>;

// Plain cosine in [-1, 1]. Used by the contrastive loss and ranking.
struct RawCosine {
    double value;
    auto operator<=>(const RawCosine&) const = default;
};

// (1 + cosine) / 2 in [0, 1]. Used by every filter threshold.
struct NormalizedSimilarity {
    double value;
    auto operator<=>(const NormalizedSimilarity&) const = default;
};

inline NormalizedSimilarity to_normalized(RawCosine c) { return {(1.0 + c.value) / 2.0}; }
inline RawCosine to_raw(NormalizedSimilarity s) { return {2.0 * s.value - 1.0}; }

double dot(std::span<const double> u, std::span<const double> v);
double dot(std::span<const float> u, std::span<const float> v);
double l2_norm(std::span<const double> v);
// Throws validation error on a zero vector.
Vec normalized(std::span<const double> v);

RawCosine cosine(std::span<const double> u, std::span<const double> v);
RawCosine cosine(std::span<const float> u, std::span<const float> v);
NormalizedSimilarity normalized_similarity(std::span<const double> u, std::span<const double> v);
NormalizedSimilarity normalized_similarity(std::span<const float> u, std::span<const float> v);

// Hashed bag-of-tokens embedding over normalized caption tokens. Each token
// owns a pseudo-random Gaussian direction; the vector is their unit-normalized
// sum. Texts without tokens map to the first basis vector.
Vec toy_embed(std::string_view text, std::size_t dim);

// id -> unit vector table. Vectors are normalized when added.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    // Normalizes and appends; duplicate id or zero vector is a validation error.
    void add(std::string id, std::span<const float> v);
    void add(std::string id, std::span<const double> v);

    bool contains(std::string_view id) const { return index_.find(std::string(id)) != index_.end(); }
    std::optional<std::span<const float>> find(std::string_view id) const;
    // Throws missing-artifact style validation error naming the id.
    std::span<const float> at(std::string_view id) const;
    Vec at_double(std::string_view id) const;
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    bool operator==(const EmbeddingStore& other) const;

private:
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint32_t kCvemVersion = 1;

// CVEM: "CVEM", u32 version, u32 dim, u64 count, then per record u16 id
// length, id bytes, dim f32 components. All little-endian.
EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
std::string encode_cvem(const EmbeddingStore& store);
EmbeddingStore decode_cvem(std::string_view bytes, const std::string& source = "<memory>");

std::string frame_id(std::string_view video_id, std::size_t frame_index);

}  // namespace covr
