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
#include <span>
#include <string>
#include <vector>

#include "covr/embedspace.hpp"
#include "covr/rng.hpp"

namespace covr {

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool operator==(const Matrix&) const = default;
};

// f(v, t) = normalize(W2 relu(W1 [v; t] + b1) + b2)
// W1 is hidden x 2d, W2 is d x hidden.
struct FusionHead {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    std::size_t dim() const { return w2.rows; }
    std::size_t hidden() const { return w1.rows; }
    std::size_t parameter_count() const;
    void validate() const;

    // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; hidden = 0 selects 2 * dim.
    static FusionHead random(std::size_t dim, std::size_t hidden, std::uint64_t seed);

    // Flat parameter view in the order w1, b1, w2, b2.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);

    bool operator==(const FusionHead&) const = default;
};

Vec fusion_forward(const FusionHead& head, std::span<const double> query_visual, std::span<const double> text);

struct HnNceConfig {
    double tau = 0.07;
    double alpha = 1.0;
    double beta = 0.5;
    std::size_t batch_size = 32;
    double learning_rate = 2.0;
    std::size_t epochs = 300;
    std::uint64_t seed = 0;
    std::size_t hidden = 0;  // 0 means 2 * dim

    void validate() const;
};

// Hard-negative weights for row i of a square similarity matrix:
// w_ij = (B - 1) exp(beta S_ij / tau) / sum_{k != i} exp(beta S_ik / tau), w_ii = 0.
Matrix hn_nce_row_weights(const Matrix& s, const HnNceConfig& cfg);
// Same over columns: entry (j, i) holds w'_ji for column i.
Matrix hn_nce_column_weights(const Matrix& s, const HnNceConfig& cfg);

// Summed two-sided HN-NCE loss over the batch, log-sum-exp stabilized.
double hn_nce_loss(const Matrix& s, const HnNceConfig& cfg);
// Loss and dL/dS.
double hn_nce_loss_and_grad(const Matrix& s, const HnNceConfig& cfg, Matrix& grad);

struct TrainingRow {
    std::string target_id;
    Vec query_visual;
    Vec text;
    Vec target;  // query-scored video embedding h(v)
};

struct TrainingBatch {
    std::vector<TrainingRow> rows;
    bool targets_distinct() const;
};

// Gradient of the mean batch loss with respect to the flattened head parameters.
struct LossGradient {
    double loss = 0.0;  // mean over the batch
    std::vector<double> grad;
};

LossGradient loss_gradient(const TrainingBatch& batch, const FusionHead& head, const HnNceConfig& cfg);
double batch_loss(const TrainingBatch& batch, const FusionHead& head, const HnNceConfig& cfg);

enum class BatchMode { by_target, by_triplet };
BatchMode batch_mode_from_string(std::string_view s);

// Indices into a triplet list, grouped into batches.
using IndexBatch = std::vector<std::size_t>;

// target_ids[i] is the target of triplet i. One epoch of batches.
std::vector<IndexBatch> sample_batches(std::span<const std::string> target_ids, std::size_t batch_size, Rng& rng,
                                       BatchMode mode);

struct TrainingResult {
    FusionHead head;
    std::vector<double> epoch_loss;
};

// Plain gradient descent over epochs of by_target batches.
TrainingResult train(const std::vector<TrainingRow>& rows, const HnNceConfig& cfg, BatchMode mode = BatchMode::by_target);

// JSON header line, newline, then f32 LE parameters in flatten() order.
void save_head(const FusionHead& head, const HnNceConfig& cfg, const std::filesystem::path& path);
FusionHead load_head(const std::filesystem::path& path);

std::string loss_curve_csv(const std::vector<double>& epoch_loss);

}  // namespace covr
