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

// Independent reference implementations used as test oracles. None of these
// call into the library under test.

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

// Token-level Levenshtein distance by full dynamic programming.
inline std::size_t edit_distance(const Tokens& a, const Tokens& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[a.size()][b.size()];
}

inline std::string join(const Tokens& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) s += ' ';
        s += t[i];
    }
    return s;
}

// All unordered pairs at distance exactly one, as (smaller key, larger key).
inline std::set<std::pair<std::string, std::string>> brute_force_pairs(const std::vector<Tokens>& captions) {
    std::set<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < captions.size(); ++i)
        for (std::size_t j = i + 1; j < captions.size(); ++j) {
            const auto len_a = captions[i].size(), len_b = captions[j].size();
            if ((len_a > len_b ? len_a - len_b : len_b - len_a) > 1) continue;
            if (edit_distance(captions[i], captions[j]) != 1) continue;
            auto a = join(captions[i]), b = join(captions[j]);
            if (b < a) std::swap(a, b);
            out.emplace(a, b);
        }
    return out;
}

// Random distinct captions over a small vocabulary so that near pairs are common.
inline std::vector<Tokens> random_captions(std::size_t n, std::size_t min_len, std::size_t max_len, std::size_t vocab,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::set<Tokens> seen;
    std::vector<Tokens> out;
    std::size_t guard = 0;
    while (out.size() < n && guard++ < n * 100) {
        const std::size_t len = min_len + rng() % (max_len - min_len + 1);
        Tokens t;
        for (std::size_t k = 0; k < len; ++k) t.push_back("w" + std::to_string(rng() % vocab));
        // Mutate a previous caption half of the time to create near neighbours.
        if (!out.empty() && rng() % 2 == 0) {
            t = out[rng() % out.size()];
            const auto op = rng() % 3;
            const auto word = "w" + std::to_string(rng() % vocab);
            if (op == 0 && !t.empty()) t[rng() % t.size()] = word;
            if (op == 1 && t.size() < max_len) t.insert(t.begin() + static_cast<long>(rng() % (t.size() + 1)), word);
            if (op == 2 && t.size() > min_len) t.erase(t.begin() + static_cast<long>(rng() % t.size()));
        }
        if (t.empty() || !seen.insert(t).second) continue;
        out.push_back(t);
    }
    return out;
}

// HN-NCE evaluated straight from the formula with plain exponentials.
inline double hn_nce_direct(const std::vector<std::vector<double>>& s, double tau, double alpha, double beta) {
    const std::size_t n = s.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double wsum_row = 0.0, wsum_col = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            wsum_row += std::exp(beta * s[i][k] / tau);
            wsum_col += std::exp(beta * s[k][i] / tau);
        }
        double denom_row = alpha * std::exp(s[i][i] / tau);
        double denom_col = alpha * std::exp(s[i][i] / tau);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w_row = (n - 1.0) * std::exp(beta * s[i][j] / tau) / wsum_row;
            const double w_col = (n - 1.0) * std::exp(beta * s[j][i] / tau) / wsum_col;
            denom_row += std::exp(s[i][j] / tau) * w_row;
            denom_col += std::exp(s[j][i] / tau) * w_col;
        }
        loss -= std::log(std::exp(s[i][i] / tau) / denom_row);
        loss -= std::log(std::exp(s[i][i] / tau) / denom_col);
    }
    return loss;
}

// Symmetric InfoNCE (cross-entropy over rows plus over columns).
inline double info_nce_symmetric(const std::vector<std::vector<double>>& s, double tau) {
    const std::size_t n = s.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        long double row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += std::exp(static_cast<long double>(s[i][j] / tau));
            col += std::exp(static_cast<long double>(s[j][i] / tau));
        }
        loss += static_cast<double>(-(s[i][i] / tau) + std::log(row));
        loss += static_cast<double>(-(s[i][i] / tau) + std::log(col));
    }
    return loss;
}

// Rank order by full sort: descending score, ascending id.
inline std::vector<std::string> sort_ranking(std::vector<std::pair<std::string, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (auto& [id, s] : scored) out.push_back(id);
    return out;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0;
    for (auto& x : v) {
        x = n(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

// Normalized weighted sum in long double.
inline std::vector<double> weighted_direction(const std::vector<std::vector<double>>& vs, const std::vector<double>& w) {
    std::vector<long double> acc(vs.at(0).size(), 0.0L);
    for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += static_cast<long double>(w[i]) * vs[i][k];
    long double norm = 0;
    for (auto x : acc) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> out;
    for (auto x : acc) out.push_back(static_cast<double>(x / norm));
    return out;
}

// Upper-tail probability of a chi-square variable.
inline double chi_square_sf(double x, double dof) {
    if (x <= 0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

}  // namespace oracle
