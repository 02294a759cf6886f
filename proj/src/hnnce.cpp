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

#include "covr/hnnce.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

#include "covr/error.hpp"
#include "covr/io.hpp"

namespace covr {

std::size_t FusionHead::parameter_count() const { return w1.data.size() + b1.size() + w2.data.size() + b2.size(); }

void FusionHead::validate() const {
    const std::size_t d = w2.rows;
    const std::size_t h = w1.rows;
    if (d == 0 || h == 0 || w1.cols != 2 * d || b1.size() != h || w2.cols != h || b2.size() != d)
        fail(ErrorKind::validation, "fusion head shapes are inconsistent");
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(w1.data.begin(), w1.data.end(), finite) || !std::all_of(b1.begin(), b1.end(), finite) ||
        !std::all_of(w2.data.begin(), w2.data.end(), finite) || !std::all_of(b2.begin(), b2.end(), finite))
        fail(ErrorKind::validation, "fusion head has non-finite parameters");
}

FusionHead FusionHead::random(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    if (dim == 0) fail(ErrorKind::invalid_argument, "fusion head dim must be positive");
    if (hidden == 0) hidden = 2 * dim;
    FusionHead head;
    head.w1 = Matrix(hidden, 2 * dim);
    head.b1.assign(hidden, 0.0);
    head.w2 = Matrix(dim, hidden);
    head.b2.assign(dim, 0.0);
    Rng rng(seed);
    auto fill = [&](std::vector<double>& v, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : v) x = (2.0 * uniform_unit(rng) - 1.0) * bound;
    };
    fill(head.w1.data, 2 * dim);
    fill(head.b1, 2 * dim);
    fill(head.w2.data, hidden);
    fill(head.b2, hidden);
    return head;
}

std::vector<double> FusionHead::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    out.insert(out.end(), w1.data.begin(), w1.data.end());
    out.insert(out.end(), b1.begin(), b1.end());
    out.insert(out.end(), w2.data.begin(), w2.data.end());
    out.insert(out.end(), b2.begin(), b2.end());
    return out;
}

void FusionHead::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) fail(ErrorKind::invalid_argument, "parameter vector has the wrong length");
    auto it = flat.begin();
    for (auto* v : {&w1.data, &b1, &w2.data, &b2}) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(v->size()), v->begin());
        it += static_cast<std::ptrdiff_t>(v->size());
    }
}

namespace {

struct ForwardCache {
    Vec x;       // [v; t]
    Vec pre1;    // W1 x + b1
    Vec hidden;  // relu(pre1)
    Vec u;       // W2 hidden + b2
    double norm = 0.0;
    Vec f;
};

ForwardCache forward(const FusionHead& head, std::span<const double> visual, std::span<const double> text) {
    const std::size_t d = head.dim();
    const std::size_t h = head.hidden();
    if (visual.size() != d || text.size() != d)
        fail(ErrorKind::invalid_argument, "fusion input dims " + std::to_string(visual.size()) + "/" +
                                              std::to_string(text.size()) + " do not match head dim " + std::to_string(d));
    ForwardCache c;
    c.x.reserve(2 * d);
    c.x.insert(c.x.end(), visual.begin(), visual.end());
    c.x.insert(c.x.end(), text.begin(), text.end());
    c.pre1.assign(h, 0.0);
    c.hidden.assign(h, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
        double s = head.b1[r];
        const double* row = &head.w1.data[r * 2 * d];
        for (std::size_t k = 0; k < 2 * d; ++k) s += row[k] * c.x[k];
        c.pre1[r] = s;
        c.hidden[r] = s > 0.0 ? s : 0.0;
    }
    c.u.assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        double s = head.b2[r];
        const double* row = &head.w2.data[r * h];
        for (std::size_t k = 0; k < h; ++k) s += row[k] * c.hidden[k];
        c.u[r] = s;
    }
    c.norm = l2_norm(c.u);
    if (!(c.norm > 1e-12) || !std::isfinite(c.norm)) fail(ErrorKind::validation, "fusion head produced a zero vector");
    c.f.resize(d);
    for (std::size_t r = 0; r < d; ++r) c.f[r] = c.u[r] / c.norm;
    return c;
}

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double log_add_exp(double a, double b) {
    const double m = std::max(a, b);
    if (!std::isfinite(m)) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// One side of the loss for anchor i over similarities x (row or column of S).
// Returns the loss term and writes d(term)/dx into grad (same length as x).
double side_loss(std::span<const double> x, std::size_t i, const HnNceConfig& cfg, std::span<double> grad) {
    const std::size_t n = x.size();
    const double a = x[i] / cfg.tau;
    std::fill(grad.begin(), grad.end(), 0.0);
    if (n == 1) {
        if (!(cfg.alpha > 0.0)) fail(ErrorKind::invalid_argument, "alpha = 0 with a single-row batch is undefined");
        return std::log(cfg.alpha);
    }
    std::vector<double> up;  // (1 + beta) z_j
    std::vector<double> wt;  // beta z_j
    up.reserve(n - 1);
    wt.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double z = x[j] / cfg.tau;
        up.push_back((1.0 + cfg.beta) * z);
        wt.push_back(cfg.beta * z);
    }
    const double lse_up = log_sum_exp(up);
    const double lse_wt = log_sum_exp(wt);
    // log sum_{j != i} w_ij e^{z_j}
    const double log_neg = std::log(static_cast<double>(n - 1)) + lse_up - lse_wt;
    const double log_denom = cfg.alpha > 0.0 ? log_add_exp(std::log(cfg.alpha) + a, log_neg) : log_neg;
    const double p_pos = cfg.alpha > 0.0 ? std::exp(std::log(cfg.alpha) + a - log_denom) : 0.0;
    const double p_neg = std::exp(log_neg - log_denom);

    grad[i] = (p_pos - 1.0) / cfg.tau;
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double s_up = std::exp(up[k] - lse_up);
        const double s_wt = std::exp(wt[k] - lse_wt);
        grad[j] = p_neg * ((1.0 + cfg.beta) * s_up - cfg.beta * s_wt) / cfg.tau;
        ++k;
    }
    return -a + log_denom;
}

void check_square(const Matrix& s) {
    if (s.rows != s.cols || s.rows == 0) fail(ErrorKind::invalid_argument, "similarity matrix must be square and nonempty");
    for (double v : s.data)
        if (std::isnan(v)) fail(ErrorKind::invalid_argument, "similarity matrix contains NaN");
}

}  // namespace

Vec fusion_forward(const FusionHead& head, std::span<const double> query_visual, std::span<const double> text) {
    return forward(head, query_visual, text).f;
}

void HnNceConfig::validate() const {
    if (!(tau > 0.0)) fail(ErrorKind::config, "tau must be > 0");
    if (!(alpha >= 0.0)) fail(ErrorKind::config, "alpha must be >= 0");
    if (!(beta >= 0.0)) fail(ErrorKind::config, "beta must be >= 0");
    if (batch_size < 2) fail(ErrorKind::config, "batch_size must be >= 2");
    if (!(learning_rate >= 0.0)) fail(ErrorKind::config, "learning_rate must be >= 0");
}

Matrix hn_nce_row_weights(const Matrix& s, const HnNceConfig& cfg) {
    check_square(s);
    const std::size_t n = s.rows;
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) logits.push_back(cfg.beta * s(i, j) / cfg.tau);
        const double lse = log_sum_exp(logits);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) w(i, j) = static_cast<double>(n - 1) * std::exp(cfg.beta * s(i, j) / cfg.tau - lse);
    }
    return w;
}

Matrix hn_nce_column_weights(const Matrix& s, const HnNceConfig& cfg) {
    check_square(s);
    Matrix t(s.cols, s.rows);
    for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c) t(c, r) = s(r, c);
    const Matrix wt = hn_nce_row_weights(t, cfg);
    Matrix w(s.rows, s.cols);
    for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c) w(r, c) = wt(c, r);
    return w;
}

double hn_nce_loss_and_grad(const Matrix& s, const HnNceConfig& cfg, Matrix& grad) {
    check_square(s);
    const std::size_t n = s.rows;
    grad = Matrix(n, n);
    std::vector<double> x(n);
    std::vector<double> g(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) x[j] = s(i, j);
        loss += side_loss(x, i, cfg, g);
        for (std::size_t j = 0; j < n; ++j) grad(i, j) += g[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) x[j] = s(j, i);
        loss += side_loss(x, i, cfg, g);
        for (std::size_t j = 0; j < n; ++j) grad(j, i) += g[j];
    }
    return loss;
}

double hn_nce_loss(const Matrix& s, const HnNceConfig& cfg) {
    Matrix unused;
    return hn_nce_loss_and_grad(s, cfg, unused);
}

bool TrainingBatch::targets_distinct() const {
    std::unordered_set<std::string> ids;
    for (const auto& r : rows)
        if (!ids.insert(r.target_id).second) return false;
    return true;
}

namespace {

Matrix similarity_matrix(const std::vector<ForwardCache>& fwd, const TrainingBatch& batch) {
    const std::size_t n = batch.rows.size();
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s(i, j) = dot(fwd[i].f, batch.rows[j].target);
    return s;
}

void check_batch(const TrainingBatch& batch) {
    if (batch.rows.empty()) fail(ErrorKind::invalid_argument, "empty training batch");
    if (!batch.targets_distinct()) fail(ErrorKind::invalid_argument, "training batch repeats a target video");
}

}  // namespace

double batch_loss(const TrainingBatch& batch, const FusionHead& head, const HnNceConfig& cfg) {
    check_batch(batch);
    std::vector<ForwardCache> fwd;
    for (const auto& r : batch.rows) fwd.push_back(forward(head, r.query_visual, r.text));
    return hn_nce_loss(similarity_matrix(fwd, batch), cfg) / static_cast<double>(batch.rows.size());
}

LossGradient loss_gradient(const TrainingBatch& batch, const FusionHead& head, const HnNceConfig& cfg) {
    check_batch(batch);
    const std::size_t n = batch.rows.size();
    const std::size_t d = head.dim();
    const std::size_t h = head.hidden();
    std::vector<ForwardCache> fwd;
    fwd.reserve(n);
    for (const auto& r : batch.rows) {
        if (r.target.size() != d) fail(ErrorKind::invalid_argument, "target embedding dim does not match head");
        fwd.push_back(forward(head, r.query_visual, r.text));
    }
    Matrix g_s;
    LossGradient out;
    out.loss = hn_nce_loss_and_grad(similarity_matrix(fwd, batch), cfg, g_s) / static_cast<double>(n);
    for (auto& v : g_s.data) v /= static_cast<double>(n);

    out.grad.assign(head.parameter_count(), 0.0);
    double* g_w1 = out.grad.data();
    double* g_b1 = g_w1 + head.w1.data.size();
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + head.w2.data.size();

    Vec g_f(d);
    Vec g_u(d);
    Vec g_hidden(h);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = fwd[i];
        std::fill(g_f.begin(), g_f.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double gij = g_s(i, j);
            const auto& hj = batch.rows[j].target;
            for (std::size_t k = 0; k < d; ++k) g_f[k] += gij * hj[k];
        }
        // Through f = u / |u|.
        const double proj = dot(c.f, g_f);
        for (std::size_t k = 0; k < d; ++k) g_u[k] = (g_f[k] - c.f[k] * proj) / c.norm;

        std::fill(g_hidden.begin(), g_hidden.end(), 0.0);
        for (std::size_t r = 0; r < d; ++r) {
            g_b2[r] += g_u[r];
            const double* w_row = &head.w2.data[r * h];
            double* gw_row = g_w2 + r * h;
            for (std::size_t k = 0; k < h; ++k) {
                gw_row[k] += g_u[r] * c.hidden[k];
                g_hidden[k] += g_u[r] * w_row[k];
            }
        }
        for (std::size_t r = 0; r < h; ++r) {
            if (!(c.pre1[r] > 0.0)) continue;
            const double gp = g_hidden[r];
            g_b1[r] += gp;
            double* gw_row = g_w1 + r * 2 * d;
            for (std::size_t k = 0; k < 2 * d; ++k) gw_row[k] += gp * c.x[k];
        }
    }
    return out;
}

BatchMode batch_mode_from_string(std::string_view s) {
    if (s == "by_target") return BatchMode::by_target;
    if (s == "by_triplet") return BatchMode::by_triplet;
    fail(ErrorKind::config, "unknown batch mode '" + std::string(s) + "' (expected by_target|by_triplet)");
}

std::vector<IndexBatch> sample_batches(std::span<const std::string> target_ids, std::size_t batch_size, Rng& rng,
                                       BatchMode mode) {
    if (batch_size < 2) fail(ErrorKind::invalid_argument, "batch_size must be >= 2");
    if (target_ids.empty()) fail(ErrorKind::invalid_argument, "no triplets to sample from");
    std::vector<IndexBatch> batches;
    if (mode == BatchMode::by_triplet) {
        std::vector<std::size_t> order(target_ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(std::span<std::size_t>(order), rng);
        for (std::size_t i = 0; i < order.size(); i += batch_size)
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
        return batches;
    }
    std::map<std::string_view, std::vector<std::size_t>> by_target;
    for (std::size_t i = 0; i < target_ids.size(); ++i) by_target[target_ids[i]].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    groups.reserve(by_target.size());
    for (const auto& [id, idx] : by_target) groups.push_back(&idx);
    shuffle(std::span<const std::vector<std::size_t>*>(groups), rng);
    for (std::size_t i = 0; i < groups.size(); i += batch_size) {
        IndexBatch b;
        for (std::size_t k = i; k < std::min(groups.size(), i + batch_size); ++k)
            b.push_back((*groups[k])[uniform_index(rng, groups[k]->size())]);
        batches.push_back(std::move(b));
    }
    return batches;
}

TrainingResult train(const std::vector<TrainingRow>& rows, const HnNceConfig& cfg, BatchMode mode) {
    cfg.validate();
    if (rows.empty()) fail(ErrorKind::invalid_argument, "no training rows");
    const std::size_t dim = rows.front().query_visual.size();
    TrainingResult result{FusionHead::random(dim, cfg.hidden, cfg.seed), {}};
    std::vector<std::string> targets;
    targets.reserve(rows.size());
    for (const auto& r : rows) targets.push_back(r.target_id);

    Rng rng(cfg.seed ^ 0x5DEECE66DULL);
    auto params = result.head.flatten();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double weighted = 0.0;
        std::size_t counted = 0;
        for (const auto& idx : sample_batches(targets, cfg.batch_size, rng, mode)) {
            if (idx.size() < 2) continue;
            TrainingBatch batch;
            for (auto i : idx) batch.rows.push_back(rows[i]);
            if (mode == BatchMode::by_triplet && !batch.targets_distinct()) {
                // Repeated targets would be scored as negatives of themselves; keep the first occurrence.
                std::unordered_set<std::string> seen;
                std::erase_if(batch.rows, [&](const TrainingRow& r) { return !seen.insert(r.target_id).second; });
                if (batch.rows.size() < 2) continue;
            }
            const auto g = loss_gradient(batch, result.head, cfg);
            if (!std::isfinite(g.loss))
                fail(ErrorKind::validation, "training diverged at epoch " + std::to_string(epoch) + " (loss is not finite); "
                                            "lower the learning rate");
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.learning_rate * g.grad[k];
            result.head.assign(params);
            weighted += g.loss * static_cast<double>(batch.rows.size());
            counted += batch.rows.size();
        }
        result.epoch_loss.push_back(counted ? weighted / static_cast<double>(counted) : 0.0);
    }
    return result;
}

void save_head(const FusionHead& head, const HnNceConfig& cfg, const std::filesystem::path& path) {
    head.validate();
    OrderedJson header{{"format", "covr-head"},
                       {"version", 1},
                       {"dim", head.dim()},
                       {"hidden", head.hidden()},
                       {"parameters", head.parameter_count()},
                       {"seed", cfg.seed},
                       {"config",
                        {{"tau", cfg.tau},
                         {"alpha", cfg.alpha},
                         {"beta", cfg.beta},
                         {"batch_size", cfg.batch_size},
                         {"learning_rate", cfg.learning_rate},
                         {"epochs", cfg.epochs}}}};
    std::string out = dump_compact(header) + "\n";
    static_assert(std::endian::native == std::endian::little);
    for (double p : head.flatten()) {
        const float f = static_cast<float>(p);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
    }
    write_text_file(path, out);
}

FusionHead load_head(const std::filesystem::path& path) {
    const auto bytes = read_text_file(path);
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) fail(ErrorKind::parse, path.string() + ": missing checkpoint header");
    Json header;
    try {
        header = Json::parse(bytes.substr(0, nl));
    } catch (const Json::exception& e) {
        fail(ErrorKind::parse, path.string() + ": bad checkpoint header: " + e.what());
    }
    if (header.value("format", "") != "covr-head" || header.value("version", 0) != 1)
        fail(ErrorKind::parse, path.string() + ": not a fusion head checkpoint");
    const auto dim = header.at("dim").get<std::size_t>();
    const auto hidden = header.at("hidden").get<std::size_t>();
    FusionHead head = FusionHead::random(dim, hidden, 0);
    const std::size_t n = head.parameter_count();
    if (bytes.size() - nl - 1 != 4 * n)
        fail(ErrorKind::parse, path.string() + ": expected " + std::to_string(4 * n) + " parameter bytes");
    std::vector<double> flat(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + nl + 1 + 4 * i, 4);
        flat[i] = f;
    }
    head.assign(flat);
    head.validate();
    return head;
}

std::string loss_curve_csv(const std::vector<double>& epoch_loss) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) ss << i << ',' << epoch_loss[i] << '\n';
    return ss.str();
}

}  // namespace covr
