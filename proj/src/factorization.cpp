#include "lshmf/factorization.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lshmf/binary_io.hpp"
#include "lshmf/random.hpp"
#include "lshmf/threads.hpp"

namespace lshmf {

namespace {

constexpr std::uint64_t kLatentTag = 0x1417;

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

double sum_squares(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x * x;
    return s;
}

void check_rates(const ParamRates& r, bool strictly_positive, const char* what) {
    for (double x : {r.b, r.b_hat, r.u, r.v, r.w, r.c}) {
        if (!std::isfinite(x) || x < 0.0 || (strictly_positive && x == 0.0)) {
            throw std::invalid_argument(std::string(what) + " out of range");
        }
    }
}

}  // namespace

double TrainConfig::scale() const {
    if (init_scale) return *init_scale;
    return factors == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(factors));
}

void TrainConfig::validate() const {
    if (factors == 0) throw std::invalid_argument("rank F must be positive");
    check_rates(alpha, true, "learning rate");
    check_rates(lambda, false, "regularizer");
    if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("beta must be non-negative");
    if (init_scale && (!std::isfinite(*init_scale) || *init_scale < 0.0)) {
        throw std::invalid_argument("init_scale must be non-negative");
    }
    if (clamp && !(clamp->first < clamp->second)) throw std::invalid_argument("clamp range is empty");
    if (workers == 0) throw std::invalid_argument("workers must be positive");
}

TrainConfig TrainConfig::basic_preset(Dataset dataset) {
    TrainConfig c;
    c.k = 0;
    switch (dataset) {
        case Dataset::Netflix:
        case Dataset::MovieLens:
            c.alpha = ParamRates::uniform(0.04);
            c.beta = 0.3;
            c.lambda = ParamRates::uniform(0.035);
            break;
        case Dataset::Yahoo:
            c.alpha = ParamRates::uniform(0.01);
            c.beta = 0.1;
            c.lambda = ParamRates::uniform(0.02);
            break;
    }
    return c;
}

TrainConfig TrainConfig::full_preset(Dataset dataset) {
    TrainConfig c;
    c.beta = 0.3;
    switch (dataset) {
        case Dataset::Netflix:
            c.alpha = {0.02, 0.02, 0.02, 0.02, 0.001, 0.001};
            c.lambda = {0.01, 0.01, 0.01, 0.01, 0.05, 0.05};
            break;
        case Dataset::MovieLens:
            c.alpha = {0.035, 0.035, 0.035, 0.035, 0.002, 0.002};
            c.lambda = {0.02, 0.02, 0.02, 0.02, 0.002, 0.002};
            break;
        case Dataset::Yahoo:
            c.alpha = {0.02, 0.02, 0.02, 0.02, 0.001, 0.001};
            c.lambda = {0.02, 0.02, 0.02, 0.02, 0.05, 0.05};
            break;
    }
    return c;
}

TrainConfig TrainConfig::ml100k_full_preset() {
    TrainConfig c;
    c.beta = 0.3;
    c.alpha = {0.07, 0.07, 0.07, 0.07, 0.005, 0.005};
    c.lambda = {0.08, 0.08, 0.08, 0.08, 0.01, 0.01};
    return c;
}

double learning_rate(double alpha, double beta, double t) {
    if (t < 0.0) throw std::invalid_argument("epoch must be non-negative");
    return alpha / (1.0 + beta * std::pow(t, 1.5));
}

ParamRates learning_rates(const TrainConfig& config, unsigned epoch) {
    const double t = epoch;
    const auto& a = config.alpha;
    const double beta = config.beta;
    return {learning_rate(a.b, beta, t), learning_rate(a.b_hat, beta, t), learning_rate(a.u, beta, t),
            learning_rate(a.v, beta, t), learning_rate(a.w, beta, t), learning_rate(a.c, beta, t)};
}

void ModelParams::check() const {
    const std::size_t m = b.size();
    const std::size_t n = b_hat.size();
    const std::size_t nk = n * neighbors.k();
    if (U.size() != m * factors || V.size() != n * factors || W.size() != nk || C.size() != nk ||
        neighbors.columns() != n || b0.size() != m || b0_hat.size() != n) {
        throw std::invalid_argument("model dimensions disagree");
    }
    if (!std::isfinite(mu) || !all_finite(b) || !all_finite(b_hat) || !all_finite(U) || !all_finite(V) ||
        !all_finite(W) || !all_finite(C) || !all_finite(b0) || !all_finite(b0_hat)) {
        throw std::invalid_argument("model holds a non-finite value");
    }
}

void init_latent_row(std::span<double> out, std::uint64_t seed, unsigned tag, Index index, double scale) {
    auto rng = seeded_engine(seed, kLatentTag, tag, index);
    for (auto& x : out) x = scale * uniform01(rng);
}

ModelParams init_params(Index rows, Index cols, const NeighborTable& neighbors, const BaselineStats& baselines,
                        const TrainConfig& config) {
    config.validate();
    if (neighbors.columns() != cols) throw std::invalid_argument("neighbor table does not match N");
    if (baselines.b.size() != rows || baselines.b_hat.size() != cols) {
        throw std::invalid_argument("baselines do not match M x N");
    }
    ModelParams p;
    p.mu = baselines.mu;
    p.b = baselines.b;
    p.b_hat = baselines.b_hat;
    p.b0 = baselines.b;
    p.b0_hat = baselines.b_hat;
    p.factors = config.factors;
    p.neighbors = neighbors;
    p.U.assign(std::size_t{rows} * config.factors, 0.0);
    p.V.assign(std::size_t{cols} * config.factors, 0.0);
    p.W.assign(std::size_t{cols} * neighbors.k(), 0.0);
    p.C.assign(std::size_t{cols} * neighbors.k(), 0.0);
    const double scale = config.scale();
    for (Index i = 0; i < rows; ++i) init_latent_row(p.u(i), config.seed, 0, i, scale);
    for (Index j = 0; j < cols; ++j) init_latent_row(p.v(j), config.seed, 1, j, scale);
    return p;
}

NeighborSplit split_neighbors(Index i, Index j, const NeighborTable& neighbors, const SparseRatings& ratings) {
    if (j >= neighbors.columns()) throw std::out_of_range("column index out of range");
    NeighborSplit s;
    const auto row = neighbors.row(j);
    for (Index k = 0; k < row.size(); ++k) {
        const bool rated = i < ratings.rows() && row[k] < ratings.cols() && ratings.find(i, row[k]).has_value();
        (rated ? s.explicit_ranks : s.implicit_ranks).push_back(k);
    }
    return s;
}

double predict_prepared(Index i, Index j, const ModelParams& params, const SampleWorkspace& ws) {
    const auto& s = ws.split;
    double r = params.mu + params.b[i] + params.b_hat[j];
    const Index k = params.k();
    if (k > 0) {
        const double* w = params.W.data() + std::size_t{j} * k;
        const double* c = params.C.data() + std::size_t{j} * k;
        if (!s.explicit_ranks.empty()) {
            double sum = 0.0;
            for (std::size_t x = 0; x < s.explicit_ranks.size(); ++x) sum += ws.residuals[x] * w[s.explicit_ranks[x]];
            r += sum / std::sqrt(static_cast<double>(s.explicit_ranks.size()));
        }
        if (!s.implicit_ranks.empty()) {
            double sum = 0.0;
            for (Index x : s.implicit_ranks) sum += c[x];
            r += sum / std::sqrt(static_cast<double>(s.implicit_ranks.size()));
        }
    }
    const double* u = params.U.data() + std::size_t{i} * params.factors;
    const double* v = params.V.data() + std::size_t{j} * params.factors;
    double dot = 0.0;
    for (unsigned f = 0; f < params.factors; ++f) dot += u[f] * v[f];
    return r + dot;
}

double predict(Index i, Index j, const ModelParams& params, const SparseRatings& ratings, SampleWorkspace& ws) {
    if (i >= params.rows() || j >= params.cols()) throw std::out_of_range("prediction index out of range");
    auto& s = ws.split;
    s.explicit_ranks.clear();
    s.implicit_ranks.clear();
    ws.residuals.clear();
    const Index k = params.k();
    if (k > 0) {
        const auto row = params.neighbors.row(j);
        const bool has_row = i < ratings.rows();
        for (Index x = 0; x < k; ++x) {
            const Index j1 = row[x];
            std::optional<double> value;
            if (has_row && j1 < ratings.cols()) value = ratings.find(i, j1);
            if (value) {
                s.explicit_ranks.push_back(x);
                ws.residuals.push_back(*value - params.residual_baseline(i, j1));
            } else {
                s.implicit_ranks.push_back(x);
            }
        }
    }
    return predict_prepared(i, j, params, ws);
}

double predict(Index i, Index j, const ModelParams& params, const SparseRatings& ratings) {
    SampleWorkspace ws;
    return predict(i, j, params, ratings, ws);
}

SplitCache::SplitCache(const ModelParams& params, const SparseRatings& ratings, std::span<const RatingTriplet> samples)
    : k_(params.k()) {
    offsets_.reserve(samples.size() + 1);
    SampleWorkspace ws;
    for (const auto& t : samples) {
        if (k_ > 0) {
            predict(t.row, t.col, params, ratings, ws);
            const auto row = params.neighbors.row(t.col);
            for (Index x : ws.split.explicit_ranks) {
                ranks_.push_back(x);
                neighbors_.push_back(row[x]);
                values_.push_back(*ratings.find(t.row, row[x]));
            }
        }
        offsets_.push_back(ranks_.size());
    }
}

void SplitCache::load(std::size_t index, Index i, const ModelParams& params, SampleWorkspace& ws) const {
    auto& s = ws.split;
    s.explicit_ranks.clear();
    s.implicit_ranks.clear();
    ws.residuals.clear();
    if (k_ == 0) return;
    const std::size_t begin = offsets_[index];
    const std::size_t end = offsets_[index + 1];
    Index next = 0;
    for (std::size_t x = begin; x < end; ++x) {
        const Index rank = ranks_[x];
        for (; next < rank; ++next) s.implicit_ranks.push_back(next);
        next = rank + 1;
        s.explicit_ranks.push_back(rank);
        ws.residuals.push_back(values_[x] - params.residual_baseline(i, neighbors_[x]));
    }
    for (; next < k_; ++next) s.implicit_ranks.push_back(next);
}

namespace {

void apply_rules(double e, Index i, Index j, ModelParams& params, const ParamRates& gamma, const ParamRates& lambda,
                 const SampleWorkspace& ws, unsigned mask) {
    if (mask & kUpdateBias) params.b[i] += gamma.b * (e - lambda.b * params.b[i]);
    if (mask & kUpdateBiasHat) params.b_hat[j] += gamma.b_hat * (e - lambda.b_hat * params.b_hat[j]);

    double* u = params.U.data() + std::size_t{i} * params.factors;
    double* v = params.V.data() + std::size_t{j} * params.factors;
    const bool upd_u = mask & kUpdateU;
    const bool upd_v = mask & kUpdateV;
    for (unsigned f = 0; f < params.factors; ++f) {
        const double uf = u[f];
        const double vf = v[f];
        if (upd_u) u[f] = uf + gamma.u * (e * vf - lambda.u * uf);
        if (upd_v) v[f] = vf + gamma.v * (e * uf - lambda.v * vf);
    }

    const Index k = params.k();
    if (k > 0) {
        const auto& s = ws.split;
        if ((mask & kUpdateW) && !s.explicit_ranks.empty()) {
            double* w = params.W.data() + std::size_t{j} * k;
            const double scaled = e / std::sqrt(static_cast<double>(s.explicit_ranks.size()));
            for (std::size_t x = 0; x < s.explicit_ranks.size(); ++x) {
                double& wx = w[s.explicit_ranks[x]];
                wx += gamma.w * (scaled * ws.residuals[x] - lambda.w * wx);
            }
        }
        if ((mask & kUpdateC) && !s.implicit_ranks.empty()) {
            double* c = params.C.data() + std::size_t{j} * k;
            const double scaled = e / std::sqrt(static_cast<double>(s.implicit_ranks.size()));
            for (Index x : s.implicit_ranks) c[x] += gamma.c * (scaled - lambda.c * c[x]);
        }
    }
}

}  // namespace

double sgd_update(Index i, Index j, double rating, ModelParams& params, const ParamRates& gamma,
                  const ParamRates& lambda, const SparseRatings& ratings, SampleWorkspace& ws, unsigned mask) {
    const double e = rating - predict(i, j, params, ratings, ws);
    if (!std::isfinite(e)) throw std::domain_error("non-finite prediction error");
    apply_rules(e, i, j, params, gamma, lambda, ws, mask);
    return e;
}

double sgd_update_prepared(Index i, Index j, double rating, ModelParams& params, const ParamRates& gamma,
                           const ParamRates& lambda, const SampleWorkspace& ws, unsigned mask) {
    const double e = rating - predict_prepared(i, j, params, ws);
    if (!std::isfinite(e)) throw std::domain_error("non-finite prediction error");
    apply_rules(e, i, j, params, gamma, lambda, ws, mask);
    return e;
}

void check_finite(const ModelParams& params, unsigned epoch) {
    if (!std::isfinite(params.mu) || !all_finite(params.b) || !all_finite(params.b_hat) || !all_finite(params.U) ||
        !all_finite(params.V) || !all_finite(params.W) || !all_finite(params.C)) {
        throw DivergenceError(epoch, "non-finite parameter");
    }
}

void train_samples(ModelParams& params, const SparseRatings& ratings, std::span<const RatingTriplet> samples,
                   const TrainConfig& config, unsigned mask, const EpochCallback& on_epoch) {
    if (config.epochs == 0) return;
    const SplitCache cache(params, ratings, samples);
    SampleWorkspace ws;
    for (unsigned t = 0; t < config.epochs; ++t) {
        const auto gamma = learning_rates(config, t);
        try {
            for (std::size_t x = 0; x < samples.size(); ++x) {
                const auto& s = samples[x];
                cache.load(x, s.row, params, ws);
                sgd_update_prepared(s.row, s.col, s.value, params, gamma, config.lambda, ws, mask);
            }
        } catch (const std::domain_error& e) {
            throw DivergenceError(t, e.what());
        }
        check_finite(params, t);
        if (on_epoch) on_epoch(t, params);
    }
}

std::vector<RatingTriplet> column_major(const SparseRatings& ratings) {
    std::vector<RatingTriplet> out;
    out.reserve(ratings.nnz());
    for (Index j = 0; j < ratings.cols(); ++j) {
        for (const auto& e : ratings.col(j)) out.push_back({e.index, j, e.value});
    }
    return out;
}

namespace {

std::vector<RatingTriplet> row_major(const SparseRatings& ratings, bool degree_order) {
    std::vector<Index> rows(ratings.rows());
    std::iota(rows.begin(), rows.end(), Index{0});
    if (degree_order) {
        std::stable_sort(rows.begin(), rows.end(),
                         [&](Index a, Index b) { return ratings.row(a).size() > ratings.row(b).size(); });
    }
    std::vector<RatingTriplet> out;
    out.reserve(ratings.nnz());
    for (Index i : rows) {
        for (const auto& e : ratings.row(i)) out.push_back({i, e.index, e.value});
    }
    return out;
}

// Threads own disjoint row ranges and share V (and b̂); shared reads and writes
// go through relaxed atomic_ref, so updates may be lost but nothing tears.
void racy_epoch(ModelParams& params, const SparseRatings& ratings, const ParamRates& gamma, const ParamRates& lambda,
                unsigned mask, unsigned workers) {
    const unsigned F = params.factors;
    parallel_chunks(ratings.rows(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t ii = begin; ii < end; ++ii) {
            const auto i = static_cast<Index>(ii);
            double* u = params.U.data() + ii * F;
            for (const auto& entry : ratings.row(i)) {
                const Index j = entry.index;
                double* v = params.V.data() + std::size_t{j} * F;
                std::atomic_ref<double> bj(params.b_hat[j]);
                double dot = 0.0;
                for (unsigned f = 0; f < F; ++f) dot += u[f] * std::atomic_ref<double>(v[f]).load(std::memory_order_relaxed);
                const double bhat = bj.load(std::memory_order_relaxed);
                const double e = entry.value - (params.mu + params.b[i] + bhat + dot);
                if (!std::isfinite(e)) throw std::domain_error("non-finite prediction error");
                if (mask & kUpdateBias) params.b[i] += gamma.b * (e - lambda.b * params.b[i]);
                if (mask & kUpdateBiasHat) bj.store(bhat + gamma.b_hat * (e - lambda.b_hat * bhat), std::memory_order_relaxed);
                for (unsigned f = 0; f < F; ++f) {
                    std::atomic_ref<double> vf(v[f]);
                    const double uf = u[f];
                    const double vv = vf.load(std::memory_order_relaxed);
                    u[f] = uf + gamma.u * (e * vv - lambda.u * uf);
                    vf.store(vv + gamma.v * (e * uf - lambda.v * vv), std::memory_order_relaxed);
                }
            }
        }
    });
}

}  // namespace

ModelParams init_basic(const SparseRatings& ratings, const TrainConfig& config) {
    BaselineStats base;
    if (config.basic_biases) {
        base = compute_baselines(ratings);
    } else {
        base.b.assign(ratings.rows(), 0.0);
        base.b_hat.assign(ratings.cols(), 0.0);
    }
    return init_params(ratings.rows(), ratings.cols(), NeighborTable::empty(ratings.cols()), base, config);
}

void train_basic_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
    config.validate();
    const unsigned mask = kUpdateLatent | (config.basic_biases ? kUpdateBias | kUpdateBiasHat : 0u);
    if (config.racy && config.workers > 1) {
        for (unsigned t = 0; t < config.epochs; ++t) {
            try {
                racy_epoch(params, ratings, learning_rates(config, t), config.lambda, mask, config.workers);
            } catch (const std::domain_error& e) {
                throw DivergenceError(t, e.what());
            }
            check_finite(params, t);
            if (on_epoch) on_epoch(t, params);
        }
        return;
    }
    const auto samples = row_major(ratings, config.degree_order);
    train_samples(params, ratings, samples, config, mask, on_epoch);
}

ModelParams train_basic(const SparseRatings& ratings, const TrainConfig& config, const EpochCallback& on_epoch) {
    auto params = init_basic(ratings, config);
    train_basic_from(params, ratings, config, on_epoch);
    return params;
}

void train_full_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
    config.validate();
    const auto samples = column_major(ratings);
    train_samples(params, ratings, samples, config, kUpdateAll, on_epoch);
}

ModelParams train_full(const SparseRatings& ratings, const NeighborTable& neighbors, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
    auto params = init_params(ratings.rows(), ratings.cols(), neighbors, compute_baselines(ratings), config);
    train_full_from(params, ratings, config, on_epoch);
    return params;
}

namespace {

template <typename Prepare>
double rmse_with(std::span<const RatingTriplet> test, const EvalOptions& options,
                 Prepare&& prepare) {
    if (test.empty()) throw std::invalid_argument("RMSE needs a non-empty test set");
    SampleWorkspace ws;
    double sum = 0.0;
    for (std::size_t x = 0; x < test.size(); ++x) {
        const auto& t = test[x];
        double pred = prepare(x, t, ws);
        double truth = t.value;
        if (options.clamp) pred = std::clamp(pred, options.clamp->first, options.clamp->second);
        if (options.unscale) {
            pred *= *options.unscale;
            truth *= *options.unscale;
        }
        const double d = truth - pred;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(test.size()));
}

}  // namespace

double rmse(const ModelParams& params, std::span<const RatingTriplet> test, const SparseRatings& ratings,
            const EvalOptions& options) {
    return rmse_with(test, options, [&](std::size_t, const RatingTriplet& t, SampleWorkspace& ws) {
        return predict(t.row, t.col, params, ratings, ws);
    });
}

double rmse(const ModelParams& params, std::span<const RatingTriplet> test, const SplitCache& cache,
            const EvalOptions& options) {
    return rmse_with(test, options, [&](std::size_t x, const RatingTriplet& t, SampleWorkspace& ws) {
        if (t.row >= params.rows() || t.col >= params.cols()) throw std::out_of_range("prediction index out of range");
        cache.load(x, t.row, params, ws);
        return predict_prepared(t.row, t.col, params, ws);
    });
}

double objective(const ModelParams& params, const SparseRatings& ratings, const ParamRates& lambda) {
    SampleWorkspace ws;
    double sum = 0.0;
    for (const auto& t : ratings.triplets()) {
        const double e = t.value - predict(t.row, t.col, params, ratings, ws);
        sum += e * e;
    }
    return sum + lambda.b * sum_squares(params.b) + lambda.b_hat * sum_squares(params.b_hat) +
           lambda.u * sum_squares(params.U) + lambda.v * sum_squares(params.V) + lambda.w * sum_squares(params.W) +
           lambda.c * sum_squares(params.C);
}

void write_model(std::ostream& out, const ModelParams& p) {
    p.check();
    out << "LSHMF-M v1 " << p.rows() << ' ' << p.cols() << ' ' << p.factors << ' ' << p.k() << '\n';
    binary::write_le(out, p.mu);
    for (const auto* vec : {&p.b, &p.b_hat, &p.U, &p.V, &p.W, &p.C}) binary::write_all<double>(out, *vec);
    binary::write_all<Index>(out, p.neighbors.entries());
    binary::write_all<double>(out, p.b0);
    binary::write_all<double>(out, p.b0_hat);
    if (!out) throw std::runtime_error("failed writing model");
}

ModelParams read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("missing model header");
    std::istringstream header(line);
    std::string magic, version;
    Index m = 0, n = 0, k = 0;
    unsigned f = 0;
    if (!(header >> magic >> version >> m >> n >> f >> k) || magic != "LSHMF-M" || version != "v1") {
        throw std::runtime_error("bad model header");
    }
    ModelParams p;
    p.factors = f;
    p.mu = binary::read_le<double>(in);
    p.b.resize(m);
    p.b_hat.resize(n);
    p.U.resize(std::size_t{m} * f);
    p.V.resize(std::size_t{n} * f);
    p.W.resize(std::size_t{n} * k);
    p.C.resize(std::size_t{n} * k);
    for (auto* vec : {&p.b, &p.b_hat, &p.U, &p.V, &p.W, &p.C}) binary::read_into<double>(in, *vec);
    std::vector<Index> entries(std::size_t{n} * k);
    binary::read_into<Index>(in, entries);
    p.neighbors = NeighborTable(n, k, std::move(entries));
    p.b0.resize(m);
    p.b0_hat.resize(n);
    binary::read_into<double>(in, p.b0);
    binary::read_into<double>(in, p.b0_hat);
    p.check();
    return p;
}

void save_model_file(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    write_model(out, params);
}

ModelParams load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_model(in);
}

}  // namespace lshmf
