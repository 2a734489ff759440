#include "lshmf/online.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lshmf/random.hpp"
#include "lshmf/threads.hpp"

namespace lshmf {

namespace {

std::vector<RatingTriplet> column_sorted(std::span<const RatingTriplet> triplets) {
    std::vector<RatingTriplet> out(triplets.begin(), triplets.end());
    std::sort(out.begin(), out.end(), [](const RatingTriplet& a, const RatingTriplet& b) {
        return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    return out;
}

std::vector<char> pick(Index n, double fraction, std::mt19937_64& rng) {
    if (fraction < 0.0 || fraction >= 1.0) throw std::invalid_argument("hold-back fraction must be in [0, 1)");
    std::vector<char> chosen(n, 0);
    if (fraction == 0.0 || n < 2) return chosen;
    const auto count = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * n)), 1, n - 1);
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    for (std::size_t x = 0; x < count; ++x) {
        std::swap(order[x], order[x + uniform_below(rng, n - x)]);
        chosen[order[x]] = 1;
    }
    return chosen;
}

std::vector<Index> old_first_map(const std::vector<char>& is_new, Index& old_count) {
    std::vector<Index> map(is_new.size());
    old_count = 0;
    for (std::size_t x = 0; x < is_new.size(); ++x) {
        if (!is_new[x]) map[x] = old_count++;
    }
    Index next = old_count;
    for (std::size_t x = 0; x < is_new.size(); ++x) {
        if (is_new[x]) map[x] = next++;
    }
    return map;
}

}  // namespace

void IncrementBatch::validate() const {
    for (const auto& t : triplets) {
        if (t.row >= rows() || t.col >= cols()) throw std::invalid_argument("increment triplet out of range");
        if (t.row < old_rows && t.col < old_cols) {
            throw std::invalid_argument("increment triplet pairs an old row with an old column");
        }
        if (!std::isfinite(t.value)) throw std::invalid_argument("increment holds a non-finite rating");
    }
}

SparseRatings merge_increment(const SparseRatings& old, const IncrementBatch& batch) {
    if (old.rows() != batch.old_rows || old.cols() != batch.old_cols) {
        throw std::invalid_argument("increment does not extend this matrix");
    }
    batch.validate();
    std::vector<RatingTriplet> all(old.triplets().begin(), old.triplets().end());
    all.insert(all.end(), batch.triplets.begin(), batch.triplets.end());
    return build_indices(std::move(all), batch.rows(), batch.cols());
}

void update_hashes_incremental(HashState& state, const IncrementBatch& batch, const RowHashes& row_hashes) {
    if (!state.has_accumulators()) throw std::invalid_argument("incremental hashing needs stored accumulators");
    if (state.columns() != batch.old_cols) throw std::invalid_argument("hash state does not match the old columns");
    const auto& cfg = state.config();
    if (row_hashes.groups() != cfg.groups || row_hashes.maps_per_group() != cfg.maps_per_group ||
        row_hashes.bits() != cfg.bits || row_hashes.rows() < batch.rows()) {
        throw std::invalid_argument("row hashes do not match the hash state");
    }
    batch.validate();
    state.grow_columns(batch.cols());
    const auto sorted = column_sorted(batch.triplets);
    std::vector<std::size_t> starts;
    for (std::size_t x = 0; x < sorted.size(); ++x) {
        if (x == 0 || sorted[x].col != sorted[x - 1].col) starts.push_back(x);
    }
    starts.push_back(sorted.size());
    const unsigned bits = cfg.bits;
    for (unsigned g = 0; g < cfg.groups; ++g) {
        for (unsigned m = 0; m < cfg.maps_per_group; ++m) {
            const auto hashes = row_hashes.map(g, m);
            parallel_chunks(starts.size() - 1, cfg.workers, [&](std::size_t begin, std::size_t end) {
                for (std::size_t run = begin; run < end; ++run) {
                    const Index j = sorted[starts[run]].col;
                    auto acc = state.accumulator(g, m, j);
                    for (std::size_t x = starts[run]; x < starts[run + 1]; ++x) {
                        const double w = psi(sorted[x].value, cfg.psi_exponent);
                        const std::uint64_t h = hashes[sorted[x].row];
                        for (unsigned b = 0; b < bits; ++b) acc[b] += w * (((h >> b) & 1u) ? 1.0 : -1.0);
                    }
                    state.set_signature(g, m, j, threshold(acc));
                }
            });
        }
    }
}

std::vector<Index> topk_for_new(const HashState& state, Index k, Index old_cols, std::uint64_t seed) {
    const Index n = state.columns();
    check_neighbor_count(n, k);
    if (old_cols > n) throw std::invalid_argument("more old columns than the hash state holds");
    if (k == 0 || old_cols == n) return {};
    const auto& cfg = state.config();
    const unsigned p = cfg.maps_per_group;
    std::vector<char> targets(n, 0);
    std::fill(targets.begin() + old_cols, targets.end(), 1);
    CandidateSets candidates(n);
    std::vector<std::uint64_t> keys(std::size_t{n} * p);
    for (unsigned g = 0; g < cfg.groups; ++g) {
        for (unsigned m = 0; m < p; ++m) {
            const auto sigs = state.signatures(g, m);
            for (Index j = 0; j < n; ++j) keys[std::size_t{j} * p + m] = sigs[j];
        }
        detail::append_bucket_candidates(keys, p, n, candidates, targets);
    }
    std::vector<Index> out;
    out.reserve(std::size_t{n - old_cols} * k);
    for (Index j = old_cols; j < n; ++j) {
        const auto row = detail::frequency_topk(std::move(candidates[j]), j, k, n, seed);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

NeighborTable extend_neighbors(const NeighborTable& old, std::span<const Index> new_rows) {
    const Index k = old.k();
    if (k == 0) {
        if (!new_rows.empty()) throw std::invalid_argument("neighbor rows given for K = 0");
        return old;
    }
    if (new_rows.size() % k != 0) throw std::invalid_argument("new neighbor rows are not a multiple of K");
    std::vector<Index> entries = old.entries();
    entries.insert(entries.end(), new_rows.begin(), new_rows.end());
    return NeighborTable(old.columns() + static_cast<Index>(new_rows.size() / k), k, std::move(entries));
}

void extend_params(ModelParams& params, const IncrementBatch& batch, const NeighborTable& neighbors,
                   const TrainConfig& config) {
    if (params.rows() != batch.old_rows || params.cols() != batch.old_cols) {
        throw std::invalid_argument("increment does not extend these parameters");
    }
    if (neighbors.columns() != batch.cols() || neighbors.k() != params.k()) {
        throw std::invalid_argument("extended neighbor table has the wrong shape");
    }
    const Index m_hat = batch.rows();
    const Index n_hat = batch.cols();
    const unsigned f = params.factors;
    const Index k = params.k();

    std::vector<double> row_sum(batch.new_rows, 0.0), col_sum(batch.new_cols, 0.0);
    std::vector<std::size_t> row_count(batch.new_rows, 0), col_count(batch.new_cols, 0);
    for (const auto& t : batch.triplets) {
        if (t.row >= batch.old_rows) {
            row_sum[t.row - batch.old_rows] += t.value;
            ++row_count[t.row - batch.old_rows];
        }
        if (t.col >= batch.old_cols) {
            col_sum[t.col - batch.old_cols] += t.value;
            ++col_count[t.col - batch.old_cols];
        }
    }
    const auto deviation = [&](double sum, std::size_t count) {
        return count == 0 ? 0.0 : sum / static_cast<double>(count) - params.mu;
    };

    const double scale = config.scale();
    params.U.resize(std::size_t{m_hat} * f);
    params.V.resize(std::size_t{n_hat} * f);
    for (Index x = 0; x < batch.new_rows; ++x) {
        const double dev = deviation(row_sum[x], row_count[x]);
        params.b.push_back(dev);
        params.b0.push_back(dev);
        init_latent_row(params.u(batch.old_rows + x), config.seed, 0, batch.old_rows + x, scale);
    }
    for (Index x = 0; x < batch.new_cols; ++x) {
        const double dev = deviation(col_sum[x], col_count[x]);
        params.b_hat.push_back(dev);
        params.b0_hat.push_back(dev);
        init_latent_row(params.v(batch.old_cols + x), config.seed, 1, batch.old_cols + x, scale);
    }
    params.W.resize(std::size_t{n_hat} * k, 0.0);
    params.C.resize(std::size_t{n_hat} * k, 0.0);
    params.neighbors = neighbors;
}

void train_incremental(ModelParams& params, const IncrementBatch& batch, const SparseRatings& merged,
                       const TrainConfig& config) {
    if (params.rows() != batch.rows() || params.cols() != batch.cols()) {
        throw std::invalid_argument("parameters are not extended to the increment");
    }
    config.validate();
    batch.validate();
    const auto samples = column_sorted(batch.triplets);
    const SplitCache cache(params, merged, samples);
    SampleWorkspace ws;
    for (unsigned t = 0; t < config.epochs; ++t) {
        const auto gamma = learning_rates(config, t);
        try {
            for (std::size_t x = 0; x < samples.size(); ++x) {
                const auto& s = samples[x];
                unsigned mask = 0;
                if (s.row >= batch.old_rows) mask |= kUpdateBias | kUpdateU;
                if (s.col >= batch.old_cols) mask |= kUpdateBiasHat | kUpdateV | kUpdateW | kUpdateC;
                cache.load(x, s.row, params, ws);
                sgd_update_prepared(s.row, s.col, s.value, params, gamma, config.lambda, ws, mask);
            }
        } catch (const std::domain_error& e) {
            throw DivergenceError(t, e.what());
        }
        check_finite(params, t);
    }
}

OnlineResult absorb_increment(ModelParams& params, HashState& state, const SparseRatings& old,
                              const IncrementBatch& batch, const TrainConfig& config, std::uint64_t topk_seed) {
    OnlineResult result;
    result.merged = merge_increment(old, batch);
    update_hashes_incremental(state, batch, assign_row_hashes(batch.rows(), state.config()));
    const auto rows = topk_for_new(state, params.k(), batch.old_cols, topk_seed);
    result.neighbors = extend_neighbors(params.neighbors, rows);
    extend_params(params, batch, result.neighbors, config);
    train_incremental(params, batch, result.merged, config);
    return result;
}

HeldBackIncrement hold_back_increment(const SparseRatings& full, double row_fraction, double col_fraction,
                                      std::uint64_t seed) {
    auto rng = seeded_engine(seed, 0x1ac7);
    const auto new_rows = pick(full.rows(), row_fraction, rng);
    const auto new_cols = pick(full.cols(), col_fraction, rng);
    HeldBackIncrement out;
    Index old_rows = 0, old_cols = 0;
    out.row_map = old_first_map(new_rows, old_rows);
    out.col_map = old_first_map(new_cols, old_cols);
    out.batch.old_rows = old_rows;
    out.batch.old_cols = old_cols;
    out.batch.new_rows = full.rows() - old_rows;
    out.batch.new_cols = full.cols() - old_cols;
    std::vector<RatingTriplet> base;
    for (const auto& t : relabel(full.triplets(), out.row_map, out.col_map)) {
        if (t.row < old_rows && t.col < old_cols) {
            base.push_back(t);
        } else {
            out.batch.triplets.push_back(t);
        }
    }
    out.base = build_indices(std::move(base), old_rows, old_cols);
    return out;
}

std::vector<RatingTriplet> relabel(std::span<const RatingTriplet> triplets, std::span<const Index> row_map,
                                   std::span<const Index> col_map) {
    std::vector<RatingTriplet> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        if (t.row >= row_map.size() || t.col >= col_map.size()) throw std::out_of_range("triplet outside the map");
        out.push_back({row_map[t.row], col_map[t.col], t.value});
    }
    return out;
}

}  // namespace lshmf
