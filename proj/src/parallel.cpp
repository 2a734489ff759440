#include "lshmf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace lshmf {

namespace {

std::vector<Index> even_bounds(Index n, unsigned parts) {
    std::vector<Index> b(parts + 1);
    for (unsigned k = 0; k <= parts; ++k) {
        b[k] = static_cast<Index>(std::uint64_t{n} * k / parts);
    }
    return b;
}

unsigned locate(const std::vector<Index>& bounds, Index x) {
    const auto it = std::upper_bound(bounds.begin(), bounds.end(), x);
    return static_cast<unsigned>(it - bounds.begin()) - 1;
}

void sort_unique(std::vector<Index>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

unsigned BlockPartition::row_block_of(Index i) const {
    if (i >= row_bounds.back()) throw std::out_of_range("row outside the partition");
    return locate(row_bounds, i);
}

unsigned BlockPartition::col_block_of(Index j) const {
    if (j >= col_bounds.back()) throw std::out_of_range("column outside the partition");
    return locate(col_bounds, j);
}

BlockPartition make_partition(const SparseRatings& ratings, unsigned workers) {
    if (workers < 1 || workers > std::min(ratings.rows(), ratings.cols())) {
        throw std::invalid_argument("worker count must be in [1, min(M, N)]");
    }
    BlockPartition p;
    p.workers = workers;
    p.row_bounds = even_bounds(ratings.rows(), workers);
    p.col_bounds = even_bounds(ratings.cols(), workers);
    p.blocks.resize(std::size_t{workers} * workers);
    for (Index j = 0; j < ratings.cols(); ++j) {
        const unsigned cb = p.col_block_of(j);
        for (const auto& e : ratings.col(j)) {
            p.blocks[std::size_t{p.row_block_of(e.index)} * workers + cb].push_back({e.index, j, e.value});
        }
    }
    return p;
}

RotationSchedule rotation_schedule(unsigned workers) {
    if (workers < 1) throw std::invalid_argument("schedule needs at least one worker");
    return RotationSchedule{workers};
}

void WriteTracker::reset(unsigned epochs, unsigned stages, unsigned workers) {
    epochs_ = epochs;
    stages_ = stages;
    workers_ = workers;
    touches_.assign(std::size_t{epochs} * stages * workers, {});
}

WriteTracker::Touch& WriteTracker::at(unsigned epoch, unsigned stage, unsigned worker) {
    return touches_.at((std::size_t{epoch} * stages_ + stage) * workers_ + worker);
}

const WriteTracker::Touch& WriteTracker::at(unsigned epoch, unsigned stage, unsigned worker) const {
    return touches_.at((std::size_t{epoch} * stages_ + stage) * workers_ + worker);
}

bool WriteTracker::disjoint() const {
    std::vector<Index> rows, cols;
    for (unsigned e = 0; e < epochs_; ++e) {
        for (unsigned s = 0; s < stages_; ++s) {
            rows.clear();
            cols.clear();
            for (unsigned w = 0; w < workers_; ++w) {
                const auto& t = at(e, s, w);
                rows.insert(rows.end(), t.rows.begin(), t.rows.end());
                cols.insert(cols.end(), t.cols.begin(), t.cols.end());
            }
            // each worker's list is already unique, so a repeat means two writers
            const auto size_rows = rows.size();
            const auto size_cols = cols.size();
            sort_unique(rows);
            sort_unique(cols);
            if (rows.size() != size_rows || cols.size() != size_cols) return false;
        }
    }
    return true;
}

std::size_t WriteTracker::samples_in_epoch(unsigned epoch) const {
    std::size_t n = 0;
    for (unsigned s = 0; s < stages_; ++s) {
        for (unsigned w = 0; w < workers_; ++w) n += at(epoch, s, w).samples;
    }
    return n;
}

void parallel_train_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                         unsigned workers, const ParallelOptions& options, const EpochCallback& on_epoch) {
    config.validate();
    const auto partition = make_partition(ratings, workers);
    const auto schedule = rotation_schedule(workers);
    const unsigned stages = schedule.stages();
    if (options.tracker) options.tracker->reset(config.epochs, stages, workers);
    if (options.stage_timings) options.stage_timings->clear();
    if (config.epochs == 0) return;

    std::vector<SplitCache> caches;
    caches.reserve(partition.blocks.size());
    for (const auto& block : partition.blocks) caches.emplace_back(params, ratings, block);

    std::exception_ptr error;
    std::mutex error_mutex;
    const auto fail = [&](std::exception_ptr e) {
        std::lock_guard lock(error_mutex);
        if (!error) error = e;
    };

    std::size_t completed = 0;
    bool stop = false;
    auto stage_start = std::chrono::steady_clock::now();
    const auto on_stage_done = [&]() noexcept {
        const auto now = std::chrono::steady_clock::now();
        const unsigned epoch = static_cast<unsigned>(completed / stages);
        const unsigned stage = static_cast<unsigned>(completed % stages);
        try {
            if (options.stage_timings) {
                options.stage_timings->push_back({epoch, stage, std::chrono::duration<double>(now - stage_start).count()});
            }
            if (stage + 1 == stages && !error) {
                check_finite(params, epoch);
                if (on_epoch) on_epoch(epoch, params);
            }
        } catch (...) {
            fail(std::current_exception());
        }
        ++completed;
        stop = error != nullptr;
        stage_start = std::chrono::steady_clock::now();
    };
    std::barrier sync(static_cast<std::ptrdiff_t>(workers), on_stage_done);

    const auto run = [&](unsigned d) {
        SampleWorkspace ws;
        for (unsigned t = 0; t < config.epochs; ++t) {
            const auto gamma = learning_rates(config, t);
            for (unsigned s = 0; s < stages; ++s) {
                try {
                    const std::size_t slot = std::size_t{schedule.row_block(d, s)} * workers + schedule.col_block(d);
                    const auto& block = partition.blocks[slot];
                    for (std::size_t n = 0; n < block.size(); ++n) {
                        const auto& x = block[n];
                        caches[slot].load(n, x.row, params, ws);
                        sgd_update_prepared(x.row, x.col, x.value, params, gamma, config.lambda, ws, kUpdateAll);
                    }
                    if (options.tracker) {
                        auto& touch = options.tracker->at(t, s, d);
                        for (const auto& x : block) {
                            touch.rows.push_back(x.row);
                            touch.cols.push_back(x.col);
                        }
                        sort_unique(touch.rows);
                        sort_unique(touch.cols);
                        touch.samples = block.size();
                    }
                } catch (const std::domain_error& e) {
                    fail(std::make_exception_ptr(DivergenceError(t, e.what())));
                } catch (...) {
                    fail(std::current_exception());
                }
                sync.arrive_and_wait();
                if (stop) return;
            }
        }
    };

    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (unsigned d = 0; d < workers; ++d) threads.emplace_back(run, d);
    }
    if (error) std::rethrow_exception(error);
}

ModelParams parallel_train(const SparseRatings& ratings, const NeighborTable& neighbors, const TrainConfig& config,
                           unsigned workers, const ParallelOptions& options, const EpochCallback& on_epoch) {
    auto params = init_params(ratings.rows(), ratings.cols(), neighbors, compute_baselines(ratings), config);
    parallel_train_from(params, ratings, config, workers, options, on_epoch);
    return params;
}

}  // namespace lshmf
