#pragma once

#include <cstdint>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/factorization.hpp"
#include "lshmf/similarity.hpp"

namespace lshmf {

/// D x D contiguous blocks; block (r, c) holds its triplets column-major.
struct BlockPartition {
    unsigned workers = 0;
    std::vector<Index> row_bounds;  // D + 1 entries
    std::vector<Index> col_bounds;
    std::vector<std::vector<RatingTriplet>> blocks;  // row block * D + column block

    const std::vector<RatingTriplet>& block(unsigned row_block, unsigned col_block) const {
        return blocks[std::size_t{row_block} * workers + col_block];
    }
    unsigned row_block_of(Index i) const;
    unsigned col_block_of(Index j) const;
};

/// Throws std::invalid_argument unless 1 <= D <= min(M, N).
BlockPartition make_partition(const SparseRatings& ratings, unsigned workers);

/// Worker d in stage s (both 0-based) owns column block d and works on row
/// block (d + s) mod D.
struct RotationSchedule {
    unsigned workers = 0;

    unsigned stages() const { return workers; }
    unsigned row_block(unsigned worker, unsigned stage) const { return (worker + stage) % workers; }
    unsigned col_block(unsigned worker) const { return worker; }
};

RotationSchedule rotation_schedule(unsigned workers);

/// Per (epoch, stage, worker): the rows and columns whose parameters were written.
class WriteTracker {
public:
    struct Touch {
        std::vector<Index> rows;
        std::vector<Index> cols;
        std::size_t samples = 0;
    };

    void reset(unsigned epochs, unsigned stages, unsigned workers);
    Touch& at(unsigned epoch, unsigned stage, unsigned worker);
    const Touch& at(unsigned epoch, unsigned stage, unsigned worker) const;

    unsigned epochs() const { return epochs_; }
    unsigned stages() const { return stages_; }
    unsigned workers() const { return workers_; }

    /// True when no row or column was written by two workers in the same stage.
    bool disjoint() const;
    /// Samples applied in one epoch, summed over stages and workers.
    std::size_t samples_in_epoch(unsigned epoch) const;

private:
    unsigned epochs_ = 0, stages_ = 0, workers_ = 0;
    std::vector<Touch> touches_;
};

struct StageTiming {
    unsigned epoch = 0;
    unsigned stage = 0;
    double seconds = 0.0;
};

struct ParallelOptions {
    WriteTracker* tracker = nullptr;
    std::vector<StageTiming>* stage_timings = nullptr;
};

/// Full-model training on D worker threads following the rotation schedule.
/// Stages are separated by barriers; D = 1 reproduces train_full exactly.
ModelParams parallel_train(const SparseRatings& ratings, const NeighborTable& neighbors, const TrainConfig& config,
                           unsigned workers, const ParallelOptions& options = {}, const EpochCallback& on_epoch = {});
void parallel_train_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                         unsigned workers, const ParallelOptions& options = {}, const EpochCallback& on_epoch = {});

}  // namespace lshmf
