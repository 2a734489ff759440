#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/factorization.hpp"
#include "lshmf/lsh.hpp"
#include "lshmf/similarity.hpp"

namespace lshmf {

/// New rows occupy [old_rows, old_rows + new_rows) and new columns
/// [old_cols, old_cols + new_cols). Every triplet touches at least one of them.
struct IncrementBatch {
    Index old_rows = 0;
    Index old_cols = 0;
    Index new_rows = 0;
    Index new_cols = 0;
    std::vector<RatingTriplet> triplets;

    Index rows() const { return old_rows + new_rows; }
    Index cols() const { return old_cols + new_cols; }
    bool empty() const { return new_rows == 0 && new_cols == 0 && triplets.empty(); }

    /// Throws std::invalid_argument on out-of-range indices or old x old pairs.
    void validate() const;
};

/// Old matrix plus the batch, over the extended index spaces.
SparseRatings merge_increment(const SparseRatings& old, const IncrementBatch& batch);

/// Adds the batch's Ψ(r)·Φ(H_i) terms to old columns and builds new columns
/// from zero, then re-thresholds every touched column. `row_hashes` must cover
/// the extended rows. Contributions are added in ascending row order, so the
/// result equals hashing the merged matrix from scratch.
void update_hashes_incremental(HashState& state, const IncrementBatch& batch, const RowHashes& row_hashes);

/// Neighbor rows for the new columns only, N̄ x K, searched over all columns.
std::vector<Index> topk_for_new(const HashState& state, Index k, Index old_cols, std::uint64_t seed);

/// Old rows verbatim followed by the new rows.
NeighborTable extend_neighbors(const NeighborTable& old, std::span<const Index> new_rows);

/// Appends parameters for the new rows and columns: latent rows drawn as in
/// init_params, biases from batch-local means (0 without ratings), W = C = 0.
void extend_params(ModelParams& params, const IncrementBatch& batch, const NeighborTable& neighbors,
                   const TrainConfig& config);

/// Trains only new-variable parameters on the batch, columns in turn.
void train_incremental(ModelParams& params, const IncrementBatch& batch, const SparseRatings& merged,
                       const TrainConfig& config);

struct OnlineResult {
    SparseRatings merged;
    NeighborTable neighbors;
};

/// Extends hashes, neighbors and parameters, then trains the new variables.
OnlineResult absorb_increment(ModelParams& params, HashState& state, const SparseRatings& old,
                              const IncrementBatch& batch, const TrainConfig& config, std::uint64_t topk_seed);

/// A split of an existing matrix into a base and an increment: a fraction of
/// rows and columns is relabeled to the end of the index spaces and every
/// rating touching them becomes the batch.
struct HeldBackIncrement {
    SparseRatings base;
    IncrementBatch batch;
    std::vector<Index> row_map;  // original -> relabeled
    std::vector<Index> col_map;
};

HeldBackIncrement hold_back_increment(const SparseRatings& full, double row_fraction, double col_fraction,
                                      std::uint64_t seed);

std::vector<RatingTriplet> relabel(std::span<const RatingTriplet> triplets, std::span<const Index> row_map,
                                   std::span<const Index> col_map);

}  // namespace lshmf
