#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lshmf/data.hpp"

namespace lshmf {

/// Top-K neighbor table J^K: row j lists K distinct columns, none equal to j.
class NeighborTable {
public:
    NeighborTable() = default;

    /// Validates the table invariants; throws std::invalid_argument.
    NeighborTable(Index columns, Index k, std::vector<Index> entries);

    /// A table with K = 0 over `columns` columns.
    static NeighborTable empty(Index columns) { return NeighborTable(columns, 0, {}); }

    Index columns() const { return columns_; }
    Index k() const { return k_; }
    std::span<const Index> row(Index j) const {
        return std::span<const Index>(entries_).subspan(static_cast<std::size_t>(j) * k_, k_);
    }
    const std::vector<Index>& entries() const { return entries_; }

    bool operator==(const NeighborTable&) const = default;

private:
    Index columns_ = 0;
    Index k_ = 0;
    std::vector<Index> entries_;
};

/// Throws std::invalid_argument unless K <= N - 1 (K = 0 is always valid).
void check_neighbor_count(Index columns, Index k);

/// Mean over rows of |row_a ∩ row_b| / K.
double mean_overlap(const NeighborTable& a, const NeighborTable& b);

/// CSV with a `j,rank,neighbor` header, one line per (column, rank).
void write_neighbors_csv(std::ostream& out, const NeighborTable& table);
NeighborTable read_neighbors_csv(std::istream& in);

struct SimilarityConfig {
    double lambda_rho = 100.0;
    Index k = 32;
    unsigned workers = 1;
};

/// Pearson correlation over the co-rated rows, each column centered by its
/// mean over that set. Degenerate cases (fewer than two co-raters, zero
/// variance) give 0.
double pearson(const SparseRatings& ratings, Index j1, Index j2);

/// n / (n + lambda_rho) * pearson, n the co-rated count.
double shrunk_similarity(const SparseRatings& ratings, Index j1, Index j2, double lambda_rho);

/// Exact Top-K over the full similarity graph. Each row of the similarity
/// matrix is computed from scratch and discarded after selection; ties go to
/// the lower column index.
NeighborTable gsm_topk(const SparseRatings& ratings, const SimilarityConfig& config);

/// Bytes of the dense N x N single-precision similarity matrix the exact
/// method is defined over.
std::size_t gsm_matrix_bytes(Index columns);

/// K uniformly drawn distinct non-self columns per row.
NeighborTable random_topk(Index columns, Index k, std::uint64_t seed);

namespace detail {

/// Pearson from paired samples in a fixed order; shared by every exact path
/// so all of them agree bit for bit.
double pearson_from_pairs(std::span<const double> x, std::span<const double> y);

/// Appends uniformly drawn distinct columns, excluding `self` and everything
/// already in `chosen`, until chosen.size() == k.
void random_supplement(std::vector<Index>& chosen, Index self, Index columns, Index k,
                       std::uint64_t seed);

}  // namespace detail

}  // namespace lshmf
