#pragma once

#include <cstdint>
#include <vector>

#include "lshmf/data.hpp"

namespace lshmf {

/// Columns come in `clusters` groups of equal size. Every cluster has a set
/// of `rows_per_cluster` rows and a shared profile over them; each column keeps
/// a row with probability `keep` and rates it profile + noise, rounded and
/// clipped to [1, 5].
struct PlantedClusterSpec {
    Index rows = 1000;
    Index cols = 500;
    Index clusters = 10;
    Index rows_per_cluster = 100;
    double keep = 0.8;
    double noise = 0.5;
    std::uint64_t seed = 0;
};

struct PlantedClusters {
    SparseRatings ratings;
    std::vector<Index> cluster_of;  // per column
};

PlantedClusters planted_clusters(const PlantedClusterSpec& spec);

/// Uniformly placed ratings at the given density, integer values in [1, 5].
SparseRatings random_sparse(Index rows, Index cols, double density, std::uint64_t seed);

/// Exact rank-`rank` matrix A B^T observed at `density` (at least one entry
/// per row and column), factors uniform in [0, 1).
SparseRatings low_rank(Index rows, Index cols, unsigned rank, double density, std::uint64_t seed);

}  // namespace lshmf
