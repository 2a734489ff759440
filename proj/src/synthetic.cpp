#include "lshmf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "lshmf/random.hpp"

namespace lshmf {

PlantedClusters planted_clusters(const PlantedClusterSpec& spec) {
    if (spec.clusters == 0 || spec.cols % spec.clusters != 0) {
        throw std::invalid_argument("columns must split evenly into clusters");
    }
    if (spec.rows_per_cluster > spec.rows) throw std::invalid_argument("cluster row set larger than M");
    auto rng = seeded_engine(spec.seed, 0xc105);
    const Index width = spec.cols / spec.clusters;
    PlantedClusters out;
    out.cluster_of.resize(spec.cols);
    std::vector<RatingTriplet> triplets;
    std::vector<Index> pool(spec.rows);
    for (Index c = 0; c < spec.clusters; ++c) {
        std::iota(pool.begin(), pool.end(), Index{0});
        for (Index x = 0; x < spec.rows_per_cluster; ++x) {
            std::swap(pool[x], pool[x + uniform_below(rng, spec.rows - x)]);
        }
        std::vector<Index> members(pool.begin(), pool.begin() + spec.rows_per_cluster);
        std::sort(members.begin(), members.end());
        std::vector<double> profile(members.size());
        for (auto& p : profile) p = 1.0 + 4.0 * uniform01(rng);
        for (Index x = 0; x < width; ++x) {
            const Index j = c * width + x;
            out.cluster_of[j] = c;
            for (std::size_t y = 0; y < members.size(); ++y) {
                if (uniform01(rng) >= spec.keep) continue;
                const double v = std::round(profile[y] + spec.noise * standard_normal(rng));
                triplets.push_back({members[y], j, std::clamp(v, 1.0, 5.0)});
            }
        }
    }
    out.ratings = build_indices(std::move(triplets), spec.rows, spec.cols);
    return out;
}

SparseRatings random_sparse(Index rows, Index cols, double density, std::uint64_t seed) {
    if (density < 0.0 || density > 1.0) throw std::invalid_argument("density must be in [0, 1]");
    auto rng = seeded_engine(seed, 0x5a9e);
    const std::uint64_t cells = std::uint64_t{rows} * cols;
    const auto target = static_cast<std::uint64_t>(std::llround(density * static_cast<double>(cells)));
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(target);
    std::vector<RatingTriplet> triplets;
    triplets.reserve(target);
    while (triplets.size() < target) {
        const std::uint64_t cell = uniform_below(rng, cells);
        if (!taken.insert(cell).second) continue;
        triplets.push_back({static_cast<Index>(cell / cols), static_cast<Index>(cell % cols),
                            static_cast<double>(1 + uniform_below(rng, 5))});
    }
    return build_indices(std::move(triplets), rows, cols);
}

SparseRatings low_rank(Index rows, Index cols, unsigned rank, double density, std::uint64_t seed) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("low-rank matrix needs M, N > 0");
    auto rng = seeded_engine(seed, 0x10a4);
    std::vector<double> a(std::size_t{rows} * rank), b(std::size_t{cols} * rank);
    for (auto& x : a) x = uniform01(rng);
    for (auto& x : b) x = uniform01(rng);
    const auto value = [&](Index i, Index j) {
        double s = 0.0;
        for (unsigned f = 0; f < rank; ++f) s += a[std::size_t{i} * rank + f] * b[std::size_t{j} * rank + f];
        return s;
    };
    std::vector<char> present(std::size_t{rows} * cols, 0);
    for (auto& p : present) p = uniform01(rng) < density;
    for (Index i = 0; i < rows; ++i) present[std::size_t{i} * cols + (i % cols)] = 1;
    for (Index j = 0; j < cols; ++j) present[std::size_t{j % rows} * cols + j] = 1;
    std::vector<RatingTriplet> triplets;
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            if (present[std::size_t{i} * cols + j]) triplets.push_back({i, j, value(i, j)});
        }
    }
    return build_indices(std::move(triplets), rows, cols);
}

}  // namespace lshmf
