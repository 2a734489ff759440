#include "lshmf/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "lshmf/random.hpp"
#include "lshmf/threads.hpp"

namespace lshmf {

NeighborTable::NeighborTable(Index columns, Index k, std::vector<Index> entries)
    : columns_(columns), k_(k), entries_(std::move(entries)) {
    check_neighbor_count(columns, k);
    if (entries_.size() != static_cast<std::size_t>(columns) * k) {
        throw std::invalid_argument("neighbor table needs N*K entries");
    }
    std::vector<Index> sorted(k);
    for (Index j = 0; j < columns; ++j) {
        const auto r = row(j);
        std::copy(r.begin(), r.end(), sorted.begin());
        std::sort(sorted.begin(), sorted.end());
        for (Index x = 0; x < k; ++x) {
            if (sorted[x] >= columns) {
                throw std::invalid_argument("neighbor index out of range in row " + std::to_string(j));
            }
            if (sorted[x] == j) {
                throw std::invalid_argument("row " + std::to_string(j) + " lists itself");
            }
            if (x > 0 && sorted[x] == sorted[x - 1]) {
                throw std::invalid_argument("row " + std::to_string(j) + " repeats a neighbor");
            }
        }
    }
}

void check_neighbor_count(Index columns, Index k) {
    if (k > 0 && static_cast<std::uint64_t>(k) + 1 > columns) {
        throw std::invalid_argument("K = " + std::to_string(k) + " exceeds N - 1 for N = " +
                                    std::to_string(columns));
    }
}

double mean_overlap(const NeighborTable& a, const NeighborTable& b) {
    if (a.columns() != b.columns() || a.k() != b.k()) {
        throw std::invalid_argument("overlap needs tables of equal shape");
    }
    if (a.columns() == 0 || a.k() == 0) return 0.0;
    std::vector<Index> ra(a.k()), rb(b.k());
    double total = 0.0;
    for (Index j = 0; j < a.columns(); ++j) {
        std::copy(a.row(j).begin(), a.row(j).end(), ra.begin());
        std::copy(b.row(j).begin(), b.row(j).end(), rb.begin());
        std::sort(ra.begin(), ra.end());
        std::sort(rb.begin(), rb.end());
        std::size_t common = 0;
        auto x = ra.begin();
        auto y = rb.begin();
        while (x != ra.end() && y != rb.end()) {
            if (*x < *y) {
                ++x;
            } else if (*y < *x) {
                ++y;
            } else {
                ++common, ++x, ++y;
            }
        }
        total += static_cast<double>(common) / a.k();
    }
    return total / a.columns();
}

void write_neighbors_csv(std::ostream& out, const NeighborTable& table) {
    std::string buf = "j,rank,neighbor\n";
    for (Index j = 0; j < table.columns(); ++j) {
        const auto r = table.row(j);
        for (Index k = 0; k < table.k(); ++k) {
            buf += std::to_string(j);
            buf += ',';
            buf += std::to_string(k);
            buf += ',';
            buf += std::to_string(r[k]);
            buf += '\n';
        }
    }
    out << buf;
}

NeighborTable read_neighbors_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("j,rank,neighbor", 0) != 0) {
        throw ParseError(1, "expected `j,rank,neighbor` header");
    }
    struct Row { Index j, rank, neighbor; };
    std::vector<Row> rows;
    Index n = 0, k = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        Row r{};
        if (!(fields >> r.j >> r.rank >> r.neighbor)) {
            throw ParseError(line_no, "malformed neighbor row");
        }
        n = std::max(n, r.j + 1);
        k = std::max(k, r.rank + 1);
        rows.push_back(r);
    }
    if (rows.size() != static_cast<std::size_t>(n) * k) {
        throw ParseError(line_no, "neighbor CSV is not a full N x K table");
    }
    std::vector<Index> entries(static_cast<std::size_t>(n) * k, 0);
    std::vector<char> seen(entries.size(), 0);
    for (const auto& r : rows) {
        const std::size_t slot = static_cast<std::size_t>(r.j) * k + r.rank;
        if (seen[slot]) throw ParseError(line_no, "duplicate (j, rank) pair");
        seen[slot] = 1;
        entries[slot] = r.neighbor;
    }
    return NeighborTable(n, k, std::move(entries));
}

namespace detail {

double pearson_from_pairs(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = x[k] - mx;
        const double dy = y[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void random_supplement(std::vector<Index>& chosen, Index self, Index columns, Index k,
                       std::uint64_t seed) {
    if (chosen.size() >= k) return;
    auto rng = seeded_engine(seed, 0x5199, self);
    auto taken = [&](Index c) {
        return c == self || std::find(chosen.begin(), chosen.end(), c) != chosen.end();
    };
    if (static_cast<std::uint64_t>(columns) > 4ull * (static_cast<std::uint64_t>(k) + 1)) {
        while (chosen.size() < k) {
            const auto c = static_cast<Index>(uniform_below(rng, columns));
            if (!taken(c)) chosen.push_back(c);
        }
        return;
    }
    std::vector<Index> pool;
    pool.reserve(columns);
    for (Index c = 0; c < columns; ++c) {
        if (!taken(c)) pool.push_back(c);
    }
    for (std::size_t x = 0; chosen.size() < k; ++x) {
        const auto pick = x + uniform_below(rng, pool.size() - x);
        std::swap(pool[x], pool[pick]);
        chosen.push_back(pool[x]);
    }
}

}  // namespace detail

double pearson(const SparseRatings& ratings, Index j1, Index j2) {
    const auto a = ratings.col(j1);
    const auto b = ratings.col(j2);
    std::vector<double> x, y;
    auto p = a.begin();
    auto q = b.begin();
    while (p != a.end() && q != b.end()) {
        if (p->index < q->index) {
            ++p;
        } else if (q->index < p->index) {
            ++q;
        } else {
            x.push_back(p->value);
            y.push_back(q->value);
            ++p, ++q;
        }
    }
    return detail::pearson_from_pairs(x, y);
}

namespace {

double shrink(std::size_t n, double rho, double lambda_rho) {
    if (n == 0) return 0.0;
    const double nn = static_cast<double>(n);
    return nn / (nn + lambda_rho) * rho;
}

}  // namespace

double shrunk_similarity(const SparseRatings& ratings, Index j1, Index j2, double lambda_rho) {
    const auto a = ratings.col(j1);
    const auto b = ratings.col(j2);
    std::size_t n = 0;
    auto p = a.begin();
    auto q = b.begin();
    while (p != a.end() && q != b.end()) {
        if (p->index < q->index) {
            ++p;
        } else if (q->index < p->index) {
            ++q;
        } else {
            ++n, ++p, ++q;
        }
    }
    return shrink(n, pearson(ratings, j1, j2), lambda_rho);
}

NeighborTable gsm_topk(const SparseRatings& ratings, const SimilarityConfig& config) {
    const Index n = ratings.cols();
    const Index k = config.k;
    check_neighbor_count(n, k);
    if (config.lambda_rho < 0.0) {
        throw std::invalid_argument("lambda_rho must be non-negative");
    }
    std::vector<Index> entries(static_cast<std::size_t>(n) * k);

    parallel_chunks(n, config.workers, [&](std::size_t begin, std::size_t end) {
        const Index m = ratings.rows();
        std::vector<Index> stamp(m, 0);
        std::vector<double> scattered(m, 0.0);
        std::vector<double> similarity(n, 0.0);
        std::vector<Index> order;
        order.reserve(n);
        std::vector<double> x, y;
        for (std::size_t jj = begin; jj < end; ++jj) {
            const auto j1 = static_cast<Index>(jj);
            for (const auto& e : ratings.col(j1)) {
                stamp[e.index] = j1 + 1;
                scattered[e.index] = e.value;
            }
            for (Index j2 = 0; j2 < n; ++j2) {
                if (j2 == j1) continue;
                x.clear();
                y.clear();
                // co-rated pairs in ascending row order, x from j1, as pearson() builds them
                for (const auto& e : ratings.col(j2)) {
                    if (stamp[e.index] == j1 + 1) {
                        x.push_back(scattered[e.index]);
                        y.push_back(e.value);
                    }
                }
                similarity[j2] = shrink(x.size(), detail::pearson_from_pairs(x, y), config.lambda_rho);
            }
            order.clear();
            for (Index j2 = 0; j2 < n; ++j2) {
                if (j2 != j1) order.push_back(j2);
            }
            const auto better = [&](Index a, Index b) {
                if (similarity[a] != similarity[b]) return similarity[a] > similarity[b];
                return a < b;
            };
            if (k < order.size()) {
                std::nth_element(order.begin(), order.begin() + k, order.end(), better);
            }
            std::sort(order.begin(), order.begin() + k, better);
            std::copy(order.begin(), order.begin() + k, entries.begin() + static_cast<std::ptrdiff_t>(jj * k));
        }
    });
    return NeighborTable(n, k, std::move(entries));
}

std::size_t gsm_matrix_bytes(Index columns) {
    return static_cast<std::size_t>(columns) * columns * sizeof(float);
}

NeighborTable random_topk(Index columns, Index k, std::uint64_t seed) {
    check_neighbor_count(columns, k);
    std::vector<Index> entries;
    entries.reserve(static_cast<std::size_t>(columns) * k);
    std::vector<Index> chosen;
    for (Index j = 0; j < columns; ++j) {
        chosen.clear();
        detail::random_supplement(chosen, j, columns, k, seed);
        entries.insert(entries.end(), chosen.begin(), chosen.end());
    }
    return NeighborTable(columns, k, std::move(entries));
}

}  // namespace lshmf
