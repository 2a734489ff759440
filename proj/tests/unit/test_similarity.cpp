#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lshmf/similarity.hpp"
#include "lshmf/synthetic.hpp"

using namespace lshmf;

namespace {

// Straight two-pass Pearson over the co-rated rows.
double pearson_oracle(const SparseRatings& r, Index a, Index b) {
    std::vector<double> x, y;
    for (Index i = 0; i < r.rows(); ++i) {
        const auto va = r.find(i, a);
        const auto vb = r.find(i, b);
        if (va && vb) {
            x.push_back(*va);
            y.push_back(*vb);
        }
    }
    if (x.size() < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::size_t co_rated(const SparseRatings& r, Index a, Index b) {
    std::size_t n = 0;
    for (Index i = 0; i < r.rows(); ++i) n += r.find(i, a) && r.find(i, b);
    return n;
}

void check_table(const NeighborTable& t) {
    for (Index j = 0; j < t.columns(); ++j) {
        const auto row = t.row(j);
        std::set<Index> s(row.begin(), row.end());
        CHECK(s.size() == t.k());
        CHECK(!s.count(j));
        for (const auto x : row) CHECK(x < t.columns());
    }
}

SparseRatings columns_of(const std::vector<std::vector<double>>& cols) {
    std::vector<RatingTriplet> t;
    for (Index j = 0; j < cols.size(); ++j) {
        for (Index i = 0; i < cols[j].size(); ++i) t.push_back({i, j, cols[j][i]});
    }
    return build_indices(std::move(t), static_cast<Index>(cols[0].size()), static_cast<Index>(cols.size()));
}

}  // namespace

TEST_SUITE("similarity") {

TEST_CASE("pearson extremes") {
    const auto r = columns_of({{1, 2, 3}, {1, 2, 3}, {3, 2, 1}});
    CHECK(pearson(r, 0, 1) == doctest::Approx(1.0));
    CHECK(pearson(r, 0, 2) == doctest::Approx(-1.0));
}

TEST_CASE("pearson against the straight formula") {
    const auto r = columns_of({{1, 2, 4}, {2, 2, 5}});
    const double expected = pearson_oracle(r, 0, 1);
    CHECK(pearson(r, 0, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.9449111825));

    const auto big = random_sparse(60, 12, 0.4, 5);
    for (Index a = 0; a < big.cols(); ++a) {
        for (Index b = 0; b < big.cols(); ++b) {
            if (a == b) continue;
            CHECK(pearson(big, a, b) == doctest::Approx(pearson_oracle(big, a, b)).epsilon(1e-10));
        }
    }
}

TEST_CASE("pearson degenerate cases give zero") {
    // one co-rated row, and a constant column
    const auto r = build_indices({{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {2, 1, 4}, {0, 2, 5}, {1, 2, 5}}, 3, 3);
    CHECK(pearson(r, 0, 1) == 0.0);
    CHECK(pearson(r, 0, 2) == 0.0);
}

TEST_CASE("shrinkage") {
    CHECK(shrunk_similarity(build_indices({{0, 0, 1}, {1, 1, 1}}, 2, 2), 0, 1, 100) == 0.0);

    std::vector<double> up(100), same(100);
    for (int i = 0; i < 100; ++i) up[i] = same[i] = 1 + i % 5;
    const auto r = columns_of({up, same});
    CHECK(shrunk_similarity(r, 0, 1, 100) == doctest::Approx(0.5));

    const auto big = random_sparse(80, 10, 0.5, 2);
    for (Index a = 0; a + 1 < big.cols(); ++a) {
        const double n = static_cast<double>(co_rated(big, a, a + 1));
        CHECK(shrunk_similarity(big, a, a + 1, 100) ==
              doctest::Approx(n / (n + 100) * pearson_oracle(big, a, a + 1)).epsilon(1e-10));
    }
    // y = x + sqrt(3) z with z orthogonal to x and |z| = |x| gives ρ = 1/2
    std::vector<double> x(300), y(300);
    const double px[4] = {1, 1, -1, -1}, pz[4] = {1, -1, 1, -1};
    for (int i = 0; i < 300; ++i) {
        x[i] = 3 + px[i % 4];
        y[i] = 3 + px[i % 4] + std::sqrt(3.0) * pz[i % 4];
    }
    const auto half = columns_of({x, y});
    CHECK(pearson(half, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(shrunk_similarity(half, 0, 1, 100) == doctest::Approx(0.375).epsilon(1e-12));
}

TEST_CASE("shrunk similarity is symmetric and bounded") {
    const auto r = random_sparse(50, 10, 0.5, 8);
    for (Index a = 0; a < r.cols(); ++a) {
        for (Index b = a + 1; b < r.cols(); ++b) {
            const double s = shrunk_similarity(r, a, b, 100);
            CHECK(s == shrunk_similarity(r, b, a, 100));
            CHECK(std::abs(s) <= std::abs(pearson(r, a, b)) + 1e-15);
            CHECK(std::abs(pearson(r, a, b)) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("gsm_topk with forced membership") {
    const auto r = random_sparse(10, 3, 0.8, 1);
    const auto t = gsm_topk(r, {100.0, 2, 1});
    check_table(t);
    for (Index j = 0; j < 3; ++j) {
        const auto row = t.row(j);
        CHECK(shrunk_similarity(r, j, row[0], 100) >= shrunk_similarity(r, j, row[1], 100));
    }
}

TEST_CASE("gsm_topk ties go to the lower index") {
    // disjoint supports, every similarity is zero
    std::vector<RatingTriplet> t;
    for (Index j = 0; j < 6; ++j) t.push_back({j, j, 3.0});
    const auto table = gsm_topk(build_indices(t, 6, 6), {100.0, 3, 1});
    CHECK(std::vector<Index>(table.row(0).begin(), table.row(0).end()) == std::vector<Index>{1, 2, 3});
    CHECK(std::vector<Index>(table.row(2).begin(), table.row(2).end()) == std::vector<Index>{0, 1, 3});
    CHECK(std::vector<Index>(table.row(5).begin(), table.row(5).end()) == std::vector<Index>{0, 1, 2});
}

TEST_CASE("gsm_topk equals a brute-force sort") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = random_sparse(8, 6, 0.6, seed);
        const Index k = 3;
        const auto table = gsm_topk(r, {100.0, k, 2});
        for (Index j = 0; j < 6; ++j) {
            std::vector<std::pair<double, Index>> all;
            for (Index x = 0; x < 6; ++x) {
                if (x != j) all.push_back({-shrunk_similarity(r, j, x, 100), x});
            }
            std::sort(all.begin(), all.end());
            for (Index rank = 0; rank < k; ++rank) CHECK(table.row(j)[rank] == all[rank].second);
        }
    }
}

TEST_CASE("gsm_topk is independent of worker count and input order") {
    const auto r = random_sparse(40, 30, 0.3, 4);
    const auto a = gsm_topk(r, {100.0, 5, 1});
    const auto b = gsm_topk(r, {100.0, 5, 3});
    CHECK(a == b);
    std::vector<RatingTriplet> rev(r.triplets().rbegin(), r.triplets().rend());
    CHECK(gsm_topk(build_indices(rev, r.rows(), r.cols()), {100.0, 5, 1}) == a);
}

TEST_CASE("gsm_topk rejects K > N - 1") {
    CHECK_THROWS_AS(gsm_topk(random_sparse(5, 3, 0.8, 1), {100.0, 3, 1}), std::invalid_argument);
}

TEST_CASE("random_topk") {
    const auto t = random_topk(2, 1, 7);
    CHECK(t.row(0)[0] == 1);
    CHECK(t.row(1)[0] == 0);
    CHECK(random_topk(50, 8, 3) == random_topk(50, 8, 3));
    CHECK_FALSE(random_topk(50, 8, 3) == random_topk(50, 8, 4));
    check_table(random_topk(1000, 32, 1));
    CHECK_THROWS(random_topk(4, 4, 1));
}

TEST_CASE("neighbor table validation and csv") {
    CHECK_THROWS(NeighborTable(2, 1, {0, 0}));
    CHECK_THROWS(NeighborTable(3, 2, {1, 1, 0, 2, 0, 1}));
    CHECK_THROWS(NeighborTable(2, 1, {5, 0}));
    const auto t = random_topk(20, 4, 2);
    std::stringstream buf;
    write_neighbors_csv(buf, t);
    CHECK(buf.str().rfind("j,rank,neighbor\n", 0) == 0);
    CHECK(read_neighbors_csv(buf) == t);
}

TEST_CASE("mean overlap") {
    const NeighborTable a(4, 2, {1, 2, 0, 2, 0, 1, 0, 1});
    const NeighborTable b(4, 2, {2, 1, 2, 0, 0, 3, 2, 1});
    // rows share 2, 2, 1 and 1 of 2 entries
    CHECK(mean_overlap(a, b) == doctest::Approx(0.75));
    CHECK(mean_overlap(a, a) == 1.0);
}

}  // TEST_SUITE
