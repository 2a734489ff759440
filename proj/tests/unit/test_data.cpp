#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "lshmf/data.hpp"
#include "lshmf/synthetic.hpp"

using namespace lshmf;

TEST_SUITE("data") {

TEST_CASE("parse remaps ids in first-appearance order") {
    std::istringstream in("7 3 4.0\n7 9 2.0\n");
    const auto p = parse_ratings(in);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 2);
    REQUIRE(p.triplets.size() == 2);
    CHECK(p.triplets[0] == RatingTriplet{0, 0, 4.0});
    CHECK(p.triplets[1] == RatingTriplet{0, 1, 2.0});
    CHECK(p.row_ids.lookup(0) == "7");
    CHECK(p.col_ids.lookup(1) == "9");
}

TEST_CASE("parse handles the supported separators and timestamps") {
    std::istringstream colons("1::10::5::978300760\n2::10::3::978302109\n");
    auto p = parse_ratings(colons, Delimiter::DoubleColon);
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 1);
    CHECK(p.triplets[1].value == 3.0);

    std::istringstream tabs("196\t242\t3\t881250949\n186\t302\t3\t891717742\n");
    p = parse_ratings(tabs);
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 2);

    std::istringstream commas("a,b,1.5\n\nc,b,2\n");
    p = parse_ratings(commas, Delimiter::Comma);
    CHECK(p.triplets.size() == 2);
    CHECK(p.triplets[0].value == 1.5);
}

TEST_CASE("empty stream") {
    std::istringstream in("");
    const auto p = parse_ratings(in);
    CHECK(p.rows() == 0);
    CHECK(p.cols() == 0);
    CHECK(p.triplets.empty());
}

TEST_CASE("malformed lines report their line number") {
    std::istringstream in("1 2 3\n1 2\n");
    try {
        parse_ratings(in);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream bad_value("1 2 x\n");
    CHECK_THROWS_AS(parse_ratings(bad_value), ParseError);
    std::istringstream inf("1 2 inf\n");
    CHECK_THROWS_AS(parse_ratings(inf), ParseError);
}

TEST_CASE("transform") {
    std::vector<RatingTriplet> t{{0, 0, 0.0}, {0, 1, 100.0}, {1, 0, 3.0}};
    auto out = transform_ratings(t, {});
    CHECK(out[2].value == 3.0);
    out = transform_ratings(t, {0.5, std::nullopt});
    CHECK(out[0].value == 0.5);
    out = transform_ratings(t, {std::nullopt, 20.0});
    CHECK(out[1].value == 5.0);
    out = transform_ratings(t, {0.5, 20.0});
    CHECK(out[0].value == doctest::Approx(0.025));
}

TEST_CASE("build_indices slices") {
    const auto r = build_indices({{0, 0, 1.0}, {1, 0, 2.0}}, 2, 1);
    REQUIRE(r.col(0).size() == 2);
    CHECK(r.col(0)[0].index == 0);
    CHECK(r.col(0)[1].index == 1);
    CHECK(r.row(0).size() == 1);
    CHECK(r.row(1).size() == 1);
    CHECK(r.row(1)[0].index == 0);

    const auto empty = build_indices({}, 2, 2);
    for (Index x = 0; x < 2; ++x) {
        CHECK(empty.row(x).empty());
        CHECK(empty.col(x).empty());
    }
}

TEST_CASE("build_indices rejects duplicates and bad entries") {
    CHECK_THROWS_AS(build_indices({{0, 0, 1.0}, {0, 0, 2.0}}, 1, 1), BuildError);
    CHECK_THROWS_AS(build_indices({{2, 0, 1.0}}, 2, 2), BuildError);
    CHECK_THROWS_AS(build_indices({{0, 0, NAN}}, 1, 1), BuildError);
}

TEST_CASE("slice lengths sum to the triplet count") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = random_sparse(3, 3, 0.6, seed);
        std::size_t by_row = 0, by_col = 0;
        for (Index i = 0; i < r.rows(); ++i) by_row += r.row(i).size();
        for (Index j = 0; j < r.cols(); ++j) by_col += r.col(j).size();
        CHECK(by_row == r.nnz());
        CHECK(by_col == r.nnz());
        for (const auto& t : r.triplets()) CHECK(r.find(t.row, t.col) == t.value);
    }
}

TEST_CASE("split_holdout") {
    const auto r = random_sparse(20, 20, 0.25, 3);
    REQUIRE(r.nnz() == 100);

    auto s = split_holdout(r, 0.0, 1);
    CHECK(s.test.empty());
    CHECK(s.train.nnz() == r.nnz());

    s = split_holdout(r, 0.1, 1);
    CHECK(s.test.size() == 10);
    CHECK(s.train.nnz() + s.test.size() == r.nnz());

    std::set<std::pair<Index, Index>> seen;
    for (const auto& t : s.train.triplets()) seen.insert({t.row, t.col});
    for (const auto& t : s.test) {
        CHECK(seen.insert({t.row, t.col}).second);
        CHECK(r.find(t.row, t.col) == t.value);
    }
    CHECK(seen.size() == r.nnz());

    const auto again = split_holdout(r, 0.1, 1);
    CHECK(again.test == s.test);
    CHECK_THROWS(split_holdout(r, 1.0, 1));
}

TEST_CASE("split keeps every row and column in training where possible") {
    const auto r = random_sparse(30, 30, 0.2, 9);
    const auto s = split_holdout(r, 0.3, 4);
    for (Index i = 0; i < r.rows(); ++i) {
        if (!r.row(i).empty()) CHECK(!s.train.row(i).empty());
    }
    for (Index j = 0; j < r.cols(); ++j) {
        if (!r.col(j).empty()) CHECK(!s.train.col(j).empty());
    }
}

TEST_CASE("baselines") {
    auto b = compute_baselines(build_indices({{0, 0, 4.0}}, 1, 1));
    CHECK(b.mu == 4.0);
    CHECK(b.b == std::vector<double>{0.0});
    CHECK(b.b_hat == std::vector<double>{0.0});

    b = compute_baselines(build_indices({{0, 0, 2.0}, {1, 0, 4.0}}, 2, 1));
    CHECK(b.mu == 3.0);
    CHECK(b.b == std::vector<double>{-1.0, 1.0});
    CHECK(b.b_hat == std::vector<double>{0.0});

    CHECK_THROWS(compute_baselines(build_indices({}, 2, 2)));
}

TEST_CASE("baseline identities on random data") {
    const auto r = random_sparse(40, 25, 0.2, 11);
    const auto b = compute_baselines(r);
    double total = 0.0;
    std::map<Index, std::pair<double, int>> rows, cols;
    for (const auto& t : r.triplets()) {
        total += t.value;
        rows[t.row].first += t.value;
        rows[t.row].second += 1;
        cols[t.col].first += t.value;
        cols[t.col].second += 1;
    }
    double weighted = 0.0;
    for (Index i = 0; i < r.rows(); ++i) weighted += static_cast<double>(r.row(i).size()) * (b.b[i] + b.mu);
    CHECK(weighted == doctest::Approx(total).epsilon(1e-12));
    for (const auto& [i, s] : rows) CHECK(std::abs(b.b[i] + b.mu - s.first / s.second) < 1e-12);
    for (const auto& [j, s] : cols) CHECK(std::abs(b.b_hat[j] + b.mu - s.first / s.second) < 1e-12);
}

TEST_CASE("matrix text round trip") {
    std::istringstream in("u1 m1 4\nu2 m1 3.5\nu1 m2 1\n");
    const auto r = build_indices(parse_ratings(in));
    std::stringstream buf;
    write_matrix(buf, r);
    CHECK(buf.str().rfind("LSHMF-R v1 2 2 3", 0) == 0);
    const auto back = read_matrix(buf);
    CHECK(back.rows() == r.rows());
    CHECK(back.cols() == r.cols());
    REQUIRE(back.nnz() == r.nnz());
    for (std::size_t x = 0; x < r.nnz(); ++x) CHECK(back.triplets()[x] == r.triplets()[x]);

    std::stringstream tb;
    const std::vector<RatingTriplet> test{{1, 1, 2.25}};
    write_triplets(tb, 5, 6, test);
    Index m = 0, n = 0;
    CHECK(read_triplets(tb, &m, &n) == test);
    CHECK(m == 5);
    CHECK(n == 6);
}

TEST_CASE("delimiter names") {
    CHECK(parse_delimiter("::") == Delimiter::DoubleColon);
    CHECK(parse_delimiter("tab") == Delimiter::Tab);
    CHECK(parse_delimiter(",") == Delimiter::Comma);
    CHECK(parse_delimiter("space") == Delimiter::Space);
    CHECK_THROWS(parse_delimiter(";"));
}

}  // TEST_SUITE
