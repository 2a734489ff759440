#include <doctest.h>

#include <algorithm>
#include <set>

#include "lshmf/online.hpp"
#include "lshmf/synthetic.hpp"

using namespace lshmf;

namespace {

// Base params over `base`, neighbors from simLSH, a couple of training epochs.
struct Trained {
    ModelParams params;
    HashState state;
    TrainConfig config;
};

Trained train_base(const SparseRatings& base, std::uint64_t seed) {
    Trained t;
    t.config.factors = 4;
    t.config.k = 5;
    t.config.epochs = 3;
    t.config.seed = seed;
    LshConfig lsh;
    lsh.groups = 10;
    lsh.seed = seed;
    auto res = simlsh_topk(base, lsh, t.config.k);
    t.state = std::move(res.state);
    t.params = train_full(base, res.neighbors, t.config);
    return t;
}

bool prefix_equal(const std::vector<double>& before, const std::vector<double>& after) {
    return after.size() >= before.size() && std::equal(before.begin(), before.end(), after.begin());
}

}  // namespace

TEST_SUITE("online") {

TEST_CASE("accumulators extend by the new terms") {
    // the worked column plus one new row with hash 111 and rating 10
    const std::vector<std::uint64_t> hashes{bits_from_string("001"), bits_from_string("010"),
                                            bits_from_string("100"), bits_from_string("111")};
    const std::vector<Entry> col{{0, 3}, {1, 4}, {2, 5}, {3, 10}};
    const auto sig = simlsh_signature(col, hashes, 3, 1);
    CHECK(sig.accumulator == std::vector<double>{8, 6, 4});
    CHECK(sig.bits == bits_from_string("111"));
}

TEST_CASE("incremental hashing equals recomputation") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto full = random_sparse(120, 90, 0.08, seed);
        const auto held = hold_back_increment(full, 0.1, 0.1, seed);
        LshConfig cfg;
        cfg.groups = 6;
        cfg.seed = seed + 100;
        auto state = simlsh_hash_state(held.base, cfg);
        update_hashes_incremental(state, held.batch, assign_row_hashes(held.batch.rows(), cfg));
        const auto merged = merge_increment(held.base, held.batch);
        CHECK(state == simlsh_hash_state(merged, cfg));
    }
}

TEST_CASE("empty batch leaves the hash state alone") {
    const auto r = random_sparse(40, 30, 0.1, 1);
    LshConfig cfg;
    cfg.groups = 3;
    auto state = simlsh_hash_state(r, cfg);
    const auto before = state;
    IncrementBatch empty{r.rows(), r.cols(), 0, 0, {}};
    update_hashes_incremental(state, empty, assign_row_hashes(r.rows(), cfg));
    CHECK(state == before);
}

TEST_CASE("incremental hashing needs accumulators") {
    const auto r = random_sparse(40, 30, 0.1, 1);
    auto state = simlsh_hash_state(r, LshConfig{}, false);
    IncrementBatch b{r.rows(), r.cols(), 1, 0, {{r.rows(), 0, 3.0}}};
    CHECK_THROWS(update_hashes_incremental(state, b, assign_row_hashes(b.rows(), LshConfig{})));
}

TEST_CASE("batch validation") {
    IncrementBatch b{3, 3, 1, 1, {{0, 0, 1.0}}};
    CHECK_THROWS(b.validate());
    b.triplets = {{3, 3, 1.0}, {0, 3, 2.0}, {3, 1, 4.0}};
    CHECK_NOTHROW(b.validate());
    b.triplets = {{4, 0, 1.0}};
    CHECK_THROWS(b.validate());
}

TEST_CASE("a new column identical to an old one finds it") {
    const auto sparse = random_sparse(80, 40, 0.1, 3);
    std::vector<RatingTriplet> t;
    for (const auto& x : sparse.triplets()) {
        if (x.col != 7) t.push_back(x);
    }
    // column 7 is dense; the new column 40 copies it exactly
    for (Index i = 0; i < 80; ++i) t.push_back({i, 7, 1.0 + i % 5});
    const auto base = build_indices(t, 80, 40);
    IncrementBatch batch{80, 40, 0, 1, {}};
    for (const auto& e : base.col(7)) batch.triplets.push_back({e.index, 40, e.value});
    LshConfig cfg;
    cfg.groups = 10;
    cfg.seed = 5;
    auto state = simlsh_hash_state(base, cfg);
    update_hashes_incremental(state, batch, assign_row_hashes(80, cfg));
    const auto rows = topk_for_new(state, 4, 40, 1);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == 7);
    CHECK(std::set<Index>(rows.begin(), rows.end()).size() == 4);
    CHECK(std::find(rows.begin(), rows.end(), 40u) == rows.end());
}

TEST_CASE("zero candidates fall back to random neighbors") {
    // the new column rates no row: it hashes to all ones, unlike every old column
    const auto base = low_rank(30, 20, 2, 1.0, 1);
    IncrementBatch batch{30, 20, 0, 1, {}};
    LshConfig cfg;
    cfg.bits = 64;
    cfg.groups = 2;
    auto state = simlsh_hash_state(base, cfg);
    update_hashes_incremental(state, batch, assign_row_hashes(30, cfg));
    const auto rows = topk_for_new(state, 5, 20, 3);
    std::set<Index> s(rows.begin(), rows.end());
    CHECK(s.size() == 5);
    CHECK(!s.count(20));
}

TEST_CASE("extend_neighbors keeps old rows") {
    const auto old = random_topk(10, 3, 1);
    const std::vector<Index> extra{0, 1, 2, 3, 4, 5};
    const auto ext = extend_neighbors(old, extra);
    CHECK(ext.columns() == 12);
    CHECK(std::equal(old.entries().begin(), old.entries().end(), ext.entries().begin()));
    CHECK_THROWS(extend_neighbors(old, std::vector<Index>{1, 2}));
}

TEST_CASE("absorbing an increment touches only new parameters") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto full = random_sparse(100, 80, 0.1, seed + 10);
        const auto held = hold_back_increment(full, 0.05, 0.05, seed);
        auto trained = train_base(held.base, seed);
        const auto before = trained.params;
        auto state = trained.state;
        auto& p = trained.params;
        const auto res = absorb_increment(p, state, held.base, held.batch, trained.config, seed);

        CHECK(p.rows() == held.batch.rows());
        CHECK(p.cols() == held.batch.cols());
        CHECK(p.mu == before.mu);
        CHECK(prefix_equal(before.b, p.b));
        CHECK(prefix_equal(before.b_hat, p.b_hat));
        CHECK(prefix_equal(before.U, p.U));
        CHECK(prefix_equal(before.V, p.V));
        CHECK(prefix_equal(before.W, p.W));
        CHECK(prefix_equal(before.C, p.C));
        CHECK(prefix_equal(before.b0, p.b0));
        CHECK(std::equal(before.neighbors.entries().begin(), before.neighbors.entries().end(),
                         p.neighbors.entries().begin()));
        CHECK(res.neighbors == p.neighbors);
        CHECK(res.merged.nnz() == full.nnz());
        CHECK_NOTHROW(p.check());
    }
}

TEST_CASE("absorbing an empty batch is the identity") {
    const auto base = random_sparse(60, 50, 0.1, 2);
    auto trained = train_base(base, 1);
    const auto before = trained.params;
    const auto state_before = trained.state;
    IncrementBatch empty{base.rows(), base.cols(), 0, 0, {}};
    absorb_increment(trained.params, trained.state, base, empty, trained.config, 1);
    CHECK(trained.params == before);
    CHECK(trained.state == state_before);
}

TEST_CASE("new parameters start from batch-local means") {
    const auto base = random_sparse(30, 20, 0.3, 4);
    auto trained = train_base(base, 2);
    IncrementBatch batch{30, 20, 1, 1, {{30, 0, 5.0}, {30, 1, 3.0}, {2, 20, 1.0}}};
    auto p = trained.params;
    extend_params(p, batch, extend_neighbors(p.neighbors, std::vector<Index>{0, 1, 2, 3, 4}), trained.config);
    CHECK(p.b[30] == doctest::Approx(4.0 - p.mu));
    CHECK(p.b_hat[20] == doctest::Approx(1.0 - p.mu));
    CHECK(p.w(20)[0] == 0.0);
    std::vector<double> expected(4);
    init_latent_row(expected, trained.config.seed, 0, 30, trained.config.scale());
    CHECK(std::equal(expected.begin(), expected.end(), p.u(30).begin()));
}

TEST_CASE("hold back increment") {
    const auto full = random_sparse(50, 40, 0.2, 6);
    const auto held = hold_back_increment(full, 0.1, 0.1, 3);
    CHECK(held.batch.new_rows == 5);
    CHECK(held.batch.new_cols == 4);
    CHECK(held.base.nnz() + held.batch.triplets.size() == full.nnz());
    CHECK_NOTHROW(held.batch.validate());
    const auto merged = merge_increment(held.base, held.batch);
    const auto back = relabel(full.triplets(), held.row_map, held.col_map);
    for (const auto& t : back) CHECK(merged.find(t.row, t.col) == t.value);
}

}  // TEST_SUITE
