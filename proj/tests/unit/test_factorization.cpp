#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lshmf/factorization.hpp"
#include "lshmf/synthetic.hpp"

using namespace lshmf;

namespace {

std::vector<Index> as_vector(std::span<const Index> s) { return {s.begin(), s.end()}; }

// One row, three columns; column 0 has neighbors {1, 2}, row 0 rated column 1.
ModelParams toy_params() {
    ModelParams p;
    p.mu = 3.0;
    p.b = {0.0};
    p.b_hat = {0.0, 0.0, 0.0};
    p.factors = 1;
    p.U = {1.0};
    p.V = {0.5, 0.0, 0.0};
    p.neighbors = NeighborTable(3, 2, {1, 2, 0, 2, 0, 1});
    p.W.assign(6, 0.0);
    p.C.assign(6, 0.0);
    p.b0 = {0.0};
    p.b0_hat = {0.0, 0.0, 0.0};
    return p;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t f = 0; f < a.size(); ++f) s += a[f] * b[f];
    return s;
}

}  // namespace

TEST_SUITE("factorization") {

TEST_CASE("learning rate schedule") {
    CHECK(learning_rate(0.04, 0.3, 0) == 0.04);
    CHECK(learning_rate(0.04, 0.3, 1) == doctest::Approx(0.030769230769).epsilon(1e-10));
    CHECK(learning_rate(0.04, 0.3, 4) == doctest::Approx(0.04 / 3.4).epsilon(1e-14));
    CHECK_THROWS(learning_rate(0.04, 0.3, -1));
    TrainConfig c;
    c.alpha = {1, 2, 3, 4, 5, 6};
    const auto r = learning_rates(c, 4);
    CHECK(r.c == doctest::Approx(6 / 3.4));
    CHECK(r.b == doctest::Approx(1 / 3.4));
}

TEST_CASE("presets") {
    auto c = TrainConfig::basic_preset(Dataset::MovieLens);
    CHECK(c.alpha == ParamRates::uniform(0.04));
    CHECK(c.lambda == ParamRates::uniform(0.035));
    CHECK(c.beta == 0.3);
    c = TrainConfig::basic_preset(Dataset::Yahoo);
    CHECK(c.alpha.u == 0.01);
    CHECK(c.beta == 0.1);
    CHECK(c.lambda.v == 0.02);
    c = TrainConfig::full_preset(Dataset::Netflix);
    CHECK(c.alpha.b == 0.02);
    CHECK(c.alpha.w == 0.001);
    CHECK(c.lambda.b == 0.01);
    CHECK(c.lambda.c == 0.05);
    c = TrainConfig::full_preset(Dataset::MovieLens);
    CHECK(c.alpha.v == 0.035);
    CHECK(c.alpha.c == 0.002);
    CHECK(c.lambda.u == 0.02);
    CHECK(c.lambda.w == 0.002);
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.alpha.w = 0.0;
    CHECK_THROWS(c.validate());
    c.alpha.w = 0.01;
    c.lambda.b = -1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("init params") {
    const auto r = random_sparse(30, 20, 0.2, 1);
    const auto base = compute_baselines(r);
    const auto nb = random_topk(20, 4, 1);
    TrainConfig c;
    c.factors = 8;
    c.k = 4;
    c.seed = 3;
    const auto a = init_params(30, 20, nb, base, c);
    CHECK(a == init_params(30, 20, nb, base, c));
    CHECK(a.mu == base.mu);
    CHECK(a.b == base.b);
    CHECK(a.b0_hat == base.b_hat);
    CHECK(a.W == std::vector<double>(80, 0.0));
    CHECK(a.C.size() == 80);
    for (Index i = 0; i < 30; ++i) {
        for (Index j = 0; j < 20; ++j) {
            const double uv = dot(a.u(i), a.v(j));
            CHECK(uv >= 0.0);
            CHECK(uv <= 1.0);
        }
    }
    c.init_scale = 0.0;
    const auto z = init_params(30, 20, nb, base, c);
    CHECK(z.U == std::vector<double>(240, 0.0));
    CHECK(z.V == std::vector<double>(160, 0.0));
}

TEST_CASE("split neighbors") {
    // K = 4; row 0 rated columns 2 and 4 among neighbors {1, 2, 3, 4}
    const auto r = build_indices({{0, 0, 1}, {0, 2, 1}, {0, 4, 1}, {1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {1, 4, 1}}, 3, 5);
    std::vector<Index> e;
    for (Index j = 0; j < 5; ++j) {
        Index added = 0;
        for (Index x = 0; x < 5 && added < 4; ++x) {
            if (x != j) {
                e.push_back(x);
                ++added;
            }
        }
    }
    const NeighborTable nb(5, 4, e);
    auto s = split_neighbors(0, 0, nb, r);
    CHECK(s.explicit_ranks == std::vector<Index>{1, 3});
    CHECK(s.implicit_ranks == std::vector<Index>{0, 2});
    s = split_neighbors(1, 0, nb, r);
    CHECK(s.implicit_ranks.empty());
    s = split_neighbors(2, 0, nb, r);
    CHECK(s.explicit_ranks.empty());
    CHECK(s.implicit_ranks.size() == 4);
}

TEST_CASE("prediction by hand") {
    auto p = toy_params();
    const auto r = build_indices({{0, 1, 4.0}}, 1, 3);
    p.w(0)[0] = 0.1;
    p.c(0)[1] = 0.2;
    CHECK(predict(0, 0, p, r) == doctest::Approx(3.8).epsilon(1e-15));

    // with W = C = 0 and u·v = 0 only the baseline is left
    auto q = toy_params();
    q.V.assign(3, 0.0);
    q.b = {0.25};
    q.b_hat = {-0.5, 0, 0};
    CHECK(predict(0, 0, q, r) == doctest::Approx(2.75));

    // empty neighbor sets
    auto e = toy_params();
    e.neighbors = NeighborTable::empty(3);
    e.W.clear();
    e.C.clear();
    CHECK(predict(0, 0, e, r) == doctest::Approx(3.5));
}

TEST_CASE("model nesting") {
    const auto r = random_sparse(20, 15, 0.3, 2);
    TrainConfig c;
    c.factors = 4;
    c.k = 3;
    auto p = init_params(20, 15, random_topk(15, 3, 1), compute_baselines(r), c);
    p.mu = 0;
    std::fill(p.b.begin(), p.b.end(), 0.0);
    std::fill(p.b_hat.begin(), p.b_hat.end(), 0.0);
    for (Index i = 0; i < 20; ++i) {
        for (Index j = 0; j < 15; ++j) CHECK(predict(i, j, p, r) == dot(p.u(i), p.v(j)));
    }
}

TEST_CASE("scalar update by hand") {
    ModelParams p;
    p.b = {0};
    p.b_hat = {0};
    p.factors = 1;
    p.U = {1};
    p.V = {2};
    p.neighbors = NeighborTable::empty(1);
    p.b0 = {0};
    p.b0_hat = {0};
    const auto r = build_indices({{0, 0, 4}}, 1, 1);
    SampleWorkspace ws;
    ParamRates gamma{0, 0, 0.1, 0.1, 0, 0};
    const double e = sgd_update(0, 0, 4, p, gamma, ParamRates{}, r, ws);
    CHECK(e == 2);
    CHECK(p.U[0] == doctest::Approx(1.4));
    CHECK(p.V[0] == doctest::Approx(2.2));
}

TEST_CASE("zero error and zero regularization leave params unchanged") {
    auto p = toy_params();
    const auto r = build_indices({{0, 0, 3.5}, {0, 1, 4.0}}, 1, 3);
    const auto before = p;
    SampleWorkspace ws;
    CHECK(sgd_update(0, 0, 3.5, p, ParamRates::uniform(0.1), ParamRates{}, r, ws) == 0.0);
    CHECK(p == before);
}

TEST_CASE("update directions match finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto r = random_sparse(6, 6, 0.6, trial);
        TrainConfig c;
        c.factors = 1 + trial % 3 * 3;
        c.k = trial % 3 == 0 ? 0 : 2 + 2 * (trial % 2);
        const auto nb = c.k ? random_topk(6, c.k, trial) : NeighborTable::empty(6);
        auto p = init_params(6, 6, nb, compute_baselines(r), c);
        for (auto* v : {&p.b, &p.b_hat, &p.U, &p.V, &p.W, &p.C}) {
            for (auto& x : *v) x = unit(rng);
        }
        const auto& t = r.triplets()[trial % r.nnz()];
        const auto loss = [&](const ModelParams& q) {
            const double e = t.value - predict(t.row, t.col, q, r);
            return e * e;
        };
        auto stepped = p;
        const ParamRates gamma = ParamRates::uniform(1e-3);
        SampleWorkspace ws;
        sgd_update(t.row, t.col, t.value, stepped, gamma, ParamRates{}, r, ws);

        const auto check_class = [&](std::vector<double> ModelParams::*member) {
            const auto& a = p.*member;
            const auto& b = stepped.*member;
            for (std::size_t x = 0; x < a.size(); ++x) {
                auto plus = p, minus = p;
                const double h = 1e-6;
                (plus.*member)[x] += h;
                (minus.*member)[x] -= h;
                const double fd = -0.5 * (loss(plus) - loss(minus)) / (2 * h);
                const double step = (b[x] - a[x]) / 1e-3;
                if (std::abs(fd) < 1e-7 && std::abs(step) < 1e-7) continue;
                CHECK(std::abs(step - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3));
            }
        };
        check_class(&ModelParams::b);
        check_class(&ModelParams::b_hat);
        check_class(&ModelParams::U);
        check_class(&ModelParams::V);
        check_class(&ModelParams::W);
        check_class(&ModelParams::C);
    }
}

TEST_CASE("update mask restricts classes") {
    const auto r = random_sparse(10, 10, 0.4, 3);
    TrainConfig c;
    c.factors = 3;
    c.k = 2;
    auto p = init_params(10, 10, random_topk(10, 2, 2), compute_baselines(r), c);
    for (auto& w : p.W) w = 0.05;
    const auto before = p;
    SampleWorkspace ws;
    const auto& t = r.triplets()[0];
    sgd_update(t.row, t.col, t.value + 1, p, ParamRates::uniform(0.1), ParamRates::uniform(0.1), r, ws, kUpdateU);
    CHECK(p.V == before.V);
    CHECK(p.W == before.W);
    CHECK(p.b == before.b);
    CHECK(p.U != before.U);
}

TEST_CASE("divergence is reported with its epoch") {
    const auto r = random_sparse(20, 20, 0.3, 1);
    TrainConfig c;
    c.factors = 4;
    c.k = 0;
    c.alpha = ParamRates::uniform(50.0);
    c.beta = 0.0;
    c.epochs = 10;
    try {
        train_basic(r, c);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch() < 10);
    }
}

TEST_CASE("basic training fits a rank-2 matrix") {
    const auto r = low_rank(20, 20, 2, 1.0, 4);
    TrainConfig c;
    c.factors = 2;
    c.k = 0;
    c.alpha = ParamRates::uniform(0.05);
    c.beta = 0.0;
    c.lambda = ParamRates::uniform(0.0);
    c.epochs = 50;
    c.seed = 1;
    const auto p = train_basic(r, c);
    CHECK(rmse(p, r.triplets(), r) < 0.05);
}

TEST_CASE("zero epochs and determinism") {
    const auto r = random_sparse(30, 30, 0.2, 5);
    TrainConfig c;
    c.factors = 4;
    c.k = 0;
    c.epochs = 0;
    c.seed = 2;
    CHECK(train_basic(r, c) == init_basic(r, c));
    c.epochs = 3;
    CHECK(train_basic(r, c) == train_basic(r, c));

    c.k = 4;
    const auto nb = random_topk(30, 4, 1);
    c.epochs = 0;
    CHECK(train_full(r, nb, c) == init_params(30, 30, nb, compute_baselines(r), c));
    c.epochs = 3;
    CHECK(train_full(r, nb, c) == train_full(r, nb, c));
}

TEST_CASE("K = 0 reduces to the basic model with biases under the same order") {
    const auto r = random_sparse(25, 20, 0.3, 6);
    TrainConfig c;
    c.factors = 3;
    c.k = 0;
    c.epochs = 4;
    c.basic_biases = true;
    c.seed = 9;
    const auto full = train_full(r, NeighborTable::empty(20), c);
    auto basic = init_basic(r, c);
    train_samples(basic, r, column_major(r), c, kUpdateLatent | kUpdateBias | kUpdateBiasHat);
    for (const auto& t : r.triplets()) CHECK(predict(t.row, t.col, full, r) == predict(t.row, t.col, basic, r));
}

TEST_CASE("the neighbor model does at least as well as the basic model on a toy") {
    const auto r = low_rank(50, 30, 3, 0.5, 7);
    const auto split = split_holdout(r, 0.2, 1);
    TrainConfig c;
    c.factors = 3;
    c.epochs = 60;
    c.seed = 1;
    c.alpha = ParamRates{0.02, 0.02, 0.02, 0.02, 0.01, 0.01};
    c.lambda = ParamRates::uniform(0.01);
    c.k = 0;
    const auto basic = train_basic(split.train, c);
    c.k = 4;
    const auto full = train_full(split.train, gsm_topk(split.train, {100.0, 4, 1}), c);
    CHECK(rmse(full, split.test, split.train) <= rmse(basic, split.test, split.train));
}

TEST_CASE("objective decreases with small rates") {
    const auto r = random_sparse(30, 30, 0.3, 8);
    TrainConfig c;
    c.factors = 4;
    c.k = 3;
    c.epochs = 1;
    c.seed = 4;
    c.alpha = ParamRates{0.035, 0.035, 0.035, 0.035, 0.002, 0.002};
    for (auto* x : {&c.alpha.b, &c.alpha.b_hat, &c.alpha.u, &c.alpha.v, &c.alpha.w, &c.alpha.c}) *x *= 1e-2;
    const auto nb = random_topk(30, 3, 2);
    const auto before = init_params(30, 30, nb, compute_baselines(r), c);
    auto after = before;
    train_full_from(after, r, c);
    CHECK(objective(after, r, c.lambda) < objective(before, r, c.lambda));
}

TEST_CASE("rmse") {
    ModelParams p;
    p.mu = 3;
    p.b = {0, 0};
    p.b_hat = {0, 0};
    p.factors = 0;
    p.neighbors = NeighborTable::empty(2);
    p.b0 = p.b;
    p.b0_hat = p.b_hat;
    const auto r = build_indices({{0, 0, 3}}, 2, 2);
    const std::vector<RatingTriplet> exact{{0, 0, 3}, {1, 1, 3}};
    CHECK(rmse(p, exact, r) == 0.0);
    const std::vector<RatingTriplet> one{{0, 1, 4}};
    CHECK(rmse(p, one, r) == 1.0);
    const std::vector<RatingTriplet> two{{0, 1, 4}, {1, 0, 1}};
    CHECK(rmse(p, two, r) == doctest::Approx(std::sqrt(2.5)));
    const std::vector<RatingTriplet> swapped{{1, 0, 1}, {0, 1, 4}};
    CHECK(rmse(p, swapped, r) == rmse(p, two, r));
    CHECK(rmse(p, two, r, {std::pair{3.5, 5.0}, std::nullopt}) == doctest::Approx(std::sqrt((0.25 + 6.25) / 2)));
    CHECK(rmse(p, one, r, {std::nullopt, 20.0}) == doctest::Approx(20.0));
    CHECK_THROWS(rmse(p, std::vector<RatingTriplet>{}, r));

    const SplitCache cache(p, r, two);
    CHECK(rmse(p, two, cache) == rmse(p, two, r));
}

TEST_CASE("auxiliary state holds N*K entries for each of J^K, W, C") {
    const auto r = random_sparse(40, 37, 0.2, 2);
    TrainConfig c;
    c.k = 5;
    const auto p = init_params(40, 37, random_topk(37, 5, 3), compute_baselines(r), c);
    CHECK(p.neighbors.entries().size() == 37u * 5);
    CHECK(p.W.size() == 37u * 5);
    CHECK(p.C.size() == 37u * 5);
}

TEST_CASE("checkpoint round trip") {
    const auto r = random_sparse(15, 12, 0.3, 3);
    TrainConfig c;
    c.factors = 3;
    c.k = 2;
    c.epochs = 2;
    const auto p = train_full(r, random_topk(12, 2, 1), c);
    std::stringstream buf;
    write_model(buf, p);
    CHECK(buf.str().rfind("LSHMF-M v1 15 12 3 2\n", 0) == 0);
    CHECK(read_model(buf) == p);
    std::stringstream bad("LSHMF-M v1 2 2 1 0\n");
    CHECK_THROWS(read_model(bad));
}

TEST_CASE("split cache agrees with direct prediction") {
    const auto r = random_sparse(30, 25, 0.3, 1);
    TrainConfig c;
    c.factors = 2;
    c.k = 6;
    auto p = init_params(30, 25, random_topk(25, 6, 2), compute_baselines(r), c);
    for (auto& w : p.W) w = 0.01;
    for (auto& x : p.C) x = -0.02;
    const auto samples = column_major(r);
    const SplitCache cache(p, r, samples);
    SampleWorkspace ws;
    for (std::size_t x = 0; x < samples.size(); ++x) {
        cache.load(x, samples[x].row, p, ws);
        CHECK(predict_prepared(samples[x].row, samples[x].col, p, ws) == predict(samples[x].row, samples[x].col, p, r));
    }
}

TEST_CASE("column-major order") {
    const auto r = build_indices({{1, 0, 1}, {0, 1, 1}, {0, 0, 1}}, 2, 2);
    const auto s = column_major(r);
    CHECK(s[0] == RatingTriplet{0, 0, 1});
    CHECK(s[1] == RatingTriplet{1, 0, 1});
    CHECK(s[2] == RatingTriplet{0, 1, 1});
    CHECK(as_vector(NeighborTable(2, 1, {1, 0}).row(1)) == std::vector<Index>{0});
}

}  // TEST_SUITE
