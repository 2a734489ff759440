#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/experiment.hpp"
#include "lshmf/factorization.hpp"
#include "lshmf/lsh.hpp"
#include "lshmf/online.hpp"
#include "lshmf/similarity.hpp"

using namespace lshmf;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Flags shared by every subcommand. Each shorthand maps onto a config key.
struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> shorthand;

    void attach(CLI::App* app, const std::vector<std::pair<std::string, std::string>>& flags) {
        app->add_option("--config", config_path, "flat key = value config file");
        app->add_option("--set", sets, "key=value override (repeatable)");
        for (const auto& [flag, key] : flags) {
            app->add_option(flag, shorthand[key], "sets `" + key + "`");
        }
    }

    RunConfig build() const {
        Overrides o;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
            o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [key, value] : shorthand) {
            if (!value.empty()) o.emplace_back(key, value);
        }
        return build_run_config(config_path, o);
    }
};

const std::vector<std::pair<std::string, std::string>> kDataFlags = {
    {"--input", "input"}, {"--train", "train"}, {"--test", "test"}, {"--seed", "seed"},
    {"--preset", "preset"}, {"--delimiter", "delimiter"}, {"--test-fraction", "test_fraction"},
};

std::vector<std::pair<std::string, std::string>> with(std::vector<std::pair<std::string, std::string>> extra) {
    extra.insert(extra.begin(), kDataFlags.begin(), kDataFlags.end());
    return extra;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("cannot open " + path);
    return out;
}

void save_triplets(const std::string& path, Index rows, Index cols, std::span<const RatingTriplet> triplets) {
    auto out = open_out(path);
    write_triplets(out, rows, cols, triplets);
}

std::vector<RatingTriplet> load_triplets(const std::string& path, Index* rows, Index* cols) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_triplets(in, rows, cols);
}

SparseRatings train_side(const RunConfig& c) {
    if (!c.train_path.empty()) return load_matrix_file(c.train_path);
    if (c.input.empty()) throw std::invalid_argument("need --train or --input");
    return load_ratings(c.input, c.delimiter, c.transform);
}

// Cold entries fall back to μ plus whichever biases exist.
double rmse_cold(const ModelParams& params, std::span<const RatingTriplet> test, const SparseRatings& ratings,
                 const EvalOptions& eval) {
    if (test.empty()) throw std::invalid_argument("empty test set");
    double sum = 0.0;
    for (const auto& t : test) {
        double pred;
        if (t.row < params.rows() && t.col < params.cols()) {
            pred = predict(t.row, t.col, params, ratings);
        } else {
            pred = params.mu;
            if (t.row < params.rows()) pred += params.b[t.row];
            if (t.col < params.cols()) pred += params.b_hat[t.col];
        }
        if (eval.clamp) pred = std::clamp(pred, eval.clamp->first, eval.clamp->second);
        double truth = t.value;
        if (eval.unscale) {
            pred *= *eval.unscale;
            truth *= *eval.unscale;
        }
        sum += (pred - truth) * (pred - truth);
    }
    return std::sqrt(sum / static_cast<double>(test.size()));
}

int cmd_ingest(const Common& common, const std::string& output) {
    const auto c = common.build();
    if (c.input.empty()) throw std::invalid_argument("ingest needs --input");
    const auto ratings = load_ratings(c.input, c.delimiter, c.transform);
    save_matrix_file(output, ratings);
    std::cout << "rows,cols,nnz\n" << ratings.rows() << ',' << ratings.cols() << ',' << ratings.nnz() << '\n';
    return 0;
}

struct SplitArgs {
    std::string train_out, test_out, increment_out;
    double hold_rows = 0.0, hold_cols = 0.0;
};

int cmd_split(const Common& common, const SplitArgs& a) {
    const auto c = common.build();
    const auto full = train_side(c);
    auto split = split_holdout(full, c.test_fraction, c.seed);
    if (a.hold_rows == 0.0 && a.hold_cols == 0.0) {
        save_matrix_file(a.train_out, split.train);
        save_triplets(a.test_out, split.train.rows(), split.train.cols(), split.test);
        std::cout << "train_nnz,test_nnz\n" << split.train.nnz() << ',' << split.test.size() << '\n';
        return 0;
    }
    if (a.increment_out.empty()) throw std::invalid_argument("--hold-back-* needs --increment-out");
    const auto held = hold_back_increment(split.train, a.hold_rows, a.hold_cols, c.seed);
    save_matrix_file(a.train_out, held.base);
    const auto test = relabel(split.test, held.row_map, held.col_map);
    save_triplets(a.test_out, held.batch.rows(), held.batch.cols(), test);
    save_triplets(a.increment_out, held.batch.rows(), held.batch.cols(), held.batch.triplets);
    std::cout << "base_nnz,increment_nnz,test_nnz,new_rows,new_cols\n"
              << held.base.nnz() << ',' << held.batch.triplets.size() << ',' << test.size() << ','
              << held.batch.new_rows << ',' << held.batch.new_cols << '\n';
    return 0;
}

int cmd_topk(const Common& common, const std::string& output, const std::string& compare,
             const std::string& compare_output) {
    auto c = common.build();
    const auto ratings = train_side(c);
    const auto first = build_topk(ratings, c, c.train.k, false);
    {
        auto out = open_out(output);
        write_neighbors_csv(out, first.neighbors);
    }
    std::cout << "provider,seconds,aux_bytes\n"
              << provider_name(c.provider) << ',' << first.seconds << ',' << first.aux_bytes << '\n';
    if (!compare.empty()) {
        c.provider = parse_provider(compare);
        const auto second = build_topk(ratings, c, c.train.k, false);
        if (!compare_output.empty()) {
            auto out = open_out(compare_output);
            write_neighbors_csv(out, second.neighbors);
        }
        std::cout << provider_name(c.provider) << ',' << second.seconds << ',' << second.aux_bytes << '\n';
        std::cout << "overlap," << mean_overlap(first.neighbors, second.neighbors) << '\n';
    }
    return 0;
}

int cmd_train(const Common& common) {
    const auto c = common.build();
    const auto r = run_experiment(c);
    if (c.metrics_path.empty()) write_metrics_csv(std::cout, r);
    if (!r.has_test) {
        std::cerr << "no test set, " << r.total_seconds << " s\n";
    } else {
        std::cerr << "final test rmse " << r.final_test_rmse << ", best " << r.best_test_rmse << ", "
                  << r.total_seconds << " s\n";
    }
    return 0;
}

int cmd_eval(const Common& common) {
    const auto c = common.build();
    if (c.checkpoint_path.empty() || c.test_path.empty()) throw std::invalid_argument("eval needs --checkpoint and --test");
    const auto params = load_model_file(c.checkpoint_path);
    const auto ratings = train_side(c);
    if (ratings.rows() != params.rows() || ratings.cols() != params.cols()) {
        throw std::invalid_argument("ratings do not match the checkpoint");
    }
    const auto test = load_triplets(c.test_path, nullptr, nullptr);
    std::cout << "rmse\n" << rmse_cold(params, test, ratings, {c.train.clamp, c.unscale}) << '\n';
    return 0;
}

struct OnlineArgs {
    std::string increment, output, hash_state_out;
};

int cmd_online(const Common& common, const OnlineArgs& a) {
    const auto c = common.build();
    if (c.checkpoint_path.empty()) throw std::invalid_argument("online-update needs --checkpoint");
    auto params = load_model_file(c.checkpoint_path);
    const auto base = train_side(c);
    if (base.rows() != params.rows() || base.cols() != params.cols()) {
        throw std::invalid_argument("ratings do not match the checkpoint");
    }

    IncrementBatch batch;
    Index rows = 0, cols = 0;
    batch.triplets = load_triplets(a.increment, &rows, &cols);
    if (rows < base.rows() || cols < base.cols()) throw std::invalid_argument("increment shrinks the matrix");
    batch.old_rows = base.rows();
    batch.old_cols = base.cols();
    batch.new_rows = rows - base.rows();
    batch.new_cols = cols - base.cols();

    HashState state;
    if (!c.hash_state_path.empty()) {
        std::ifstream in(c.hash_state_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + c.hash_state_path);
        state = read_hash_state(in);
    } else {
        state = simlsh_hash_state(base, c.lsh, true);
    }

    std::vector<RatingTriplet> test;
    if (!c.test_path.empty()) test = load_triplets(c.test_path, nullptr, nullptr);
    const EvalOptions eval{c.train.clamp, c.unscale};
    const double before = test.empty() ? 0.0 : rmse_cold(params, test, base, eval);

    const auto result = absorb_increment(params, state, base, batch, c.train, c.seed);
    const double after = test.empty() ? 0.0 : rmse_cold(params, test, result.merged, eval);

    if (!a.output.empty()) save_model_file(a.output, params);
    if (!a.hash_state_out.empty()) {
        auto out = open_out(a.hash_state_out, true);
        write_hash_state(out, state);
    }
    std::cout.precision(9);
    std::cout << "rmse_before,rmse_after,delta\n" << before << ',' << after << ',' << after - before << '\n';
    return 0;
}

int cmd_bench(const Common& common, const std::string& providers, const std::string& output) {
    const auto c = common.build();
    const auto ratings = train_side(c);
    std::vector<Provider> list;
    std::stringstream ss(providers);
    for (std::string p; std::getline(ss, p, ',');) {
        if (!p.empty()) list.push_back(parse_provider(p));
    }
    const auto rows = bench_topk(ratings, c, list);
    if (output.empty()) {
        write_bench_csv(std::cout, rows);
    } else {
        auto out = open_out(output);
        write_bench_csv(out, rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lshmf: neighborhood-aware matrix factorization with simLSH Top-K"};
    app.require_subcommand(1);

    Common c_ingest, c_split, c_topk, c_train, c_eval, c_online, c_bench;
    std::string ingest_out, topk_out, topk_compare, topk_compare_out, bench_providers = "gsm,simlsh,minhash,rpcos,random",
                                                                   bench_out;
    SplitArgs split_args;
    OnlineArgs online_args;

    auto* ingest = app.add_subcommand("ingest", "parse raw ratings into an LSHMF-R matrix");
    c_ingest.attach(ingest, with({{"--scale", "scale"}, {"--zero-floor", "zero_floor"}}));
    ingest->add_option("--output", ingest_out)->required();

    auto* split = app.add_subcommand("split", "train/test holdout, optionally holding back an increment");
    c_split.attach(split, with({}));
    split->add_option("--train-out", split_args.train_out)->required();
    split->add_option("--test-out", split_args.test_out)->required();
    split->add_option("--hold-back-rows", split_args.hold_rows, "fraction of rows moved to the increment");
    split->add_option("--hold-back-cols", split_args.hold_cols, "fraction of columns moved to the increment");
    split->add_option("--increment-out", split_args.increment_out);

    auto* topk = app.add_subcommand("topk", "build a Top-K neighbor table");
    c_topk.attach(topk, with({{"--provider", "provider"}, {"--k", "k"}, {"--workers", "workers"}}));
    topk->add_option("--output", topk_out)->required();
    topk->add_option("--compare", topk_compare, "second provider; reports the mean overlap");
    topk->add_option("--compare-output", topk_compare_out);

    auto* train = app.add_subcommand("train", "train a model and write per-epoch metrics");
    c_train.attach(train, with({{"--provider", "provider"},
                                {"--model", "model"},
                                {"--k", "k"},
                                {"--factors", "factors"},
                                {"--epochs", "epochs"},
                                {"--workers", "workers"},
                                {"--metrics", "metrics"},
                                {"--checkpoint", "checkpoint"},
                                {"--hash-state", "hash_state"}}));

    auto* eval = app.add_subcommand("eval", "RMSE of a checkpoint on a test file");
    c_eval.attach(eval, with({{"--checkpoint", "checkpoint"}}));

    auto* online = app.add_subcommand("online-update", "absorb new rows and columns into a trained model");
    c_online.attach(online, with({{"--checkpoint", "checkpoint"},
                                  {"--hash-state", "hash_state"},
                                  {"--epochs", "epochs"},
                                  {"--k", "k"},
                                  {"--factors", "factors"}}));
    online->add_option("--increment", online_args.increment, "triplets over the extended index space")->required();
    online->add_option("--output", online_args.output, "updated checkpoint");
    online->add_option("--hash-state-out", online_args.hash_state_out);

    auto* bench = app.add_subcommand("bench-topk", "time and auxiliary space of each Top-K provider");
    c_bench.attach(bench, with({{"--k", "k"}, {"--workers", "workers"}}));
    bench->add_option("--providers", bench_providers, "comma separated");
    bench->add_option("--output", bench_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(c_ingest, ingest_out);
        if (*split) return cmd_split(c_split, split_args);
        if (*topk) return cmd_topk(c_topk, topk_out, topk_compare, topk_compare_out);
        if (*train) return cmd_train(c_train);
        if (*eval) return cmd_eval(c_eval);
        if (*online) return cmd_online(c_online, online_args);
        if (*bench) return cmd_bench(c_bench, bench_providers, bench_out);
    } catch (const std::exception& e) {
        std::cerr << "lshmf: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
