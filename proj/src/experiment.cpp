#include "lshmf/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lshmf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad number for " + key + ": " + v);
    return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad integer for " + key + ": " + v);
    return x;
}

unsigned to_unsigned(const std::string& key, const std::string& v) {
    const auto x = to_u64(key, v);
    if (x > 0xffffffffu) throw std::invalid_argument(key + " is too large");
    return static_cast<unsigned>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("bad boolean for " + key + ": " + v);
}

void apply_preset(RunConfig& c, const std::string& name) {
    if (name == "ml100k-full") {
        const auto t = TrainConfig::ml100k_full_preset();
        c.model = ModelKind::Full;
        c.train.alpha = t.alpha;
        c.train.beta = t.beta;
        c.train.lambda = t.lambda;
        c.lsh.psi_exponent = 2;
        return;
    }
    const auto dash = name.find('-');
    if (dash == std::string::npos) throw std::invalid_argument("preset must look like movielens-full");
    const auto data = name.substr(0, dash);
    const auto kind = name.substr(dash + 1);
    Dataset d;
    if (data == "netflix") {
        d = Dataset::Netflix;
    } else if (data == "movielens") {
        d = Dataset::MovieLens;
    } else if (data == "yahoo") {
        d = Dataset::Yahoo;
    } else {
        throw std::invalid_argument("unknown preset dataset " + data);
    }
    TrainConfig t;
    if (kind == "basic") {
        t = TrainConfig::basic_preset(d);
        c.model = ModelKind::Basic;
    } else if (kind == "full") {
        t = TrainConfig::full_preset(d);
        c.model = ModelKind::Full;
    } else {
        throw std::invalid_argument("unknown preset model " + kind);
    }
    c.train.alpha = t.alpha;
    c.train.beta = t.beta;
    c.train.lambda = t.lambda;
    c.lsh.psi_exponent = d == Dataset::Yahoo ? 4 : 2;
    if (d == Dataset::Yahoo) {
        c.transform.zero_floor = 0.5;
        c.transform.scale = 20.0;
        c.unscale = 20.0;
    }
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("LSHMF_SEED");
    if (s == nullptr || *s == '\0') return std::nullopt;
    return to_u64("LSHMF_SEED", s);
}

}  // namespace

Provider parse_provider(const std::string& name) {
    if (name == "gsm") return Provider::Gsm;
    if (name == "simlsh") return Provider::SimLsh;
    if (name == "minhash") return Provider::MinHash;
    if (name == "rpcos") return Provider::RpCos;
    if (name == "random") return Provider::Random;
    if (name == "none") return Provider::None;
    throw std::invalid_argument("unknown provider " + name);
}

std::string provider_name(Provider provider) {
    switch (provider) {
        case Provider::Gsm: return "gsm";
        case Provider::SimLsh: return "simlsh";
        case Provider::MinHash: return "minhash";
        case Provider::RpCos: return "rpcos";
        case Provider::Random: return "random";
        case Provider::None: return "none";
    }
    return "?";
}

void RunConfig::propagate_seed() {
    train.seed = seed;
    lsh.seed = seed;
    lsh.workers = workers;
    similarity.workers = workers;
    similarity.k = train.k;
}

void RunConfig::validate() const {
    train.validate();
    if (test_fraction < 0.0 || test_fraction >= 1.0) throw std::invalid_argument("test_fraction must be in [0, 1)");
    if (workers == 0) throw std::invalid_argument("workers must be positive");
    if (provider == Provider::SimLsh) lsh.validate();
    if (provider == Provider::Gsm && similarity.lambda_rho < 0.0) {
        throw std::invalid_argument("lambda_rho must be non-negative");
    }
    if (provider == Provider::MinHash && (minhash_bands == 0 || minhash_hashes % minhash_bands != 0)) {
        throw std::invalid_argument("minhash_hashes must be a positive multiple of minhash_bands");
    }
    if (provider == Provider::RpCos && rpcos_planes == 0) throw std::invalid_argument("rpcos_planes must be positive");
    if (transform.scale && *transform.scale <= 0.0) throw std::invalid_argument("scale must be positive");
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    auto& t = c.train;
    if (key == "preset") {
        apply_preset(c, v);
    } else if (key == "provider") {
        c.provider = parse_provider(v);
    } else if (key == "model") {
        if (v == "basic") {
            c.model = ModelKind::Basic;
        } else if (v == "full") {
            c.model = ModelKind::Full;
        } else {
            throw std::invalid_argument("model must be basic or full");
        }
    } else if (key == "factors") {
        t.factors = to_unsigned(key, v);
    } else if (key == "k") {
        t.k = to_unsigned(key, v);
    } else if (key == "epochs") {
        t.epochs = to_unsigned(key, v);
    } else if (key == "alpha") {
        t.alpha = ParamRates::uniform(to_double(key, v));
    } else if (key == "lambda") {
        t.lambda = ParamRates::uniform(to_double(key, v));
    } else if (key == "alpha_b") {
        t.alpha.b = to_double(key, v);
    } else if (key == "alpha_b_hat") {
        t.alpha.b_hat = to_double(key, v);
    } else if (key == "alpha_u") {
        t.alpha.u = to_double(key, v);
    } else if (key == "alpha_v") {
        t.alpha.v = to_double(key, v);
    } else if (key == "alpha_w") {
        t.alpha.w = to_double(key, v);
    } else if (key == "alpha_c") {
        t.alpha.c = to_double(key, v);
    } else if (key == "lambda_b") {
        t.lambda.b = to_double(key, v);
    } else if (key == "lambda_b_hat") {
        t.lambda.b_hat = to_double(key, v);
    } else if (key == "lambda_u") {
        t.lambda.u = to_double(key, v);
    } else if (key == "lambda_v") {
        t.lambda.v = to_double(key, v);
    } else if (key == "lambda_w") {
        t.lambda.w = to_double(key, v);
    } else if (key == "lambda_c") {
        t.lambda.c = to_double(key, v);
    } else if (key == "beta") {
        t.beta = to_double(key, v);
    } else if (key == "init_scale") {
        t.init_scale = to_double(key, v);
    } else if (key == "clamp") {
        const auto comma = v.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("clamp must be lo,hi");
        t.clamp = std::make_pair(to_double(key, trim(v.substr(0, comma))), to_double(key, trim(v.substr(comma + 1))));
    } else if (key == "degree_order") {
        t.degree_order = to_bool(key, v);
    } else if (key == "basic_biases") {
        t.basic_biases = to_bool(key, v);
    } else if (key == "racy") {
        t.racy = to_bool(key, v);
    } else if (key == "workers") {
        c.workers = to_unsigned(key, v);
        t.workers = c.workers;
    } else if (key == "seed") {
        c.seed = to_u64(key, v);
    } else if (key == "lsh_bits") {
        c.lsh.bits = to_unsigned(key, v);
    } else if (key == "lsh_p") {
        c.lsh.maps_per_group = to_unsigned(key, v);
    } else if (key == "lsh_q") {
        c.lsh.groups = to_unsigned(key, v);
    } else if (key == "psi_exponent") {
        c.lsh.psi_exponent = to_unsigned(key, v);
    } else if (key == "lambda_rho") {
        c.similarity.lambda_rho = to_double(key, v);
    } else if (key == "minhash_hashes") {
        c.minhash_hashes = to_unsigned(key, v);
    } else if (key == "minhash_bands") {
        c.minhash_bands = to_unsigned(key, v);
    } else if (key == "rpcos_planes") {
        c.rpcos_planes = to_unsigned(key, v);
    } else if (key == "test_fraction") {
        c.test_fraction = to_double(key, v);
    } else if (key == "delimiter") {
        c.delimiter = parse_delimiter(raw == "\t" ? raw : v);
    } else if (key == "zero_floor") {
        c.transform.zero_floor = to_double(key, v);
    } else if (key == "scale") {
        c.transform.scale = to_double(key, v);
    } else if (key == "unscale") {
        c.unscale = to_double(key, v);
    } else if (key == "input") {
        c.input = v;
    } else if (key == "train") {
        c.train_path = v;
    } else if (key == "test") {
        c.test_path = v;
    } else if (key == "metrics") {
        c.metrics_path = v;
    } else if (key == "checkpoint") {
        c.checkpoint_path = v;
    } else if (key == "hash_state") {
        c.hash_state_path = v;
    } else {
        throw std::invalid_argument("unknown setting " + key);
    }
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(line_no, "empty key");
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

RunConfig build_run_config(const std::string& config_path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig c;
    bool seeded = false;
    const auto apply_all = [&](const std::vector<std::pair<std::string, std::string>>& settings) {
        // presets first so explicit rates in the same source win
        for (const auto& [k, v] : settings) {
            if (k == "preset") apply_setting(c, k, v);
        }
        for (const auto& [k, v] : settings) {
            if (k == "preset") continue;
            apply_setting(c, k, v);
            seeded = seeded || k == "seed";
        }
    };
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config " + config_path);
        apply_all(parse_config_text(in));
    }
    apply_all(overrides);
    if (!seeded) {
        if (const auto s = env_seed()) c.seed = *s;
    }
    c.propagate_seed();
    c.validate();
    return c;
}

SparseRatings load_ratings(const std::string& path, Delimiter delimiter, const TransformOptions& transform) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string head(7, '\0');
    in.read(head.data(), 7);
    in.clear();
    in.seekg(0);
    if (head == "LSHMF-R") return read_matrix(in);
    auto parsed = parse_ratings(in, delimiter);
    parsed.triplets = transform_ratings(std::move(parsed.triplets), transform);
    return build_indices(std::move(parsed));
}

LoadedSplit load_split(const RunConfig& config) {
    LoadedSplit out;
    if (!config.train_path.empty()) {
        out.train = load_matrix_file(config.train_path);
        if (!config.test_path.empty()) {
            std::ifstream in(config.test_path);
            if (!in) throw std::runtime_error("cannot open " + config.test_path);
            Index m = 0, n = 0;
            out.test = read_triplets(in, &m, &n);
            for (const auto& t : out.test) {
                if (t.row >= out.train.rows() || t.col >= out.train.cols()) {
                    throw std::runtime_error("test triplet outside the training index space");
                }
            }
        }
        return out;
    }
    if (config.input.empty()) throw std::invalid_argument("need input or train");
    auto full = load_ratings(config.input, config.delimiter, config.transform);
    auto split = split_holdout(full, config.test_fraction, config.seed);
    out.train = std::move(split.train);
    out.test = std::move(split.test);
    return out;
}

TopKResult build_topk(const SparseRatings& ratings, const RunConfig& config, Index k, bool keep_accumulators) {
    TopKResult r;
    const Index n = ratings.cols();
    const auto start = Clock::now();
    switch (config.provider) {
        case Provider::Gsm: {
            auto sim = config.similarity;
            sim.k = k;
            r.neighbors = gsm_topk(ratings, sim);
            r.aux_bytes = gsm_matrix_bytes(n);
            break;
        }
        case Provider::SimLsh: {
            auto res = simlsh_topk(ratings, config.lsh, k, keep_accumulators);
            r.neighbors = std::move(res.neighbors);
            r.state = std::move(res.state);
            r.aux_bytes = r.state.signature_bytes();
            r.accumulator_bytes = r.state.accumulator_bytes();
            break;
        }
        case Provider::MinHash:
            r.neighbors = minhash_topk(ratings, config.minhash_hashes, config.minhash_bands, k, config.seed);
            r.aux_bytes = std::size_t{n} * config.minhash_hashes * sizeof(std::uint64_t);
            break;
        case Provider::RpCos: {
            r.neighbors = rpcos_topk(ratings, config.rpcos_planes, config.lsh.maps_per_group, config.lsh.groups, k,
                                     config.seed);
            const std::size_t words = (config.rpcos_planes + 63) / 64;
            r.aux_bytes = std::size_t{n} * config.lsh.maps_per_group * config.lsh.groups * words * sizeof(std::uint64_t);
            break;
        }
        case Provider::Random:
            r.neighbors = random_topk(n, k, config.seed);
            break;
        case Provider::None:
            r.neighbors = NeighborTable::empty(n);
            break;
    }
    r.seconds = seconds_since(start);
    return r;
}

ExperimentResult run_experiment(const RunConfig& config, const LoadedSplit& data) {
    config.validate();
    ExperimentResult result;
    const auto& train = data.train;
    const EvalOptions eval{config.train.clamp, config.unscale};
    const auto start = Clock::now();
    double eval_seconds = 0.0;

    SplitCache train_cache, test_cache;
    const auto record = [&](unsigned epoch, const ModelParams& params) {
        const auto t0 = Clock::now();
        if (epoch == 0) {
            train_cache = SplitCache(params, train, train.triplets());
            test_cache = SplitCache(params, train, data.test);
        }
        EpochRow row;
        row.epoch = epoch;
        row.wall_seconds = std::chrono::duration<double>(t0 - start).count() - eval_seconds;
        row.train_rmse = train.nnz() ? rmse(params, train.triplets(), train_cache, eval) : 0.0;
        row.test_rmse = data.test.empty() ? 0.0 : rmse(params, data.test, test_cache, eval);
        result.epochs.push_back(row);
        eval_seconds += seconds_since(t0);
    };

    if (config.model == ModelKind::Basic) {
        result.params = init_basic(train, config.train);
        train_basic_from(result.params, train, config.train, record);
    } else {
        const Index k = config.provider == Provider::None ? 0 : config.train.k;
        result.topk = build_topk(train, config, k, !config.hash_state_path.empty());
        result.params =
            init_params(train.rows(), train.cols(), result.topk.neighbors, compute_baselines(train), config.train);
        ParallelOptions opts;
        opts.stage_timings = &result.stages;
        parallel_train_from(result.params, train, config.train, config.workers, opts, record);
    }
    result.total_seconds = seconds_since(start) - eval_seconds;
    result.final_train_rmse = train.nnz() ? rmse(result.params, train.triplets(), train, eval) : 0.0;
    result.final_test_rmse = data.test.empty() ? 0.0 : rmse(result.params, data.test, train, eval);
    result.has_test = !data.test.empty();
    result.best_test_rmse = result.final_test_rmse;
    for (const auto& row : result.epochs) result.best_test_rmse = std::min(result.best_test_rmse, row.test_rmse);

    if (!config.metrics_path.empty()) {
        std::ofstream out(config.metrics_path);
        if (!out) throw std::runtime_error("cannot open " + config.metrics_path);
        write_metrics_csv(out, result);
        if (!result.stages.empty()) {
            std::ofstream st(config.metrics_path + ".stages.csv");
            if (!st) throw std::runtime_error("cannot open stage timing file");
            write_stage_csv(st, result.stages);
        }
    }
    if (!config.checkpoint_path.empty()) save_model_file(config.checkpoint_path, result.params);
    if (!config.hash_state_path.empty()) {
        if (config.provider != Provider::SimLsh || config.model != ModelKind::Full) {
            throw std::invalid_argument("a hash state is only produced by the full model with simlsh");
        }
        std::ofstream out(config.hash_state_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + config.hash_state_path);
        write_hash_state(out, result.topk.state);
    }
    return result;
}

ExperimentResult run_experiment(const RunConfig& config) { return run_experiment(config, load_split(config)); }

void write_metrics_csv(std::ostream& out, const ExperimentResult& result) {
    out << "epoch,wall_seconds_cumulative,train_rmse,test_rmse\n";
    out.precision(9);
    for (const auto& r : result.epochs) {
        out << r.epoch << ',' << r.wall_seconds << ',' << r.train_rmse << ',' << r.test_rmse << '\n';
    }
    out << "final," << result.total_seconds << ',' << result.final_train_rmse << ',' << result.final_test_rmse << '\n';
}

void write_stage_csv(std::ostream& out, const std::vector<StageTiming>& stages) {
    out << "epoch,stage,seconds\n";
    out.precision(9);
    for (const auto& s : stages) out << s.epoch << ',' << s.stage << ',' << s.seconds << '\n';
}

std::vector<BenchRow> bench_topk(const SparseRatings& ratings, const RunConfig& config,
                                 const std::vector<Provider>& providers) {
    std::vector<BenchRow> rows;
    for (const auto p : providers) {
        auto c = config;
        c.provider = p;
        const auto r = build_topk(ratings, c, config.train.k, p == Provider::SimLsh);
        rows.push_back({p, r.seconds, r.aux_bytes, r.accumulator_bytes});
    }
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "provider,seconds,aux_bytes,accumulator_bytes\n";
    out.precision(6);
    for (const auto& r : rows) {
        out << provider_name(r.provider) << ',' << r.seconds << ',' << r.aux_bytes << ',' << r.accumulator_bytes << '\n';
    }
}

}  // namespace lshmf
