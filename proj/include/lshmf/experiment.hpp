#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/factorization.hpp"
#include "lshmf/lsh.hpp"
#include "lshmf/parallel.hpp"
#include "lshmf/similarity.hpp"

namespace lshmf {

enum class Provider { Gsm, SimLsh, MinHash, RpCos, Random, None };
enum class ModelKind { Basic, Full };

Provider parse_provider(const std::string& name);
std::string provider_name(Provider provider);

struct RunConfig {
    Provider provider = Provider::SimLsh;
    ModelKind model = ModelKind::Full;
    TrainConfig train;
    LshConfig lsh;
    SimilarityConfig similarity;
    unsigned minhash_hashes = 120;
    unsigned minhash_bands = 40;
    unsigned rpcos_planes = 8;
    unsigned workers = 1;
    std::uint64_t seed = 0;

    double test_fraction = 0.1;
    Delimiter delimiter = Delimiter::Auto;
    TransformOptions transform;
    std::optional<double> unscale;

    std::string input;       // raw ratings or LSHMF-R matrix, split internally
    std::string train_path;  // pre-split train side
    std::string test_path;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string hash_state_path;

    /// Copies the shared seed into every component config.
    void propagate_seed();
    void validate() const;
};

/// Applies one `key = value` setting; throws std::invalid_argument on an
/// unknown key or a malformed value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Flat config text: `key = value` per line, `#` starts a comment.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in);

/// Defaults, then the file (if any), then overrides in order. The seed falls
/// back to LSHMF_SEED when neither source sets it.
RunConfig build_run_config(const std::string& config_path,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

/// Raw ratings (parsed and transformed) or an LSHMF-R matrix, by header sniffing.
SparseRatings load_ratings(const std::string& path, Delimiter delimiter, const TransformOptions& transform);

struct LoadedSplit {
    SparseRatings train;
    std::vector<RatingTriplet> test;
};

/// `input` split by test_fraction, or train_path / test_path as given.
LoadedSplit load_split(const RunConfig& config);

struct TopKResult {
    NeighborTable neighbors;
    HashState state;  // populated for simLSH only
    double seconds = 0.0;
    std::size_t aux_bytes = 0;
    std::size_t accumulator_bytes = 0;
};

TopKResult build_topk(const SparseRatings& ratings, const RunConfig& config, Index k, bool keep_accumulators);

struct EpochRow {
    unsigned epoch = 0;
    double wall_seconds = 0.0;
    double train_rmse = 0.0;
    double test_rmse = 0.0;
};

struct ExperimentResult {
    std::vector<EpochRow> epochs;
    double total_seconds = 0.0;
    double final_train_rmse = 0.0;
    double final_test_rmse = 0.0;
    bool has_test = false;
    double best_test_rmse = 0.0;
    ModelParams params;
    TopKResult topk;
    std::vector<StageTiming> stages;
};

/// Neighbors (full model), training with per-epoch RMSE, optional outputs.
ExperimentResult run_experiment(const RunConfig& config, const LoadedSplit& data);
ExperimentResult run_experiment(const RunConfig& config);

void write_metrics_csv(std::ostream& out, const ExperimentResult& result);
void write_stage_csv(std::ostream& out, const std::vector<StageTiming>& stages);

struct BenchRow {
    Provider provider;
    double seconds = 0.0;
    std::size_t aux_bytes = 0;
    std::size_t accumulator_bytes = 0;
};

std::vector<BenchRow> bench_topk(const SparseRatings& ratings, const RunConfig& config,
                                 const std::vector<Provider>& providers);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace lshmf
