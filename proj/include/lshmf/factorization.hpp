#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/similarity.hpp"

namespace lshmf {

/// One value per parameter class: b, b̂, u, v, w, c.
struct ParamRates {
    double b = 0.0;
    double b_hat = 0.0;
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
    double c = 0.0;

    static ParamRates uniform(double x) { return {x, x, x, x, x, x}; }
    bool operator==(const ParamRates&) const = default;
};

enum class Dataset { Netflix, MovieLens, Yahoo };

struct TrainConfig {
    unsigned factors = 32;
    Index k = 32;
    ParamRates alpha{0.035, 0.035, 0.035, 0.035, 0.002, 0.002};
    double beta = 0.3;
    ParamRates lambda{0.02, 0.02, 0.02, 0.02, 0.002, 0.002};
    unsigned epochs = 50;
    std::optional<double> init_scale;  // defaults to 1/sqrt(F)
    std::uint64_t seed = 0;
    std::optional<std::pair<double, double>> clamp;

    // basic model only
    bool degree_order = false;  // heavier rows first
    bool basic_biases = false;  // also train b, b̂ around a fixed μ
    bool racy = false;          // shared-V hogwild threads, not deterministic
    unsigned workers = 1;

    double scale() const;
    void validate() const;

    static TrainConfig basic_preset(Dataset dataset);
    static TrainConfig full_preset(Dataset dataset);
    /// Full model retuned for MovieLens-100K (the full-scale rates barely move W, C there).
    static TrainConfig ml100k_full_preset();
};

/// γ_t = α / (1 + β t^1.5).
double learning_rate(double alpha, double beta, double t);

/// All six class rates at epoch t.
ParamRates learning_rates(const TrainConfig& config, unsigned epoch);

/// Everything the prediction depends on. `b0` / `b0_hat` are the baseline
/// deviations used inside the neighbor residuals r - (μ + b0_i + b0_hat_j1);
/// they are fixed at initialization so the residuals act as data.
struct ModelParams {
    double mu = 0.0;
    std::vector<double> b;
    std::vector<double> b_hat;
    unsigned factors = 0;
    std::vector<double> U;  // M x F
    std::vector<double> V;  // N x F
    std::vector<double> W;  // N x K, aligned with neighbors
    std::vector<double> C;  // N x K
    NeighborTable neighbors;
    std::vector<double> b0;
    std::vector<double> b0_hat;

    Index rows() const { return static_cast<Index>(b.size()); }
    Index cols() const { return static_cast<Index>(b_hat.size()); }
    Index k() const { return neighbors.k(); }

    std::span<double> u(Index i) { return std::span<double>(U).subspan(std::size_t{i} * factors, factors); }
    std::span<const double> u(Index i) const {
        return std::span<const double>(U).subspan(std::size_t{i} * factors, factors);
    }
    std::span<double> v(Index j) { return std::span<double>(V).subspan(std::size_t{j} * factors, factors); }
    std::span<const double> v(Index j) const {
        return std::span<const double>(V).subspan(std::size_t{j} * factors, factors);
    }
    std::span<double> w(Index j) { return std::span<double>(W).subspan(std::size_t{j} * k(), k()); }
    std::span<double> c(Index j) { return std::span<double>(C).subspan(std::size_t{j} * k(), k()); }

    double residual_baseline(Index i, Index j) const { return mu + b0[i] + b0_hat[j]; }

    /// Throws std::invalid_argument when dimensions disagree or a value is not finite.
    void check() const;

    bool operator==(const ModelParams&) const = default;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(unsigned epoch, const std::string& what)
        : std::runtime_error("diverged in epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    unsigned epoch() const { return epoch_; }

private:
    unsigned epoch_;
};

/// μ, b, b̂ from the baselines (also copied to b0, b0_hat); U and V uniform in
/// [0, scale] from per-row streams; W = C = 0.
ModelParams init_params(Index rows, Index cols, const NeighborTable& neighbors, const BaselineStats& baselines,
                        const TrainConfig& config);

/// Latent rows drawn exactly as init_params draws row `index` (tag 0 for U, 1 for V).
void init_latent_row(std::span<double> out, std::uint64_t seed, unsigned tag, Index index, double scale);

/// Ranks of J^K[j] that row i rated (R^K) and the rest (N^K), ascending.
struct NeighborSplit {
    std::vector<Index> explicit_ranks;
    std::vector<Index> implicit_ranks;
};

NeighborSplit split_neighbors(Index i, Index j, const NeighborTable& neighbors, const SparseRatings& ratings);

/// Scratch buffers reused across samples.
struct SampleWorkspace {
    NeighborSplit split;
    std::vector<double> residuals;  // aligned with split.explicit_ranks
};

/// r̂_{i,j}; empty neighbor sets contribute nothing. Neighbor ratings are read
/// from `ratings`. No clamping.
double predict(Index i, Index j, const ModelParams& params, const SparseRatings& ratings);
double predict(Index i, Index j, const ModelParams& params, const SparseRatings& ratings, SampleWorkspace& ws);

/// r̂ from a workspace whose split and residuals are already filled.
double predict_prepared(Index i, Index j, const ModelParams& params, const SampleWorkspace& ws);

/// Explicit neighbor ranks and neighbor ratings for a fixed list of samples,
/// so training epochs skip the rating lookups. Valid while the neighbor table
/// and the ratings stay unchanged.
class SplitCache {
public:
    SplitCache() = default;
    SplitCache(const ModelParams& params, const SparseRatings& ratings, std::span<const RatingTriplet> samples);

    /// Fills ws exactly as predict() would for samples[index].
    void load(std::size_t index, Index i, const ModelParams& params, SampleWorkspace& ws) const;

private:
    Index k_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<Index> ranks_;
    std::vector<Index> neighbors_;
    std::vector<double> values_;
};

enum UpdateMask : unsigned {
    kUpdateBias = 1u << 0,
    kUpdateBiasHat = 1u << 1,
    kUpdateU = 1u << 2,
    kUpdateV = 1u << 3,
    kUpdateW = 1u << 4,
    kUpdateC = 1u << 5,
    kUpdateLatent = kUpdateU | kUpdateV,
    kUpdateAll = 0x3fu,
};

/// One SGD step on the observed r_{i,j}: e from pre-update values, then the
/// six rules (restricted by `mask`). Returns e. Throws std::domain_error on a
/// non-finite error.
double sgd_update(Index i, Index j, double rating, ModelParams& params, const ParamRates& gamma,
                  const ParamRates& lambda, const SparseRatings& ratings, SampleWorkspace& ws,
                  unsigned mask = kUpdateAll);

/// The same step with `ws` already prepared (see SplitCache).
double sgd_update_prepared(Index i, Index j, double rating, ModelParams& params, const ParamRates& gamma,
                           const ParamRates& lambda, const SampleWorkspace& ws, unsigned mask = kUpdateAll);

/// Called after each epoch with its 0-based index.
using EpochCallback = std::function<void(unsigned epoch, const ModelParams& params)>;

/// Basic model U V^T (b, b̂ optional), rows in turn, all of a row's ratings.
ModelParams train_basic(const SparseRatings& ratings, const TrainConfig& config, const EpochCallback& on_epoch = {});
void train_basic_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Initial parameters for the basic model.
ModelParams init_basic(const SparseRatings& ratings, const TrainConfig& config);

/// Full model, columns in turn, all of a column's ratings.
ModelParams train_full(const SparseRatings& ratings, const NeighborTable& neighbors, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});
void train_full_from(ModelParams& params, const SparseRatings& ratings, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

/// Runs `config.epochs` passes over `samples` in the given order.
void train_samples(ModelParams& params, const SparseRatings& ratings, std::span<const RatingTriplet> samples,
                   const TrainConfig& config, unsigned mask, const EpochCallback& on_epoch = {});

/// Column-major sample order (columns ascending, rows ascending within).
std::vector<RatingTriplet> column_major(const SparseRatings& ratings);

/// Throws DivergenceError when any parameter is not finite.
void check_finite(const ModelParams& params, unsigned epoch);

struct EvalOptions {
    std::optional<std::pair<double, double>> clamp;
    std::optional<double> unscale;
};

/// sqrt(mean squared error) over `test`; throws on an empty set.
double rmse(const ModelParams& params, std::span<const RatingTriplet> test, const SparseRatings& ratings,
            const EvalOptions& options = {});

/// Same value with the neighbor splits taken from a cache built over `test`.
double rmse(const ModelParams& params, std::span<const RatingTriplet> test, const SplitCache& cache,
            const EvalOptions& options = {});

/// Σ e² over the ratings plus λ-weighted squared norms of every parameter class.
double objective(const ModelParams& params, const SparseRatings& ratings, const ParamRates& lambda);

/// `LSHMF-M v1 M N F K`, then μ, b, b̂, U, V, W, C as little-endian f64, J^K as
/// little-endian u32, then b0 and b0_hat as f64.
void write_model(std::ostream& out, const ModelParams& params);
ModelParams read_model(std::istream& in);
void save_model_file(const std::string& path, const ModelParams& params);
ModelParams load_model_file(const std::string& path);

}  // namespace lshmf
