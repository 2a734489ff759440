#include "lshmf/lsh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lshmf/binary_io.hpp"
#include "lshmf/random.hpp"
#include "lshmf/threads.hpp"

namespace lshmf {

namespace {

constexpr std::uint64_t kRowHashTag = 0x4a54;
constexpr std::uint64_t kMinHashTag = 0x6d68;
constexpr std::uint64_t kPlaneTag = 0x7270;
constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

std::uint64_t bit_mask(unsigned bits) {
    return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

void check_same_length(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("signature lengths differ");
}

// Candidate multisets to neighbor rows, in parallel over columns.
NeighborTable topk_from_candidates(CandidateSets& candidates, Index k, Index columns, std::uint64_t seed,
                                   unsigned workers) {
    check_neighbor_count(columns, k);
    std::vector<Index> entries(static_cast<std::size_t>(columns) * k);
    parallel_chunks(columns, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            auto row = detail::frequency_topk(std::move(candidates[j]), static_cast<Index>(j), k, columns, seed);
            std::copy(row.begin(), row.end(), entries.begin() + static_cast<std::ptrdiff_t>(j * k));
            candidates[j] = {};
        }
    });
    return NeighborTable(columns, k, std::move(entries));
}

}  // namespace

void LshConfig::validate() const {
    if (bits < 1 || bits > 64) throw std::invalid_argument("G must be in [1, 64]");
    if (maps_per_group < 1) throw std::invalid_argument("p must be at least 1");
    if (groups < 1) throw std::invalid_argument("q must be at least 1");
    if (psi_exponent != 1 && psi_exponent != 2 && psi_exponent != 4) {
        throw std::invalid_argument("psi exponent must be 1, 2 or 4");
    }
}

double psi(double rating, unsigned exponent) {
    switch (exponent) {
        case 1: return rating;
        case 2: return rating * rating;
        case 4: {
            const double sq = rating * rating;
            return sq * sq;
        }
        default: throw std::invalid_argument("psi exponent must be 1, 2 or 4");
    }
}

std::uint64_t threshold(std::span<const double> accumulator) {
    std::uint64_t bits = 0;
    for (std::size_t g = 0; g < accumulator.size(); ++g) {
        if (accumulator[g] >= 0.0) bits |= std::uint64_t{1} << g;
    }
    return bits;
}

std::uint64_t bits_from_string(std::string_view s) {
    if (s.size() > 64) throw std::invalid_argument("bit string longer than 64");
    std::uint64_t bits = 0;
    for (std::size_t g = 0; g < s.size(); ++g) {
        if (s[g] == '1') {
            bits |= std::uint64_t{1} << g;
        } else if (s[g] != '0') {
            throw std::invalid_argument("bit string may only contain 0 and 1");
        }
    }
    return bits;
}

std::vector<std::uint64_t> row_hash_map(Index rows, const LshConfig& config, unsigned group, unsigned map) {
    auto rng = seeded_engine(config.seed, kRowHashTag, group, map);
    const auto mask = bit_mask(config.bits);
    std::vector<std::uint64_t> out(rows);
    for (auto& h : out) h = rng() & mask;
    return out;
}

RowHashes::RowHashes(Index rows, const LshConfig& config)
    : rows_(rows), groups_(config.groups), maps_(config.maps_per_group), bits_(config.bits) {
    config.validate();
    hashes_.reserve(static_cast<std::size_t>(rows) * groups_ * maps_);
    for (unsigned g = 0; g < groups_; ++g) {
        for (unsigned m = 0; m < maps_; ++m) {
            const auto h = row_hash_map(rows, config, g, m);
            hashes_.insert(hashes_.end(), h.begin(), h.end());
        }
    }
}

std::span<const std::uint64_t> RowHashes::map(unsigned group, unsigned map) const {
    if (group >= groups_ || map >= maps_) throw std::out_of_range("row hash map index");
    const std::size_t slot = static_cast<std::size_t>(group) * maps_ + map;
    return std::span<const std::uint64_t>(hashes_).subspan(slot * rows_, rows_);
}

RowHashes assign_row_hashes(Index rows, const LshConfig& config) { return RowHashes(rows, config); }

ColumnSignature simlsh_signature(std::span<const Entry> column, std::span<const std::uint64_t> row_hashes,
                                 unsigned bits, unsigned psi_exponent) {
    if (bits < 1 || bits > 64) throw std::invalid_argument("G must be in [1, 64]");
    ColumnSignature sig;
    sig.accumulator.assign(bits, 0.0);
    for (const auto& e : column) {
        if (e.index >= row_hashes.size()) throw std::out_of_range("row without a hash");
        const double w = psi(e.value, psi_exponent);
        const std::uint64_t h = row_hashes[e.index];
        for (unsigned b = 0; b < bits; ++b) {
            sig.accumulator[b] += w * (((h >> b) & 1u) ? 1.0 : -1.0);
        }
    }
    sig.bits = threshold(sig.accumulator);
    return sig;
}

ColumnSignature simlsh_signature(const SparseRatings& ratings, Index j, std::span<const std::uint64_t> row_hashes,
                                 unsigned bits, unsigned psi_exponent) {
    return simlsh_signature(ratings.col(j), row_hashes, bits, psi_exponent);
}

namespace detail {

void append_bucket_candidates(std::span<const std::uint64_t> keys, std::size_t words, Index columns,
                              CandidateSets& out, std::span<const char> targets) {
    if (keys.size() != static_cast<std::size_t>(columns) * words) {
        throw std::invalid_argument("bucket keys do not cover every column");
    }
    if (out.size() != columns) out.resize(columns);
    std::vector<Index> order(columns);
    std::iota(order.begin(), order.end(), Index{0});
    const auto key = [&](Index j) { return keys.subspan(static_cast<std::size_t>(j) * words, words); };
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const auto ka = key(a);
        const auto kb = key(b);
        for (std::size_t w = 0; w < words; ++w) {
            if (ka[w] != kb[w]) return ka[w] < kb[w];
        }
        return a < b;
    });
    std::size_t begin = 0;
    while (begin < order.size()) {
        std::size_t end = begin + 1;
        while (end < order.size() && std::ranges::equal(key(order[begin]), key(order[end]))) ++end;
        if (end - begin > 1) {
            for (std::size_t x = begin; x < end; ++x) {
                const Index j = order[x];
                if (!targets.empty() && !targets[j]) continue;
                auto& list = out[j];
                for (std::size_t y = begin; y < end; ++y) {
                    if (y != x) list.push_back(order[y]);
                }
            }
        }
        begin = end;
    }
}

std::vector<Index> frequency_topk(std::vector<Index> candidates, Index self, Index k, Index columns,
                                  std::uint64_t seed) {
    std::sort(candidates.begin(), candidates.end());
    struct Count {
        Index index;
        std::size_t count;
    };
    std::vector<Count> counts;
    for (std::size_t x = 0; x < candidates.size();) {
        std::size_t y = x;
        while (y < candidates.size() && candidates[y] == candidates[x]) ++y;
        if (candidates[x] != self) counts.push_back({candidates[x], y - x});
        x = y;
    }
    const auto better = [](const Count& a, const Count& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.index < b.index;
    };
    const std::size_t take = std::min<std::size_t>(k, counts.size());
    std::partial_sort(counts.begin(), counts.begin() + static_cast<std::ptrdiff_t>(take), counts.end(), better);
    std::vector<Index> chosen;
    chosen.reserve(k);
    for (std::size_t x = 0; x < take; ++x) chosen.push_back(counts[x].index);
    random_supplement(chosen, self, columns, k, seed);
    return chosen;
}

}  // namespace detail

CandidateSets coarse_candidates(std::span<const std::vector<std::uint64_t>> signatures) {
    if (signatures.empty()) return {};
    const std::size_t n = signatures.front().size();
    for (const auto& s : signatures) {
        if (s.size() != n) throw std::invalid_argument("signature arrays cover different column counts");
    }
    const std::size_t p = signatures.size();
    std::vector<std::uint64_t> keys(n * p);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < p; ++m) keys[j * p + m] = signatures[m][j];
    }
    CandidateSets out(n);
    detail::append_bucket_candidates(keys, p, static_cast<Index>(n), out);
    return out;
}

NeighborTable fine_topk(std::span<const CandidateSets> groups, Index k, Index columns, std::uint64_t seed) {
    check_neighbor_count(columns, k);
    CandidateSets merged(columns);
    for (const auto& g : groups) {
        if (g.size() != columns) throw std::invalid_argument("candidate sets cover a different column count");
        for (Index j = 0; j < columns; ++j) merged[j].insert(merged[j].end(), g[j].begin(), g[j].end());
    }
    return topk_from_candidates(merged, k, columns, seed, 1);
}

HashState::HashState(const LshConfig& config, Index columns, bool with_accumulators)
    : config_(config), columns_(columns), dropped_(!with_accumulators) {
    config_.validate();
    const std::size_t slots = static_cast<std::size_t>(config_.groups) * config_.maps_per_group;
    signatures_.assign(slots * columns, bit_mask(config_.bits));
    if (with_accumulators) accumulators_.assign(slots * columns * config_.bits, 0.0);
}

std::span<double> HashState::accumulator(unsigned group, unsigned map, Index j) {
    if (dropped_) throw std::logic_error("hash state was built without accumulators");
    const std::size_t at = (slot(group, map) * columns_ + j) * config_.bits;
    return std::span<double>(accumulators_).subspan(at, config_.bits);
}

std::span<const double> HashState::accumulator(unsigned group, unsigned map, Index j) const {
    if (dropped_) throw std::logic_error("hash state was built without accumulators");
    const std::size_t at = (slot(group, map) * columns_ + j) * config_.bits;
    return std::span<const double>(accumulators_).subspan(at, config_.bits);
}

void HashState::grow_columns(Index columns) {
    if (columns < columns_) throw std::invalid_argument("hash state cannot shrink");
    if (columns == columns_) return;
    const std::size_t slots = static_cast<std::size_t>(config_.groups) * config_.maps_per_group;
    const std::size_t g = config_.bits;
    std::vector<std::uint64_t> sigs(slots * columns, bit_mask(config_.bits));
    std::vector<double> accs(dropped_ ? 0 : slots * columns * g, 0.0);
    for (std::size_t s = 0; s < slots; ++s) {
        std::copy_n(signatures_.begin() + static_cast<std::ptrdiff_t>(s * columns_), columns_,
                    sigs.begin() + static_cast<std::ptrdiff_t>(s * columns));
        if (!dropped_) {
            std::copy_n(accumulators_.begin() + static_cast<std::ptrdiff_t>(s * columns_ * g), columns_ * g,
                        accs.begin() + static_cast<std::ptrdiff_t>(s * columns * g));
        }
    }
    signatures_ = std::move(sigs);
    accumulators_ = std::move(accs);
    columns_ = columns;
}

void write_hash_state(std::ostream& out, const HashState& state) {
    if (!state.has_accumulators()) throw std::invalid_argument("cannot save a hash state without accumulators");
    const auto& c = state.config();
    out << "LSHMF-H v1 " << state.columns() << ' ' << c.bits << ' ' << c.maps_per_group << ' ' << c.groups << ' '
        << c.psi_exponent << ' ' << c.seed << '\n';
    binary::write_all<double>(out, state.raw_accumulators());
    if (!out) throw std::runtime_error("failed writing hash state");
}

HashState read_hash_state(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("missing hash state header");
    std::istringstream header(line);
    std::string magic, version;
    Index n = 0;
    LshConfig config;
    if (!(header >> magic >> version >> n >> config.bits >> config.maps_per_group >> config.groups >>
          config.psi_exponent >> config.seed) ||
        magic != "LSHMF-H" || version != "v1") {
        throw std::runtime_error("bad hash state header");
    }
    HashState state(config, n, true);
    binary::read_into<double>(in, state.accumulators_);
    for (unsigned g = 0; g < config.groups; ++g) {
        for (unsigned m = 0; m < config.maps_per_group; ++m) {
            for (Index j = 0; j < n; ++j) {
                state.set_signature(g, m, j, threshold(std::as_const(state).accumulator(g, m, j)));
            }
        }
    }
    return state;
}

HashState simlsh_hash_state(const SparseRatings& ratings, const LshConfig& config, bool keep_accumulators) {
    config.validate();
    const Index n = ratings.cols();
    const unsigned bits = config.bits;
    HashState state(config, n, keep_accumulators);
    std::vector<double> phi;
    for (unsigned g = 0; g < config.groups; ++g) {
        for (unsigned m = 0; m < config.maps_per_group; ++m) {
            const auto hashes = row_hash_map(ratings.rows(), config, g, m);
            phi.resize(hashes.size() * bits);
            for (std::size_t i = 0; i < hashes.size(); ++i) {
                for (unsigned b = 0; b < bits; ++b) {
                    phi[i * bits + b] = ((hashes[i] >> b) & 1u) ? 1.0 : -1.0;
                }
            }
            parallel_chunks(n, config.workers, [&](std::size_t begin, std::size_t end) {
                double acc[64];
                for (std::size_t jj = begin; jj < end; ++jj) {
                    const auto j = static_cast<Index>(jj);
                    std::fill_n(acc, bits, 0.0);
                    for (const auto& e : ratings.col(j)) {
                        const double w = psi(e.value, config.psi_exponent);
                        const double* row = &phi[static_cast<std::size_t>(e.index) * bits];
                        for (unsigned b = 0; b < bits; ++b) acc[b] += w * row[b];
                    }
                    state.set_signature(g, m, j, threshold(std::span<const double>(acc, bits)));
                    if (keep_accumulators) std::copy_n(acc, bits, state.accumulator(g, m, j).begin());
                }
            });
        }
    }
    return state;
}

CandidateSets simlsh_candidates(const HashState& state) {
    const auto& c = state.config();
    const Index n = state.columns();
    const unsigned p = c.maps_per_group;
    CandidateSets out(n);
    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n) * p);
    for (unsigned g = 0; g < c.groups; ++g) {
        for (unsigned m = 0; m < p; ++m) {
            const auto sigs = state.signatures(g, m);
            for (Index j = 0; j < n; ++j) keys[static_cast<std::size_t>(j) * p + m] = sigs[j];
        }
        detail::append_bucket_candidates(keys, p, n, out);
    }
    return out;
}

SimLshResult simlsh_topk(const SparseRatings& ratings, const LshConfig& config, Index k, bool keep_accumulators) {
    check_neighbor_count(ratings.cols(), k);
    SimLshResult result;
    result.state = simlsh_hash_state(ratings, config, keep_accumulators);
    auto candidates = simlsh_candidates(result.state);
    result.neighbors = topk_from_candidates(candidates, k, ratings.cols(), config.seed, config.workers);
    return result;
}

namespace {

std::uint64_t mod_mersenne61(unsigned __int128 x) {
    std::uint64_t r = static_cast<std::uint64_t>(x & kMersenne61) + static_cast<std::uint64_t>(x >> 61);
    r = (r & kMersenne61) + (r >> 61);
    return r >= kMersenne61 ? r - kMersenne61 : r;
}

struct UniversalHashes {
    std::vector<std::uint64_t> a, b;

    UniversalHashes(unsigned count, std::uint64_t seed) : a(count), b(count) {
        auto rng = seeded_engine(seed, kMinHashTag);
        for (unsigned h = 0; h < count; ++h) {
            a[h] = 1 + uniform_below(rng, kMersenne61 - 1);
            b[h] = uniform_below(rng, kMersenne61);
        }
    }
};

// splitmix64 finalizer; a bare a*x + b over consecutive ids is far from min-wise
std::uint64_t scramble(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void minhash_into(std::span<const Entry> column, const UniversalHashes& f, std::span<std::uint64_t> out) {
    std::fill(out.begin(), out.end(), std::numeric_limits<std::uint64_t>::max());
    for (const auto& e : column) {
        const std::uint64_t x = mod_mersenne61(scramble(e.index));
        for (std::size_t h = 0; h < out.size(); ++h) {
            const auto v = mod_mersenne61(static_cast<unsigned __int128>(f.a[h]) * x + f.b[h]);
            out[h] = std::min(out[h], v);
        }
    }
}

}  // namespace

std::vector<std::uint64_t> minhash_signature(std::span<const Entry> column, unsigned num_hashes,
                                             std::uint64_t seed) {
    const UniversalHashes f(num_hashes, seed);
    std::vector<std::uint64_t> out(num_hashes);
    minhash_into(column, f, out);
    return out;
}

double signature_agreement(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    check_same_length(a, b);
    if (a.empty()) return 0.0;
    std::size_t same = 0;
    for (std::size_t x = 0; x < a.size(); ++x) same += a[x] == b[x];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

NeighborTable minhash_topk(const SparseRatings& ratings, unsigned num_hashes, unsigned bands, Index k,
                           std::uint64_t seed) {
    const Index n = ratings.cols();
    check_neighbor_count(n, k);
    if (bands == 0 || num_hashes == 0 || num_hashes % bands != 0) {
        throw std::invalid_argument("num_hashes must be a positive multiple of bands");
    }
    const unsigned per_band = num_hashes / bands;
    const UniversalHashes f(num_hashes, seed);
    std::vector<std::uint64_t> sigs(static_cast<std::size_t>(n) * num_hashes);
    for (Index j = 0; j < n; ++j) {
        minhash_into(ratings.col(j), f, std::span<std::uint64_t>(sigs).subspan(static_cast<std::size_t>(j) * num_hashes, num_hashes));
    }
    CandidateSets candidates(n);
    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n) * per_band);
    for (unsigned band = 0; band < bands; ++band) {
        for (Index j = 0; j < n; ++j) {
            std::copy_n(sigs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * num_hashes + band * per_band),
                        per_band, keys.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * per_band));
        }
        detail::append_bucket_candidates(keys, per_band, n, candidates);
    }
    return topk_from_candidates(candidates, k, n, seed, 1);
}

std::vector<double> random_planes(Index rows, unsigned planes, std::uint64_t seed, unsigned group, unsigned map) {
    auto rng = seeded_engine(seed, kPlaneTag, group, map);
    std::vector<double> out(static_cast<std::size_t>(rows) * planes);
    for (auto& x : out) x = standard_normal(rng);
    return out;
}

std::vector<std::uint64_t> rpcos_bits(std::span<const Entry> column, std::span<const double> planes,
                                      unsigned plane_count) {
    std::vector<double> dot(plane_count, 0.0);
    for (const auto& e : column) {
        const std::size_t at = static_cast<std::size_t>(e.index) * plane_count;
        if (at + plane_count > planes.size()) throw std::out_of_range("row without a hyperplane entry");
        for (unsigned b = 0; b < plane_count; ++b) dot[b] += e.value * planes[at + b];
    }
    std::vector<std::uint64_t> bits((plane_count + 63) / 64, 0);
    for (unsigned b = 0; b < plane_count; ++b) {
        if (dot[b] >= 0.0) bits[b / 64] |= std::uint64_t{1} << (b % 64);
    }
    return bits;
}

double bit_agreement(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, unsigned count) {
    check_same_length(a, b);
    if (count == 0) return 0.0;
    if (count > a.size() * 64) throw std::invalid_argument("count exceeds the packed bit length");
    std::size_t differ = 0;
    for (unsigned w = 0; w * 64 < count; ++w) {
        const unsigned live = std::min(64u, count - w * 64);
        differ += static_cast<std::size_t>(std::popcount((a[w] ^ b[w]) & bit_mask(live)));
    }
    return 1.0 - static_cast<double>(differ) / count;
}

NeighborTable rpcos_topk(const SparseRatings& ratings, unsigned planes_per_map, unsigned maps_per_group,
                         unsigned groups, Index k, std::uint64_t seed) {
    const Index n = ratings.cols();
    check_neighbor_count(n, k);
    if (planes_per_map == 0 || maps_per_group == 0 || groups == 0) {
        throw std::invalid_argument("rpcos needs positive planes, maps and groups");
    }
    const std::size_t words = (planes_per_map + 63) / 64;
    const std::size_t key_words = words * maps_per_group;
    CandidateSets candidates(n);
    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n) * key_words);
    for (unsigned g = 0; g < groups; ++g) {
        for (unsigned m = 0; m < maps_per_group; ++m) {
            const auto planes = random_planes(ratings.rows(), planes_per_map, seed, g, m);
            for (Index j = 0; j < n; ++j) {
                const auto bits = rpcos_bits(ratings.col(j), planes, planes_per_map);
                std::copy(bits.begin(), bits.end(),
                          keys.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * key_words + m * words));
            }
        }
        detail::append_bucket_candidates(keys, key_words, n, candidates);
    }
    return topk_from_candidates(candidates, k, n, seed, 1);
}

}  // namespace lshmf
