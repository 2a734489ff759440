#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "lshmf/data.hpp"
#include "lshmf/similarity.hpp"

namespace lshmf {

/// simLSH parameters. Defaults follow the MovieLens setting: one byte per
/// signature, three maps per coarse group, a hundred groups, Ψ(r) = r².
struct LshConfig {
    unsigned bits = 8;             // G, at most 64
    unsigned maps_per_group = 3;   // p
    unsigned groups = 100;         // q
    unsigned psi_exponent = 2;     // e in Ψ(r) = r^e, one of 1, 2, 4
    std::uint64_t seed = 0;
    unsigned workers = 1;

    void validate() const;
    bool operator==(const LshConfig& o) const {
        return bits == o.bits && maps_per_group == o.maps_per_group && groups == o.groups &&
               psi_exponent == o.psi_exponent && seed == o.seed;
    }
};

/// Ψ(r) = r^e.
double psi(double rating, unsigned exponent);

/// Υ: bit g is set iff accumulator[g] >= 0.
std::uint64_t threshold(std::span<const double> accumulator);

/// Parses a position string such as "001" (leftmost character is bit 0).
std::uint64_t bits_from_string(std::string_view s);

/// Random G-bit row hashes for one (group, map) pair. The stream is prefix
/// stable: the first M values do not depend on how many rows are requested.
std::vector<std::uint64_t> row_hash_map(Index rows, const LshConfig& config, unsigned group, unsigned map);

/// All p*q row-hash maps, stored (group, map, row).
class RowHashes {
public:
    RowHashes() = default;
    RowHashes(Index rows, const LshConfig& config);

    Index rows() const { return rows_; }
    unsigned groups() const { return groups_; }
    unsigned maps_per_group() const { return maps_; }
    unsigned bits() const { return bits_; }
    std::span<const std::uint64_t> map(unsigned group, unsigned map) const;

private:
    Index rows_ = 0;
    unsigned groups_ = 0;
    unsigned maps_ = 0;
    unsigned bits_ = 0;
    std::vector<std::uint64_t> hashes_;
};

RowHashes assign_row_hashes(Index rows, const LshConfig& config);

struct ColumnSignature {
    std::vector<double> accumulator;  // G signed sums of Ψ(r)·Φ(H_i)
    std::uint64_t bits = 0;           // Υ(accumulator)
};

/// Signature of one sparse column under one row-hash map. Φ maps a hash bit to
/// -1/+1; an empty column accumulates zeros and therefore hashes to all ones.
ColumnSignature simlsh_signature(std::span<const Entry> column, std::span<const std::uint64_t> row_hashes,
                                 unsigned bits, unsigned psi_exponent);
ColumnSignature simlsh_signature(const SparseRatings& ratings, Index j,
                                 std::span<const std::uint64_t> row_hashes, unsigned bits,
                                 unsigned psi_exponent);

/// Per-column candidate multisets.
using CandidateSets = std::vector<std::vector<Index>>;

/// Coarse hashing for one group: columns whose p signatures all agree share a
/// bucket, and each bucket member lists every other member.
CandidateSets coarse_candidates(std::span<const std::vector<std::uint64_t>> signatures);

/// Fine hashing: per column, the K most frequent candidates across groups
/// (ties to the lower index), topped up with random distinct columns.
NeighborTable fine_topk(std::span<const CandidateSets> groups, Index k, Index columns, std::uint64_t seed);

/// Per-column accumulators and signatures for every (group, map), kept so
/// new rows and columns can be absorbed without rehashing old data.
class HashState {
public:
    HashState() = default;
    HashState(const LshConfig& config, Index columns, bool with_accumulators);

    const LshConfig& config() const { return config_; }
    Index columns() const { return columns_; }
    bool has_accumulators() const { return !dropped_; }

    std::span<double> accumulator(unsigned group, unsigned map, Index j);
    std::span<const double> accumulator(unsigned group, unsigned map, Index j) const;
    std::uint64_t signature(unsigned group, unsigned map, Index j) const {
        return signatures_[slot(group, map) * columns_ + j];
    }
    void set_signature(unsigned group, unsigned map, Index j, std::uint64_t bits) {
        signatures_[slot(group, map) * columns_ + j] = bits;
    }
    std::span<const std::uint64_t> signatures(unsigned group, unsigned map) const {
        return std::span<const std::uint64_t>(signatures_).subspan(slot(group, map) * columns_, columns_);
    }

    /// Re-lays the state out for `columns` >= columns(); new columns start at
    /// zero accumulators.
    void grow_columns(Index columns);

    std::size_t signature_bytes() const { return signatures_.size() * sizeof(std::uint64_t); }
    std::size_t accumulator_bytes() const { return accumulators_.size() * sizeof(double); }

    const std::vector<double>& raw_accumulators() const { return accumulators_; }
    const std::vector<std::uint64_t>& raw_signatures() const { return signatures_; }

    bool operator==(const HashState&) const = default;

private:
    friend HashState read_hash_state(std::istream& in);

    std::size_t slot(unsigned group, unsigned map) const {
        return static_cast<std::size_t>(group) * config_.maps_per_group + map;
    }

    LshConfig config_;
    Index columns_ = 0;
    bool dropped_ = false;
    std::vector<double> accumulators_;      // (group, map, column, bit)
    std::vector<std::uint64_t> signatures_;  // (group, map, column)
};

/// `LSHMF-H v1 N G p q e seed` then accumulators as little-endian f64 in
/// (group, map, column, bit) order. Signatures are re-thresholded on load.
void write_hash_state(std::ostream& out, const HashState& state);
HashState read_hash_state(std::istream& in);

struct SimLshResult {
    NeighborTable neighbors;
    HashState state;
};

/// Row hashes -> column signatures for every map -> coarse buckets per group
/// -> frequency Top-K with random supplement. Without `keep_accumulators`
/// only the signatures survive.
SimLshResult simlsh_topk(const SparseRatings& ratings, const LshConfig& config, Index k,
                         bool keep_accumulators = true);

/// Signatures for all (group, map) pairs without the Top-K step.
HashState simlsh_hash_state(const SparseRatings& ratings, const LshConfig& config, bool keep_accumulators = true);

/// Candidate multiset per column aggregated over all groups of `state`.
CandidateSets simlsh_candidates(const HashState& state);

/// Min-wise signature of a column's support under `num_hashes` universal hash
/// functions. Empty columns give all-max signatures.
std::vector<std::uint64_t> minhash_signature(std::span<const Entry> column, unsigned num_hashes,
                                             std::uint64_t seed);

/// Fraction of equal positions.
double signature_agreement(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Banded minHash: `bands` bands of num_hashes / bands rows each.
NeighborTable minhash_topk(const SparseRatings& ratings, unsigned num_hashes, unsigned bands, Index k,
                           std::uint64_t seed);

/// Gaussian hyperplanes (rows x planes, row-major) for one (group, map).
std::vector<double> random_planes(Index rows, unsigned planes, std::uint64_t seed, unsigned group,
                                  unsigned map);

/// One bit per plane: sign of the dot product (>= 0 gives 1); packed 64 per word.
std::vector<std::uint64_t> rpcos_bits(std::span<const Entry> column, std::span<const double> planes,
                                      unsigned plane_count);

/// Fraction of agreeing bits over the first `count` bits.
double bit_agreement(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, unsigned count);

NeighborTable rpcos_topk(const SparseRatings& ratings, unsigned planes_per_map, unsigned maps_per_group,
                         unsigned groups, Index k, std::uint64_t seed);

namespace detail {

/// Buckets columns by `words` consecutive key words each and appends every
/// co-bucketed column to the candidates of each member. When `targets` is
/// non-empty only targets[j] != 0 columns receive candidates.
void append_bucket_candidates(std::span<const std::uint64_t> keys, std::size_t words, Index columns,
                              CandidateSets& out, std::span<const char> targets = {});

/// Frequency Top-K for one column from its candidate multiset.
std::vector<Index> frequency_topk(std::vector<Index> candidates, Index self, Index k, Index columns,
                                  std::uint64_t seed);

}  // namespace detail

}  // namespace lshmf
