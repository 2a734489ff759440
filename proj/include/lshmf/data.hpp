#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lshmf {

using Index = std::uint32_t;

struct RatingTriplet {
    Index row = 0;
    Index col = 0;
    double value = 0.0;

    bool operator==(const RatingTriplet&) const = default;
};

/// One element of a row or column slice: the opposite index and the value.
struct Entry {
    Index index = 0;
    double value = 0.0;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class BuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Original id <-> dense index bijection, in first-appearance order.
class IdMap {
public:
    Index add(std::string_view id);
    std::optional<Index> get(std::string_view id) const;
    const std::string& lookup(Index index) const { return ids_.at(index); }
    Index size() const { return static_cast<Index>(ids_.size()); }
    std::span<const std::string> ids() const { return ids_; }

private:
    std::unordered_map<std::string, Index> map_;
    std::vector<std::string> ids_;
};

enum class Delimiter { Auto, DoubleColon, Tab, Comma, Space };

/// Accepts "::", "tab" / "\t", "comma" / ",", "space" / " ", "auto".
Delimiter parse_delimiter(std::string_view name);

struct ParsedRatings {
    std::vector<RatingTriplet> triplets;
    IdMap row_ids;
    IdMap col_ids;

    Index rows() const { return row_ids.size(); }
    Index cols() const { return col_ids.size(); }
};

/// Reads `<row-id><sep><col-id><sep><rating>[<sep><timestamp>]` lines. Blank
/// lines are skipped; ids are remapped densely in first-appearance order.
ParsedRatings parse_ratings(std::istream& in, Delimiter delimiter = Delimiter::Auto);

struct TransformOptions {
    std::optional<double> zero_floor;
    std::optional<double> scale;
};

/// Replaces exact zeros by zero_floor, then divides every value by scale.
std::vector<RatingTriplet> transform_ratings(std::vector<RatingTriplet> triplets,
                                             const TransformOptions& options);

/// Immutable dual-indexed sparse matrix. Row slices are sorted by column,
/// column slices by row.
class SparseRatings {
public:
    SparseRatings() = default;

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    std::size_t nnz() const { return triplets_.size(); }

    std::span<const RatingTriplet> triplets() const { return triplets_; }
    std::span<const Entry> row(Index i) const;
    std::span<const Entry> col(Index j) const;

    /// Value at (i, j) when present; binary search over row i.
    std::optional<double> find(Index i, Index j) const;

    const IdMap& row_ids() const { return row_ids_; }
    const IdMap& col_ids() const { return col_ids_; }

private:
    friend SparseRatings build_indices(std::vector<RatingTriplet>, Index, Index, IdMap, IdMap);

    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<RatingTriplet> triplets_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_ptr_{0};
    std::vector<Entry> row_entries_;
    std::vector<Entry> col_entries_;
    IdMap row_ids_;
    IdMap col_ids_;
};

/// Throws BuildError on out-of-range indices, duplicates or non-finite values.
SparseRatings build_indices(std::vector<RatingTriplet> triplets, Index rows, Index cols,
                            IdMap row_ids = {}, IdMap col_ids = {});

inline SparseRatings build_indices(ParsedRatings parsed) {
    const Index m = parsed.rows();
    const Index n = parsed.cols();
    return build_indices(std::move(parsed.triplets), m, n, std::move(parsed.row_ids),
                         std::move(parsed.col_ids));
}

struct HoldoutSplit {
    SparseRatings train;
    std::vector<RatingTriplet> test;
};

/// Deterministic random holdout. A triplet only moves to the test side while
/// its row and column keep at least one training entry; when that constraint
/// blocks it the test side ends up smaller than requested.
HoldoutSplit split_holdout(const SparseRatings& ratings, double test_fraction, std::uint64_t seed);

struct BaselineStats {
    double mu = 0.0;
    std::vector<double> b;      // row deviations
    std::vector<double> b_hat;  // column deviations
};

/// Empty rows/columns get a zero deviation. Throws on an empty matrix.
BaselineStats compute_baselines(const SparseRatings& ratings);

/// `LSHMF-R v1 M N NNZ` header, then one `row col value` line per triplet.
void write_matrix(std::ostream& out, const SparseRatings& ratings);
SparseRatings read_matrix(std::istream& in);

SparseRatings load_matrix_file(const std::string& path);
void save_matrix_file(const std::string& path, const SparseRatings& ratings);

/// Test triplets in the same text layout (header carries M N of the train side).
void write_triplets(std::ostream& out, Index rows, Index cols, std::span<const RatingTriplet> triplets);
std::vector<RatingTriplet> read_triplets(std::istream& in, Index* rows = nullptr, Index* cols = nullptr);

}  // namespace lshmf
