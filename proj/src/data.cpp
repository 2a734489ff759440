#include "lshmf/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lshmf/random.hpp"

namespace lshmf {

Index IdMap::add(std::string_view id) {
    auto found = map_.find(std::string(id));
    if (found != map_.end()) {
        return found->second;
    }
    const auto index = static_cast<Index>(ids_.size());
    ids_.emplace_back(id);
    map_.emplace(ids_.back(), index);
    return index;
}

std::optional<Index> IdMap::get(std::string_view id) const {
    auto found = map_.find(std::string(id));
    if (found == map_.end()) {
        return std::nullopt;
    }
    return found->second;
}

Delimiter parse_delimiter(std::string_view name) {
    if (name == "auto") return Delimiter::Auto;
    if (name == "::") return Delimiter::DoubleColon;
    if (name == "tab" || name == "\t" || name == "\\t") return Delimiter::Tab;
    if (name == "comma" || name == ",") return Delimiter::Comma;
    if (name == "space" || name == " ") return Delimiter::Space;
    throw std::invalid_argument("unknown delimiter '" + std::string(name) + "'");
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, Delimiter delimiter) {
    std::vector<std::string_view> fields;
    std::string_view sep;
    switch (delimiter) {
        case Delimiter::DoubleColon: sep = "::"; break;
        case Delimiter::Tab: sep = "\t"; break;
        case Delimiter::Comma: sep = ","; break;
        case Delimiter::Space: sep = " "; break;
        case Delimiter::Auto: break;
    }
    if (delimiter == Delimiter::Auto) {
        if (line.find("::") != std::string_view::npos) {
            return split_fields(line, Delimiter::DoubleColon);
        }
        if (line.find(',') != std::string_view::npos) {
            return split_fields(line, Delimiter::Comma);
        }
        // runs of blanks/tabs
        std::size_t pos = 0;
        while (pos < line.size()) {
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
            if (pos >= line.size()) break;
            std::size_t end = pos;
            while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
            fields.push_back(line.substr(pos, end - pos));
            pos = end;
        }
        return fields;
    }
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    // std::from_chars rejects a leading '+'
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

template <typename T>
std::optional<T> parse_unsigned(std::string_view s) {
    s = trim(s);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

void append_double(std::string& buf, double v) {
    char tmp[64];
    const auto [ptr, ec] = std::to_chars(tmp, tmp + sizeof(tmp), v);
    buf.append(tmp, ptr);
}

}  // namespace

ParsedRatings parse_ratings(std::istream& in, Delimiter delimiter) {
    ParsedRatings parsed;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        if (trim(view).empty()) continue;

        auto fields = split_fields(view, delimiter);
        if (fields.size() < 3 || fields.size() > 4) {
            throw ParseError(line_no, "expected 3 or 4 fields, found " + std::to_string(fields.size()));
        }
        const auto row_id = trim(fields[0]);
        const auto col_id = trim(fields[1]);
        if (row_id.empty() || col_id.empty()) {
            throw ParseError(line_no, "empty id field");
        }
        const auto value = parse_double(fields[2]);
        if (!value) {
            throw ParseError(line_no, "malformed rating '" + std::string(fields[2]) + "'");
        }
        if (!std::isfinite(*value)) {
            throw ParseError(line_no, "non-finite rating");
        }
        const Index row = parsed.row_ids.add(row_id);
        const Index col = parsed.col_ids.add(col_id);
        parsed.triplets.push_back({row, col, *value});
    }
    return parsed;
}

std::vector<RatingTriplet> transform_ratings(std::vector<RatingTriplet> triplets,
                                             const TransformOptions& options) {
    if (options.scale && !(*options.scale > 0.0)) {
        throw std::invalid_argument("scale must be positive");
    }
    for (auto& t : triplets) {
        if (options.zero_floor && t.value == 0.0) {
            t.value = *options.zero_floor;
        }
        if (options.scale) {
            t.value /= *options.scale;
        }
    }
    return triplets;
}

std::span<const Entry> SparseRatings::row(Index i) const {
    if (i >= rows_) throw std::out_of_range("row index out of range");
    return std::span<const Entry>(row_entries_).subspan(row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]);
}

std::span<const Entry> SparseRatings::col(Index j) const {
    if (j >= cols_) throw std::out_of_range("column index out of range");
    return std::span<const Entry>(col_entries_).subspan(col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]);
}

std::optional<double> SparseRatings::find(Index i, Index j) const {
    const auto slice = row(i);
    auto it = std::lower_bound(slice.begin(), slice.end(), j,
                               [](const Entry& e, Index key) { return e.index < key; });
    if (it == slice.end() || it->index != j) {
        return std::nullopt;
    }
    return it->value;
}

SparseRatings build_indices(std::vector<RatingTriplet> triplets, Index rows, Index cols,
                            IdMap row_ids, IdMap col_ids) {
    SparseRatings r;
    r.rows_ = rows;
    r.cols_ = cols;

    std::vector<std::size_t> row_count(rows, 0);
    std::vector<std::size_t> col_count(cols, 0);
    for (const auto& t : triplets) {
        if (t.row >= rows || t.col >= cols) {
            throw BuildError("triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                             ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        if (!std::isfinite(t.value)) {
            throw BuildError("non-finite rating at (" + std::to_string(t.row) + ", " +
                             std::to_string(t.col) + ")");
        }
        ++row_count[t.row];
        ++col_count[t.col];
    }

    r.row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
    r.col_ptr_.assign(static_cast<std::size_t>(cols) + 1, 0);
    std::partial_sum(row_count.begin(), row_count.end(), r.row_ptr_.begin() + 1);
    std::partial_sum(col_count.begin(), col_count.end(), r.col_ptr_.begin() + 1);

    // Counting-sort placement keeps input order inside each slice; the slices
    // are then sorted by the opposite index so lookups can binary search.
    r.row_entries_.resize(triplets.size());
    r.col_entries_.resize(triplets.size());
    std::vector<std::size_t> row_fill(r.row_ptr_.begin(), r.row_ptr_.end() - 1);
    std::vector<std::size_t> col_fill(r.col_ptr_.begin(), r.col_ptr_.end() - 1);
    for (const auto& t : triplets) {
        r.row_entries_[row_fill[t.row]++] = {t.col, t.value};
        r.col_entries_[col_fill[t.col]++] = {t.row, t.value};
    }
    const auto by_index = [](const Entry& a, const Entry& b) { return a.index < b.index; };
    for (Index i = 0; i < rows; ++i) {
        auto first = r.row_entries_.begin() + static_cast<std::ptrdiff_t>(r.row_ptr_[i]);
        auto last = r.row_entries_.begin() + static_cast<std::ptrdiff_t>(r.row_ptr_[i + 1]);
        std::sort(first, last, by_index);
        auto dup = std::adjacent_find(first, last, [](const Entry& a, const Entry& b) {
            return a.index == b.index;
        });
        if (dup != last) {
            throw BuildError("duplicate rating at (" + std::to_string(i) + ", " +
                             std::to_string(dup->index) + ")");
        }
    }
    for (Index j = 0; j < cols; ++j) {
        auto first = r.col_entries_.begin() + static_cast<std::ptrdiff_t>(r.col_ptr_[j]);
        auto last = r.col_entries_.begin() + static_cast<std::ptrdiff_t>(r.col_ptr_[j + 1]);
        std::sort(first, last, by_index);
    }

    r.triplets_ = std::move(triplets);
    r.row_ids_ = std::move(row_ids);
    r.col_ids_ = std::move(col_ids);
    return r;
}

HoldoutSplit split_holdout(const SparseRatings& ratings, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must be in [0, 1)");
    }
    const auto all = ratings.triplets();
    const auto target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));

    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = seeded_engine(seed, 0x5b117);
    for (std::size_t k = order.size(); k > 1; --k) {
        std::swap(order[k - 1], order[uniform_below(rng, k)]);
    }

    std::vector<std::size_t> row_left(ratings.rows());
    std::vector<std::size_t> col_left(ratings.cols());
    for (Index i = 0; i < ratings.rows(); ++i) row_left[i] = ratings.row(i).size();
    for (Index j = 0; j < ratings.cols(); ++j) col_left[j] = ratings.col(j).size();

    std::vector<char> is_test(all.size(), 0);
    std::size_t taken = 0;
    for (std::size_t k = 0; k < order.size() && taken < target; ++k) {
        const auto& t = all[order[k]];
        if (row_left[t.row] > 1 && col_left[t.col] > 1) {
            --row_left[t.row];
            --col_left[t.col];
            is_test[order[k]] = 1;
            ++taken;
        }
    }

    HoldoutSplit split;
    std::vector<RatingTriplet> train;
    train.reserve(all.size() - taken);
    split.test.reserve(taken);
    // test triplets follow the shuffled order; train keeps input order
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (is_test[order[k]]) split.test.push_back(all[order[k]]);
    }
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (!is_test[k]) train.push_back(all[k]);
    }
    split.train = build_indices(std::move(train), ratings.rows(), ratings.cols(), ratings.row_ids(),
                                ratings.col_ids());
    return split;
}

BaselineStats compute_baselines(const SparseRatings& ratings) {
    if (ratings.nnz() == 0) {
        throw std::invalid_argument("baselines need at least one rating");
    }
    BaselineStats stats;
    double total = 0.0;
    for (const auto& t : ratings.triplets()) total += t.value;
    stats.mu = total / static_cast<double>(ratings.nnz());

    stats.b.assign(ratings.rows(), 0.0);
    for (Index i = 0; i < ratings.rows(); ++i) {
        const auto slice = ratings.row(i);
        if (slice.empty()) continue;
        double sum = 0.0;
        for (const auto& e : slice) sum += e.value;
        stats.b[i] = sum / static_cast<double>(slice.size()) - stats.mu;
    }
    stats.b_hat.assign(ratings.cols(), 0.0);
    for (Index j = 0; j < ratings.cols(); ++j) {
        const auto slice = ratings.col(j);
        if (slice.empty()) continue;
        double sum = 0.0;
        for (const auto& e : slice) sum += e.value;
        stats.b_hat[j] = sum / static_cast<double>(slice.size()) - stats.mu;
    }
    return stats;
}

namespace {

constexpr std::string_view kMatrixMagic = "LSHMF-R";

void write_body(std::ostream& out, Index rows, Index cols, std::span<const RatingTriplet> triplets) {
    std::string buf;
    buf.reserve(64 + triplets.size() * 16);
    buf.append(kMatrixMagic).append(" v1 ");
    buf.append(std::to_string(rows)).append(" ").append(std::to_string(cols)).append(" ");
    buf.append(std::to_string(triplets.size())).append("\n");
    for (const auto& t : triplets) {
        buf.append(std::to_string(t.row)).push_back(' ');
        buf.append(std::to_string(t.col)).push_back(' ');
        append_double(buf, t.value);
        buf.push_back('\n');
    }
    out << buf;
}

std::vector<RatingTriplet> read_body(std::istream& in, Index& rows, Index& cols) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(1, "missing LSHMF-R header");
    }
    std::istringstream header(line);
    std::string magic, version;
    std::uint64_t m = 0, n = 0, nnz = 0;
    if (!(header >> magic >> version >> m >> n >> nnz) || magic != kMatrixMagic || version != "v1") {
        throw ParseError(1, "bad LSHMF-R header '" + line + "'");
    }
    if (m > UINT32_MAX || n > UINT32_MAX) {
        throw ParseError(1, "dimensions exceed 32-bit index range");
    }
    rows = static_cast<Index>(m);
    cols = static_cast<Index>(n);
    std::vector<RatingTriplet> triplets;
    triplets.reserve(static_cast<std::size_t>(nnz));
    std::size_t line_no = 1;
    while (triplets.size() < nnz && std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        auto fields = split_fields(view, Delimiter::Space);
        if (fields.size() != 3) {
            throw ParseError(line_no, "expected `row col value`");
        }
        const auto row = parse_unsigned<Index>(fields[0]);
        const auto col = parse_unsigned<Index>(fields[1]);
        const auto value = parse_double(fields[2]);
        if (!row || !col || !value) {
            throw ParseError(line_no, "malformed triplet");
        }
        if (!std::isfinite(*value)) {
            throw ParseError(line_no, "non-finite rating");
        }
        triplets.push_back({*row, *col, *value});
    }
    if (triplets.size() != nnz) {
        throw ParseError(line_no, "expected " + std::to_string(nnz) + " triplets, found " +
                                      std::to_string(triplets.size()));
    }
    return triplets;
}

}  // namespace

void write_matrix(std::ostream& out, const SparseRatings& ratings) {
    write_body(out, ratings.rows(), ratings.cols(), ratings.triplets());
}

SparseRatings read_matrix(std::istream& in) {
    Index rows = 0, cols = 0;
    auto triplets = read_body(in, rows, cols);
    return build_indices(std::move(triplets), rows, cols);
}

void write_triplets(std::ostream& out, Index rows, Index cols, std::span<const RatingTriplet> triplets) {
    write_body(out, rows, cols, triplets);
}

std::vector<RatingTriplet> read_triplets(std::istream& in, Index* rows, Index* cols) {
    Index m = 0, n = 0;
    auto triplets = read_body(in, m, n);
    for (const auto& t : triplets) {
        if (t.row >= m || t.col >= n) {
            throw BuildError("triplet outside declared dimensions");
        }
    }
    if (rows) *rows = m;
    if (cols) *cols = n;
    return triplets;
}

SparseRatings load_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_matrix(in);
}

void save_matrix_file(const std::string& path, const SparseRatings& ratings) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_matrix(out, ratings);
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace lshmf
