#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace survsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Kind of an encoded feature column.
enum class ColumnKind { continuous, binary01, ordinal, onehot };

std::string_view to_string(ColumnKind kind) noexcept;
ColumnKind column_kind_from_string(std::string_view text);

/// Metadata of one encoded column.
///
/// `levels` maps encoded values back to source labels: for binary01 and ordinal
/// columns `levels[v]` is the label encoded as `v`; for a onehot column
/// `levels` holds the single category the column indicates.
struct ColumnInfo {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::string source;
    std::vector<std::string> levels;

    bool is_binary() const noexcept { return kind == ColumnKind::binary01 || kind == ColumnKind::onehot; }
};

/// Right-censored survival data: features plus (time, event) per row.
struct SurvivalDataset {
    Matrix features;
    Vector times;
    std::vector<bool> events;
    std::vector<ColumnInfo> columns;

    Eigen::Index rows() const noexcept { return features.rows(); }
    Eigen::Index cols() const noexcept { return features.cols(); }
    std::size_t n_events() const noexcept;
    std::vector<std::string> column_names() const;
    /// Indices of columns holding only 0/1 values (binary01 and onehot).
    std::vector<int> binary_columns() const;

    /// Rows `indices`, in the given order.
    SurvivalDataset subset(const std::vector<Eigen::Index>& indices) const;

    /// Throws on a broken invariant (non-positive time, no events, non-finite
    /// feature, binary column outside {0,1}).
    void validate() const;

    /// SHA-256 over dimensions, features, times, events and column names.
    std::string content_hash() const;
};

// ---------------------------------------------------------------------------
// Schema

/// Declared kind of a raw (pre-encoding) column.
enum class RawKind { automatic, continuous, binary, ordinal, nominal, ignore };

struct ColumnSpec {
    RawKind kind = RawKind::automatic;
    /// binary: label order mapped to 0, 1. ordinal: level order from 0.
    std::vector<std::string> levels;
};

/// Column declarations, read from a `key = value` text file:
///
///     time  = days
///     event = status
///     age   = continuous
///     sex   = binary: F, M
///     stage = ordinal: I, II, III, IV
///     site  = nominal
///     id    = ignore
///
/// Undeclared columns are `auto`: numeric columns holding only 0/1 become
/// binary01, other numeric columns continuous, text columns binary when they
/// have at most two labels and nominal otherwise.
struct Schema {
    std::string time_column = "time";
    std::string event_column = "event";
    std::map<std::string, ColumnSpec> columns;

    static Schema parse(std::string_view text);
    static Schema load(const std::filesystem::path& path);
    std::string to_text() const;

    const ColumnSpec& spec_for(const std::string& column) const;
};

// ---------------------------------------------------------------------------
// CSV

/// RFC-4180 table of strings with a header row.
struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find(std::string_view column) const;
};

RawTable parse_csv(std::string_view text);
RawTable read_csv(const std::filesystem::path& path);

/// Quote a field if it needs quoting.
std::string csv_escape(std::string_view field);

// ---------------------------------------------------------------------------
// Operations

/// Encode a raw table into a dataset. Two-level columns become one 0/1 column,
/// ordinal columns integers from 0 in declared order, nominal columns one 0/1
/// column per category (categories sorted).
SurvivalDataset encode_categoricals(const RawTable& table, const Schema& schema);

SurvivalDataset load_csv(const std::filesystem::path& path, const Schema& schema);
SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& time_column,
                         const std::string& event_column, Schema schema);

/// Label of encoded value `value` in column `info` (continuous columns print the number).
std::string decode_value(const ColumnInfo& info, double value);

/// Per-column z-score statistics. `applied[j]` is false for columns left untouched.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<bool> applied;
};

/// Standardize continuous and ordinal columns with population statistics
/// (computed from `ds` unless `stats` is given). Zero-variance columns map to 0.
std::pair<SurvivalDataset, NormalizationStats> zscore_normalize(
    const SurvivalDataset& ds, const std::optional<NormalizationStats>& stats = std::nullopt);

struct SplitSpec {
    std::uint64_t seed = 0;
    double train_fraction = 0.7;
    std::uint64_t repetition_index = 0;
};

struct SplitIndices {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

/// Seeded random partition with |train| = round(fraction * n) and at least one
/// event on each side.
SplitIndices split_indices(const SurvivalDataset& ds, const SplitSpec& spec);
std::pair<SurvivalDataset, SurvivalDataset> split(const SurvivalDataset& ds, const SplitSpec& spec);

}  // namespace survsr
