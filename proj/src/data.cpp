#include "survsr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "survsr/error.hpp"
#include "survsr/hash.hpp"
#include "survsr/random.hpp"

namespace survsr {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_missing(std::string_view cell) {
    const auto t = lower(trim(cell));
    return t.empty() || t == "na" || t == "nan" || t == "null" || t == "?";
}

std::optional<double> parse_number(std::string_view cell) {
    auto t = trim(cell);
    if (!t.empty() && t.front() == '+') {
        t.remove_prefix(1);
    }
    double v = 0.0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!piece.empty()) {
            out.emplace_back(piece);
        }
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::string_view raw_kind_name(RawKind k) {
    switch (k) {
    case RawKind::automatic: return "auto";
    case RawKind::continuous: return "continuous";
    case RawKind::binary: return "binary";
    case RawKind::ordinal: return "ordinal";
    case RawKind::nominal: return "nominal";
    case RawKind::ignore: return "ignore";
    }
    return "auto";
}

}  // namespace

std::string_view to_string(ColumnKind kind) noexcept {
    switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary01: return "binary01";
    case ColumnKind::ordinal: return "ordinal";
    case ColumnKind::onehot: return "onehot";
    }
    return "continuous";
}

ColumnKind column_kind_from_string(std::string_view text) {
    if (text == "continuous") return ColumnKind::continuous;
    if (text == "binary01") return ColumnKind::binary01;
    if (text == "ordinal") return ColumnKind::ordinal;
    if (text == "onehot") return ColumnKind::onehot;
    throw SchemaMismatch("unknown column kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// SurvivalDataset

std::size_t SurvivalDataset::n_events() const noexcept {
    return static_cast<std::size_t>(std::count(events.begin(), events.end(), true));
}

std::vector<std::string> SurvivalDataset::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns.size());
    for (const auto& c : columns) {
        names.push_back(c.name);
    }
    return names;
}

std::vector<int> SurvivalDataset::binary_columns() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].is_binary()) {
            out.push_back(static_cast<int>(j));
        }
    }
    return out;
}

SurvivalDataset SurvivalDataset::subset(const std::vector<Eigen::Index>& indices) const {
    SurvivalDataset out;
    const auto n = static_cast<Eigen::Index>(indices.size());
    out.features.resize(n, cols());
    out.times.resize(n);
    out.events.resize(indices.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto src = indices[static_cast<std::size_t>(r)];
        out.features.row(r) = features.row(src);
        out.times[r] = times[src];
        out.events[static_cast<std::size_t>(r)] = events[static_cast<std::size_t>(src)];
    }
    out.columns = columns;
    return out;
}

void SurvivalDataset::validate() const {
    if (times.size() != rows() || static_cast<Eigen::Index>(events.size()) != rows()) {
        throw SchemaMismatch("times/events length does not match feature rows");
    }
    if (static_cast<Eigen::Index>(columns.size()) != cols()) {
        throw SchemaMismatch("column metadata does not match feature columns");
    }
    for (Eigen::Index i = 0; i < rows(); ++i) {
        if (!(times[i] > 0.0) || !std::isfinite(times[i])) {
            throw NonPositiveTime(static_cast<std::size_t>(i) + 1, "time");
        }
    }
    if (n_events() == 0) {
        throw Error("dataset has no observed events");
    }
    for (Eigen::Index j = 0; j < cols(); ++j) {
        const auto& info = columns[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < rows(); ++i) {
            const double v = features(i, j);
            if (!std::isfinite(v)) {
                throw MissingValue(static_cast<std::size_t>(i) + 1, info.name);
            }
            if (info.is_binary() && v != 0.0 && v != 1.0) {
                throw SchemaMismatch("binary column '" + info.name + "' holds a value other than 0/1");
            }
        }
    }
}

std::string SurvivalDataset::content_hash() const {
    Sha256 h;
    const std::int64_t n = rows();
    const std::int64_t d = cols();
    h.update_pod(n).update_pod(d);
    for (const auto& c : columns) {
        h.update(c.name).update(std::string_view("\0", 1));
    }
    h.update(std::as_bytes(std::span<const double>(features.data(), static_cast<std::size_t>(features.size()))));
    h.update(std::as_bytes(std::span<const double>(times.data(), static_cast<std::size_t>(times.size()))));
    for (bool e : events) {
        const char c = e ? 1 : 0;
        h.update_pod(c);
    }
    return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Schema

Schema Schema::parse(std::string_view text) {
    Schema schema;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw SchemaMismatch("schema line " + std::to_string(line_no) + ": expected 'column = kind'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw SchemaMismatch("schema line " + std::to_string(line_no) + ": empty column name");
        }
        if (key == "time") {
            schema.time_column = std::string(value);
            continue;
        }
        if (key == "event") {
            schema.event_column = std::string(value);
            continue;
        }
        const auto colon = value.find(':');
        const auto kind_text = lower(trim(value.substr(0, colon)));
        ColumnSpec spec;
        if (kind_text == "auto") spec.kind = RawKind::automatic;
        else if (kind_text == "continuous") spec.kind = RawKind::continuous;
        else if (kind_text == "binary") spec.kind = RawKind::binary;
        else if (kind_text == "ordinal") spec.kind = RawKind::ordinal;
        else if (kind_text == "nominal") spec.kind = RawKind::nominal;
        else if (kind_text == "ignore") spec.kind = RawKind::ignore;
        else {
            throw SchemaMismatch("schema line " + std::to_string(line_no) + ": unknown kind '" + kind_text + "'");
        }
        if (colon != std::string_view::npos) {
            spec.levels = split_list(value.substr(colon + 1));
        }
        if (spec.kind == RawKind::ordinal && spec.levels.empty()) {
            throw SchemaMismatch("schema line " + std::to_string(line_no) + ": ordinal column '" + key +
                                 "' needs its levels in order");
        }
        if (spec.kind == RawKind::binary && !spec.levels.empty() && spec.levels.size() != 2) {
            throw SchemaMismatch("schema line " + std::to_string(line_no) + ": binary column '" + key +
                                 "' needs exactly two labels");
        }
        schema.columns[key] = std::move(spec);
    }
    return schema;
}

Schema Schema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaMismatch("cannot open schema file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Schema::to_text() const {
    std::string out = "time = " + time_column + "\nevent = " + event_column + "\n";
    for (const auto& [name, spec] : columns) {
        out += name + " = " + std::string(raw_kind_name(spec.kind));
        if (!spec.levels.empty()) {
            out += ":";
            for (std::size_t i = 0; i < spec.levels.size(); ++i) {
                out += (i == 0 ? " " : ", ") + spec.levels[i];
            }
        }
        out += "\n";
    }
    return out;
}

const ColumnSpec& Schema::spec_for(const std::string& column) const {
    static const ColumnSpec automatic{};
    const auto it = columns.find(column);
    return it == columns.end() ? automatic : it->second;
}

// ---------------------------------------------------------------------------
// CSV

std::optional<std::size_t> RawTable::find(std::string_view column) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == column) {
            return j;
        }
    }
    return std::nullopt;
}

RawTable parse_csv(std::string_view text) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") {
        text.remove_prefix(3);
    }
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record.front().empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };
    while (i < text.size()) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                quoted = false;
            } else {
                field.push_back(c);
            }
            ++i;
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' || c == '\n') {
            end_record();
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
        } else {
            field.push_back(c);
            field_started = true;
        }
        ++i;
    }
    if (quoted) {
        throw CsvError("unterminated quoted field");
    }
    if (field_started || !record.empty()) {
        end_record();
    }
    if (records.empty()) {
        throw CsvError("CSV has no header row");
    }
    RawTable table;
    table.header = std::move(records.front());
    for (auto& h : table.header) {
        h = std::string(trim(h));
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw CsvError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                           " fields, header has " + std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

RawTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CsvError("cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

struct EncodedColumn {
    ColumnInfo info;
    std::vector<double> values;
};

std::vector<double> numeric_column(const RawTable& t, std::size_t col) {
    std::vector<double> out(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& cell = t.rows[r][col];
        const auto v = is_missing(cell) ? std::nullopt : parse_number(cell);
        if (!v) {
            throw MissingValue(r + 1, t.header[col]);
        }
        out[r] = *v;
    }
    return out;
}

bool all_numeric(const RawTable& t, std::size_t col) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& cell = t.rows[r][col];
        if (is_missing(cell)) {
            throw MissingValue(r + 1, t.header[col]);
        }
        if (!parse_number(cell)) {
            return false;
        }
    }
    return true;
}

std::vector<std::string> labels_of(const RawTable& t, std::size_t col) {
    std::vector<std::string> out(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (is_missing(t.rows[r][col])) {
            throw MissingValue(r + 1, t.header[col]);
        }
        out[r] = std::string(trim(t.rows[r][col]));
    }
    return out;
}

EncodedColumn encode_levels(const std::string& name, ColumnKind kind, std::vector<std::string> levels,
                            const std::vector<std::string>& labels) {
    EncodedColumn out;
    out.info = ColumnInfo{name, kind, name, levels};
    out.values.resize(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto it = std::find(levels.begin(), levels.end(), labels[r]);
        if (it == levels.end()) {
            throw UnknownCategory(r + 1, name, labels[r]);
        }
        out.values[r] = static_cast<double>(it - levels.begin());
    }
    return out;
}

std::vector<EncodedColumn> encode_column(const RawTable& t, std::size_t col, const ColumnSpec& spec) {
    const auto& name = t.header[col];
    RawKind kind = spec.kind;
    if (kind == RawKind::automatic) {
        if (all_numeric(t, col)) {
            auto values = numeric_column(t, col);
            const bool zero_one = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
            EncodedColumn c;
            c.info = ColumnInfo{name, zero_one ? ColumnKind::binary01 : ColumnKind::continuous, name, {}};
            if (zero_one) {
                c.info.levels = {"0", "1"};
            }
            c.values = std::move(values);
            return {std::move(c)};
        }
        const auto labels = labels_of(t, col);
        const std::set<std::string> distinct(labels.begin(), labels.end());
        kind = distinct.size() <= 2 ? RawKind::binary : RawKind::nominal;
    }
    switch (kind) {
    case RawKind::continuous: {
        EncodedColumn c;
        c.info = ColumnInfo{name, ColumnKind::continuous, name, {}};
        c.values = numeric_column(t, col);
        return {std::move(c)};
    }
    case RawKind::binary: {
        const auto labels = labels_of(t, col);
        std::vector<std::string> levels = spec.levels;
        if (levels.empty()) {
            const std::set<std::string> distinct(labels.begin(), labels.end());
            levels.assign(distinct.begin(), distinct.end());
            // numeric 0/1 columns keep their meaning
            if (levels.size() == 1 && (levels[0] == "1" || lower(levels[0]) == "true")) {
                levels.insert(levels.begin(), levels[0] == "1" ? "0" : "false");
            }
            if (levels.size() > 2) {
                for (std::size_t r = 0; r < labels.size(); ++r) {
                    if (labels[r] == levels[2]) {
                        throw UnknownCategory(r + 1, name, labels[r]);
                    }
                }
            }
        }
        return {encode_levels(name, ColumnKind::binary01, std::move(levels), labels)};
    }
    case RawKind::ordinal:
        return {encode_levels(name, ColumnKind::ordinal, spec.levels, labels_of(t, col))};
    case RawKind::nominal: {
        const auto labels = labels_of(t, col);
        std::vector<std::string> categories = spec.levels;
        if (categories.empty()) {
            const std::set<std::string> distinct(labels.begin(), labels.end());
            categories.assign(distinct.begin(), distinct.end());
        }
        std::vector<EncodedColumn> out;
        for (const auto& cat : categories) {
            EncodedColumn c;
            c.info = ColumnInfo{name + "=" + cat, ColumnKind::onehot, name, {cat}};
            c.values.resize(labels.size());
            for (std::size_t r = 0; r < labels.size(); ++r) {
                c.values[r] = labels[r] == cat ? 1.0 : 0.0;
            }
            out.push_back(std::move(c));
        }
        for (std::size_t r = 0; r < labels.size(); ++r) {
            if (std::find(categories.begin(), categories.end(), labels[r]) == categories.end()) {
                throw UnknownCategory(r + 1, name, labels[r]);
            }
        }
        return out;
    }
    case RawKind::ignore:
    case RawKind::automatic:
        break;
    }
    return {};
}

}  // namespace

SurvivalDataset encode_categoricals(const RawTable& table, const Schema& schema) {
    const auto time_col = table.find(schema.time_column);
    if (!time_col) {
        throw MissingColumn(schema.time_column);
    }
    const auto event_col = table.find(schema.event_column);
    if (!event_col) {
        throw MissingColumn(schema.event_column);
    }
    for (const auto& [name, spec] : schema.columns) {
        if (!table.find(name)) {
            throw MissingColumn(name);
        }
    }

    const std::size_t n = table.rows.size();
    SurvivalDataset ds;
    ds.times.resize(static_cast<Eigen::Index>(n));
    ds.events.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& tcell = table.rows[r][*time_col];
        const auto t = is_missing(tcell) ? std::nullopt : parse_number(tcell);
        if (!t) {
            throw MissingValue(r + 1, schema.time_column);
        }
        if (!(*t > 0.0)) {
            throw NonPositiveTime(r + 1, schema.time_column);
        }
        ds.times[static_cast<Eigen::Index>(r)] = *t;

        const auto& ecell = table.rows[r][*event_col];
        if (is_missing(ecell)) {
            throw MissingValue(r + 1, schema.event_column);
        }
        const auto e = lower(trim(ecell));
        if (e == "true") {
            ds.events[r] = true;
        } else if (e == "false") {
            ds.events[r] = false;
        } else {
            const auto v = parse_number(e);
            if (!v || (*v != 0.0 && *v != 1.0)) {
                throw NonBinaryEvent(r + 1, schema.event_column);
            }
            ds.events[r] = *v == 1.0;
        }
    }

    std::vector<EncodedColumn> encoded;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == *time_col || c == *event_col) {
            continue;
        }
        const auto& spec = schema.spec_for(table.header[c]);
        if (spec.kind == RawKind::ignore) {
            continue;
        }
        for (auto& e : encode_column(table, c, spec)) {
            encoded.push_back(std::move(e));
        }
    }
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(encoded.size()));
    for (std::size_t j = 0; j < encoded.size(); ++j) {
        for (std::size_t r = 0; r < n; ++r) {
            ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = encoded[j].values[r];
        }
        ds.columns.push_back(std::move(encoded[j].info));
    }
    return ds;
}

SurvivalDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
    return encode_categoricals(read_csv(path), schema);
}

SurvivalDataset load_csv(const std::filesystem::path& path, const std::string& time_column,
                         const std::string& event_column, Schema schema) {
    schema.time_column = time_column;
    schema.event_column = event_column;
    return load_csv(path, schema);
}

std::string decode_value(const ColumnInfo& info, double value) {
    switch (info.kind) {
    case ColumnKind::binary01:
    case ColumnKind::ordinal: {
        const auto idx = static_cast<long long>(std::llround(value));
        if (idx >= 0 && static_cast<std::size_t>(idx) < info.levels.size() && static_cast<double>(idx) == value) {
            return info.levels[static_cast<std::size_t>(idx)];
        }
        break;
    }
    case ColumnKind::onehot:
        if (value == 1.0 && !info.levels.empty()) {
            return info.levels.front();
        }
        if (value == 0.0) {
            return "not " + (info.levels.empty() ? info.name : info.levels.front());
        }
        break;
    case ColumnKind::continuous:
        break;
    }
    std::ostringstream os;
    os.precision(17);
    os << value;
    return os.str();
}

// ---------------------------------------------------------------------------
// Normalization

std::pair<SurvivalDataset, NormalizationStats> zscore_normalize(const SurvivalDataset& ds,
                                                                const std::optional<NormalizationStats>& stats) {
    const auto d = static_cast<std::size_t>(ds.cols());
    NormalizationStats used;
    if (stats) {
        if (stats->mean.size() != d || stats->sd.size() != d || stats->applied.size() != d) {
            throw SchemaMismatch("normalization stats have " + std::to_string(stats->mean.size()) +
                                 " columns, dataset has " + std::to_string(d));
        }
        used = *stats;
    } else {
        used.mean.assign(d, 0.0);
        used.sd.assign(d, 1.0);
        used.applied.assign(d, false);
        for (std::size_t j = 0; j < d; ++j) {
            const auto kind = ds.columns[j].kind;
            if (kind != ColumnKind::continuous && kind != ColumnKind::ordinal) {
                continue;
            }
            const auto col = ds.features.col(static_cast<Eigen::Index>(j));
            const double mean = col.mean();
            const double var = (col.array() - mean).square().mean();
            used.mean[j] = mean;
            used.sd[j] = std::sqrt(var);
            used.applied[j] = true;
        }
    }
    SurvivalDataset out = ds;
    for (std::size_t j = 0; j < d; ++j) {
        if (!used.applied[j]) {
            continue;
        }
        auto col = out.features.col(static_cast<Eigen::Index>(j));
        if (used.sd[j] > 0.0) {
            col = (col.array() - used.mean[j]) / used.sd[j];
        } else {
            col.setZero();
        }
    }
    return {std::move(out), std::move(used)};
}

// ---------------------------------------------------------------------------
// Splitting

SplitIndices split_indices(const SurvivalDataset& ds, const SplitSpec& spec) {
    const auto n = static_cast<std::size_t>(ds.rows());
    if (n < 10) {
        throw DegenerateSplit("split needs at least 10 rows, got " + std::to_string(n));
    }
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw DegenerateSplit("train fraction must lie in (0, 1)");
    }
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) {
        throw DegenerateSplit("train fraction leaves an empty split");
    }
    Rng rng = make_rng(derive_seed(spec.seed, spec.repetition_index));
    std::vector<Eigen::Index> perm(n);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto has_event = [&](auto first, auto last) {
            return std::any_of(first, last, [&](Eigen::Index i) { return ds.events[static_cast<std::size_t>(i)]; });
        };
        const auto mid = perm.begin() + static_cast<std::ptrdiff_t>(n_train);
        if (has_event(perm.begin(), mid) && has_event(mid, perm.end())) {
            SplitIndices out;
            out.train.assign(perm.begin(), mid);
            out.test.assign(mid, perm.end());
            return out;
        }
    }
    throw DegenerateSplit("no partition within 1000 attempts puts events in both splits");
}

std::pair<SurvivalDataset, SurvivalDataset> split(const SurvivalDataset& ds, const SplitSpec& spec) {
    const auto idx = split_indices(ds, spec);
    return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace survsr
