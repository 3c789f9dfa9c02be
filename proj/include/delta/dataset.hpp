#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/csv.hpp"
#include "delta/error.hpp"
#include "delta/matrix.hpp"
#include "delta/rng.hpp"
#include "delta/schema.hpp"

namespace delta {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace detail

/// One loaded table, prior to encoding: numerical cells parsed to doubles,
/// categorical cells kept as strings, labels already mapped to class indices
/// (classification) or parsed to reals (regression).
struct RawTable {
    Schema schema;
    std::size_t n_rows = 0;
    /// Column-major storage in schema order; exactly one of the two vectors
    /// is populated per column, matching the column kind.
    std::vector<std::vector<double>> numeric;
    std::vector<std::vector<std::string>> categorical;
    std::vector<double> labels;
    /// Class names in index order (classification only).
    std::vector<std::string> label_names;
    /// Row ids relative to the originally loaded table.
    std::vector<std::size_t> original_indices;

    std::size_t n_classes() const {
        if (schema.n_classes > 0) return schema.n_classes;
        return label_names.size();
    }

    RawTable select_rows(const std::vector<std::size_t>& rows) const {
        RawTable out;
        out.schema = schema;
        out.label_names = label_names;
        out.n_rows = rows.size();
        out.numeric.resize(numeric.size());
        out.categorical.resize(categorical.size());
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            if (schema.columns[c].kind == ColumnKind::numerical) {
                out.numeric[c].reserve(rows.size());
                for (std::size_t r : rows) out.numeric[c].push_back(numeric[c][r]);
            } else {
                out.categorical[c].reserve(rows.size());
                for (std::size_t r : rows) out.categorical[c].push_back(categorical[c][r]);
            }
        }
        out.labels.reserve(rows.size());
        out.original_indices.reserve(rows.size());
        for (std::size_t r : rows) {
            out.labels.push_back(labels[r]);
            out.original_indices.push_back(original_indices[r]);
        }
        return out;
    }
};

/// Builds a table from parsed CSV records (header row first).  Schema
/// columns and the target are matched by name.  Empty cells and unparseable
/// numeric cells are hard errors carrying the row/column location.
inline RawTable load_table(const std::vector<std::vector<std::string>>& records,
                           const Schema& schema, const std::string& csv_path) {
    if (records.empty()) throw DataError(csv_path + ": missing header row");
    const auto& header = records.front();
    for (std::size_t i = 0; i < header.size(); ++i)
        for (std::size_t k = i + 1; k < header.size(); ++k)
            if (header[i] == header[k])
                throw DataError(csv_path + ": duplicate header column '" + header[i] + "'");

    auto column_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw DataError(csv_path + ": column '" + name + "' required by schema is missing");
        return static_cast<std::size_t>(it - header.begin());
    };

    std::vector<std::size_t> feature_pos;
    feature_pos.reserve(schema.columns.size());
    for (const auto& col : schema.columns) feature_pos.push_back(column_of(col.name));
    std::size_t target_pos = column_of(schema.target_name);

    RawTable table;
    table.schema = schema;
    table.n_rows = records.size() - 1;
    table.numeric.resize(schema.columns.size());
    table.categorical.resize(schema.columns.size());

    std::vector<std::string> raw_targets;
    raw_targets.reserve(table.n_rows);

    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& record = records[r];
        if (record.size() != header.size())
            throw DataError(csv_path + ": row " + std::to_string(r + 1) + " has " +
                            std::to_string(record.size()) + " cells, header has " +
                            std::to_string(header.size()));
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const std::string& cell = record[feature_pos[c]];
            if (detail::trim(cell).empty())
                throw DataError(csv_path + ": empty cell at row " + std::to_string(r + 1) +
                                ", column '" + schema.columns[c].name + "' (missing data is not supported)");
            if (schema.columns[c].kind == ColumnKind::numerical) {
                double v;
                if (!detail::parse_double(cell, v))
                    throw DataError(csv_path + ": unparseable numeric cell '" + cell + "' at row " +
                                    std::to_string(r + 1) + ", column '" + schema.columns[c].name + "'");
                table.numeric[c].push_back(v);
            } else {
                table.categorical[c].push_back(cell);
            }
        }
        const std::string& target_cell = record[target_pos];
        if (detail::trim(target_cell).empty())
            throw DataError(csv_path + ": empty target cell at row " + std::to_string(r + 1));
        raw_targets.push_back(target_cell);
    }

    if (schema.task == Task::regression) {
        table.labels.reserve(raw_targets.size());
        for (std::size_t i = 0; i < raw_targets.size(); ++i) {
            double v;
            if (!detail::parse_double(raw_targets[i], v))
                throw DataError(csv_path + ": unparseable regression target '" + raw_targets[i] +
                                "' at row " + std::to_string(i + 2));
            table.labels.push_back(v);
        }
    } else {
        // Class indices follow the sorted order of distinct target values:
        // numeric sort when every value parses as a number, else lexicographic.
        std::vector<std::string> distinct = raw_targets;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        bool all_numeric = true;
        std::vector<double> as_numbers(distinct.size());
        for (std::size_t i = 0; i < distinct.size(); ++i)
            if (!detail::parse_double(distinct[i], as_numbers[i])) { all_numeric = false; break; }
        if (all_numeric) {
            std::vector<std::size_t> order(distinct.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return as_numbers[a] < as_numbers[b]; });
            std::vector<std::string> reordered;
            for (std::size_t i : order) reordered.push_back(distinct[i]);
            distinct = std::move(reordered);
        }
        if (schema.n_classes > 0 && distinct.size() > schema.n_classes)
            throw DataError(csv_path + ": target has " + std::to_string(distinct.size()) +
                            " distinct values but the schema declares " +
                            std::to_string(schema.n_classes) + " classes");
        std::map<std::string, double> code;
        for (std::size_t i = 0; i < distinct.size(); ++i) code[distinct[i]] = static_cast<double>(i);
        table.label_names = distinct;
        table.labels.reserve(raw_targets.size());
        for (const auto& t : raw_targets) table.labels.push_back(code.at(t));
    }

    table.original_indices.resize(table.n_rows);
    std::iota(table.original_indices.begin(), table.original_indices.end(), 0);
    return table;
}

/// Loads a CSV file against a schema.
inline RawTable load_csv(const std::string& csv_path, const Schema& schema) {
    return load_table(read_csv_records(csv_path), schema, csv_path);
}

/// Per-column encoding statistics, always fit on the training split and then
/// applied unchanged to validation/test data.
struct PreprocessStats {
    struct NumericStats {
        double mean = 0.0;
        double stddev = 0.0;  ///< population standard deviation (ddof = 0)
        bool operator==(const NumericStats&) const = default;
    };
    /// Index i describes schema column i; exactly one entry is meaningful
    /// depending on the column kind.
    std::vector<NumericStats> numeric;
    std::vector<std::vector<std::string>> categories;

    bool operator==(const PreprocessStats&) const = default;
};

inline nlohmann::ordered_json stats_to_json(const PreprocessStats& stats) {
    nlohmann::ordered_json j;
    j["numeric"] = nlohmann::ordered_json::array();
    for (const auto& n : stats.numeric)
        j["numeric"].push_back({{"mean", n.mean}, {"stddev", n.stddev}});
    j["categories"] = stats.categories;
    return j;
}

inline PreprocessStats stats_from_json(const nlohmann::json& j) {
    PreprocessStats stats;
    for (const auto& n : j.at("numeric"))
        stats.numeric.push_back({n.at("mean").get<double>(), n.at("stddev").get<double>()});
    stats.categories = j.at("categories").get<std::vector<std::vector<std::string>>>();
    if (stats.categories.size() != stats.numeric.size())
        throw DataError("preprocessing statistics arrays disagree on column count");
    return stats;
}

inline PreprocessStats fit_stats(const RawTable& table) {
    if (table.n_rows == 0) throw DataError("cannot fit preprocessing statistics on an empty table");
    PreprocessStats stats;
    stats.numeric.resize(table.schema.columns.size());
    stats.categories.resize(table.schema.columns.size());
    for (std::size_t c = 0; c < table.schema.columns.size(); ++c) {
        if (table.schema.columns[c].kind == ColumnKind::numerical) {
            const auto& col = table.numeric[c];
            double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
            double ss = 0.0;
            for (double v : col) ss += (v - mean) * (v - mean);
            stats.numeric[c] = {mean, std::sqrt(ss / col.size())};
        } else {
            std::vector<std::string> cats = table.categorical[c];
            std::sort(cats.begin(), cats.end());
            cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
            stats.categories[c] = std::move(cats);
        }
    }
    return stats;
}

/// Encoded dataset: an N x d matrix of finite reals plus labels, the schema
/// and the statistics the encoding was produced with.
struct Dataset {
    Matrix features;
    std::vector<double> labels;
    Schema schema;
    PreprocessStats stats;
    std::vector<std::string> label_names;
    std::vector<std::size_t> original_indices;

    std::size_t n_rows() const noexcept { return features.rows(); }
    std::size_t n_features() const noexcept { return features.cols(); }

    std::size_t n_classes() const {
        if (schema.n_classes > 0) return schema.n_classes;
        return label_names.size();
    }
};

/// Applies z-scoring (numerical columns) and ordinal encoding (categorical
/// columns) under the given statistics.  Zero-variance numerical columns map
/// to all zeros; categories unseen at fit time map to code |categories|.
inline Dataset preprocess(const RawTable& table, const PreprocessStats& stats) {
    if (stats.numeric.size() != table.schema.columns.size())
        throw DataError("preprocessing statistics do not match the schema column count");
    Dataset d;
    d.schema = table.schema;
    d.stats = stats;
    d.label_names = table.label_names;
    d.original_indices = table.original_indices;
    d.labels = table.labels;
    d.features = Matrix(table.n_rows, table.schema.columns.size());
    for (std::size_t c = 0; c < table.schema.columns.size(); ++c) {
        if (table.schema.columns[c].kind == ColumnKind::numerical) {
            const auto& st = stats.numeric[c];
            for (std::size_t r = 0; r < table.n_rows; ++r)
                d.features(r, c) = st.stddev > 0.0 ? (table.numeric[c][r] - st.mean) / st.stddev : 0.0;
        } else {
            const auto& cats = stats.categories[c];
            for (std::size_t r = 0; r < table.n_rows; ++r) {
                const std::string& value = table.categorical[c][r];
                auto it = std::lower_bound(cats.begin(), cats.end(), value);
                d.features(r, c) = (it != cats.end() && *it == value)
                                       ? static_cast<double>(it - cats.begin())
                                       : static_cast<double>(cats.size());
            }
        }
    }
    return d;
}

inline Dataset preprocess(const RawTable& table) { return preprocess(table, fit_stats(table)); }

/// Re-encodes an already encoded dataset against statistics fit on itself.
/// Z-scored columns have mean 0 / stddev 1 and ordinal codes re-encode to
/// themselves, so this is the identity up to floating point noise; it exists
/// so double application of the encoding cannot corrupt a pipeline.
inline Dataset preprocess(const Dataset& d) {
    Dataset out = d;
    out.stats.numeric.assign(d.schema.columns.size(), {});
    out.stats.categories.assign(d.schema.columns.size(), {});
    for (std::size_t c = 0; c < d.schema.columns.size(); ++c) {
        std::vector<double> col(d.n_rows());
        for (std::size_t r = 0; r < d.n_rows(); ++r) col[r] = d.features(r, c);
        if (d.schema.columns[c].kind == ColumnKind::numerical) {
            double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
            double ss = 0.0;
            for (double v : col) ss += (v - mean) * (v - mean);
            double stddev = std::sqrt(ss / col.size());
            out.stats.numeric[c] = {mean, stddev};
            for (std::size_t r = 0; r < d.n_rows(); ++r)
                out.features(r, c) = stddev > 0.0 ? (col[r] - mean) / stddev : 0.0;
        } else {
            std::vector<double> codes = col;
            std::sort(codes.begin(), codes.end());
            codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
            for (std::size_t r = 0; r < d.n_rows(); ++r) {
                auto it = std::lower_bound(codes.begin(), codes.end(), col[r]);
                out.features(r, c) = static_cast<double>(it - codes.begin());
            }
        }
    }
    return out;
}

/// Result of a three-way split.  `stratified` is false when any class had too
/// few rows to be spread across all three parts and the split fell back to a
/// plain shuffle.
struct SplitResult {
    RawTable train;
    RawTable val;
    RawTable test;
    bool stratified = false;
};

struct SplitRatios {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;
};

inline SplitResult split(const RawTable& table, SplitRatios ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
        throw ConfigError("split ratios must be non-negative");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    const std::size_t n = table.n_rows;
    if (n == 0) throw DataError("cannot split an empty table");

    auto cut = [&](std::size_t count, std::vector<std::size_t>& pool,
                   std::vector<std::size_t>& tr, std::vector<std::size_t>& va,
                   std::vector<std::size_t>& te) {
        std::size_t c1 = static_cast<std::size_t>(std::floor(count * ratios.train));
        std::size_t c2 = static_cast<std::size_t>(std::floor(count * (ratios.train + ratios.val)));
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (i < c1) tr.push_back(pool[i]);
            else if (i < c2) va.push_back(pool[i]);
            else te.push_back(pool[i]);
        }
    };

    bool stratify = is_classification(table.schema.task);
    std::vector<std::vector<std::size_t>> pools;
    if (stratify) {
        std::size_t n_classes = std::max<std::size_t>(table.n_classes(), 1);
        pools.resize(n_classes);
        for (std::size_t r = 0; r < n; ++r)
            pools[static_cast<std::size_t>(table.labels[r])].push_back(r);
        std::size_t parts = (ratios.train > 0) + (ratios.val > 0) + (ratios.test > 0);
        for (const auto& pool : pools)
            if (!pool.empty() && pool.size() < parts) stratify = false;
    }
    if (!stratify) {
        pools.clear();
        pools.emplace_back(n);
        std::iota(pools.back().begin(), pools.back().end(), 0);
    }

    auto rng = make_rng(derive_seed(seed, 0x51u));
    std::vector<std::size_t> tr, va, te;
    for (auto& pool : pools) {
        std::shuffle(pool.begin(), pool.end(), rng);
        cut(pool.size(), pool, tr, va, te);
    }
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    std::sort(te.begin(), te.end());

    SplitResult result;
    result.train = table.select_rows(tr);
    result.val = table.select_rows(va);
    result.test = table.select_rows(te);
    result.stratified = stratify;
    return result;
}

/// Draws `n_shots` training rows without replacement (the few-shot regime).
inline RawTable subsample_fewshot(const RawTable& table, std::size_t n_shots, std::uint64_t seed) {
    if (n_shots == 0) throw ConfigError("few-shot subsample size must be positive");
    if (n_shots > table.n_rows)
        throw DataError("few-shot subsample of " + std::to_string(n_shots) +
                        " rows requested from a table with " + std::to_string(table.n_rows));
    std::vector<std::size_t> rows(table.n_rows);
    std::iota(rows.begin(), rows.end(), 0);
    auto rng = make_rng(derive_seed(seed, 0xf3u));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(n_shots);
    std::sort(rows.begin(), rows.end());
    return table.select_rows(rows);
}

}  // namespace delta
