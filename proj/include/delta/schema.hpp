#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/error.hpp"

namespace delta {

/// Prediction task kinds.  The names follow the usual tabular benchmark
/// convention: "binclass", "multiclass", "regression".
enum class Task { binclass, multiclass, regression };

inline bool is_classification(Task t) { return t != Task::regression; }

inline std::string to_string(Task t) {
    switch (t) {
        case Task::binclass: return "binclass";
        case Task::multiclass: return "multiclass";
        case Task::regression: return "regression";
    }
    throw InternalError("unknown task enum value");
}

inline Task task_from_string(const std::string& s) {
    if (s == "binclass") return Task::binclass;
    if (s == "multiclass") return Task::multiclass;
    if (s == "regression") return Task::regression;
    throw DataError("unknown task kind '" + s + "' (expected binclass, multiclass or regression)");
}

/// Feature column kinds.
enum class ColumnKind { numerical, categorical };

inline std::string to_string(ColumnKind k) {
    return k == ColumnKind::numerical ? "numerical" : "categorical";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "numerical") return ColumnKind::numerical;
    if (s == "categorical") return ColumnKind::categorical;
    throw DataError("unknown column kind '" + s + "' (expected numerical or categorical)");
}

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;

    bool operator==(const Column&) const = default;
};

/// Describes one tabular dataset: its feature columns and the target.
struct Schema {
    std::vector<Column> columns;
    std::string target_name;
    Task task = Task::binclass;
    /// Number of classes; 0 means "derive from the data" for classification
    /// and is ignored for regression.
    std::size_t n_classes = 0;

    bool operator==(const Schema&) const = default;

    std::size_t n_features() const noexcept { return columns.size(); }

    std::size_t n_numerical() const noexcept {
        std::size_t n = 0;
        for (const auto& c : columns) n += c.kind == ColumnKind::numerical ? 1 : 0;
        return n;
    }

    std::size_t n_categorical() const noexcept { return columns.size() - n_numerical(); }
};

inline nlohmann::ordered_json schema_to_json(const Schema& schema) {
    nlohmann::ordered_json j;
    j["columns"] = nlohmann::ordered_json::array();
    for (const auto& c : schema.columns)
        j["columns"].push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    j["target"] = {{"name", schema.target_name}, {"task", to_string(schema.task)}};
    if (is_classification(schema.task) && schema.n_classes > 0)
        j["target"]["n_classes"] = schema.n_classes;
    return j;
}

inline Schema schema_from_json(const nlohmann::json& j) {
    Schema schema;
    if (!j.contains("columns") || !j["columns"].is_array())
        throw DataError("schema: missing or non-array 'columns'");
    if (!j.contains("target") || !j["target"].is_object())
        throw DataError("schema: missing or non-object 'target'");
    for (const auto& c : j["columns"]) {
        if (!c.contains("name") || !c.contains("kind"))
            throw DataError("schema: every column needs 'name' and 'kind'");
        schema.columns.push_back(
            {c["name"].get<std::string>(), column_kind_from_string(c["kind"].get<std::string>())});
    }
    const auto& t = j["target"];
    if (!t.contains("name") || !t.contains("task"))
        throw DataError("schema: target needs 'name' and 'task'");
    schema.target_name = t["name"].get<std::string>();
    schema.task = task_from_string(t["task"].get<std::string>());
    if (t.contains("n_classes")) schema.n_classes = t["n_classes"].get<std::size_t>();
    if (schema.task == Task::binclass && schema.n_classes == 0) schema.n_classes = 2;
    if (schema.task == Task::regression) schema.n_classes = 0;
    for (std::size_t i = 0; i < schema.columns.size(); ++i)
        for (std::size_t k = i + 1; k < schema.columns.size(); ++k)
            if (schema.columns[i].name == schema.columns[k].name)
                throw DataError("schema: duplicate column name '" + schema.columns[i].name + "'");
    return schema;
}

inline Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("schema file " + path + " is not valid JSON: " + e.what());
    }
    return schema_from_json(j);
}

inline void save_schema(const Schema& schema, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write schema file: " + path);
    out << schema_to_json(schema).dump(2) << "\n";
}

/// FNV-1a hash of the canonical schema serialization.  Persisted models store
/// this to detect evaluation against a mismatching dataset.
inline std::string schema_hash(const Schema& schema) {
    const std::string dump = schema_to_json(schema).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace delta
