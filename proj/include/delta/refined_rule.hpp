#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/error.hpp"
#include "delta/matrix.hpp"

namespace delta {

/// A prediction-free partitioning tree: internal nodes test
/// "x[feature] <= threshold", leaves carry only an identifier.  Leaf ids are
/// normalized to ordinals (0-based, first-appearance order) at parse time.
struct RefinedRule {
    struct Node {
        bool is_leaf = true;
        std::uint32_t feature = 0;
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::string leaf_id;
        std::size_t ordinal = 0;
    };

    std::vector<Node> nodes;
    std::size_t n_leaves = 0;
    /// Keys such as "prediction" found (and ignored) while parsing.
    std::vector<std::string> warnings;

    bool operator==(const RefinedRule& other) const {
        if (nodes.size() != other.nodes.size() || n_leaves != other.n_leaves) return false;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Node& a = nodes[i];
            const Node& b = other.nodes[i];
            if (a.is_leaf != b.is_leaf) return false;
            if (a.is_leaf) {
                if (a.ordinal != b.ordinal) return false;
            } else if (a.feature != b.feature || a.threshold != b.threshold ||
                       a.left != b.left || a.right != b.right) {
                return false;
            }
        }
        return true;
    }

    /// Largest feature index referenced; -1 for a single-leaf rule.
    std::int64_t max_feature() const {
        std::int64_t m = -1;
        for (const auto& node : nodes)
            if (!node.is_leaf) m = std::max<std::int64_t>(m, node.feature);
        return m;
    }

    /// Routes x to a leaf and returns its ordinal ("<= goes left").
    std::size_t assign_leaf(const double* x) const {
        if (nodes.empty()) throw InternalError("leaf assignment on an empty rule");
        std::size_t i = 0;
        while (!nodes[i].is_leaf) {
            double v = x[nodes[i].feature];
            if (!std::isfinite(v))
                throw DataError("non-finite feature value during rule routing");
            i = v <= nodes[i].threshold ? static_cast<std::size_t>(nodes[i].left)
                                        : static_cast<std::size_t>(nodes[i].right);
        }
        return nodes[i].ordinal;
    }

    std::size_t assign_leaf(const std::vector<double>& x) const {
        if (static_cast<std::int64_t>(x.size()) <= max_feature())
            throw DataError("feature vector shorter than the rule's max feature index");
        return assign_leaf(x.data());
    }

    /// Leaf ordinal per row of a feature matrix.
    std::vector<std::size_t> assign_all(const Matrix& features) const {
        if (static_cast<std::int64_t>(features.cols()) <= max_feature())
            throw DataError("feature matrix narrower than the rule's max feature index");
        std::vector<std::size_t> out(features.rows());
        for (std::size_t r = 0; r < features.rows(); ++r) out[r] = assign_leaf(features.row(r));
        return out;
    }
};

namespace detail {

/// Text cleanup applied before strict JSON parsing: strips code fences,
/// rewrites single-quoted strings, quotes bare identifier keys, and removes
/// trailing commas — the usual ways refiner output deviates from JSON.
inline std::string normalize_rule_text(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    // Drop code-fence lines entirely.
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line.compare(first, 3, "```") != 0) {
            s += line;
            s += '\n';
        }
        pos = eol + 1;
    }
    std::string out;
    out.reserve(s.size());
    bool in_double = false;
    bool in_single = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_double) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) out += s[++i];
            else if (c == '"') in_double = false;
            continue;
        }
        if (in_single) {
            if (c == '\'') {
                out += '"';
                in_single = false;
            } else if (c == '"') {
                out += "\\\"";
            } else {
                out += c;
                if (c == '\\' && i + 1 < s.size()) out += s[++i];
            }
            continue;
        }
        if (c == '"') {
            in_double = true;
            out += c;
        } else if (c == '\'') {
            in_single = true;
            out += '"';
        } else if ((std::isalpha(static_cast<unsigned char>(c)) || c == '_') &&
                   (out.empty() || out.back() == '{' || out.back() == ',' ||
                    std::isspace(static_cast<unsigned char>(out.back())))) {
            // Possible bare key: collect the identifier and quote it when a
            // colon follows.
            std::size_t j = i;
            while (j < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_'))
                ++j;
            std::size_t k = j;
            while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
            if (k < s.size() && s[k] == ':') {
                out += '"';
                out.append(s, i, j - i);
                out += '"';
                i = j - 1;
            } else {
                out += c;
            }
        } else {
            out += c;
        }
    }
    // Remove trailing commas: "," followed only by whitespace then '}' / ']'.
    std::string cleaned;
    cleaned.reserve(out.size());
    in_double = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
        char c = out[i];
        if (in_double) {
            cleaned += c;
            if (c == '\\' && i + 1 < out.size()) cleaned += out[++i];
            else if (c == '"') in_double = false;
            continue;
        }
        if (c == '"') in_double = true;
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < out.size() && std::isspace(static_cast<unsigned char>(out[j]))) ++j;
            if (j < out.size() && (out[j] == '}' || out[j] == ']')) continue;
        }
        cleaned += c;
    }
    return cleaned;
}

/// Returns every balanced outermost {...} region in order of appearance,
/// respecting string literals.
inline std::vector<std::string> balanced_brace_regions(const std::string& s) {
    std::vector<std::string> regions;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '{') {
            ++i;
            continue;
        }
        int depth = 0;
        bool in_string = false;
        std::size_t start = i;
        std::size_t j = i;
        for (; j < s.size(); ++j) {
            char c = s[j];
            if (in_string) {
                if (c == '\\') ++j;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                --depth;
                if (depth == 0) break;
            }
        }
        if (j < s.size() && depth == 0) {
            regions.push_back(s.substr(start, j - start + 1));
            i = j + 1;
        } else {
            ++i;  // unbalanced from this '{'; try the next one
        }
    }
    return regions;
}

inline std::int32_t rule_node_from_json(const nlohmann::json& j, RefinedRule& rule) {
    if (!j.is_object()) throw DataError("rule node is not an object");
    RefinedRule::Node node;
    if (j.contains("id")) {
        if (!j["id"].is_string()) throw DataError("leaf id must be a string");
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (key != "id") rule.warnings.push_back("ignored leaf key '" + key + "'");
        }
        node.is_leaf = true;
        node.leaf_id = j["id"].get<std::string>();
        if (node.leaf_id.empty()) throw DataError("leaf id must be non-empty");
        for (const auto& other : rule.nodes)
            if (other.is_leaf && other.leaf_id == node.leaf_id)
                throw DataError("duplicate leaf id '" + node.leaf_id + "'");
        node.ordinal = rule.n_leaves++;
        std::int32_t at = static_cast<std::int32_t>(rule.nodes.size());
        rule.nodes.push_back(std::move(node));
        return at;
    }
    if (!j.contains("feature") || !j.contains("threshold"))
        throw DataError("internal rule node needs 'feature' and 'threshold'");
    if (!j.contains("left") || !j.contains("right"))
        throw DataError("internal rule node needs both 'left' and 'right'");
    if (j.contains("operator")) {
        if (!j["operator"].is_string() || j["operator"].get<std::string>() != "<=")
            throw DataError("unsupported operator '" +
                            (j["operator"].is_string() ? j["operator"].get<std::string>()
                                                       : j["operator"].dump()) +
                            "' (only \"<=\" is allowed)");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "feature" && key != "threshold" && key != "operator" && key != "left" &&
            key != "right")
            rule.warnings.push_back("ignored internal key '" + key + "'");
    }
    if (!j["feature"].is_number())
        throw DataError("rule feature must be a non-negative integer");
    double feature_raw = j["feature"].get<double>();
    if (feature_raw < 0 || feature_raw != std::floor(feature_raw))
        throw DataError("rule feature must be a non-negative integer");
    if (!j["threshold"].is_number()) throw DataError("rule threshold must be a number");
    node.is_leaf = false;
    node.feature = static_cast<std::uint32_t>(feature_raw);
    node.threshold = j["threshold"].get<double>();
    if (!std::isfinite(node.threshold)) throw DataError("rule threshold must be finite");
    std::int32_t at = static_cast<std::int32_t>(rule.nodes.size());
    rule.nodes.push_back(node);
    std::int32_t left = rule_node_from_json(j["left"], rule);
    std::int32_t right = rule_node_from_json(j["right"], rule);
    rule.nodes[at].left = left;
    rule.nodes[at].right = right;
    return at;
}

}  // namespace detail

/// Extracts and parses the first well-formed rule object from refiner output.
/// Tolerates prose around the object, code fences, single quotes, bare keys
/// and trailing commas; the object itself must follow the rule grammar.
inline RefinedRule parse_rule(const std::string& text) {
    const std::string normalized = detail::normalize_rule_text(text);
    const auto regions = detail::balanced_brace_regions(normalized);
    if (regions.empty())
        throw DataError("no balanced rule object found in refiner response");
    std::string first_error;
    for (const auto& region : regions) {
        nlohmann::json j = nlohmann::json::parse(region, nullptr, false);
        if (j.is_discarded()) {
            if (first_error.empty()) first_error = "balanced region is not valid JSON";
            continue;
        }
        RefinedRule rule;
        try {
            detail::rule_node_from_json(j, rule);
        } catch (const DataError& e) {
            if (first_error.empty()) first_error = e.what();
            continue;
        }
        return rule;
    }
    throw DataError("no parsable rule object in refiner response: " + first_error);
}

struct RuleViolation {
    std::string message;
};

/// Collects every contract violation (feature range, finiteness, leaf limit).
/// Leaf-id uniqueness is enforced structurally at parse time.
inline std::vector<RuleViolation> validate_rule(const RefinedRule& rule, std::size_t d,
                                                std::size_t leaf_limit) {
    std::vector<RuleViolation> violations;
    if (rule.nodes.empty()) {
        violations.push_back({"rule has no nodes"});
        return violations;
    }
    for (const auto& node : rule.nodes) {
        if (node.is_leaf) continue;
        if (node.feature >= d)
            violations.push_back({"feature index " + std::to_string(node.feature) +
                                  " out of range for d=" + std::to_string(d)});
        if (!std::isfinite(node.threshold))
            violations.push_back({"non-finite threshold"});
    }
    if (rule.n_leaves > leaf_limit)
        violations.push_back({"rule has " + std::to_string(rule.n_leaves) +
                              " leaves, exceeding the limit of " + std::to_string(leaf_limit)});
    return violations;
}

namespace detail {

inline nlohmann::ordered_json rule_node_to_json(const RefinedRule& rule, std::size_t index) {
    const RefinedRule::Node& node = rule.nodes[index];
    if (node.is_leaf)
        return nlohmann::ordered_json{{"id", "leaf_" + std::to_string(node.ordinal + 1)}};
    nlohmann::ordered_json j;
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["operator"] = "<=";
    j["left"] = rule_node_to_json(rule, node.left);
    j["right"] = rule_node_to_json(rule, node.right);
    return j;
}

}  // namespace detail

/// Canonical wire form: strict JSON, fixed key order, leaf ids renamed to
/// "leaf_<ordinal+1>".  parse_rule(serialize_rule(r)) is structurally r.
inline std::string serialize_rule(const RefinedRule& rule) {
    if (rule.nodes.empty()) throw InternalError("cannot serialize an empty rule");
    return detail::rule_node_to_json(rule, 0).dump();
}

}  // namespace delta
