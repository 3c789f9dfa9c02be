#pragma once

#include <delta/delta.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

// Shared helpers for the unit and acceptance suites: tiny dataset builders,
// independent split-quality oracles and a fuzzer for refined partitioning
// rules.  Everything here is deliberately naive — brute force loops, no reuse
// of library internals — so test expectations stay independent of the code
// under test.
namespace tsup {

inline std::string source_path(const std::string& relative) {
    return std::string(DELTA_SOURCE_DIR) + "/" + relative;
}

inline delta::Matrix make_matrix(const std::vector<std::vector<double>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    delta::Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
    return m;
}

inline delta::Schema numeric_schema(std::size_t d, delta::Task task, std::size_t n_classes) {
    delta::Schema schema;
    for (std::size_t j = 0; j < d; ++j)
        schema.columns.push_back({"f" + std::to_string(j), delta::ColumnKind::numerical});
    schema.target_name = "label";
    schema.task = task;
    schema.n_classes = n_classes;
    return schema;
}

/// Classification dataset over already-encoded features; labels are class
/// indices 0..n_classes-1.
inline delta::Dataset make_classification_dataset(const std::vector<std::vector<double>>& rows,
                                                  const std::vector<double>& labels,
                                                  std::size_t n_classes = 2) {
    delta::Dataset d;
    d.features = make_matrix(rows);
    d.labels = labels;
    d.schema = numeric_schema(d.features.cols(),
                              n_classes == 2 ? delta::Task::binclass : delta::Task::multiclass,
                              n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) d.label_names.push_back("c" + std::to_string(c));
    for (std::size_t r = 0; r < d.features.rows(); ++r) d.original_indices.push_back(r);
    return d;
}

inline delta::Dataset make_regression_dataset(const std::vector<std::vector<double>>& rows,
                                              const std::vector<double>& targets) {
    delta::Dataset d;
    d.features = make_matrix(rows);
    d.labels = targets;
    d.schema = numeric_schema(d.features.cols(), delta::Task::regression, 0);
    for (std::size_t r = 0; r < d.features.rows(); ++r) d.original_indices.push_back(r);
    return d;
}

// ---------------------------------------------------------------------------
// Brute-force split-quality oracles
// ---------------------------------------------------------------------------

/// Gini impurity of the label multiset (1 - sum of squared class shares).
inline double gini(const std::vector<double>& labels, std::size_t n_classes) {
    if (labels.empty()) return 0.0;
    std::vector<double> counts(n_classes, 0.0);
    for (double y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
    double sum_sq = 0.0;
    for (double c : counts) {
        double p = c / static_cast<double>(labels.size());
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

/// Mean squared deviation from the mean (population variance of the targets).
inline double variance(const std::vector<double>& targets) {
    if (targets.empty()) return 0.0;
    double mean = 0.0;
    for (double t : targets) mean += t;
    mean /= static_cast<double>(targets.size());
    double ss = 0.0;
    for (double t : targets) ss += (t - mean) * (t - mean);
    return ss / static_cast<double>(targets.size());
}

/// Impurity decrease of splitting rows at `x[feature] <= threshold`, with
/// child impurities weighted by their row shares.  `classification` selects
/// Gini vs variance.  Splits with an empty side score 0.
inline double split_gain(const delta::Matrix& features, const std::vector<double>& outcomes,
                         std::size_t n_classes, bool classification, std::size_t feature,
                         double threshold) {
    std::vector<double> left, right;
    for (std::size_t r = 0; r < features.rows(); ++r)
        (features(r, feature) <= threshold ? left : right).push_back(outcomes[r]);
    if (left.empty() || right.empty()) return 0.0;
    auto impurity = [&](const std::vector<double>& ys) {
        return classification ? gini(ys, n_classes) : variance(ys);
    };
    double n = static_cast<double>(outcomes.size());
    return impurity(outcomes) -
           (static_cast<double>(left.size()) / n) * impurity(left) -
           (static_cast<double>(right.size()) / n) * impurity(right);
}

/// Exhaustive maximum gain over every feature and every midpoint between
/// consecutive distinct values of that feature.
inline double best_gain(const delta::Matrix& features, const std::vector<double>& outcomes,
                        std::size_t n_classes, bool classification) {
    double best = 0.0;
    for (std::size_t j = 0; j < features.cols(); ++j) {
        std::vector<double> values;
        for (std::size_t r = 0; r < features.rows(); ++r) values.push_back(features(r, j));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            double mid = 0.5 * (values[i] + values[i + 1]);
            best = std::max(best,
                            split_gain(features, outcomes, n_classes, classification, j, mid));
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Refined-rule fuzzer
// ---------------------------------------------------------------------------

namespace detail {

inline std::int32_t grow_rule(delta::RefinedRule& rule, std::mt19937_64& rng, std::size_t d,
                              std::size_t depth, std::size_t max_depth) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool leaf = depth >= max_depth || unit(rng) < 0.35;
    if (leaf) {
        delta::RefinedRule::Node node;
        node.is_leaf = true;
        node.ordinal = rule.n_leaves++;
        node.leaf_id = "leaf_" + std::to_string(node.ordinal + 1);
        std::int32_t at = static_cast<std::int32_t>(rule.nodes.size());
        rule.nodes.push_back(std::move(node));
        return at;
    }
    delta::RefinedRule::Node node;
    node.is_leaf = false;
    node.feature = static_cast<std::uint32_t>(rng() % d);
    node.threshold = std::uniform_real_distribution<double>(-2.5, 2.5)(rng);
    std::int32_t at = static_cast<std::int32_t>(rule.nodes.size());
    rule.nodes.push_back(node);
    std::int32_t left = grow_rule(rule, rng, d, depth + 1, max_depth);
    std::int32_t right = grow_rule(rule, rng, d, depth + 1, max_depth);
    rule.nodes[at].left = left;
    rule.nodes[at].right = right;
    return at;
}

}  // namespace detail

/// Random partitioning rule in the same preorder layout the parser produces:
/// leaf ordinals follow depth-first appearance and ids are "leaf_<ordinal+1>".
inline delta::RefinedRule random_rule(std::mt19937_64& rng, std::size_t d,
                                      std::size_t max_depth) {
    delta::RefinedRule rule;
    detail::grow_rule(rule, rng, d, 0, max_depth);
    return rule;
}

/// Random feature matrix with entries in (-3, 3).
inline delta::Matrix random_features(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    delta::Matrix m(n, d);
    std::uniform_real_distribution<double> value(-3.0, 3.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) m(r, c) = value(rng);
    return m;
}

}  // namespace tsup
