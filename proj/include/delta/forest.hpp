#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/cart.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/matrix.hpp"
#include "delta/metrics.hpp"
#include "delta/parallel.hpp"
#include "delta/rng.hpp"

namespace delta {

/// Separator line used between per-tree rule blocks.
inline constexpr const char* kRuleSeparator = "----------------------------";

struct ForestConfig {
    std::size_t k = 100;
    CartHyperparams tree;
    /// Degenerate flag: disables bootstrap resampling and per-split feature
    /// subsampling, so k=1 reproduces a plain CART exactly.
    bool bootstrap = true;

    bool operator==(const ForestConfig&) const = default;
};

/// Effective per-split feature count: sqrt(d) for classification, d/3 for
/// regression (minimum 1) — standard bagged-forest defaults.
inline std::size_t default_mtry(Task task, std::size_t d) {
    std::size_t m = is_classification(task)
                        ? static_cast<std::size_t>(std::sqrt(static_cast<double>(d)))
                        : d / 3;
    return std::max<std::size_t>(m, 1);
}

/// Bagged ensemble of CART trees; prediction is the arithmetic mean of the
/// per-tree outputs.
struct Forest {
    std::vector<CartTree> trees;
    /// Per-tree bootstrap row indices into the training set.
    std::vector<std::vector<std::size_t>> subsets;
    ForestConfig config;
    std::uint64_t seed = 0;
    Task task = Task::binclass;
    std::size_t n_features = 0;
    std::size_t output_dim = 0;
    std::string schema_fingerprint;

    std::size_t k() const noexcept { return trees.size(); }

    std::vector<double> predict(const double* x) const {
        if (trees.empty()) throw InternalError("prediction on an unfitted forest");
        std::vector<double> out(output_dim, 0.0);
        for (const auto& tree : trees) {
            const auto& p = tree.predict(x);
            for (std::size_t j = 0; j < output_dim; ++j) out[j] += p[j];
        }
        for (double& v : out) v /= static_cast<double>(trees.size());
        if (is_classification(task)) {
            double sum = std::accumulate(out.begin(), out.end(), 0.0);
            if (sum > 0.0)
                for (double& v : out) v /= sum;
        }
        return out;
    }

    std::vector<double> predict(const std::vector<double>& x) const {
        if (x.size() != n_features)
            throw DataError("feature vector length does not match forest feature count");
        return predict(x.data());
    }

    /// Row-wise predictions for a whole feature matrix.
    Matrix predict_all(const Matrix& features) const {
        if (features.cols() != n_features)
            throw DataError("feature matrix width does not match forest feature count");
        Matrix out(features.rows(), output_dim);
        parallel_for(features.rows(), [&](std::size_t r) {
            auto p = predict(features.row(r));
            std::copy(p.begin(), p.end(), out.row(r));
        });
        return out;
    }

    std::vector<double> predict(const Matrix& features, std::size_t row) const {
        return predict(features.row(row));
    }
};

inline Forest fit_forest(const Dataset& train, const ForestConfig& config, std::uint64_t seed) {
    if (config.k < 1) throw ConfigError("forest needs at least one tree");
    const std::size_t n = train.n_rows();
    const std::size_t d = train.n_features();
    if (n == 0) throw DataError("cannot fit a forest on an empty dataset");

    Forest forest;
    forest.config = config;
    forest.seed = seed;
    forest.task = train.schema.task;
    forest.n_features = d;
    forest.output_dim = is_classification(train.schema.task) ? train.n_classes() : 1;
    forest.schema_fingerprint = schema_hash(train.schema);
    forest.trees.resize(config.k);
    forest.subsets.resize(config.k);

    CartHyperparams tree_hp = config.tree;
    if (config.bootstrap) {
        if (tree_hp.mtry == 0) tree_hp.mtry = default_mtry(train.schema.task, d);
    } else {
        tree_hp.mtry = 0;  // degenerate mode: consider every feature
    }

    parallel_for(config.k, [&](std::size_t k) {
        std::uint64_t tree_seed = derive_seed(seed, k);
        std::vector<std::size_t> rows(n);
        if (config.bootstrap) {
            auto rng = make_rng(derive_seed(tree_seed, 0xb0));
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& r : rows) r = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        Matrix features(n, d);
        std::vector<double> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(train.features.row(rows[i]), train.features.row(rows[i]) + d,
                      features.row(i));
            labels[i] = train.labels[rows[i]];
        }
        CartTree tree;
        if (is_classification(train.schema.task))
            tree = fit_cart_classifier(features, labels, train.n_classes(), tree_hp, tree_seed,
                                       train.schema.task);
        else
            tree = fit_cart_regressor(features, labels, tree_hp, tree_seed);
        forest.trees[k] = std::move(tree);
        forest.subsets[k] = std::move(rows);
    });
    return forest;
}

// ---------------------------------------------------------------------------
// Rule set
// ---------------------------------------------------------------------------

/// One rule-text block per tree, rendered with "Tree {k} rules:" headers and
/// dashed separators:
///   ----------------------------
///   Tree 1 rules:
///   |--- ...
///   ----------------------------
struct RuleSet {
    std::vector<std::string> rule_texts;

    std::size_t size() const noexcept { return rule_texts.size(); }

    std::string block(std::size_t index) const {
        return "Tree " + std::to_string(index + 1) + " rules:\n" + rule_texts.at(index);
    }

    /// Renders the first `count` blocks (all when count >= size).
    std::string render(std::size_t count) const {
        count = std::min(count, rule_texts.size());
        std::string out = std::string(kRuleSeparator) + "\n";
        for (std::size_t i = 0; i < count; ++i) {
            out += block(i);
            out += std::string(kRuleSeparator) + "\n";
        }
        return out;
    }

    std::string render() const { return render(rule_texts.size()); }

    /// New rule set holding the chosen trees, renumbered from 1.
    RuleSet subset(const std::vector<std::size_t>& indices) const {
        RuleSet out;
        for (std::size_t i : indices) out.rule_texts.push_back(rule_texts.at(i));
        return out;
    }
};

inline RuleSet extract_rule_set(const Forest& forest) {
    RuleSet rules;
    rules.rule_texts.reserve(forest.k());
    for (const auto& tree : forest.trees) rules.rule_texts.push_back(extract_rule_text(tree));
    return rules;
}

/// Tree indices ordered by validation accuracy (classification) or ascending
/// validation squared error (regression); ties resolve to the lower index.
inline std::vector<std::size_t> rank_trees_by_validation(const Forest& forest,
                                                         const Dataset& val) {
    std::vector<double> score(forest.k(), 0.0);
    parallel_for(forest.k(), [&](std::size_t k) {
        const CartTree& tree = forest.trees[k];
        if (is_classification(forest.task)) {
            std::size_t hits = 0;
            for (std::size_t r = 0; r < val.n_rows(); ++r) {
                const auto& p = tree.predict(val.features.row(r));
                if (argmax_class(p.data(), p.size()) == static_cast<std::size_t>(val.labels[r]))
                    ++hits;
            }
            score[k] = static_cast<double>(hits) / static_cast<double>(val.n_rows());
        } else {
            double se = 0.0;
            for (std::size_t r = 0; r < val.n_rows(); ++r) {
                double p = tree.predict(val.features.row(r))[0];
                se += (p - val.labels[r]) * (p - val.labels[r]);
            }
            score[k] = -se;
        }
    });
    std::vector<std::size_t> order(forest.k());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return order;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json forest_to_json(const Forest& forest) {
    nlohmann::ordered_json j;
    j["format"] = "delta-forest-v1";
    j["k"] = forest.k();
    j["seed"] = forest.seed;
    j["task"] = to_string(forest.task);
    j["n_features"] = forest.n_features;
    j["output_dim"] = forest.output_dim;
    j["bootstrap"] = forest.config.bootstrap;
    j["hyperparams"] = hyperparams_to_json(forest.config.tree);
    j["schema_hash"] = forest.schema_fingerprint;
    j["trees"] = nlohmann::ordered_json::array();
    for (const auto& tree : forest.trees) j["trees"].push_back(cart_to_json(tree));
    return j;
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "delta-forest-v1")
        throw DataError("unrecognized forest persistence format");
    Forest forest;
    forest.seed = j.at("seed").get<std::uint64_t>();
    forest.task = task_from_string(j.at("task").get<std::string>());
    forest.n_features = j.at("n_features").get<std::size_t>();
    forest.output_dim = j.at("output_dim").get<std::size_t>();
    forest.config.bootstrap = j.value("bootstrap", true);
    forest.config.tree = hyperparams_from_json(j.value("hyperparams", nlohmann::json::object()));
    forest.config.k = j.at("k").get<std::size_t>();
    forest.schema_fingerprint = j.value("schema_hash", "");
    for (const auto& tj : j.at("trees")) forest.trees.push_back(cart_from_json(tj));
    if (forest.trees.size() != forest.config.k)
        throw DataError("forest persistence: tree count does not match k");
    return forest;
}

}  // namespace delta
