#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "delta/cart.hpp"
#include "delta/correct.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/forest.hpp"
#include "delta/matrix.hpp"
#include "delta/metrics.hpp"
#include "delta/refine.hpp"
#include "delta/refined_rule.hpp"

namespace delta {

// ---------------------------------------------------------------------------
// Intra-node distance
// ---------------------------------------------------------------------------

namespace detail {

/// Sample-weighted mean of per-group mean pairwise Euclidean distances.
/// Groups with fewer than two rows carry no pairs and are excluded.
inline double grouped_intra_distance(const Matrix& features,
                                     const std::vector<std::size_t>& assignment) {
    if (features.rows() == 0) throw DataError("intra-node distance needs a non-empty dataset");
    if (assignment.size() != features.rows())
        throw InternalError("group assignment length does not match row count");

    std::size_t n_groups = 0;
    for (std::size_t g : assignment) n_groups = std::max(n_groups, g + 1);
    std::vector<std::vector<std::size_t>> groups(n_groups);
    for (std::size_t r = 0; r < assignment.size(); ++r) groups[assignment[r]].push_back(r);

    const std::size_t d = features.cols();
    double weighted_sum = 0.0;
    double total_weight = 0.0;
    for (const auto& rows : groups) {
        if (rows.size() < 2) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* a = features.row(rows[i]);
            for (std::size_t j = i + 1; j < rows.size(); ++j) {
                const double* b = features.row(rows[j]);
                double sq = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    double diff = a[c] - b[c];
                    sq += diff * diff;
                }
                acc += std::sqrt(sq);
            }
        }
        const double pairs = 0.5 * static_cast<double>(rows.size()) *
                             static_cast<double>(rows.size() - 1);
        weighted_sum += static_cast<double>(rows.size()) * (acc / pairs);
        total_weight += static_cast<double>(rows.size());
    }
    if (total_weight == 0.0)
        throw DataError("intra-node distance undefined: every leaf holds fewer than two rows");
    return weighted_sum / total_weight;
}

}  // namespace detail

/// Mean pairwise distance between rows that a refined rule routes to the same
/// leaf; lower means the partition groups more similar samples together.
inline double intra_node_distance(const RefinedRule& rule, const Matrix& features) {
    return detail::grouped_intra_distance(features, rule.assign_all(features));
}

inline double intra_node_distance(const RefinedRule& rule, const Dataset& data) {
    return intra_node_distance(rule, data.features);
}

/// Same metric over a fitted tree's leaf partition.
inline double intra_node_distance(const CartTree& tree, const Matrix& features) {
    std::vector<std::size_t> raw(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r)
        raw[r] = static_cast<std::size_t>(tree.leaf_index(features.row(r)));
    // Leaf node indices are sparse within the node array; compress them.
    std::vector<std::size_t> sorted(raw);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<std::size_t> assignment(raw.size());
    for (std::size_t r = 0; r < raw.size(); ++r)
        assignment[r] = static_cast<std::size_t>(
            std::lower_bound(sorted.begin(), sorted.end(), raw[r]) - sorted.begin());
    return detail::grouped_intra_distance(features, assignment);
}

inline double intra_node_distance(const CartTree& tree, const Dataset& data) {
    return intra_node_distance(tree, data.features);
}

/// Average of the per-tree intra-node distances across a forest.
inline double mean_forest_intra_distance(const Forest& forest, const Matrix& features) {
    if (forest.trees.empty()) throw DataError("intra-node distance needs a fitted forest");
    double acc = 0.0;
    for (const auto& tree : forest.trees) acc += intra_node_distance(tree, features);
    return acc / static_cast<double>(forest.trees.size());
}

// ---------------------------------------------------------------------------
// Standalone rule predictor
// ---------------------------------------------------------------------------

/// A refined rule used directly as a tree: each leaf predicts the label
/// statistics (class distribution or mean) of the training rows it receives.
struct RuleLabelModel {
    RefinedRule rule;
    std::vector<std::vector<double>> leaf_values;
    std::vector<double> fallback;
    std::size_t output_dim = 0;

    std::vector<double> predict(const double* x) const {
        std::size_t leaf = rule.assign_leaf(x);
        const auto& value = leaf_values.at(leaf);
        return value.empty() ? fallback : value;
    }
};

inline RuleLabelModel fit_rule_label_model(const RefinedRule& rule, const Dataset& train) {
    if (train.n_rows() == 0) throw DataError("rule label model needs a non-empty training set");
    RuleLabelModel model;
    model.rule = rule;
    const bool classify = is_classification(train.schema.task);
    model.output_dim = classify ? train.n_classes() : 1;

    model.fallback.assign(model.output_dim, 0.0);
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
        if (classify)
            model.fallback[static_cast<std::size_t>(train.labels[r])] += 1.0;
        else
            model.fallback[0] += train.labels[r];
    }
    for (double& v : model.fallback) v /= static_cast<double>(train.n_rows());

    const auto assignment = rule.assign_all(train.features);
    std::vector<std::size_t> counts(rule.n_leaves, 0);
    model.leaf_values.assign(rule.n_leaves, {});
    for (std::size_t leaf = 0; leaf < rule.n_leaves; ++leaf)
        model.leaf_values[leaf].assign(model.output_dim, 0.0);
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
        auto& value = model.leaf_values[assignment[r]];
        if (classify)
            value[static_cast<std::size_t>(train.labels[r])] += 1.0;
        else
            value[0] += train.labels[r];
        ++counts[assignment[r]];
    }
    for (std::size_t leaf = 0; leaf < rule.n_leaves; ++leaf) {
        if (counts[leaf] == 0) {
            model.leaf_values[leaf].clear();  // empty leaves fall back to the global stats
            continue;
        }
        for (double& v : model.leaf_values[leaf]) v /= static_cast<double>(counts[leaf]);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

/// The component-removal grid: which of the three ingredients (refined rule,
/// forest output, error correction) each variant keeps.
struct AblationVariant {
    enum class Id { A, B, C, D, E, F, full };

    Id id = Id::full;
    bool uses_refinement = true;
    bool uses_forest_output = true;
    bool uses_error_correction = true;
};

inline std::string to_string(AblationVariant::Id id) {
    switch (id) {
        case AblationVariant::Id::A: return "A";
        case AblationVariant::Id::B: return "B";
        case AblationVariant::Id::C: return "C";
        case AblationVariant::Id::D: return "D";
        case AblationVariant::Id::E: return "E";
        case AblationVariant::Id::F: return "F";
        case AblationVariant::Id::full: return "full";
    }
    throw InternalError("unhandled ablation variant id");
}

inline AblationVariant::Id variant_id_from_string(const std::string& s) {
    if (s == "A") return AblationVariant::Id::A;
    if (s == "B") return AblationVariant::Id::B;
    if (s == "C") return AblationVariant::Id::C;
    if (s == "D") return AblationVariant::Id::D;
    if (s == "E") return AblationVariant::Id::E;
    if (s == "F") return AblationVariant::Id::F;
    if (s == "full") return AblationVariant::Id::full;
    throw ConfigError("unknown ablation variant '" + s + "'");
}

inline AblationVariant ablation_variant(AblationVariant::Id id) {
    switch (id) {
        case AblationVariant::Id::A: return {id, false, false, false};
        case AblationVariant::Id::B: return {id, false, true, false};
        case AblationVariant::Id::C: return {id, true, false, false};
        case AblationVariant::Id::D: return {id, true, true, false};
        case AblationVariant::Id::E: return {id, true, true, true};
        case AblationVariant::Id::F: return {id, false, false, true};
        case AblationVariant::Id::full: return {id, true, true, true};
    }
    throw InternalError("unhandled ablation variant id");
}

inline std::vector<AblationVariant> all_ablation_variants() {
    return {ablation_variant(AblationVariant::Id::A),   ablation_variant(AblationVariant::Id::B),
            ablation_variant(AblationVariant::Id::C),   ablation_variant(AblationVariant::Id::D),
            ablation_variant(AblationVariant::Id::E),   ablation_variant(AblationVariant::Id::F),
            ablation_variant(AblationVariant::Id::full)};
}

/// Everything the ablation grid needs: the fitted forest, the refined rules,
/// and the split the forest was trained on.
struct AblationContext {
    Dataset train;
    Dataset val;
    Dataset test;
    Forest forest;
    std::vector<RefinedRule> rules;
    CartHyperparams net_tree;
    std::vector<double> eta_grid = default_eta_grid();
    std::uint64_t seed = 0;
};

struct AblationRow {
    std::string variant;
    MetricReport report;
    double eta = 0.0;
};

namespace detail {

inline void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double scale) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

/// Ascending-grid step-size search shared by the correction-based variants;
/// ties resolve to the smaller step, matching the calibrated model's policy.
inline double select_eta_by_score(const std::function<Matrix(double)>& predict_val,
                                  const Dataset& val, Task task, std::vector<double> grid) {
    if (grid.empty()) throw ConfigError("eta selection needs a non-empty grid");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    double best_eta = grid.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (double eta : grid) {
        MetricReport report = evaluate(predict_val(eta), val.labels, task);
        double score = report.metric == "accuracy" ? report.value : -report.value;
        if (score > best_score) {
            best_score = score;
            best_eta = eta;
        }
    }
    return best_eta;
}

}  // namespace detail

/// Runs one ablation variant end to end and scores it on the test split.
///   A: single tree.  B: the forest.  C: refined rules as standalone trees.
///   D: mean of B and C.  E: D plus the error correction.  F: forest plus a
///   correction driven by the best forest tree's own rule.  full: forest plus
///   the refined-rule correction.
inline AblationRow run_ablation_variant(const AblationVariant& variant,
                                        const AblationContext& ctx) {
    const Task task = ctx.train.schema.task;
    const bool classify = is_classification(task);
    const std::size_t m = ctx.forest.output_dim;
    const LossKind loss = default_loss(task);

    auto evaluate_rows = [&](const Matrix& preds) {
        return evaluate(preds, ctx.test.labels, task);
    };

    auto predict_rules = [&](const std::vector<RuleLabelModel>& models, const Matrix& features) {
        Matrix out(features.rows(), m);
        parallel_for(features.rows(), [&](std::size_t r) {
            std::vector<double> acc(m, 0.0);
            for (const auto& model : models)
                detail::add_scaled(acc, model.predict(features.row(r)), 1.0);
            for (double& v : acc) v /= static_cast<double>(models.size());
            std::copy(acc.begin(), acc.end(), out.row(r));
        });
        return out;
    };

    switch (variant.id) {
        case AblationVariant::Id::A: {
            CartHyperparams hp = ctx.forest.config.tree;
            hp.mtry = 0;
            CartTree tree = fit_cart(ctx.train, hp, derive_seed(ctx.seed, 0xAB, 0));
            Matrix preds(ctx.test.n_rows(), m);
            parallel_for(ctx.test.n_rows(), [&](std::size_t r) {
                auto p = tree.predict(ctx.test.features.row(r));
                std::copy(p.begin(), p.end(), preds.row(r));
            });
            return {to_string(variant.id), evaluate_rows(preds), 0.0};
        }
        case AblationVariant::Id::B: {
            return {to_string(variant.id), evaluate_rows(ctx.forest.predict_all(ctx.test.features)),
                    0.0};
        }
        case AblationVariant::Id::C:
        case AblationVariant::Id::D: {
            if (ctx.rules.empty()) throw DataError("ablation variant needs refined rules");
            std::vector<RuleLabelModel> models;
            for (const auto& rule : ctx.rules)
                models.push_back(fit_rule_label_model(rule, ctx.train));
            Matrix preds = predict_rules(models, ctx.test.features);
            if (variant.id == AblationVariant::Id::D) {
                Matrix forest_preds = ctx.forest.predict_all(ctx.test.features);
                for (std::size_t r = 0; r < preds.rows(); ++r)
                    for (std::size_t c = 0; c < m; ++c)
                        preds(r, c) = 0.5 * (preds(r, c) + forest_preds(r, c));
            }
            return {to_string(variant.id), evaluate_rows(preds), 0.0};
        }
        case AblationVariant::Id::E:
        case AblationVariant::Id::full: {
            if (ctx.rules.empty()) throw DataError("ablation variant needs refined rules");
            Matrix train_outputs = ctx.forest.predict_all(ctx.train.features);
            GradientSet gradset =
                make_gradient_set(ctx.train.features, train_outputs, ctx.train.labels, loss);
            std::vector<GradientNet> nets;
            for (std::size_t i = 0; i < ctx.rules.size(); ++i)
                nets.push_back(fit_gradient_net(gradset, ctx.rules[i], ctx.net_tree,
                                                derive_seed(ctx.seed, 0xEC, i)));

            std::function<Matrix(const Matrix&, double)> base;
            if (variant.id == AblationVariant::Id::full) {
                base = [&](const Matrix& features, double) {
                    return ctx.forest.predict_all(features);
                };
            } else {
                std::vector<RuleLabelModel> models;
                for (const auto& rule : ctx.rules)
                    models.push_back(fit_rule_label_model(rule, ctx.train));
                base = [&, models](const Matrix& features, double) {
                    Matrix preds = predict_rules(models, features);
                    Matrix forest_preds = ctx.forest.predict_all(features);
                    for (std::size_t r = 0; r < preds.rows(); ++r)
                        for (std::size_t c = 0; c < m; ++c)
                            preds(r, c) = 0.5 * (preds(r, c) + forest_preds(r, c));
                    return preds;
                };
            }
            auto corrected = [&](const Matrix& features, double eta) {
                Matrix preds = base(features, eta);
                parallel_for(features.rows(), [&](std::size_t r) {
                    std::vector<double> delta(m, 0.0);
                    for (const auto& net : nets)
                        detail::add_scaled(delta, net.predict(features.row(r)), 1.0);
                    bool any = false;
                    for (double v : delta)
                        if (v != 0.0) any = true;
                    if (!any) return;
                    double scale = eta / static_cast<double>(nets.size());
                    std::vector<double> row(preds.row(r), preds.row(r) + m);
                    for (std::size_t c = 0; c < m; ++c) row[c] += scale * delta[c];
                    if (classify) DeltaModel::repair_probabilities(row);
                    std::copy(row.begin(), row.end(), preds.row(r));
                });
                return preds;
            };
            double eta = detail::select_eta_by_score(
                [&](double e) { return corrected(ctx.val.features, e); }, ctx.val, task,
                ctx.eta_grid);
            return {to_string(variant.id), evaluate_rows(corrected(ctx.test.features, eta)), eta};
        }
        case AblationVariant::Id::F: {
            if (ctx.forest.trees.empty()) throw DataError("ablation variant needs a fitted forest");
            const auto ranked = rank_trees_by_validation(ctx.forest, ctx.val);
            RefinedRule forest_rule = rule_from_tree(ctx.forest.trees[ranked.front()]);
            Matrix train_outputs = ctx.forest.predict_all(ctx.train.features);
            GradientSet gradset =
                make_gradient_set(ctx.train.features, train_outputs, ctx.train.labels, loss);
            GradientNet net =
                fit_gradient_net(gradset, forest_rule, ctx.net_tree, derive_seed(ctx.seed, 0xEC, 0));
            auto corrected = [&](const Matrix& features, double eta) {
                Matrix preds = ctx.forest.predict_all(features);
                parallel_for(features.rows(), [&](std::size_t r) {
                    auto delta = net.predict(features.row(r));
                    bool any = false;
                    for (double v : delta)
                        if (v != 0.0) any = true;
                    if (!any) return;
                    std::vector<double> row(preds.row(r), preds.row(r) + m);
                    for (std::size_t c = 0; c < m; ++c) row[c] += eta * delta[c];
                    if (classify) DeltaModel::repair_probabilities(row);
                    std::copy(row.begin(), row.end(), preds.row(r));
                });
                return preds;
            };
            double eta = detail::select_eta_by_score(
                [&](double e) { return corrected(ctx.val.features, e); }, ctx.val, task,
                ctx.eta_grid);
            return {to_string(variant.id), evaluate_rows(corrected(ctx.test.features, eta)), eta};
        }
    }
    throw InternalError("unhandled ablation variant id");
}

inline std::vector<AblationRow> run_ablation(const AblationContext& ctx,
                                             const std::vector<AblationVariant>& variants) {
    std::vector<AblationRow> rows;
    for (const auto& variant : variants) rows.push_back(run_ablation_variant(variant, ctx));
    return rows;
}

}  // namespace delta
