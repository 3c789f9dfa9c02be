#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/cart.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/forest.hpp"
#include "delta/matrix.hpp"
#include "delta/metrics.hpp"
#include "delta/parallel.hpp"
#include "delta/refined_rule.hpp"
#include "delta/rng.hpp"

namespace delta {

/// Smooth convex losses over model outputs.  Classification uses squared
/// error against the one-hot target (Brier-style), keeping the negative
/// gradient bounded in [-1, 1] — cross-entropy's gradient with respect to
/// probabilities blows up near 0.
enum class LossKind { squared_error, one_hot_squared };

inline std::string to_string(LossKind k) {
    return k == LossKind::squared_error ? "squared_error" : "one_hot_squared";
}

inline LossKind loss_from_string(const std::string& s) {
    if (s == "squared_error") return LossKind::squared_error;
    if (s == "one_hot_squared") return LossKind::one_hot_squared;
    throw DataError("unknown loss kind '" + s + "'");
}

inline LossKind default_loss(Task task) {
    return is_classification(task) ? LossKind::one_hot_squared : LossKind::squared_error;
}

/// Loss of one prediction: ½(F−y)² or ½‖p − onehot(y)‖².
inline double loss_value(const double* outputs, std::size_t m, double label, LossKind loss) {
    if (loss == LossKind::squared_error) {
        double r = outputs[0] - label;
        return 0.5 * r * r;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        double target = (static_cast<double>(c) == label) ? 1.0 : 0.0;
        double r = outputs[c] - target;
        acc += r * r;
    }
    return 0.5 * acc;
}

inline double mean_loss(const Matrix& outputs, const std::vector<double>& labels, LossKind loss) {
    if (outputs.rows() != labels.size())
        throw DataError("loss: output row count does not match label count");
    double acc = 0.0;
    for (std::size_t r = 0; r < outputs.rows(); ++r)
        acc += loss_value(outputs.row(r), outputs.cols(), labels[r], loss);
    return acc / static_cast<double>(outputs.rows());
}

/// Training features paired with negative gradients of the loss at the
/// current ensemble outputs: the targets the correction nets regress on.
struct GradientSet {
    Matrix features;
    Matrix targets;
};

/// Negative gradients −∇ℒ per row: y − F (squared error) or onehot(y) − p
/// (one-hot squared error).
inline Matrix negative_gradients(const Matrix& outputs, const std::vector<double>& labels,
                                 LossKind loss) {
    if (outputs.rows() != labels.size())
        throw DataError("gradients: output row count does not match label count");
    const std::size_t m = outputs.cols();
    if (loss == LossKind::squared_error && m != 1)
        throw DataError("squared-error gradients expect single-column outputs");
    Matrix targets(outputs.rows(), m);
    for (std::size_t r = 0; r < outputs.rows(); ++r) {
        for (std::size_t c = 0; c < m; ++c)
            if (!std::isfinite(outputs(r, c)))
                throw DataError("non-finite model output in gradient computation");
        if (loss == LossKind::squared_error) {
            targets(r, 0) = labels[r] - outputs(r, 0);
        } else {
            double y = labels[r];
            if (!(y >= 0.0) || y >= static_cast<double>(m) || y != std::floor(y))
                throw DataError("label outside class range in gradient computation");
            for (std::size_t c = 0; c < m; ++c) {
                double onehot = (static_cast<double>(c) == y) ? 1.0 : 0.0;
                targets(r, c) = onehot - outputs(r, c);
            }
        }
    }
    return targets;
}

inline GradientSet make_gradient_set(const Matrix& features, const Matrix& outputs,
                                     const std::vector<double>& labels, LossKind loss) {
    if (features.rows() != outputs.rows())
        throw DataError("gradient set: feature and output row counts differ");
    return {features, negative_gradients(outputs, labels, loss)};
}

// ---------------------------------------------------------------------------
// Gradient net
// ---------------------------------------------------------------------------

/// Per-leaf regressors over a refined rule's partition.  Each leaf of the
/// rule owns either a multi-output CART regressor, a constant (too few rows
/// to fit a tree), or the global-mean fallback (no rows at all).
struct GradientNet {
    enum class LeafKind { tree, constant, fallback };

    struct LeafModel {
        LeafKind kind = LeafKind::fallback;
        CartTree tree;
        std::vector<double> constant;
    };

    RefinedRule rule;
    std::vector<LeafModel> leaves;
    std::vector<double> fallback;
    std::size_t output_dim = 0;
    /// Ordinals of leaves that received no training rows.
    std::vector<std::size_t> empty_leaves;

    std::vector<double> predict(const double* x) const {
        std::size_t leaf = rule.assign_leaf(x);
        const LeafModel& model = leaves.at(leaf);
        switch (model.kind) {
            case LeafKind::tree: return model.tree.predict(x);
            case LeafKind::constant: return model.constant;
            case LeafKind::fallback: return fallback;
        }
        throw InternalError("unhandled leaf model kind");
    }

    std::vector<double> predict(const std::vector<double>& x) const { return predict(x.data()); }
};

/// Fits one regressor per rule leaf on the rows that leaf receives
/// (concurrently; per-leaf seeds keep the result schedule-independent).
inline GradientNet fit_gradient_net(const GradientSet& gradset, const RefinedRule& rule,
                                    const CartHyperparams& hp, std::uint64_t seed) {
    const std::size_t n = gradset.features.rows();
    if (n == 0) throw DataError("cannot fit a gradient net on an empty gradient set");
    if (gradset.targets.rows() != n)
        throw InternalError("gradient set features/targets row mismatch");

    GradientNet net;
    net.rule = rule;
    net.output_dim = gradset.targets.cols();
    net.leaves.resize(rule.n_leaves);

    net.fallback.assign(net.output_dim, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < net.output_dim; ++c)
            net.fallback[c] += gradset.targets(r, c);
    for (double& v : net.fallback) v /= static_cast<double>(n);

    std::vector<std::vector<std::uint32_t>> rows_per_leaf(rule.n_leaves);
    const auto assignment = rule.assign_all(gradset.features);
    for (std::size_t r = 0; r < n; ++r)
        rows_per_leaf[assignment[r]].push_back(static_cast<std::uint32_t>(r));

    parallel_for(rule.n_leaves, [&](std::size_t leaf) {
        const auto& rows = rows_per_leaf[leaf];
        GradientNet::LeafModel model;
        if (rows.empty()) {
            model.kind = GradientNet::LeafKind::fallback;
        } else if (rows.size() < std::max<std::size_t>(hp.min_leaf, 2)) {
            model.kind = GradientNet::LeafKind::constant;
            model.constant.assign(net.output_dim, 0.0);
            for (std::uint32_t r : rows)
                for (std::size_t c = 0; c < net.output_dim; ++c)
                    model.constant[c] += gradset.targets(r, c);
            for (double& v : model.constant) v /= static_cast<double>(rows.size());
        } else {
            Matrix features(rows.size(), gradset.features.cols());
            Matrix targets(rows.size(), net.output_dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::copy(gradset.features.row(rows[i]),
                          gradset.features.row(rows[i]) + gradset.features.cols(),
                          features.row(i));
                std::copy(gradset.targets.row(rows[i]),
                          gradset.targets.row(rows[i]) + net.output_dim, targets.row(i));
            }
            model.kind = GradientNet::LeafKind::tree;
            model.tree = fit_cart_regressor(features, targets, hp, derive_seed(seed, 0xcE, leaf));
        }
        net.leaves[leaf] = std::move(model);
    });
    for (std::size_t leaf = 0; leaf < rule.n_leaves; ++leaf)
        if (rows_per_leaf[leaf].empty()) net.empty_leaves.push_back(leaf);
    return net;
}

/// Δx = η · φ(x): the sample-specific correction read from the leaf regressor
/// that the rule routes x to.
inline std::vector<double> correction_vector(const GradientNet& net, const double* x, double eta) {
    if (eta < 0.0) throw ConfigError("correction step eta must be non-negative");
    std::vector<double> out = net.predict(x);
    for (double& v : out) v *= eta;
    return out;
}

inline std::vector<double> correction_vector(const GradientNet& net, const std::vector<double>& x,
                                             double eta) {
    return correction_vector(net, x.data(), eta);
}

// ---------------------------------------------------------------------------
// Calibrated model
// ---------------------------------------------------------------------------

/// The full calibrated predictor: a bagged forest plus one gradient net per
/// refiner query; prediction adds the mean correction to the forest output.
struct DeltaModel {
    Forest forest;
    std::vector<GradientNet> nets;
    double eta = 0.5;
    Task task = Task::binclass;
    LossKind loss = LossKind::one_hot_squared;

    std::vector<double> predict(const double* x) const {
        std::vector<double> out = forest.predict(x);
        if (nets.empty() || eta == 0.0) return out;
        std::vector<double> delta(out.size(), 0.0);
        bool any_nonzero = false;
        for (const auto& net : nets) {
            auto phi = net.predict(x);
            for (std::size_t c = 0; c < delta.size(); ++c) {
                delta[c] += phi[c];
                if (phi[c] != 0.0) any_nonzero = true;
            }
        }
        if (!any_nonzero) return out;  // exact no-op at the zero-residual fixed point
        double scale = eta / static_cast<double>(nets.size());
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += scale * delta[c];
        if (is_classification(task)) repair_probabilities(out);
        return out;
    }

    std::vector<double> predict(const std::vector<double>& x) const {
        if (x.size() != forest.n_features)
            throw DataError("feature vector length does not match model feature count");
        return predict(x.data());
    }

    Matrix predict_all(const Matrix& features) const {
        if (features.cols() != forest.n_features)
            throw DataError("feature matrix width does not match model feature count");
        Matrix out(features.rows(), forest.output_dim);
        parallel_for(features.rows(), [&](std::size_t r) {
            auto p = predict(features.row(r));
            std::copy(p.begin(), p.end(), out.row(r));
        });
        return out;
    }

    /// Clip to [0, 1] and renormalize to sum 1; an all-zero vector (every
    /// component clipped away) degrades to the uniform distribution.
    static void repair_probabilities(std::vector<double>& p) {
        double sum = 0.0;
        for (double& v : p) {
            v = std::clamp(v, 0.0, 1.0);
            sum += v;
        }
        if (sum <= 0.0) {
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
            return;
        }
        for (double& v : p) v /= sum;
    }
};

/// Packs per-query (rule, net) pairs into one averaged model.
inline DeltaModel ensemble_over_rules(Forest forest, std::vector<GradientNet> nets, double eta,
                                      LossKind loss) {
    if (nets.empty()) throw DataError("ensemble needs at least one gradient net");
    for (const auto& net : nets) {
        if (net.output_dim != nets.front().output_dim)
            throw DataError("gradient nets disagree on output dimension");
        if (net.output_dim != forest.output_dim)
            throw DataError("gradient net output dimension does not match the forest");
        if (net.rule.max_feature() >= static_cast<std::int64_t>(forest.n_features))
            throw DataError("gradient net rule references features beyond the forest's range");
    }
    DeltaModel model;
    model.forest = std::move(forest);
    model.nets = std::move(nets);
    model.eta = eta;
    model.task = model.forest.task;
    model.loss = loss;
    return model;
}

/// Picks the grid value with the best validation metric (accuracy maximized,
/// NRMSE minimized); ties resolve to the smaller step.
inline double select_eta(const std::function<DeltaModel(double)>& candidate_model_builder,
                         const Dataset& val, std::vector<double> grid) {
    if (val.n_rows() == 0) throw DataError("eta selection needs a non-empty validation set");
    if (grid.empty()) throw ConfigError("eta selection needs a non-empty grid");
    for (double g : grid)
        if (!(g > 0.0) || !std::isfinite(g))
            throw ConfigError("eta grid values must be positive and finite");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    double best_eta = grid.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (double eta : grid) {
        DeltaModel model = candidate_model_builder(eta);
        MetricReport report = evaluate(model.predict_all(val.features), val.labels,
                                       model.task);
        double score = report.metric == "accuracy" ? report.value : -report.value;
        if (score > best_score) {
            best_score = score;
            best_eta = eta;
        }
    }
    return best_eta;
}

inline std::vector<double> default_eta_grid() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json gradient_net_to_json(const GradientNet& net) {
    nlohmann::ordered_json j;
    j["rule"] = detail::rule_node_to_json(net.rule, 0);
    j["output_dim"] = net.output_dim;
    j["fallback"] = net.fallback;
    j["empty_leaves"] = net.empty_leaves;
    j["leaves"] = nlohmann::ordered_json::array();
    for (const auto& leaf : net.leaves) {
        nlohmann::ordered_json lj;
        switch (leaf.kind) {
            case GradientNet::LeafKind::tree:
                lj["kind"] = "tree";
                lj["tree"] = cart_to_json(leaf.tree);
                break;
            case GradientNet::LeafKind::constant:
                lj["kind"] = "constant";
                lj["value"] = leaf.constant;
                break;
            case GradientNet::LeafKind::fallback:
                lj["kind"] = "fallback";
                break;
        }
        j["leaves"].push_back(std::move(lj));
    }
    return j;
}

inline GradientNet gradient_net_from_json(const nlohmann::json& j) {
    GradientNet net;
    detail::rule_node_from_json(j.at("rule"), net.rule);
    net.output_dim = j.at("output_dim").get<std::size_t>();
    net.fallback = j.at("fallback").get<std::vector<double>>();
    net.empty_leaves = j.value("empty_leaves", std::vector<std::size_t>{});
    for (const auto& lj : j.at("leaves")) {
        GradientNet::LeafModel leaf;
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "tree") {
            leaf.kind = GradientNet::LeafKind::tree;
            leaf.tree = cart_from_json(lj.at("tree"));
        } else if (kind == "constant") {
            leaf.kind = GradientNet::LeafKind::constant;
            leaf.constant = lj.at("value").get<std::vector<double>>();
        } else if (kind == "fallback") {
            leaf.kind = GradientNet::LeafKind::fallback;
        } else {
            throw DataError("unknown gradient net leaf kind '" + kind + "'");
        }
        net.leaves.push_back(std::move(leaf));
    }
    if (net.leaves.size() != net.rule.n_leaves)
        throw DataError("gradient net leaf count does not match its rule");
    return net;
}

inline nlohmann::ordered_json delta_model_to_json(const DeltaModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "delta-model-v1";
    j["task"] = to_string(model.task);
    j["loss"] = to_string(model.loss);
    j["eta"] = model.eta;
    j["schema_hash"] = model.forest.schema_fingerprint;
    j["forest"] = forest_to_json(model.forest);
    j["nets"] = nlohmann::ordered_json::array();
    for (const auto& net : model.nets) j["nets"].push_back(gradient_net_to_json(net));
    return j;
}

inline DeltaModel delta_model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "delta-model-v1")
        throw DataError("unrecognized model persistence format");
    DeltaModel model;
    model.task = task_from_string(j.at("task").get<std::string>());
    model.loss = loss_from_string(j.at("loss").get<std::string>());
    model.eta = j.at("eta").get<double>();
    model.forest = forest_from_json(j.at("forest"));
    for (const auto& nj : j.at("nets")) model.nets.push_back(gradient_net_from_json(nj));
    return model;
}

}  // namespace delta
