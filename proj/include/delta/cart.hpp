#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/matrix.hpp"
#include "delta/metrics.hpp"
#include "delta/rng.hpp"
#include "delta/schema.hpp"

namespace delta {

struct CartHyperparams {
    std::size_t max_depth = 8;
    std::size_t min_leaf = 2;
    std::size_t max_leaf_nodes = 32;
    /// Number of candidate features per split; 0 means all features.
    std::size_t mtry = 0;
    /// When true, ties among equal-gain splits are broken by the fit seed
    /// instead of the default lowest-feature/lowest-threshold rule.
    bool seeded_tie_break = false;

    bool operator==(const CartHyperparams&) const = default;
};

inline nlohmann::ordered_json hyperparams_to_json(const CartHyperparams& hp) {
    return {{"max_depth", hp.max_depth},
            {"min_leaf", hp.min_leaf},
            {"max_leaf_nodes", hp.max_leaf_nodes},
            {"mtry", hp.mtry},
            {"seeded_tie_break", hp.seeded_tie_break}};
}

inline CartHyperparams hyperparams_from_json(const nlohmann::json& j) {
    CartHyperparams hp;
    if (j.contains("max_depth")) hp.max_depth = j["max_depth"].get<std::size_t>();
    if (j.contains("min_leaf")) hp.min_leaf = j["min_leaf"].get<std::size_t>();
    if (j.contains("max_leaf_nodes")) hp.max_leaf_nodes = j["max_leaf_nodes"].get<std::size_t>();
    if (j.contains("mtry")) hp.mtry = j["mtry"].get<std::size_t>();
    if (j.contains("seeded_tie_break")) hp.seeded_tie_break = j["seeded_tie_break"].get<bool>();
    return hp;
}

/// Binary decision tree grown greedily: Gini impurity reduction for
/// classification, total-variance reduction for (multi-output) regression.
/// Thresholds are midpoints between consecutive distinct feature values and
/// routing follows the "x[feature] <= threshold goes left" convention.
class CartTree {
public:
    struct Node {
        bool is_leaf = true;
        std::uint32_t feature = 0;
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        /// Class-probability vector (classification) or mean target vector
        /// (regression; one component per output).
        std::vector<double> value;
        std::size_t n_samples = 0;
        /// Impurity reduction achieved by this node's split (internal only).
        double gain = 0.0;
    };

    CartTree() = default;
    CartTree(Task task, std::size_t n_features, std::size_t output_dim, CartHyperparams hp)
        : task_(task), n_features_(n_features), output_dim_(output_dim), hyperparams_(hp) {}

    Task task() const noexcept { return task_; }
    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    const CartHyperparams& hyperparams() const noexcept { return hyperparams_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::vector<Node>& nodes() noexcept { return nodes_; }

    bool fitted() const noexcept { return !nodes_.empty(); }

    std::size_t n_leaves() const {
        std::size_t n = 0;
        for (const auto& node : nodes_) n += node.is_leaf ? 1 : 0;
        return n;
    }

    std::size_t depth() const { return nodes_.empty() ? 0 : depth_below(0); }

    /// Impurity reduction of the root split; 0 for a single-leaf tree.
    double root_gain() const { return nodes_.empty() ? 0.0 : nodes_.front().gain; }

    /// Index (into nodes()) of the leaf that x routes to.
    std::size_t leaf_index(const double* x) const {
        if (nodes_.empty()) throw InternalError("prediction on an unfitted tree");
        std::size_t i = 0;
        while (!nodes_[i].is_leaf) {
            const Node& node = nodes_[i];
            double v = x[node.feature];
            if (!std::isfinite(v))
                throw DataError("non-finite feature value encountered during tree routing");
            i = v <= node.threshold ? static_cast<std::size_t>(node.left)
                                    : static_cast<std::size_t>(node.right);
        }
        return i;
    }

    const std::vector<double>& predict(const double* x) const { return nodes_[leaf_index(x)].value; }

    const std::vector<double>& predict(const std::vector<double>& x) const {
        if (x.size() != n_features_)
            throw DataError("feature vector length " + std::to_string(x.size()) +
                            " does not match tree with " + std::to_string(n_features_) + " features");
        return predict(x.data());
    }

private:
    std::size_t depth_below(std::size_t i) const {
        const Node& node = nodes_[i];
        if (node.is_leaf) return 0;
        return 1 + std::max(depth_below(node.left), depth_below(node.right));
    }

    Task task_ = Task::binclass;
    std::size_t n_features_ = 0;
    std::size_t output_dim_ = 0;
    CartHyperparams hyperparams_;
    std::vector<Node> nodes_;

    friend class CartFitter;
};

namespace detail {

/// Incrementally updatable node statistics: per-class counts (classification)
/// or target sums plus the sum of squared norms (regression).
class NodeStats {
public:
    NodeStats(bool classification, std::size_t dim) : classification_(classification), sum_(dim) {}

    void clear() {
        n_ = 0;
        std::fill(sum_.begin(), sum_.end(), 0.0);
        sumsq_ = 0.0;
    }

    void add(const double* target) {
        ++n_;
        for (std::size_t j = 0; j < sum_.size(); ++j) sum_[j] += target[j];
        for (std::size_t j = 0; j < sum_.size(); ++j) sumsq_ += target[j] * target[j];
    }

    void add_class(std::size_t c) {
        ++n_;
        sum_[c] += 1.0;
    }

    std::size_t count() const noexcept { return n_; }

    /// Gini impurity (classification) or total variance across outputs
    /// (regression); both are per-sample, scale-free quantities.
    double impurity() const {
        if (n_ == 0) return 0.0;
        double n = static_cast<double>(n_);
        if (classification_) {
            double g = 1.0;
            for (double s : sum_) g -= (s / n) * (s / n);
            return g;
        }
        double var = sumsq_ / n;
        for (double s : sum_) var -= (s / n) * (s / n);
        return std::max(var, 0.0);
    }

    std::vector<double> mean() const {
        std::vector<double> m = sum_;
        for (double& v : m) v /= static_cast<double>(n_);
        return m;
    }

    static NodeStats difference(const NodeStats& total, const NodeStats& part) {
        NodeStats out(total.classification_, total.sum_.size());
        out.n_ = total.n_ - part.n_;
        for (std::size_t j = 0; j < out.sum_.size(); ++j)
            out.sum_[j] = total.sum_[j] - part.sum_[j];
        out.sumsq_ = total.sumsq_ - part.sumsq_;
        return out;
    }

private:
    bool classification_;
    std::size_t n_ = 0;
    std::vector<double> sum_;
    double sumsq_ = 0.0;
};

}  // namespace detail

/// Grows a CartTree best-first (largest weighted impurity reduction next), so
/// a max_leaf_nodes budget is spent on the most valuable splits.  Without a
/// binding budget the result equals plain recursive splitting, because split
/// choice at a node depends only on that node's rows.
class CartFitter {
public:
    /// For classification, `targets` is N x 1 class indices and `stat_dim`
    /// the class count; for regression, `targets` is N x m and stat_dim == m.
    CartFitter(const Matrix& features, const Matrix& targets, bool classification,
               std::size_t stat_dim, Task task, CartHyperparams hp, std::uint64_t seed)
        : X_(features), T_(targets), classification_(classification), stat_dim_(stat_dim),
          task_(task), hp_(hp), seed_(seed) {
        if (X_.rows() == 0) throw DataError("cannot fit a tree on an empty dataset");
        if (X_.rows() != T_.rows()) throw InternalError("feature/target row mismatch in tree fit");
        if (X_.cols() == 0) throw DataError("cannot fit a tree with zero features");
        if (hp_.min_leaf == 0) throw ConfigError("min_leaf must be at least 1");
        if (hp_.max_leaf_nodes == 0) throw ConfigError("max_leaf_nodes must be at least 1");
        if (X_.rows() < hp_.min_leaf)
            throw DataError("fewer training rows than min_leaf");
        for (double v : X_.values())
            if (!std::isfinite(v)) throw DataError("non-finite feature value in training data");
    }

    CartTree fit() {
        CartTree tree(task_, X_.cols(), stat_dim_, hp_);
        std::vector<std::uint32_t> all(X_.rows());
        std::iota(all.begin(), all.end(), 0);

        tree.nodes_.push_back(make_leaf(all));
        std::size_t leaves = 1;

        struct Pending {
            double priority = 0.0;
            std::size_t order = 0;
            std::size_t node = 0;
            std::uint32_t feature = 0;
            double threshold = 0.0;
            double gain = 0.0;
            std::vector<std::uint32_t> rows;
            std::size_t depth = 0;
        };
        auto worse = [](const Pending& a, const Pending& b) {
            if (a.priority != b.priority) return a.priority < b.priority;
            return a.order > b.order;
        };
        std::priority_queue<Pending, std::vector<Pending>, decltype(worse)> queue(worse);
        std::size_t order = 0;

        auto consider = [&](std::size_t node, std::vector<std::uint32_t>&& rows, std::size_t depth) {
            if (depth >= hp_.max_depth || rows.size() < 2 * hp_.min_leaf) return;
            std::size_t node_order = order++;
            auto split = best_split(rows, node_order);
            if (!split) return;
            double weight = static_cast<double>(rows.size()) / static_cast<double>(X_.rows());
            queue.push(Pending{weight * split->gain, node_order, node, split->feature,
                               split->threshold, split->gain, std::move(rows), depth});
        };

        consider(0, std::move(all), 0);
        while (!queue.empty() && leaves < hp_.max_leaf_nodes) {
            Pending top = std::move(const_cast<Pending&>(queue.top()));
            queue.pop();
            std::vector<std::uint32_t> left_rows, right_rows;
            for (std::uint32_t r : top.rows) {
                if (X_(r, top.feature) <= top.threshold) left_rows.push_back(r);
                else right_rows.push_back(r);
            }
            std::size_t li = tree.nodes_.size();
            tree.nodes_.push_back(make_leaf(left_rows));
            std::size_t ri = tree.nodes_.size();
            tree.nodes_.push_back(make_leaf(right_rows));
            CartTree::Node& parent = tree.nodes_[top.node];
            parent.is_leaf = false;
            parent.feature = top.feature;
            parent.threshold = top.threshold;
            parent.left = static_cast<std::int32_t>(li);
            parent.right = static_cast<std::int32_t>(ri);
            parent.gain = top.gain;
            ++leaves;
            consider(li, std::move(left_rows), top.depth + 1);
            consider(ri, std::move(right_rows), top.depth + 1);
        }
        return tree;
    }

private:
    struct SplitChoice {
        std::uint32_t feature;
        double threshold;
        double gain;
    };

    CartTree::Node make_leaf(const std::vector<std::uint32_t>& rows) const {
        CartTree::Node node;
        node.n_samples = rows.size();
        detail::NodeStats stats(classification_, stat_dim_);
        for (std::uint32_t r : rows) {
            if (classification_) stats.add_class(class_of(r));
            else stats.add(T_.row(r));
        }
        node.value = stats.mean();
        return node;
    }

    std::size_t class_of(std::uint32_t row) const { return static_cast<std::size_t>(T_(row, 0)); }

    std::vector<std::uint32_t> candidate_features(std::size_t node_order) const {
        std::size_t d = X_.cols();
        std::size_t mtry = hp_.mtry == 0 ? d : std::min(hp_.mtry, d);
        std::vector<std::uint32_t> features(d);
        std::iota(features.begin(), features.end(), 0);
        if (mtry == d) return features;
        auto rng = make_rng(derive_seed(seed_, 0x6f, node_order));
        for (std::size_t i = 0; i < mtry; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, d - 1);
            std::swap(features[i], features[pick(rng)]);
        }
        features.resize(mtry);
        std::sort(features.begin(), features.end());
        return features;
    }

    std::optional<SplitChoice> best_split(const std::vector<std::uint32_t>& rows,
                                          std::size_t node_order) {
        const auto features = candidate_features(node_order);
        detail::NodeStats total(classification_, stat_dim_);
        for (std::uint32_t r : rows) {
            if (classification_) total.add_class(class_of(r));
            else total.add(T_.row(r));
        }
        const double parent_impurity = total.impurity();
        if (parent_impurity <= kMinGain) return std::nullopt;
        const double n = static_cast<double>(rows.size());

        std::vector<std::pair<double, std::uint32_t>> sorted(rows.size());
        detail::NodeStats left(classification_, stat_dim_);
        SplitChoice best{0, 0.0, 0.0};
        std::vector<SplitChoice> ties;
        bool found = false;

        for (std::uint32_t f : features) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                sorted[i] = {X_(rows[i], f), rows[i]};
            std::sort(sorted.begin(), sorted.end());
            if (sorted.front().first == sorted.back().first) continue;
            left.clear();
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                std::uint32_t r = sorted[i].second;
                if (classification_) left.add_class(class_of(r));
                else left.add(T_.row(r));
                if (sorted[i].first == sorted[i + 1].first) continue;
                std::size_t n_left = i + 1;
                std::size_t n_right = sorted.size() - n_left;
                if (n_left < hp_.min_leaf || n_right < hp_.min_leaf) continue;
                auto right = detail::NodeStats::difference(total, left);
                double gain = parent_impurity -
                              (static_cast<double>(n_left) / n) * left.impurity() -
                              (static_cast<double>(n_right) / n) * right.impurity();
                if (gain <= kMinGain) continue;
                double threshold = std::midpoint(sorted[i].first, sorted[i + 1].first);
                if (!found || gain > best.gain + kTieTol) {
                    best = {f, threshold, gain};
                    found = true;
                    if (hp_.seeded_tie_break) ties.assign(1, best);
                } else if (hp_.seeded_tie_break && gain > best.gain - kTieTol) {
                    ties.push_back({f, threshold, gain});
                }
            }
        }
        if (!found) return std::nullopt;
        if (hp_.seeded_tie_break && ties.size() > 1) {
            auto rng = make_rng(derive_seed(seed_, 0x7e, node_order));
            std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
            return ties[pick(rng)];
        }
        return best;
    }

    static constexpr double kMinGain = 1e-12;
    static constexpr double kTieTol = 1e-12;

    const Matrix& X_;
    const Matrix& T_;
    bool classification_;
    std::size_t stat_dim_;
    Task task_;
    CartHyperparams hp_;
    std::uint64_t seed_;
};

/// Fits a classification tree; labels hold class indices in [0, n_classes).
/// Leaf values are empirical class distributions.
inline CartTree fit_cart_classifier(const Matrix& features, const std::vector<double>& labels,
                                    std::size_t n_classes, const CartHyperparams& hp = {},
                                    std::uint64_t seed = 0, Task task = Task::binclass) {
    if (features.rows() != labels.size())
        throw DataError("label count does not match feature row count");
    if (n_classes < 2) throw DataError("classification requires at least two classes");
    Matrix targets(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double y = labels[i];
        if (!(y >= 0.0) || y >= static_cast<double>(n_classes) || y != std::floor(y))
            throw DataError("label " + std::to_string(y) + " outside class range [0, " +
                            std::to_string(n_classes) + ")");
        targets(i, 0) = y;
    }
    return CartFitter(features, targets, true, n_classes, task, hp, seed).fit();
}

/// Fits a (multi-output) regression tree; leaf values are mean target vectors.
inline CartTree fit_cart_regressor(const Matrix& features, const Matrix& targets,
                                   const CartHyperparams& hp = {}, std::uint64_t seed = 0) {
    if (targets.cols() == 0) throw DataError("regression targets need at least one output");
    for (double v : targets.values())
        if (!std::isfinite(v)) throw DataError("non-finite regression target");
    return CartFitter(features, targets, false, targets.cols(), Task::regression, hp, seed).fit();
}

inline CartTree fit_cart_regressor(const Matrix& features, const std::vector<double>& targets,
                                   const CartHyperparams& hp = {}, std::uint64_t seed = 0) {
    Matrix t(targets.size(), 1);
    for (std::size_t i = 0; i < targets.size(); ++i) t(i, 0) = targets[i];
    return fit_cart_regressor(features, t, hp, seed);
}

/// Fits a tree against an encoded Dataset, dispatching on its task.
inline CartTree fit_cart(const Dataset& train, const CartHyperparams& hp = {},
                         std::uint64_t seed = 0) {
    if (is_classification(train.schema.task))
        return fit_cart_classifier(train.features, train.labels, train.n_classes(), hp, seed,
                                   train.schema.task);
    return fit_cart_regressor(train.features, train.labels, hp, seed);
}

// ---------------------------------------------------------------------------
// Textual rule rendering and parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::string(buf);
}

inline void render_node(const CartTree& tree, std::size_t index, std::size_t depth,
                        std::string& out) {
    std::string indent;
    for (std::size_t i = 0; i < depth; ++i) indent += "|   ";
    const CartTree::Node& node = tree.nodes()[index];
    if (node.is_leaf) {
        if (is_classification(tree.task())) {
            std::size_t cls = argmax_class(node.value);
            out += indent + "|--- class: " + format_fixed(static_cast<double>(cls), 1) + "\n";
        } else {
            out += indent + "|--- value: " + format_fixed(node.value.at(0), 2) + "\n";
        }
        return;
    }
    const std::string f = "feature_" + std::to_string(node.feature);
    const std::string t = format_fixed(node.threshold, 2);
    out += indent + "|--- " + f + " <= " + t + "\n";
    render_node(tree, node.left, depth + 1, out);
    out += indent + "|--- " + f + " >  " + t + "\n";
    render_node(tree, node.right, depth + 1, out);
}

}  // namespace detail

/// Renders the tree in the indented rule grammar, e.g.
///   |--- feature_0 <= 2.50
///   |   |--- class: 0.0
///   |--- feature_0 >  2.50
///   |   |--- class: 1.0
/// Thresholds print with two decimals on the scale the tree was fit on.
inline std::string extract_rule_text(const CartTree& tree) {
    if (!tree.fitted()) throw InternalError("rule text requested for an unfitted tree");
    if (!is_classification(tree.task()) && tree.output_dim() != 1)
        throw InternalError("rule text is only defined for single-output trees");
    std::string out;
    detail::render_node(tree, 0, 0, out);
    return out;
}

namespace detail {

struct RuleTextCursor {
    const std::vector<std::string>& lines;
    std::size_t pos = 0;
};

struct RuleTextLine {
    std::size_t depth = 0;
    std::string body;
};

inline RuleTextLine split_rule_line(const std::string& line) {
    RuleTextLine out;
    std::size_t offset = 0;
    while (line.compare(offset, 4, "|   ") == 0) {
        ++out.depth;
        offset += 4;
    }
    if (line.compare(offset, 5, "|--- ") != 0)
        throw DataError("rule text line does not match grammar: '" + line + "'");
    out.body = line.substr(offset + 5);
    return out;
}

inline std::int32_t parse_rule_node(RuleTextCursor& cur, std::size_t depth, CartTree& tree);

inline std::int32_t parse_rule_branch(RuleTextCursor& cur, std::size_t depth, CartTree& tree,
                                      std::uint32_t feature, double threshold) {
    // Caller consumed the "<=" header; parse left subtree, the ">" header,
    // then the right subtree.
    std::int32_t left = parse_rule_node(cur, depth + 1, tree);
    if (cur.pos >= cur.lines.size())
        throw DataError("rule text ended before the right branch header");
    RuleTextLine line = split_rule_line(cur.lines[cur.pos]);
    char expect[96];
    std::snprintf(expect, sizeof(expect), "feature_%u >  %s", feature,
                  format_fixed(threshold, 2).c_str());
    if (line.depth != depth || line.body != expect)
        throw DataError("expected right branch header '" + std::string(expect) + "', got '" +
                        line.body + "'");
    ++cur.pos;
    std::int32_t right = parse_rule_node(cur, depth + 1, tree);
    std::int32_t index = static_cast<std::int32_t>(tree.nodes().size());
    CartTree::Node node;
    node.is_leaf = false;
    node.feature = feature;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    tree.nodes().push_back(node);
    return index;
}

inline std::int32_t parse_rule_node(RuleTextCursor& cur, std::size_t depth, CartTree& tree) {
    if (cur.pos >= cur.lines.size()) throw DataError("rule text ended unexpectedly");
    RuleTextLine line = split_rule_line(cur.lines[cur.pos]);
    if (line.depth != depth)
        throw DataError("rule text indentation mismatch at '" + line.body + "'");
    ++cur.pos;
    if (line.body.rfind("class: ", 0) == 0 || line.body.rfind("value: ", 0) == 0) {
        bool classification = line.body.front() == 'c';
        double v = 0.0;
        if (!parse_double(line.body.substr(7), v))
            throw DataError("unparseable leaf value in rule text: '" + line.body + "'");
        CartTree::Node node;
        node.is_leaf = true;
        if (classification) {
            std::size_t cls = static_cast<std::size_t>(v);
            node.value.assign(cls + 1, 0.0);
            node.value[cls] = 1.0;
        } else {
            node.value.assign(1, v);
        }
        std::int32_t index = static_cast<std::int32_t>(tree.nodes().size());
        tree.nodes().push_back(node);
        return index;
    }
    unsigned feature = 0;
    double threshold = 0.0;
    char op[3] = {0, 0, 0};
    int consumed = 0;
    if (std::sscanf(line.body.c_str(), "feature_%u %2s %lf%n", &feature, op, &threshold,
                    &consumed) != 3 ||
        static_cast<std::size_t>(consumed) != line.body.size() || std::string(op) != "<=")
        throw DataError("rule text internal line does not match grammar: '" + line.body + "'");
    return parse_rule_branch(cur, depth, tree, static_cast<std::uint32_t>(feature), threshold);
}

}  // namespace detail

/// Parses rule text produced by extract_rule_text back into a routable tree.
/// Classification leaves become one-hot distributions over the printed argmax
/// class; sample counts are not recoverable from text and read as zero.
inline CartTree parse_rule_text(const std::string& text, Task task) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    if (lines.empty()) throw DataError("empty rule text");
    CartTree tree(task, 0, 0, {});
    detail::RuleTextCursor cur{lines, 0};
    std::int32_t root = detail::parse_rule_node(cur, 0, tree);
    if (cur.pos != lines.size()) throw DataError("trailing lines after rule text tree");

    // Nodes were emitted children-first; rebuild in root-first order and
    // normalize leaf vector widths.
    std::vector<CartTree::Node> ordered;
    std::size_t max_feature = 0;
    std::size_t max_class = 0;
    auto reorder = [&](auto&& self, std::int32_t idx) -> std::int32_t {
        CartTree::Node node = tree.nodes()[idx];
        std::int32_t at = static_cast<std::int32_t>(ordered.size());
        ordered.push_back(node);
        if (!node.is_leaf) {
            max_feature = std::max<std::size_t>(max_feature, node.feature);
            std::int32_t l = self(self, node.left);
            std::int32_t r = self(self, node.right);
            ordered[at].left = l;
            ordered[at].right = r;
        } else if (is_classification(task)) {
            max_class = std::max(max_class, node.value.size() - 1);
        }
        return at;
    };
    reorder(reorder, root);
    std::size_t width = is_classification(task) ? max_class + 1 : 1;
    for (auto& node : ordered)
        if (node.is_leaf) node.value.resize(width, 0.0);
    CartTree out(task, max_feature + 1, width, {});
    out.nodes() = std::move(ordered);
    return out;
}

// ---------------------------------------------------------------------------
// JSON persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json node_to_json(const CartTree& tree, std::size_t index) {
    const CartTree::Node& node = tree.nodes()[index];
    nlohmann::ordered_json j;
    if (node.is_leaf) {
        if (node.value.size() == 1 && !is_classification(tree.task())) j["value"] = node.value[0];
        else j["value"] = node.value;
        j["n_samples"] = node.n_samples;
        return j;
    }
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = node_to_json(tree, node.left);
    j["right"] = node_to_json(tree, node.right);
    return j;
}

inline std::int32_t node_from_json(const nlohmann::json& j, CartTree& tree) {
    CartTree::Node node;
    if (j.contains("value")) {
        node.is_leaf = true;
        if (j["value"].is_array()) node.value = j["value"].get<std::vector<double>>();
        else node.value.assign(1, j["value"].get<double>());
        node.n_samples = j.value("n_samples", std::size_t{0});
        std::int32_t at = static_cast<std::int32_t>(tree.nodes().size());
        tree.nodes().push_back(std::move(node));
        return at;
    }
    if (!j.contains("feature") || !j.contains("threshold") || !j.contains("left") ||
        !j.contains("right"))
        throw DataError("tree node JSON needs feature/threshold/left/right or value");
    node.is_leaf = false;
    node.feature = j["feature"].get<std::uint32_t>();
    node.threshold = j["threshold"].get<double>();
    std::int32_t at = static_cast<std::int32_t>(tree.nodes().size());
    tree.nodes().push_back(node);
    std::int32_t left = node_from_json(j["left"], tree);
    std::int32_t right = node_from_json(j["right"], tree);
    tree.nodes()[at].left = left;
    tree.nodes()[at].right = right;
    return at;
}

}  // namespace detail

inline nlohmann::ordered_json cart_to_json(const CartTree& tree) {
    nlohmann::ordered_json j;
    j["task"] = to_string(tree.task());
    j["n_features"] = tree.n_features();
    j["output_dim"] = tree.output_dim();
    j["hyperparams"] = hyperparams_to_json(tree.hyperparams());
    j["root"] = detail::node_to_json(tree, 0);
    return j;
}

inline CartTree cart_from_json(const nlohmann::json& j) {
    CartTree tree(task_from_string(j.at("task").get<std::string>()),
                  j.at("n_features").get<std::size_t>(), j.at("output_dim").get<std::size_t>(),
                  hyperparams_from_json(j.value("hyperparams", nlohmann::json::object())));
    detail::node_from_json(j.at("root"), tree);
    return tree;
}

}  // namespace delta
