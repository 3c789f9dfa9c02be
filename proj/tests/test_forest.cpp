#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <random>
#include <set>

using namespace delta;

namespace {

Dataset separable_dataset(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::normal_distribution<double> jitter(0.0, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
        double cls = static_cast<double>(i % 2);
        rows.push_back({(cls == 0.0 ? -1.5 : 1.5) + jitter(rng), jitter(rng)});
        labels.push_back(cls);
    }
    return tsup::make_classification_dataset(rows, labels);
}

}  // namespace

TEST_CASE("forest prediction averages the member trees") {
    // Two hand-fit pure trees voting for opposite classes average to 0.5/0.5.
    Matrix x = tsup::make_matrix({{0.0}});
    CartHyperparams hp;
    hp.min_leaf = 1;
    Forest forest;
    forest.trees.push_back(fit_cart_classifier(x, {0.0}, 2, hp));
    forest.trees.push_back(fit_cart_classifier(x, {1.0}, 2, hp));
    forest.task = Task::binclass;
    forest.n_features = 1;
    forest.output_dim = 2;
    std::vector<double> p = forest.predict(std::vector<double>{0.0}.data());
    CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("a degenerate one-tree forest reproduces a plain cart exactly") {
    std::mt19937_64 rng(17);
    Dataset d = separable_dataset(rng, 60);
    ForestConfig cfg;
    cfg.k = 1;
    cfg.bootstrap = false;
    Forest forest = fit_forest(d, cfg, 123);
    CartTree tree = fit_cart(d, cfg.tree, derive_seed(123, 0));
    for (std::size_t r = 0; r < d.features.rows(); ++r)
        CHECK(forest.predict(d.features.row(r)) == tree.predict(d.features.row(r)));
    CHECK(forest.subsets.size() == 1);
    CHECK(forest.subsets[0].size() == d.n_rows());  // identity subset
}

TEST_CASE("bootstrap subsets resample with replacement and depend on the seed") {
    std::mt19937_64 rng(3);
    Dataset d = separable_dataset(rng, 50);
    ForestConfig cfg;
    cfg.k = 5;
    Forest forest = fit_forest(d, cfg, 9);
    REQUIRE(forest.subsets.size() == 5);
    bool any_duplicate = false;
    for (const auto& subset : forest.subsets) {
        CHECK(subset.size() == d.n_rows());
        std::set<std::size_t> uniq(subset.begin(), subset.end());
        if (uniq.size() < subset.size()) any_duplicate = true;
        for (std::size_t idx : subset) CHECK(idx < d.n_rows());
    }
    CHECK(any_duplicate);
    Forest other = fit_forest(d, cfg, 10);
    CHECK(forest.subsets != other.subsets);
}

TEST_CASE("classification outputs are distributions") {
    std::mt19937_64 rng(5);
    Dataset d = separable_dataset(rng, 80);
    ForestConfig cfg;
    cfg.k = 12;
    Forest forest = fit_forest(d, cfg, 1);
    Matrix preds = forest.predict_all(d.features);
    for (std::size_t r = 0; r < preds.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < preds.cols(); ++c) {
            CHECK(preds(r, c) >= 0.0);
            CHECK(preds(r, c) <= 1.0 + 1e-12);
            sum += preds(r, c);
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("forests learn separable data across many seeds") {
    std::mt19937_64 rng(8);
    Dataset d = separable_dataset(rng, 100);
    ForestConfig cfg;
    cfg.k = 15;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Forest forest = fit_forest(d, cfg, seed);
        MetricReport r = evaluate(forest.predict_all(d.features), d.labels, d.schema.task);
        CHECK(r.value >= 0.9);
    }
}

TEST_CASE("fitting is deterministic given the seed") {
    std::mt19937_64 rng(21);
    Dataset d = separable_dataset(rng, 60);
    ForestConfig cfg;
    cfg.k = 8;
    Forest a = fit_forest(d, cfg, 77);
    Forest b = fit_forest(d, cfg, 77);
    CHECK(forest_to_json(a).dump() == forest_to_json(b).dump());
}

TEST_CASE("json persistence preserves structure and predictions") {
    std::mt19937_64 rng(33);
    Dataset d = separable_dataset(rng, 70);
    ForestConfig cfg;
    cfg.k = 6;
    Forest forest = fit_forest(d, cfg, 2);
    forest.schema_fingerprint = schema_hash(d.schema);
    Forest back = forest_from_json(forest_to_json(forest));
    CHECK(back.k() == forest.k());
    CHECK(back.schema_fingerprint == forest.schema_fingerprint);
    CHECK(forest_to_json(back).dump() == forest_to_json(forest).dump());
    for (std::size_t r = 0; r < d.features.rows(); ++r)
        CHECK(back.predict(d.features.row(r)) == forest.predict(d.features.row(r)));
}

TEST_CASE("regression forests average member means") {
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    for (double v : {0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0}) {
        rows.push_back({v});
        targets.push_back(v < 5.0 ? 1.0 : 9.0);
    }
    Dataset d = tsup::make_regression_dataset(rows, targets);
    ForestConfig cfg;
    cfg.k = 10;
    Forest forest = fit_forest(d, cfg, 4);
    CHECK(forest.output_dim == 1);
    double left = forest.predict(std::vector<double>{1.0}.data())[0];
    double right = forest.predict(std::vector<double>{12.0}.data())[0];
    CHECK(left < 5.0);
    CHECK(right > 5.0);
}

TEST_CASE("rule set blocks carry tree numbers and the separator line") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    Forest forest;
    forest.trees.push_back(fit_cart_classifier(x, {0.0, 0.0, 1.0, 1.0}, 2));
    forest.trees.push_back(fit_cart_classifier(x, {1.0, 1.0, 0.0, 0.0}, 2));
    forest.task = Task::binclass;
    forest.n_features = 1;
    forest.output_dim = 2;
    RuleSet rules = extract_rule_set(forest);
    REQUIRE(rules.size() == 2);
    CHECK(rules.block(0) ==
          "Tree 1 rules:\n"
          "|--- feature_0 <= 2.50\n"
          "|   |--- class: 0.0\n"
          "|--- feature_0 >  2.50\n"
          "|   |--- class: 1.0\n");

    const std::string sep(28, '-');
    std::string rendered = rules.render(1);
    CHECK(rendered == sep + "\n" + rules.block(0) + sep + "\n");
    // Full render: separator, block 1, separator, block 2, separator.
    std::string full = rules.render();
    CHECK(full == sep + "\n" + rules.block(0) + sep + "\n" + rules.block(1) + sep + "\n");
}

TEST_CASE("rule subsets renumber from tree 1") {
    RuleSet rules;
    rules.rule_texts = {"a\n", "b\n", "c\n"};
    RuleSet sub = rules.subset({2, 0});
    REQUIRE(sub.size() == 2);
    CHECK(sub.block(0) == "Tree 1 rules:\nc\n");
    CHECK(sub.block(1) == "Tree 2 rules:\na\n");
}

TEST_CASE("validation ranking orders trees by accuracy with stable ties") {
    // Three manual stumps with accuracies 1.0, 0.0 and 1.0 on the probe set:
    // ranking must be 0, 2 (tie resolved to the lower index), then 1.
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    std::vector<double> y = {0.0, 0.0, 1.0, 1.0};
    std::vector<double> flipped = {1.0, 1.0, 0.0, 0.0};
    Forest forest;
    forest.trees.push_back(fit_cart_classifier(x, y, 2));
    forest.trees.push_back(fit_cart_classifier(x, flipped, 2));
    forest.trees.push_back(fit_cart_classifier(x, y, 2));
    forest.task = Task::binclass;
    forest.n_features = 1;
    forest.output_dim = 2;

    Dataset val = tsup::make_classification_dataset({{1.0}, {2.0}, {3.0}, {4.0}}, y);
    std::vector<std::size_t> ranked = rank_trees_by_validation(forest, val);
    CHECK(ranked == std::vector<std::size_t>{0, 2, 1});
}

TEST_CASE("mtry defaults follow the task kind") {
    CHECK(default_mtry(Task::binclass, 9) == 3);
    CHECK(default_mtry(Task::binclass, 2) == 1);
    CHECK(default_mtry(Task::regression, 9) == 3);
    CHECK(default_mtry(Task::regression, 1) == 1);
}
