#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <random>
#include <set>

using namespace delta;

TEST_CASE("a clean 1-d step function splits at the midpoint") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    CartTree tree = fit_cart_classifier(x, {0.0, 0.0, 1.0, 1.0}, 2);
    REQUIRE_FALSE(tree.nodes().empty());
    const auto& root = tree.nodes()[0];
    REQUIRE_FALSE(root.is_leaf);
    CHECK(root.feature == 0);
    CHECK(root.threshold == 2.5);
    // Both leaves are pure.
    CHECK(tree.predict({1.5}) == std::vector<double>{1.0, 0.0});
    CHECK(tree.predict({3.7}) == std::vector<double>{0.0, 1.0});
}

TEST_CASE("boundary routing sends x equal to the threshold left") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    CartTree tree = fit_cart_classifier(x, {0.0, 0.0, 1.0, 1.0}, 2);
    CHECK(tree.predict({2.5})[0] == 1.0);   // exactly on the threshold -> left
    CHECK(tree.predict({2.500001})[1] == 1.0);
}

TEST_CASE("an exact xor has no positive-gain root split") {
    // Perfectly balanced xor: every single split leaves both children 50/50.
    Matrix x = tsup::make_matrix({{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}});
    std::vector<double> y = {0.0, 1.0, 1.0, 0.0};
    CartHyperparams hp;
    hp.min_leaf = 1;
    CartTree tree = fit_cart_classifier(x, y, 2, hp);
    CHECK(tree.nodes()[0].is_leaf);
    CHECK(tsup::best_gain(x, y, 2, true) < 1e-9);
}

TEST_CASE("an asymmetric near-xor does split") {
    // Duplicating one corner breaks the balance, so a first split gains.
    Matrix x = tsup::make_matrix(
        {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
    std::vector<double> y = {0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    CartHyperparams hp;
    hp.min_leaf = 1;
    CartTree tree = fit_cart_classifier(x, y, 2, hp);
    REQUIRE_FALSE(tree.nodes()[0].is_leaf);
    double oracle = tsup::best_gain(x, y, 2, true);
    double chosen = tsup::split_gain(x, y, 2, true, tree.nodes()[0].feature,
                                     tree.nodes()[0].threshold);
    CHECK_THAT(chosen, Catch::Matchers::WithinAbs(oracle, 1e-12));
}

TEST_CASE("fuzzed root splits match the brute-force maximum gain") {
    std::mt19937_64 rng(20260823ull);
    std::size_t split_cases = 0;
    for (int round = 0; round < 200; ++round) {
        std::size_t n = 2 + rng() % 11;   // 2..12 rows
        std::size_t d = 1 + rng() % 2;    // 1..2 features
        // Coarse value grid provokes ties and duplicate rows.
        Matrix x(n, d);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
                x(r, c) = static_cast<double>(rng() % 5);
        bool classification = round % 2 == 0;
        std::vector<double> y(n);
        for (std::size_t r = 0; r < n; ++r)
            y[r] = classification ? static_cast<double>(rng() % 2)
                                  : static_cast<double>(rng() % 7) * 0.5;
        CartHyperparams hp;
        hp.min_leaf = 1;
        CartTree tree = classification ? fit_cart_classifier(x, y, 2, hp)
                                       : fit_cart_regressor(x, y, hp);
        double oracle = tsup::best_gain(x, y, 2, classification);
        if (tree.nodes()[0].is_leaf) {
            // The fitter refused to split, so no split may carry real gain.
            CHECK(oracle < 1e-9);
        } else {
            ++split_cases;
            double chosen = tsup::split_gain(x, y, 2, classification, tree.nodes()[0].feature,
                                             tree.nodes()[0].threshold);
            CHECK_THAT(chosen, Catch::Matchers::WithinAbs(oracle, 1e-12));
            CHECK_THAT(tree.root_gain(), Catch::Matchers::WithinAbs(oracle, 1e-12));
        }
    }
    CHECK(split_cases > 50);  // the fuzz corpus must actually exercise splits
}

TEST_CASE("leaf class distributions sum to one") {
    std::mt19937_64 rng(99);
    Matrix x = tsup::random_features(rng, 60, 3);
    std::vector<double> y(60);
    for (auto& v : y) v = static_cast<double>(rng() % 3);
    CartTree tree = fit_cart_classifier(x, y, 3, {}, 0, Task::multiclass);
    for (const auto& node : tree.nodes()) {
        if (!node.is_leaf) continue;
        double sum = 0.0;
        for (double p : node.value) sum += p;
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("hyperparameter bounds hold on random data") {
    std::mt19937_64 rng(7);
    Matrix x = tsup::random_features(rng, 120, 4);
    std::vector<double> y(120);
    for (auto& v : y) v = static_cast<double>(rng() % 2);

    CartHyperparams hp;
    hp.max_depth = 3;
    hp.min_leaf = 7;
    hp.max_leaf_nodes = 5;
    CartTree tree = fit_cart_classifier(x, y, 2, hp);

    CHECK(tree.n_leaves() <= 5);
    CHECK(tree.depth() <= 3);
    for (const auto& node : tree.nodes())
        if (node.is_leaf) CHECK(node.n_samples >= 7);
}

TEST_CASE("a leaf budget of one yields a single-leaf tree") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    CartHyperparams hp;
    hp.max_leaf_nodes = 1;
    CartTree tree = fit_cart_classifier(x, {0.0, 0.0, 1.0, 1.0}, 2, hp);
    CHECK(tree.nodes().size() == 1);
    CHECK(tree.nodes()[0].is_leaf);
    CHECK(tree.predict({9.0}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("fitting is deterministic and tie-break seeding only matters on ties") {
    std::mt19937_64 rng(31);
    Matrix x = tsup::random_features(rng, 80, 3);
    std::vector<double> y(80);
    for (auto& v : y) v = static_cast<double>(rng() % 2);

    CartTree a = fit_cart_classifier(x, y, 2, {}, 1);
    CartTree b = fit_cart_classifier(x, y, 2, {}, 2);
    // Continuous features make exact gain ties virtually impossible, so the
    // seed must not change the fit unless seeded tie-breaking is requested.
    CHECK(cart_to_json(a).dump() == cart_to_json(b).dump());

    CartHyperparams seeded;
    seeded.seeded_tie_break = true;
    CartTree c = fit_cart_classifier(x, y, 2, seeded, 1);
    CartTree d = fit_cart_classifier(x, y, 2, seeded, 1);
    CHECK(cart_to_json(c).dump() == cart_to_json(d).dump());
}

TEST_CASE("seeded tie-breaking varies the split choice on tie-rich data") {
    // Two identical copies of the label pattern in two features: every split
    // on feature 0 has a twin on feature 1 with identical gain.
    Matrix x = tsup::make_matrix({{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}, {4.0, 4.0}});
    std::vector<double> y = {0.0, 0.0, 1.0, 1.0};
    CartHyperparams hp;
    hp.seeded_tie_break = true;
    hp.min_leaf = 1;
    std::set<std::uint32_t> roots;
    for (std::uint64_t seed = 0; seed < 16; ++seed)
        roots.insert(fit_cart_classifier(x, y, 2, hp, seed).nodes()[0].feature);
    CHECK(roots.size() == 2);  // both twins get picked across seeds
}

TEST_CASE("unseeded ties resolve to the lowest feature then lowest threshold") {
    Matrix x = tsup::make_matrix({{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}, {4.0, 4.0}});
    std::vector<double> y = {0.0, 0.0, 1.0, 1.0};
    CartHyperparams hp;
    hp.min_leaf = 1;
    CartTree tree = fit_cart_classifier(x, y, 2, hp);
    CHECK(tree.nodes()[0].feature == 0);
    CHECK(tree.nodes()[0].threshold == 2.5);
}

TEST_CASE("rule text renders the exact indented grammar") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    CartTree tree = fit_cart_classifier(x, {0.0, 0.0, 1.0, 1.0}, 2);
    CHECK(extract_rule_text(tree) ==
          "|--- feature_0 <= 2.50\n"
          "|   |--- class: 0.0\n"
          "|--- feature_0 >  2.50\n"
          "|   |--- class: 1.0\n");
}

TEST_CASE("regression rule text prints leaf values with two decimals") {
    Matrix x = tsup::make_matrix({{1.0}, {2.0}, {3.0}, {4.0}});
    CartTree tree = fit_cart_regressor(x, std::vector<double>{1.0, 1.0, 5.0, 5.0});
    CHECK(extract_rule_text(tree) ==
          "|--- feature_0 <= 2.50\n"
          "|   |--- value: 1.00\n"
          "|--- feature_0 >  2.50\n"
          "|   |--- value: 5.00\n");
}

TEST_CASE("rule text parses back into an equivalent router") {
    std::mt19937_64 rng(4242);
    Matrix x = tsup::random_features(rng, 100, 3);
    std::vector<double> y(100);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    CartTree tree = fit_cart_classifier(x, y, 2);
    CartTree parsed = parse_rule_text(extract_rule_text(tree), Task::binclass);
    // Thresholds in text are rounded to two decimals, so compare the parsed
    // tree against its own re-rendering instead of the raw tree.
    CHECK(extract_rule_text(parsed) == extract_rule_text(tree));
    Matrix probe = tsup::random_features(rng, 40, 3);
    auto away_from_cuts = [&](const double* row) {
        for (const auto& node : parsed.nodes())
            if (!node.is_leaf && std::abs(row[node.feature] - node.threshold) < 5e-3)
                return false;
        return true;
    };
    for (std::size_t r = 0; r < probe.rows(); ++r) {
        if (!away_from_cuts(probe.row(r))) continue;
        CHECK(argmax_class(parsed.predict(probe.row_vector(r))) ==
              argmax_class(tree.predict(probe.row_vector(r))));
    }
}

TEST_CASE("json persistence preserves predictions exactly") {
    std::mt19937_64 rng(11);
    Matrix x = tsup::random_features(rng, 70, 3);
    std::vector<double> y(70);
    for (auto& v : y) v = static_cast<double>(rng() % 3);
    CartTree tree = fit_cart_classifier(x, y, 3, {}, 0, Task::multiclass);
    CartTree back = cart_from_json(cart_to_json(tree));
    Matrix probe = tsup::random_features(rng, 25, 3);
    for (std::size_t r = 0; r < probe.rows(); ++r)
        CHECK(back.predict(probe.row_vector(r)) == tree.predict(probe.row_vector(r)));
    CHECK(cart_to_json(back).dump() == cart_to_json(tree).dump());
}

TEST_CASE("regression trees fit one-dimensional steps exactly") {
    Matrix x = tsup::make_matrix({{0.0}, {1.0}, {2.0}, {3.0}, {10.0}, {11.0}});
    std::vector<double> y = {1.0, 1.0, 1.0, 1.0, 8.0, 8.0};
    CartTree tree = fit_cart_regressor(x, y);
    CHECK(tree.predict({2.5})[0] == 1.0);
    CHECK(tree.predict({10.5})[0] == 8.0);
}
