#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace delta;

namespace {

Schema tiny_schema() {
    Schema s;
    s.columns = {{"age", ColumnKind::numerical}, {"color", ColumnKind::categorical}};
    s.target_name = "y";
    s.task = Task::binclass;
    s.n_classes = 2;
    return s;
}

RawTable tiny_table(const std::string& csv) {
    std::istringstream in(csv);
    return load_table(read_csv_records(in, "<memory>"), tiny_schema(), "<memory>");
}

}  // namespace

TEST_CASE("csv loading maps columns by name and keeps row count") {
    RawTable t = tiny_table("age,color,y\n31,red,no\n25,blue,yes\n40,red,no\n");
    CHECK(t.n_rows == 3);
    CHECK(t.schema.columns.size() == 2);
    CHECK(t.numeric[0] == std::vector<double>{31.0, 25.0, 40.0});
    CHECK(t.categorical[1] == std::vector<std::string>{"red", "blue", "red"});
    // Distinct labels are sorted, so "no" -> 0, "yes" -> 1.
    CHECK(t.labels == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(t.label_names == std::vector<std::string>{"no", "yes"});
}

TEST_CASE("csv quoting follows RFC 4180") {
    RawTable t = tiny_table("age,color,y\n31,\"light, blue\",no\n25,\"say \"\"hi\"\"\",yes\n");
    CHECK(t.categorical[1][0] == "light, blue");
    CHECK(t.categorical[1][1] == "say \"hi\"");
}

TEST_CASE("csv errors carry locations and schema mismatches are rejected") {
    CHECK_THROWS_AS(tiny_table("age,color\n31,red\n"), DataError);  // target column missing
    CHECK_THROWS_WITH(tiny_table("age,color,y\noops,red,no\n"),
                      Catch::Matchers::ContainsSubstring("row 2") &&
                          Catch::Matchers::ContainsSubstring("age"));
    CHECK_THROWS_AS(tiny_table("age,color,y\n31,red\n"), DataError);       // short row
    CHECK_THROWS_AS(tiny_table("age,color,y\n,red,no\n"), DataError);      // empty cell
    CHECK_THROWS_AS(tiny_table("age,age,y\n1,2,no\n"), DataError);         // duplicate header
}

TEST_CASE("numeric label names sort numerically") {
    Schema s = tiny_schema();
    s.n_classes = 3;
    s.task = Task::multiclass;
    std::istringstream in("age,color,y\n1,red,10\n2,red,2\n3,red,1\n");
    RawTable t = load_table(read_csv_records(in, "<memory>"), s, "<memory>");
    CHECK(t.label_names == std::vector<std::string>{"1", "2", "10"});
    CHECK(t.labels == std::vector<double>{2.0, 1.0, 0.0});
}

TEST_CASE("z-score uses population std and zero-variance maps to zeros") {
    RawTable t = tiny_table("age,color,y\n2,red,no\n4,red,no\n6,red,yes\n");
    Dataset d = preprocess(t);
    CHECK_THAT(d.features(0, 0), Catch::Matchers::WithinAbs(-1.2247, 1e-4));
    CHECK_THAT(d.features(1, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(d.features(2, 0), Catch::Matchers::WithinAbs(1.2247, 1e-4));

    RawTable c = tiny_table("age,color,y\n5,red,no\n5,red,no\n5,red,yes\n");
    Dataset dc = preprocess(c);
    for (std::size_t r = 0; r < 3; ++r) CHECK(dc.features(r, 0) == 0.0);
}

TEST_CASE("categorical columns get ordinal codes and unseen values the reserved code") {
    RawTable fit = tiny_table("age,color,y\n1,red,no\n2,blue,no\n3,red,yes\n");
    PreprocessStats stats = fit_stats(fit);
    Dataset d = preprocess(fit, stats);
    // Category map is sorted: blue -> 0, red -> 1.
    CHECK(d.features(0, 1) == 1.0);
    CHECK(d.features(1, 1) == 0.0);

    RawTable unseen = tiny_table("age,color,y\n2,green,no\n");
    Dataset du = preprocess(unseen, stats);
    CHECK(du.features(0, 1) == 2.0);  // reserved code = |categories|
}

TEST_CASE("preprocess under recorded stats is idempotent") {
    RawTable t = tiny_table("age,color,y\n2,red,no\n4,blue,no\n6,red,yes\n9,blue,yes\n");
    Dataset once = preprocess(t);
    Dataset twice = preprocess(once);
    REQUIRE(twice.features.rows() == once.features.rows());
    for (std::size_t r = 0; r < once.features.rows(); ++r)
        for (std::size_t c = 0; c < once.features.cols(); ++c)
            CHECK_THAT(twice.features(r, c), Catch::Matchers::WithinAbs(once.features(r, c), 1e-12));
}

TEST_CASE("stats serialization round-trips") {
    RawTable t = tiny_table("age,color,y\n2,red,no\n4,blue,yes\n");
    PreprocessStats stats = fit_stats(t);
    PreprocessStats back = stats_from_json(stats_to_json(stats));
    Dataset a = preprocess(t, stats);
    Dataset b = preprocess(t, back);
    CHECK(a.features == b.features);
}

namespace {

RawTable balanced_table(std::size_t n) {
    std::ostringstream csv;
    csv << "age,color,y\n";
    for (std::size_t i = 0; i < n; ++i)
        csv << i << ",red," << (i % 2 == 0 ? "no" : "yes") << "\n";
    return tiny_table(csv.str());
}

}  // namespace

TEST_CASE("split sizes follow the ratios") {
    SplitResult s = split(balanced_table(10), {0.6, 0.2, 0.2}, 0);
    CHECK(s.train.n_rows == 6);
    CHECK(s.val.n_rows == 2);
    CHECK(s.test.n_rows == 2);
    CHECK(s.stratified);
}

TEST_CASE("split partitions the index set for any seed") {
    RawTable t = balanced_table(23);
    for (std::uint64_t seed : {0ull, 1ull, 99ull, 12345ull}) {
        SplitResult s = split(t, {0.64, 0.16, 0.20}, seed);
        std::set<std::size_t> seen;
        for (const RawTable* part : {&s.train, &s.val, &s.test})
            for (std::size_t idx : part->original_indices) {
                CHECK(seen.insert(idx).second);  // disjoint
            }
        CHECK(seen.size() == 23);  // exhaustive
    }
}

TEST_CASE("split is deterministic in the seed") {
    RawTable t = balanced_table(40);
    SplitResult a = split(t, {0.64, 0.16, 0.20}, 7);
    SplitResult b = split(t, {0.64, 0.16, 0.20}, 7);
    CHECK(a.train.original_indices == b.train.original_indices);
    CHECK(a.val.original_indices == b.val.original_indices);
    CHECK(a.test.original_indices == b.test.original_indices);
    SplitResult c = split(t, {0.64, 0.16, 0.20}, 8);
    CHECK(a.train.original_indices != c.train.original_indices);
}

TEST_CASE("stratified split keeps a 50/50 class balance within one row") {
    SplitResult s = split(balanced_table(50), {0.6, 0.2, 0.2}, 3);
    for (const RawTable* part : {&s.train, &s.val, &s.test}) {
        double ones = 0;
        for (double y : part->labels) ones += y;
        CHECK(std::abs(2.0 * ones - static_cast<double>(part->n_rows)) <= 1.0);
    }
}

TEST_CASE("split falls back to unstratified when a class is too small") {
    std::ostringstream csv;
    csv << "age,color,y\n";
    for (std::size_t i = 0; i < 12; ++i) csv << i << ",red,no\n";
    csv << "99,red,yes\n";  // single positive row cannot be stratified three ways
    SplitResult s = split(tiny_table(csv.str()), {0.64, 0.16, 0.20}, 0);
    CHECK_FALSE(s.stratified);
    CHECK(s.train.n_rows + s.val.n_rows + s.test.n_rows == 13);
}

TEST_CASE("few-shot subsampling is a uniform deterministic subset") {
    RawTable t = balanced_table(100);
    RawTable sub = subsample_fewshot(t, 64, 5);
    CHECK(sub.n_rows == 64);
    std::set<std::size_t> uniq(sub.original_indices.begin(), sub.original_indices.end());
    CHECK(uniq.size() == 64);

    RawTable same = subsample_fewshot(t, 64, 5);
    CHECK(sub.original_indices == same.original_indices);

    RawTable all = subsample_fewshot(t, 100, 5);
    CHECK(all.n_rows == 100);

    CHECK_THROWS_AS(subsample_fewshot(t, 101, 5), DataError);

    bool any_difference = false;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RawTable other = subsample_fewshot(t, 16, seed);
        if (other.original_indices != subsample_fewshot(t, 16, seed + 100).original_indices)
            any_difference = true;
    }
    CHECK(any_difference);
}

TEST_CASE("accuracy counts argmax matches and breaks ties low") {
    Matrix preds = tsup::make_matrix({{0.9, 0.1}, {0.2, 0.8}, {0.3, 0.7}});
    MetricReport r = evaluate(preds, {0.0, 1.0, 0.0}, Task::binclass);
    CHECK(r.metric == "accuracy");
    CHECK_THAT(r.value, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    CHECK(r.n_samples == 3);

    Matrix tie = tsup::make_matrix({{0.5, 0.5}});
    CHECK(evaluate(tie, {0.0}, Task::binclass).value == 1.0);  // tie -> class 0
    CHECK(evaluate(tie, {1.0}, Task::binclass).value == 0.0);
}

TEST_CASE("nrmse normalizes by the population std of the truth") {
    Matrix exact = tsup::make_matrix({{1.0}, {2.0}, {3.0}});
    MetricReport perfect = evaluate(exact, {1.0, 2.0, 3.0}, Task::regression);
    CHECK(perfect.metric == "nrmse");
    CHECK(perfect.value == 0.0);

    // Constant mean predictor scores exactly 1.0.
    std::vector<double> truth = {1.0, 2.0, 3.0, 7.0, -4.0};
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    Matrix constant(truth.size(), 1);
    for (std::size_t i = 0; i < truth.size(); ++i) constant(i, 0) = mean;
    CHECK_THAT(evaluate(constant, truth, Task::regression).value,
               Catch::Matchers::WithinAbs(1.0, 1e-12));

    Matrix any = tsup::make_matrix({{1.0}, {2.0}});
    CHECK_THROWS_AS(evaluate(any, {5.0, 5.0}, Task::regression), DataError);
}

TEST_CASE("bundled blood table loads with the documented shape") {
    Schema schema = load_schema(tsup::source_path("data/blood_synth.schema.json"));
    RawTable t = load_csv(tsup::source_path("data/blood_synth.csv"), schema);
    CHECK(t.n_rows == 748);
    CHECK(t.schema.columns.size() == 4);
    double positives = 0;
    for (double y : t.labels) positives += y;
    // 178 donors encoded as class 1 ("donated" sorts after "declined").
    CHECK(positives == 178.0);
}
