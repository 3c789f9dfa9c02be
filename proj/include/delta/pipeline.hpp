#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delta/analyze.hpp"
#include "delta/cart.hpp"
#include "delta/correct.hpp"
#include "delta/csv.hpp"
#include "delta/dataset.hpp"
#include "delta/error.hpp"
#include "delta/forest.hpp"
#include "delta/metrics.hpp"
#include "delta/refine.hpp"
#include "delta/rng.hpp"
#include "delta/schema.hpp"

namespace delta {

/// Error-correction stage configuration: the step-size grid searched on
/// validation, the loss driving the gradients, and the hyperparameters of
/// the per-leaf correction trees (kept shallow — corrections model residual
/// structure, not the full signal).
struct CorrectionConfig {
    std::vector<double> eta_grid = default_eta_grid();
    CartHyperparams net_tree{3, 10, 8, 0, false};
    std::string loss = "auto";  ///< "auto" (by task), "squared_error", or "one_hot_squared"
};

inline LossKind resolve_loss(const CorrectionConfig& cfg, Task task) {
    if (cfg.loss == "auto") return default_loss(task);
    return loss_from_string(cfg.loss);
}

/// Full run configuration.  A single master seed derives the per-stage seeds
/// (split, forest, refiner, correction); every derived seed is recorded in
/// the manifest.
struct RunConfig {
    std::string dataset_path;
    std::string schema_path;
    std::string dataset_name;  ///< prompt meta name; defaults to the dataset file stem
    SplitRatios ratios;
    std::uint64_t seed = 7;
    ForestConfig forest;
    RefinerConfig refiner;
    CorrectionConfig correction;
    std::optional<std::size_t> fewshot;
    /// Fall back to the offline heuristic refiner when the configured backend
    /// fails all retries.
    bool allow_heuristic_fallback = false;
    std::string output_dir;  ///< empty: compute only, write no artifacts
};

struct StageSeeds {
    std::uint64_t master = 0;
    std::uint64_t split = 0;
    std::uint64_t fewshot = 0;
    std::uint64_t forest = 0;
    std::uint64_t refiner = 0;
    std::uint64_t correction = 0;
};

inline StageSeeds derive_stage_seeds(std::uint64_t master) {
    return {master,
            derive_seed(master, 1),
            derive_seed(master, 2),
            derive_seed(master, 3),
            derive_seed(master, 4),
            derive_seed(master, 5)};
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["dataset_path"] = cfg.dataset_path;
    j["schema_path"] = cfg.schema_path;
    j["dataset_name"] = cfg.dataset_name;
    j["ratios"] = {cfg.ratios.train, cfg.ratios.val, cfg.ratios.test};
    j["seed"] = cfg.seed;
    j["forest"] = {{"k", cfg.forest.k},
                   {"bootstrap", cfg.forest.bootstrap},
                   {"tree", hyperparams_to_json(cfg.forest.tree)}};
    j["refiner"] = {{"backend", to_string(cfg.refiner.backend)},
                    {"endpoint", cfg.refiner.endpoint},
                    {"model", cfg.refiner.model},
                    {"api_key_env", cfg.refiner.api_key_env},
                    {"n_queries", cfg.refiner.n_queries},
                    {"max_retries", cfg.refiner.max_retries},
                    {"leaf_limit", cfg.refiner.leaf_limit},
                    {"included_trees", cfg.refiner.included_trees},
                    {"temperature", cfg.refiner.temperature},
                    {"replay_path", cfg.refiner.replay_path}};
    j["correction"] = {{"eta_grid", cfg.correction.eta_grid},
                       {"net_tree", hyperparams_to_json(cfg.correction.net_tree)},
                       {"loss", cfg.correction.loss}};
    j["fewshot"] = cfg.fewshot.has_value() ? nlohmann::ordered_json(*cfg.fewshot)
                                           : nlohmann::ordered_json(nullptr);
    j["allow_heuristic_fallback"] = cfg.allow_heuristic_fallback;
    return j;
}

/// FNV-1a over the canonical config dump; stored in the manifest so replays
/// can verify they run the same configuration.
inline std::string run_config_hash(const RunConfig& cfg) {
    const std::string dump = run_config_to_json(cfg).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// The prepared splits, encoded with statistics fit on the (possibly
/// few-shot subsampled) training split only.
struct PreparedData {
    Dataset train;
    Dataset val;
    Dataset test;
    PreprocessStats stats;
    Schema schema;
    bool stratified = false;
    std::size_t source_rows = 0;
};

inline PreparedData prepare_data(const RunConfig& cfg, const StageSeeds& seeds,
                                 const RawTable& table) {
    SplitResult split_result = split(table, cfg.ratios, seeds.split);
    RawTable train_raw = split_result.train;
    if (cfg.fewshot.has_value())
        train_raw = subsample_fewshot(train_raw, *cfg.fewshot, seeds.fewshot);

    PreparedData prepared;
    prepared.schema = table.schema;
    prepared.stats = fit_stats(train_raw);
    prepared.train = preprocess(train_raw, prepared.stats);
    prepared.val = preprocess(split_result.val, prepared.stats);
    prepared.test = preprocess(split_result.test, prepared.stats);
    prepared.stratified = split_result.stratified;
    prepared.source_rows = table.n_rows;
    return prepared;
}

inline PreparedData prepare_data(const RunConfig& cfg, const StageSeeds& seeds) {
    if (cfg.dataset_path.empty()) throw ConfigError("dataset path is required");
    if (cfg.schema_path.empty()) throw ConfigError("schema path is required");
    Schema schema = load_schema(cfg.schema_path);
    RawTable table = load_csv(cfg.dataset_path, schema);
    return prepare_data(cfg, seeds, table);
}

struct TrainResult {
    DeltaModel model;
    PreparedData data;
    Prompt prompt;
    std::vector<std::size_t> prompt_tree_indices;
    QueryReport queries;
    MetricReport test_report;
    MetricReport forest_test_report;
    double eta = 0.0;
    bool used_heuristic_fallback = false;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline std::string dataset_display_name(const RunConfig& cfg) {
    if (!cfg.dataset_name.empty()) return cfg.dataset_name;
    if (cfg.dataset_path.empty()) return "dataset";
    return std::filesystem::path(cfg.dataset_path).stem().string();
}

}  // namespace detail

/// The whole training workflow: fit the forest, extract its rules, obtain
/// refined partitioning rules from the configured backend, fit per-leaf
/// gradient nets on the forest's negative gradients, pick the correction
/// step on validation and score the calibrated model on the test split.
inline TrainResult train_pipeline(const RunConfig& cfg, const PreparedData& prepared) {
    validate(cfg.refiner);
    const StageSeeds seeds = derive_stage_seeds(cfg.seed);
    const Task task = prepared.schema.task;
    const LossKind loss = resolve_loss(cfg.correction, task);
    if (loss == LossKind::squared_error && is_classification(task))
        throw ConfigError("squared_error loss applies to regression tasks only");
    if (loss == LossKind::one_hot_squared && !is_classification(task))
        throw ConfigError("one_hot_squared loss applies to classification tasks only");

    TrainResult result;
    result.data = prepared;

    // Stage 1: bagged ensemble.
    Forest forest = fit_forest(prepared.train, cfg.forest, seeds.forest);
    forest.schema_fingerprint = schema_hash(prepared.schema);

    // Stage 2: rule extraction and prompt construction.  The prompt carries
    // the rules of the trees that score best on the validation split, so the
    // refiner summarises the strongest members of the ensemble; the chosen
    // tree indices are recorded in the manifest.
    RuleSet rules = extract_rule_set(forest);
    std::vector<std::size_t> ranked = rank_trees_by_validation(forest, prepared.val);
    ranked.resize(std::min<std::size_t>(ranked.size(), cfg.refiner.included_trees));
    result.prompt_tree_indices = ranked;
    RuleSet prompt_rules = rules.subset(ranked);
    DatasetMeta meta =
        dataset_meta(detail::dataset_display_name(cfg), prepared.schema, prepared.train.n_rows());
    RefinerConfig refiner_cfg = cfg.refiner;
    refiner_cfg.seed = seeds.refiner;
    if (!cfg.output_dir.empty() && refiner_cfg.transcript_path.empty())
        refiner_cfg.transcript_path =
            (std::filesystem::path(cfg.output_dir) / "transcript.jsonl").string();
    result.prompt = build_prompt(meta, prompt_rules, refiner_cfg);

    // Stage 3: refined rules from the configured backend.
    std::unique_ptr<TranscriptWriter> transcript;
    if (!refiner_cfg.transcript_path.empty()) {
        std::filesystem::create_directories(
            std::filesystem::path(refiner_cfg.transcript_path).parent_path());
        transcript = std::make_unique<TranscriptWriter>(refiner_cfg.transcript_path);
    }
    try {
        auto backend = make_backend(refiner_cfg, &prepared.train);
        result.queries = query_refiner(refiner_cfg, result.prompt, *backend,
                                       prepared.train.n_features(), transcript.get());
    } catch (const RefinerError&) {
        if (!cfg.allow_heuristic_fallback || refiner_cfg.backend == RefinerBackendKind::heuristic)
            throw;
        RefinerConfig fallback_cfg = refiner_cfg;
        fallback_cfg.backend = RefinerBackendKind::heuristic;
        auto backend = make_backend(fallback_cfg, &prepared.train);
        result.queries = query_refiner(fallback_cfg, result.prompt, *backend,
                                       prepared.train.n_features(), transcript.get());
        result.used_heuristic_fallback = true;
    }

    // Stage 4: gradient set and per-rule correction nets.
    Matrix train_outputs = forest.predict_all(prepared.train.features);
    GradientSet gradset =
        make_gradient_set(prepared.train.features, train_outputs, prepared.train.labels, loss);
    std::vector<GradientNet> nets;
    nets.reserve(result.queries.rules.size());
    for (std::size_t i = 0; i < result.queries.rules.size(); ++i)
        nets.push_back(fit_gradient_net(gradset, result.queries.rules[i], cfg.correction.net_tree,
                                        derive_seed(seeds.correction, i)));

    // Stage 5: step-size selection on validation, final model, test metric.
    result.eta = select_eta(
        [&](double eta) { return ensemble_over_rules(forest, nets, eta, loss); }, prepared.val,
        cfg.correction.eta_grid);
    result.model = ensemble_over_rules(std::move(forest), std::move(nets), result.eta, loss);
    result.forest_test_report =
        evaluate(result.model.forest.predict_all(prepared.test.features), prepared.test.labels, task);
    result.test_report =
        evaluate(result.model.predict_all(prepared.test.features), prepared.test.labels, task);

    // Manifest: everything needed to audit or replay the run.
    nlohmann::ordered_json manifest;
    manifest["format"] = "delta-manifest-v1";
    manifest["config"] = run_config_to_json(cfg);
    manifest["config_hash"] = run_config_hash(cfg);
    manifest["dataset"] = {{"name", detail::dataset_display_name(cfg)},
                           {"path", cfg.dataset_path},
                           {"rows", prepared.source_rows},
                           {"task", to_string(task)},
                           {"schema_hash", schema_hash(prepared.schema)}};
    manifest["split"] = {{"ratios", {cfg.ratios.train, cfg.ratios.val, cfg.ratios.test}},
                         {"stratified", prepared.stratified},
                         {"train_rows", prepared.train.n_rows()},
                         {"val_rows", prepared.val.n_rows()},
                         {"test_rows", prepared.test.n_rows()},
                         {"fewshot", cfg.fewshot.has_value()
                                         ? nlohmann::ordered_json(*cfg.fewshot)
                                         : nlohmann::ordered_json(nullptr)}};
    manifest["seeds"] = {{"master", seeds.master},     {"split", seeds.split},
                         {"fewshot", seeds.fewshot},   {"forest", seeds.forest},
                         {"refiner", seeds.refiner},   {"correction", seeds.correction}};
    nlohmann::ordered_json net_fallbacks = nlohmann::ordered_json::array();
    for (const auto& net : result.model.nets) net_fallbacks.push_back(net.empty_leaves);
    manifest["refiner"] = {{"backend", to_string(refiner_cfg.backend)},
                           {"heuristic_fallback", result.used_heuristic_fallback},
                           {"n_queries", refiner_cfg.n_queries},
                           {"prompt_trees", result.prompt_tree_indices},
                           {"retries", result.queries.retries},
                           {"warnings", result.queries.warnings},
                           {"transcript", refiner_cfg.transcript_path}};
    manifest["correction"] = {{"eta", result.eta},
                              {"loss", to_string(loss)},
                              {"net_empty_leaves", net_fallbacks}};
    manifest["metrics"] = {
        {"test", {{"metric", result.test_report.metric},
                  {"value", result.test_report.value},
                  {"n_samples", result.test_report.n_samples}}},
        {"forest_test", {{"metric", result.forest_test_report.metric},
                         {"value", result.forest_test_report.value},
                         {"n_samples", result.forest_test_report.n_samples}}}};
    result.manifest = std::move(manifest);
    return result;
}

inline TrainResult train_pipeline(const RunConfig& cfg) {
    const StageSeeds seeds = derive_stage_seeds(cfg.seed);
    return train_pipeline(cfg, prepare_data(cfg, seeds));
}

/// Saved-run wrapper: the model plus the schema and preprocessing statistics
/// needed to encode new data identically.
inline nlohmann::ordered_json run_artifact_to_json(const TrainResult& result,
                                                   const std::string& dataset_name) {
    nlohmann::ordered_json j;
    j["format"] = "delta-run-v1";
    j["dataset_name"] = dataset_name;
    j["schema"] = schema_to_json(result.data.schema);
    j["preprocess"] = stats_to_json(result.data.stats);
    j["model"] = delta_model_to_json(result.model);
    return j;
}

struct LoadedRun {
    DeltaModel model;
    Schema schema;
    PreprocessStats stats;
    std::string dataset_name;
};

inline LoadedRun load_run_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("model file '" + path + "' is not valid JSON");
    if (j.value("format", "") != "delta-run-v1")
        throw DataError("unrecognized model file format in '" + path + "'");
    LoadedRun run;
    run.dataset_name = j.value("dataset_name", "");
    run.schema = schema_from_json(j.at("schema"));
    run.stats = stats_from_json(j.at("preprocess"));
    run.model = delta_model_from_json(j.at("model"));
    if (run.model.forest.schema_fingerprint != schema_hash(run.schema))
        throw DataError("model file schema hash does not match its embedded schema");
    return run;
}

/// Writes model.json, metrics.csv, prompt.txt and manifest.json into the
/// run directory (the transcript streams during training).
inline void write_run_artifacts(const TrainResult& result, const RunConfig& cfg) {
    if (cfg.output_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const std::string name = detail::dataset_display_name(cfg);

    {
        std::ofstream out(fs::path(cfg.output_dir) / "model.json");
        out << run_artifact_to_json(result, name).dump(2) << "\n";
    }
    {
        std::vector<std::vector<std::string>> records;
        records.push_back({"model", "dataset", "split", "metric", "value", "n_samples", "seed"});
        auto row = [&](const std::string& model_name, const MetricReport& report) {
            char value[64];
            std::snprintf(value, sizeof(value), "%.6f", report.value);
            records.push_back({model_name, name, "test", report.metric, value,
                               std::to_string(report.n_samples), std::to_string(cfg.seed)});
        };
        row("delta", result.test_report);
        row("forest", result.forest_test_report);
        std::ofstream out(fs::path(cfg.output_dir) / "metrics.csv");
        write_csv_records(out, records);
    }
    {
        std::ofstream out(fs::path(cfg.output_dir) / "prompt.txt");
        out << result.prompt.text();
    }
    {
        std::ofstream out(fs::path(cfg.output_dir) / "manifest.json");
        out << result.manifest.dump(2) << "\n";
    }
}

}  // namespace delta
