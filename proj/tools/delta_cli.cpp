// Command line driver: train/eval/ablate/distance/fewshot-sweep over the
// pipeline library.  Exit codes: 0 success, 1 usage/config, 2 data,
// 3 refiner, 4 internal.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <delta/delta.hpp>

namespace {

struct RunFlags {
    delta::RunConfig cfg;
    std::vector<double> ratios = {0.64, 0.16, 0.20};
    std::string backend = "heuristic";
    bool no_bootstrap = false;
    long long fewshot = -1;
};

void add_run_options(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--data", f.cfg.dataset_path, "Dataset CSV path")->required();
    cmd->add_option("--schema", f.cfg.schema_path, "Schema JSON path")->required();
    cmd->add_option("--name", f.cfg.dataset_name, "Dataset name used in the prompt meta block");
    cmd->add_option("--out", f.cfg.output_dir, "Run directory for artifacts");
    cmd->add_option("--seed", f.cfg.seed, "Master seed; per-stage seeds derive from it");
    cmd->add_option("--ratios", f.ratios, "Train,val,test split ratios")->expected(3)->delimiter(',');

    cmd->add_option("--trees", f.cfg.forest.k, "Number of trees in the forest");
    cmd->add_option("--max-depth", f.cfg.forest.tree.max_depth, "Tree depth limit");
    cmd->add_option("--min-leaf", f.cfg.forest.tree.min_leaf, "Minimum rows per leaf");
    cmd->add_option("--max-leaf-nodes", f.cfg.forest.tree.max_leaf_nodes, "Tree leaf-count limit");
    cmd->add_option("--mtry", f.cfg.forest.tree.mtry,
                    "Features sampled per split (0: task default)");
    cmd->add_flag("--no-bootstrap", f.no_bootstrap,
                  "Train every tree on the full sample with all features");

    cmd->add_option("--backend", f.backend, "Refiner backend: heuristic, remote or replay")
        ->check(CLI::IsMember({"heuristic", "remote", "replay"}));
    cmd->add_option("--endpoint", f.cfg.refiner.endpoint, "Chat-completions endpoint URL");
    cmd->add_option("--model", f.cfg.refiner.model, "Remote model name");
    cmd->add_option("--api-key-env", f.cfg.refiner.api_key_env,
                    "Environment variable holding the API key");
    cmd->add_option("--queries", f.cfg.refiner.n_queries, "Refined rules to request");
    cmd->add_option("--refiner-retries", f.cfg.refiner.max_retries,
                    "Extra attempts per query slot");
    cmd->add_option("--leaf-limit", f.cfg.refiner.leaf_limit, "Maximum leaves in a refined rule");
    cmd->add_option("--included-trees", f.cfg.refiner.included_trees,
                    "Rule blocks included in the prompt");
    cmd->add_option("--temperature", f.cfg.refiner.temperature, "Remote sampling temperature");
    cmd->add_option("--replay", f.cfg.refiner.replay_path, "Transcript to replay (replay backend)");
    cmd->add_option("--transcript", f.cfg.refiner.transcript_path,
                    "Transcript recording path (defaults into --out)");
    cmd->add_flag("--allow-heuristic-fallback", f.cfg.allow_heuristic_fallback,
                  "Fall back to the heuristic refiner if the backend fails");

    cmd->add_option("--eta-grid", f.cfg.correction.eta_grid, "Correction step-size grid")
        ->delimiter(',');
    cmd->add_option("--loss", f.cfg.correction.loss,
                    "Loss kind: auto, squared_error or one_hot_squared");
    cmd->add_option("--net-max-depth", f.cfg.correction.net_tree.max_depth,
                    "Gradient-net tree depth limit");
    cmd->add_option("--net-min-leaf", f.cfg.correction.net_tree.min_leaf,
                    "Gradient-net minimum rows per leaf");
    cmd->add_option("--net-max-leaf-nodes", f.cfg.correction.net_tree.max_leaf_nodes,
                    "Gradient-net leaf-count limit");
    cmd->add_option("--fewshot", f.fewshot, "Subsample the training split to this many rows");
}

delta::RunConfig finalize(const RunFlags& f) {
    delta::RunConfig cfg = f.cfg;
    cfg.ratios = {f.ratios.at(0), f.ratios.at(1), f.ratios.at(2)};
    cfg.refiner.backend = delta::refiner_backend_from_string(f.backend);
    cfg.forest.bootstrap = !f.no_bootstrap;
    if (f.fewshot >= 0) cfg.fewshot = static_cast<std::size_t>(f.fewshot);
    return cfg;
}

void print_report(const std::string& label, const delta::MetricReport& report) {
    std::printf("%-22s %s = %.6f  (%zu rows)\n", label.c_str(), report.metric.c_str(),
                report.value, report.n_samples);
}

int cmd_train(const RunFlags& flags) {
    delta::RunConfig cfg = finalize(flags);
    delta::TrainResult result = delta::train_pipeline(cfg);
    delta::write_run_artifacts(result, cfg);
    std::printf("train rows: %zu  val: %zu  test: %zu%s\n", result.data.train.n_rows(),
                result.data.val.n_rows(), result.data.test.n_rows(),
                result.data.stratified ? "  (stratified)" : "");
    print_report("forest", result.forest_test_report);
    print_report("calibrated", result.test_report);
    std::printf("eta = %.2f  queries = %zu%s\n", result.eta, result.queries.rules.size(),
                result.used_heuristic_fallback ? "  (heuristic fallback)" : "");
    if (!cfg.output_dir.empty()) std::printf("artifacts: %s\n", cfg.output_dir.c_str());
    return 0;
}

struct EvalFlags {
    std::string model_path;
    std::string data_path;
    std::string split = "test";
    std::vector<double> ratios = {0.64, 0.16, 0.20};
    std::uint64_t seed = 7;
    long long fewshot = -1;
};

int cmd_eval(const EvalFlags& flags) {
    delta::LoadedRun run = delta::load_run_artifact(flags.model_path);
    delta::RawTable table = delta::load_csv(flags.data_path, run.schema);

    delta::RawTable chosen = table;
    if (flags.split != "all") {
        delta::SplitRatios ratios{flags.ratios.at(0), flags.ratios.at(1), flags.ratios.at(2)};
        auto seeds = delta::derive_stage_seeds(flags.seed);
        auto split_result = delta::split(table, ratios, seeds.split);
        if (flags.split == "train")
            chosen = split_result.train;
        else if (flags.split == "val")
            chosen = split_result.val;
        else
            chosen = split_result.test;
    }
    if (flags.fewshot >= 0)
        chosen = delta::subsample_fewshot(chosen, static_cast<std::size_t>(flags.fewshot),
                                          delta::derive_stage_seeds(flags.seed).fewshot);

    delta::Dataset data = delta::preprocess(chosen, run.stats);
    auto report = delta::evaluate(run.model.predict_all(data.features), data.labels,
                                  run.model.task);
    print_report(flags.split + " split", report);
    return 0;
}

int cmd_ablate(const RunFlags& flags, const std::vector<std::string>& variant_names) {
    delta::RunConfig cfg = finalize(flags);
    delta::TrainResult result = delta::train_pipeline(cfg);

    delta::AblationContext ctx;
    ctx.train = result.data.train;
    ctx.val = result.data.val;
    ctx.test = result.data.test;
    ctx.forest = result.model.forest;
    ctx.rules = result.queries.rules;
    ctx.net_tree = cfg.correction.net_tree;
    ctx.eta_grid = cfg.correction.eta_grid;
    ctx.seed = delta::derive_stage_seeds(cfg.seed).correction;

    std::vector<delta::AblationVariant> variants;
    for (const auto& name : variant_names)
        variants.push_back(delta::ablation_variant(delta::variant_id_from_string(name)));
    auto rows = delta::run_ablation(ctx, variants);

    const std::string dataset = cfg.dataset_name.empty()
                                    ? std::filesystem::path(cfg.dataset_path).stem().string()
                                    : cfg.dataset_name;
    std::vector<std::vector<std::string>> records;
    records.push_back({"variant", "dataset", "metric", "value", "n_samples", "eta", "seed"});
    for (const auto& row : rows) {
        char value[64], eta[64];
        std::snprintf(value, sizeof(value), "%.6f", row.report.value);
        std::snprintf(eta, sizeof(eta), "%.2f", row.eta);
        records.push_back({row.variant, dataset, row.report.metric, value,
                           std::to_string(row.report.n_samples), eta,
                           std::to_string(cfg.seed)});
        std::printf("%-5s %s = %.6f%s\n", row.variant.c_str(), row.report.metric.c_str(),
                    row.report.value, row.eta > 0.0 ? ("  (eta " + std::string(eta) + ")").c_str()
                                                    : "");
    }
    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream out(std::filesystem::path(cfg.output_dir) / "ablation.csv");
        delta::write_csv_records(out, records);
        std::printf("ablation table: %s/ablation.csv\n", cfg.output_dir.c_str());
    }
    return 0;
}

int cmd_distance(const RunFlags& flags, const std::string& split_name) {
    delta::RunConfig cfg = finalize(flags);
    auto seeds = delta::derive_stage_seeds(cfg.seed);
    delta::PreparedData prepared = delta::prepare_data(cfg, seeds);
    const delta::Dataset& data = split_name == "train"
                                     ? prepared.train
                                     : (split_name == "val" ? prepared.val : prepared.test);

    delta::Forest forest = delta::fit_forest(prepared.train, cfg.forest, seeds.forest);
    delta::RuleSet rules = delta::extract_rule_set(forest);
    std::vector<std::size_t> ranked = delta::rank_trees_by_validation(forest, prepared.val);
    ranked.resize(std::min<std::size_t>(ranked.size(), cfg.refiner.included_trees));
    delta::DatasetMeta meta = delta::dataset_meta(
        cfg.dataset_name.empty() ? std::filesystem::path(cfg.dataset_path).stem().string()
                                 : cfg.dataset_name,
        prepared.schema, prepared.train.n_rows());
    delta::RefinerConfig refiner_cfg = cfg.refiner;
    refiner_cfg.seed = seeds.refiner;
    delta::Prompt prompt = delta::build_prompt(meta, rules.subset(ranked), refiner_cfg);
    auto backend = delta::make_backend(refiner_cfg, &prepared.train);
    auto queries = delta::query_refiner(refiner_cfg, prompt, *backend,
                                        prepared.train.n_features());

    double refined = 0.0;
    for (const auto& rule : queries.rules) refined += delta::intra_node_distance(rule, data);
    refined /= static_cast<double>(queries.rules.size());
    double forest_mean = delta::mean_forest_intra_distance(forest, data.features);
    std::printf("refined-rule intra-node distance (%s): %.6f\n", split_name.c_str(), refined);
    std::printf("forest mean intra-node distance (%s): %.6f\n", split_name.c_str(), forest_mean);
    std::printf("ratio: %.4f\n", refined / forest_mean);
    return 0;
}

int cmd_fewshot_sweep(const RunFlags& flags, const std::vector<std::size_t>& shots) {
    std::vector<std::vector<std::string>> records;
    records.push_back({"n_shots", "model", "metric", "value", "n_samples", "seed"});
    for (std::size_t n : shots) {
        RunFlags step = flags;
        step.fewshot = static_cast<long long>(n);
        step.cfg.output_dir.clear();
        delta::RunConfig cfg = finalize(step);
        delta::TrainResult result = delta::train_pipeline(cfg);
        auto push = [&](const std::string& model, const delta::MetricReport& report) {
            char value[64];
            std::snprintf(value, sizeof(value), "%.6f", report.value);
            records.push_back({std::to_string(n), model, report.metric, value,
                               std::to_string(report.n_samples), std::to_string(cfg.seed)});
        };
        push("delta", result.test_report);
        push("forest", result.forest_test_report);
        std::printf("%4zu shots: delta %s = %.6f, forest = %.6f\n", n,
                    result.test_report.metric.c_str(), result.test_report.value,
                    result.forest_test_report.value);
    }
    delta::RunConfig cfg = finalize(flags);
    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream out(std::filesystem::path(cfg.output_dir) / "fewshot.csv");
        delta::write_csv_records(out, records);
        std::printf("sweep table: %s/fewshot.csv\n", cfg.output_dir.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree-ensemble training with rule refinement and gradient error correction"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML config file");

    RunFlags train_flags;
    auto* train = app.add_subcommand("train", "Train the full pipeline and write artifacts");
    add_run_options(train, train_flags);

    EvalFlags eval_flags;
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a dataset split");
    eval->add_option("--model", eval_flags.model_path, "model.json from a training run")
        ->required();
    eval->add_option("--data", eval_flags.data_path, "Dataset CSV path")->required();
    eval->add_option("--split", eval_flags.split, "Rows to evaluate: train, val, test or all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval->add_option("--ratios", eval_flags.ratios, "Train,val,test split ratios")
        ->expected(3)
        ->delimiter(',');
    eval->add_option("--seed", eval_flags.seed, "Master seed (must match the training run)");
    eval->add_option("--fewshot", eval_flags.fewshot, "Subsample the chosen split to n rows");

    RunFlags ablate_flags;
    std::vector<std::string> variant_names = {"A", "B", "C", "D", "E", "F", "full"};
    auto* ablate = app.add_subcommand("ablate", "Run the component-removal grid");
    add_run_options(ablate, ablate_flags);
    ablate->add_option("--variants", variant_names, "Variants to run")->delimiter(',');

    RunFlags distance_flags;
    std::string distance_split = "train";
    auto* distance = app.add_subcommand("distance",
                                        "Compare refined-rule vs forest intra-node distances");
    add_run_options(distance, distance_flags);
    distance->add_option("--split", distance_split, "Rows to measure: train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));

    RunFlags sweep_flags;
    std::vector<std::size_t> shots = {4, 8, 16, 32, 64};
    auto* sweep = app.add_subcommand("fewshot-sweep", "Train at several few-shot sizes");
    add_run_options(sweep, sweep_flags);
    sweep->add_option("--shots", shots, "Training subsample sizes")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_flags);
        if (ablate->parsed()) return cmd_ablate(ablate_flags, variant_names);
        if (distance->parsed()) return cmd_distance(distance_flags, distance_split);
        if (sweep->parsed()) return cmd_fewshot_sweep(sweep_flags, shots);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const delta::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}
