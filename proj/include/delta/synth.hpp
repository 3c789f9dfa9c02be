#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "delta/dataset.hpp"
#include "delta/rng.hpp"
#include "delta/schema.hpp"

namespace delta {

/// Deterministic synthetic benchmark tables.  Each generator draws latent
/// Gaussian factors, maps them through monotone feature transforms, scores
/// rows with a noisy latent function and labels a fixed quantile — so class
/// counts are exact and difficulty is controlled by the noise scale.
/// Numeric cells are always rendered with three decimals; categorical levels
/// and class labels use distinctive tokens.  Both choices keep raw cell
/// strings from colliding with rule text (two-decimal thresholds) inside
/// generated prompts.
struct GeneratedTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    Schema schema;

    std::vector<std::vector<std::string>> records() const {
        std::vector<std::vector<std::string>> all;
        all.reserve(rows.size() + 1);
        all.push_back(header);
        for (const auto& r : rows) all.push_back(r);
        return all;
    }

    RawTable load(const std::string& origin) const { return load_table(records(), schema, origin); }
};

namespace detail {

inline double synth_u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

/// Box–Muller, implemented directly so the draw sequence does not depend on
/// the standard library's distribution internals.
inline double synth_normal(std::mt19937_64& rng) {
    double u1 = (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
    double u2 = synth_u01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::size_t synth_choice(std::mt19937_64& rng, std::size_t k) {
    std::size_t v = static_cast<std::size_t>(synth_u01(rng) * static_cast<double>(k));
    return std::min(v, k - 1);
}

inline std::string cell3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline std::string level(const char* prefix, std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%02zu", prefix, idx);
    return buf;
}

/// Labels the `n_top` highest scores `top_label`, the rest `rest_label`.
inline std::vector<std::string> rank_labels(const std::vector<double>& scores, std::size_t n_top,
                                            const std::string& top_label,
                                            const std::string& rest_label) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::string> labels(scores.size(), rest_label);
    for (std::size_t i = 0; i < n_top && i < order.size(); ++i) labels[order[i]] = top_label;
    return labels;
}

}  // namespace detail

/// Blood-donation-style table: 748 rows, 4 numeric features, binary target
/// with a 570/178 class split.  Mirrors the structure of real donation data:
/// integer-month/count marginals, volume exactly 250 units per visit (so two
/// columns are perfectly collinear) and tenure accumulated from visit gaps.
/// The noise scale is calibrated so a 100-tree bagged forest scores about
/// 0.806 test accuracy under the default split.
inline GeneratedTable make_blood_like(std::uint64_t seed = 20260823ull) {
    constexpr std::size_t kRows = 748;
    constexpr std::size_t kPositives = 178;
    constexpr double kNoise = 0.58;

    GeneratedTable t;
    t.header = {"recency_months", "frequency_visits", "volume_units", "tenure_months", "outcome"};
    t.schema.columns = {{"recency_months", ColumnKind::numerical},
                        {"frequency_visits", ColumnKind::numerical},
                        {"volume_units", ColumnKind::numerical},
                        {"tenure_months", ColumnKind::numerical}};
    t.schema.target_name = "outcome";
    t.schema.task = Task::binclass;
    t.schema.n_classes = 2;

    auto rng = make_rng(derive_seed(seed, 0xb1));
    std::vector<std::array<double, 4>> cells(kRows);
    std::vector<double> scores(kRows);
    for (std::size_t i = 0; i < kRows; ++i) {
        double g1 = detail::synth_normal(rng);  // donor engagement
        double g0 = 0.75 * detail::synth_normal(rng) - 0.55 * g1;
        double frequency =
            std::clamp(std::round(std::exp(1.05 + 0.85 * g1)), 1.0, 44.0);
        double volume = 250.0 * frequency;
        double recency = std::clamp(std::round(std::exp(1.75 + 0.80 * g0)), 0.0, 74.0);
        double gap = 2.5 + 3.5 * std::fabs(detail::synth_normal(rng));
        double tenure = std::clamp(
            std::round(recency + (frequency - 1.0) * gap + 3.0 * std::fabs(detail::synth_normal(rng)) + 2.0),
            2.0, 98.0);
        cells[i] = {recency, frequency, volume, tenure};
        scores[i] = -0.060 * recency + 0.150 * frequency - 0.012 * tenure +
                    kNoise * detail::synth_normal(rng);
    }
    auto labels = detail::rank_labels(scores, kPositives, "donated", "declined");
    for (std::size_t i = 0; i < kRows; ++i)
        t.rows.push_back({detail::cell3(cells[i][0]), detail::cell3(cells[i][1]),
                          detail::cell3(cells[i][2]), detail::cell3(cells[i][3]), labels[i]});
    return t;
}

/// Credit-scoring-style table: 1000 rows, 7 numeric + 13 categorical
/// features, binary target with a 700/300 class split.  Three categorical
/// columns carry real signal; the rest are distractors.
inline GeneratedTable make_credit_like(std::uint64_t seed = 20260824ull) {
    constexpr std::size_t kRows = 1000;
    constexpr std::size_t kGood = 700;
    constexpr double kNoise = 1.00;

    GeneratedTable t;
    const std::vector<std::pair<std::string, std::size_t>> cats = {
        {"acct_status", 4}, {"history", 5},     {"purpose", 10},   {"savings_band", 5},
        {"employ_band", 5}, {"personal_kind", 4}, {"guarantor", 3}, {"property_band", 4},
        {"plan_other", 3},  {"housing_kind", 3}, {"job_band", 4},  {"phone_flag", 2},
        {"origin_flag", 2}};
    const std::vector<std::string> nums = {"duration_months", "amount_units", "rate_pct",
                                           "age_years",       "tenure_years", "open_lines",
                                           "dependents_count"};
    for (const auto& n : nums) {
        t.header.push_back(n);
        t.schema.columns.push_back({n, ColumnKind::numerical});
    }
    for (const auto& [name, card] : cats) {
        (void)card;
        t.header.push_back(name);
        t.schema.columns.push_back({name, ColumnKind::categorical});
    }
    t.header.push_back("risk");
    t.schema.target_name = "risk";
    t.schema.task = Task::binclass;
    t.schema.n_classes = 2;

    // Every categorical feature carries a modest per-level risk effect.  The
    // many-weak-effects structure means no single tree path can capture all
    // of them, so a depth-capped bagged ensemble keeps a systematic residual
    // that local calibration can pick up.
    const std::array<double, 8> kPattern = {-1.00, -0.55, 0.80, 0.15, -0.35, 1.00, 0.45, -0.70};
    const std::array<double, 13> kAmplitude = {0.55, 0.45, 0.18, 0.40, 0.25, 0.18, 0.18,
                                               0.22, 0.18, 0.22, 0.25, 0.12, 0.10};
    auto level_effect = [&](std::size_t feature, std::size_t level) {
        return kAmplitude[feature] * kPattern[(feature * 7 + level * 3) % kPattern.size()];
    };

    auto rng = make_rng(derive_seed(seed, 0xc2));
    std::vector<std::vector<std::string>> rows(kRows);
    std::vector<double> scores(kRows);
    for (std::size_t i = 0; i < kRows; ++i) {
        double z0 = detail::synth_normal(rng);
        double z1 = detail::synth_normal(rng);
        double z2 = detail::synth_normal(rng);
        double z3 = detail::synth_normal(rng);
        double z4 = detail::synth_normal(rng);
        double z5 = detail::synth_normal(rng);
        double duration = 6.0 + std::exp(2.1 + 0.55 * z0);
        double amount = duration * (95.0 + 28.0 * z1) + 250.0;
        double rate = 2.5 + 1.0 * std::tanh(0.7 * z2);
        double age = 19.0 + std::exp(2.55 + 0.45 * z3);
        double tenure = (age - 18.0) * (0.15 + 0.30 / (1.0 + std::exp(-z4)));
        double open_lines = std::max(1.0, std::floor(3.2 + 0.9 * z5));
        double dependents = detail::synth_u01(rng) < 0.17 ? 2.0 : 1.0;

        std::vector<std::size_t> levels;
        for (const auto& [name, card] : cats) {
            (void)name;
            levels.push_back(detail::synth_choice(rng, card));
        }
        std::vector<std::string> row = {detail::cell3(duration),  detail::cell3(amount),
                                        detail::cell3(rate),      detail::cell3(age),
                                        detail::cell3(tenure),    detail::cell3(open_lines),
                                        detail::cell3(dependents)};
        const char* prefixes[] = {"acs", "his", "pur", "sav", "emp", "per", "gua",
                                  "pro", "pla", "hou", "job", "pho", "ori"};
        for (std::size_t c = 0; c < cats.size(); ++c)
            row.push_back(detail::level(prefixes[c], levels[c]));
        rows[i] = std::move(row);

        bool low_acct = levels[0] <= 1;
        bool clean_history = levels[1] == 1 || levels[1] == 4;
        double interaction = (low_acct != clean_history) ? 0.75 : 0.0;
        double cat_effect = 0.0;
        for (std::size_t c = 0; c < cats.size(); ++c) cat_effect += level_effect(c, levels[c]);
        scores[i] = -0.75 * z0 - 0.50 * z1 + 0.45 * z3 + cat_effect + interaction +
                    kNoise * detail::synth_normal(rng);
    }
    auto labels = detail::rank_labels(scores, kGood, "good_risk", "bad_risk");
    for (std::size_t i = 0; i < kRows; ++i) {
        rows[i].push_back(labels[i]);
        t.rows.push_back(std::move(rows[i]));
    }
    return t;
}

/// Income-census-style table with 6 numeric + 8 categorical features and a
/// roughly 76/24 binary target; the row count is a parameter so the default
/// split ratios can produce large training splits for runtime checks.
inline GeneratedTable make_adult_like(std::size_t n_rows, std::uint64_t seed = 20260825ull) {
    const std::size_t kPositives = static_cast<std::size_t>(static_cast<double>(n_rows) * 0.24);
    constexpr double kNoise = 1.65;

    GeneratedTable t;
    const std::vector<std::string> nums = {"age_years",  "final_weight", "school_years",
                                           "gain_units", "loss_units",   "week_hours"};
    const std::vector<std::pair<std::string, std::size_t>> cats = {
        {"work_sector", 7}, {"study_track", 16}, {"union_status", 7}, {"job_family", 14},
        {"house_role", 6},  {"group_tag", 5},    {"sex_code", 2},     {"region_code", 12}};
    for (const auto& nme : nums) {
        t.header.push_back(nme);
        t.schema.columns.push_back({nme, ColumnKind::numerical});
    }
    for (const auto& [name, card] : cats) {
        (void)card;
        t.header.push_back(name);
        t.schema.columns.push_back({name, ColumnKind::categorical});
    }
    t.header.push_back("income_band");
    t.schema.target_name = "income_band";
    t.schema.task = Task::binclass;
    t.schema.n_classes = 2;

    const std::vector<double> union_effect = {-0.35, -0.20, 1.20, -0.30, -0.15, -0.40, -0.10};
    const std::vector<double> job_effect = {0.45,  -0.30, 0.75, -0.55, 0.20, -0.10, 0.60,
                                            -0.40, 0.10,  -0.20, 0.35, -0.60, 0.05, -0.15};

    auto rng = make_rng(derive_seed(seed, 0xa3));
    std::vector<std::vector<std::string>> rows(n_rows);
    std::vector<double> scores(n_rows);
    const char* prefixes[] = {"wrk", "edu", "mar", "occ", "rel", "grp", "sx", "reg"};
    for (std::size_t i = 0; i < n_rows; ++i) {
        double za = detail::synth_normal(rng);
        double zw = detail::synth_normal(rng);
        double ze = detail::synth_normal(rng);
        double zh = detail::synth_normal(rng);
        double age = 17.0 + std::exp(2.95 + 0.42 * za) * 0.62;
        double final_weight = std::exp(11.6 + 0.72 * zw);
        std::size_t edu_level =
            static_cast<std::size_t>(std::clamp(std::lround(7.5 + 2.7 * ze), 0l, 15l));
        double school_years =
            4.0 + 0.8 * static_cast<double>(edu_level) + 0.3 * detail::synth_normal(rng);
        double gain = detail::synth_u01(rng) < 0.08
                          ? std::exp(7.2 + 0.9 * std::fabs(detail::synth_normal(rng)))
                          : 0.0;
        double loss = detail::synth_u01(rng) < 0.05
                          ? std::exp(6.4 + 0.5 * std::fabs(detail::synth_normal(rng)))
                          : 0.0;
        double week_hours = detail::synth_u01(rng) < 0.35
                                ? 40.0
                                : std::clamp(40.0 + 12.0 * zh, 10.0, 99.0);

        std::vector<std::size_t> levels;
        for (std::size_t c = 0; c < cats.size(); ++c) {
            if (c == 1) {
                levels.push_back(edu_level);
            } else {
                levels.push_back(detail::synth_choice(rng, cats[c].second));
            }
        }
        std::vector<std::string> row = {detail::cell3(age),  detail::cell3(final_weight),
                                        detail::cell3(school_years), detail::cell3(gain),
                                        detail::cell3(loss), detail::cell3(week_hours)};
        for (std::size_t c = 0; c < cats.size(); ++c)
            row.push_back(detail::level(prefixes[c], levels[c]));
        rows[i] = std::move(row);

        scores[i] = 0.042 * (age - 38.0) + 0.31 * (school_years - 10.0) +
                    0.018 * (week_hours - 40.0) + (gain > 0.0 ? 1.8 : 0.0) +
                    union_effect[levels[2]] + job_effect[levels[3]] +
                    kNoise * detail::synth_normal(rng);
    }
    auto labels = detail::rank_labels(scores, kPositives, "over_50k", "under_50k");
    for (std::size_t i = 0; i < n_rows; ++i) {
        rows[i].push_back(labels[i]);
        t.rows.push_back(std::move(rows[i]));
    }
    return t;
}

}  // namespace delta
