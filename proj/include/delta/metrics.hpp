#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "delta/error.hpp"
#include "delta/matrix.hpp"
#include "delta/schema.hpp"

namespace delta {

struct MetricReport {
    std::string metric;  ///< "accuracy" or "nrmse"
    double value = 0.0;
    std::size_t n_samples = 0;
};

/// Argmax with deterministic tie-breaking: the lowest class index wins.
inline std::size_t argmax_class(const double* p, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

inline std::size_t argmax_class(const std::vector<double>& p) {
    return argmax_class(p.data(), p.size());
}

inline double population_stddev(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

/// Classification accuracy over rows of class-score vectors.
inline MetricReport evaluate_accuracy(const Matrix& scores, const std::vector<double>& labels) {
    if (scores.rows() != labels.size())
        throw DataError("evaluate: prediction row count does not match label count");
    if (scores.rows() == 0) throw DataError("evaluate: empty prediction set");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < scores.rows(); ++r)
        if (argmax_class(scores.row(r), scores.cols()) == static_cast<std::size_t>(labels[r]))
            ++hits;
    return {"accuracy", static_cast<double>(hits) / static_cast<double>(scores.rows()),
            scores.rows()};
}

/// Root mean squared error divided by the population standard deviation of
/// the true targets; the mean predictor scores exactly 1.0.
inline MetricReport evaluate_nrmse(const std::vector<double>& preds,
                                   const std::vector<double>& labels) {
    if (preds.size() != labels.size())
        throw DataError("evaluate: prediction count does not match label count");
    if (preds.empty()) throw DataError("evaluate: empty prediction set");
    double denom = population_stddev(labels);
    if (denom == 0.0)
        throw DataError("evaluate: target standard deviation is zero, nrmse is undefined");
    double se = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        se += (preds[i] - labels[i]) * (preds[i] - labels[i]);
    double rmse = std::sqrt(se / static_cast<double>(preds.size()));
    return {"nrmse", rmse / denom, preds.size()};
}

/// Task-dispatching entry point: predictions arrive as an N x m matrix where
/// m is the class count (classification) or 1 (regression).
inline MetricReport evaluate(const Matrix& preds, const std::vector<double>& labels, Task task) {
    if (is_classification(task)) return evaluate_accuracy(preds, labels);
    if (preds.cols() != 1) throw DataError("evaluate: regression predictions must have one column");
    std::vector<double> flat(preds.rows());
    for (std::size_t r = 0; r < preds.rows(); ++r) flat[r] = preds(r, 0);
    return evaluate_nrmse(flat, labels);
}

}  // namespace delta
