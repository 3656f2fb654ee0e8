// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/core.hpp"
#include "finsent/inference.hpp"

namespace finsent {

/// Row per true label, column per predicted label, plus a trailing column for
/// Unparseable predictions (which are wrong for every class by decision).
struct ConfusionMatrix {
    std::vector<SentimentLabel> label_set;
    std::vector<std::vector<std::size_t>> counts;  // |L| x (|L|+1)

    std::size_t total() const {
        std::size_t n = 0;
        for (auto& row : counts)
            for (auto c : row) n += c;
        return n;
    }
};

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double unparseable_rate = 0.0;
    std::map<SentimentLabel, ClassScore> per_class;
    ConfusionMatrix confusion;
    // Imbalance caveat: a majority-class predictor reaches the majority share
    // as accuracy. Flagged when this run does not exceed that share.
    double max_class_share = 0.0;
    bool trivial_baseline_flagged = false;
    // run metadata
    std::string model;
    std::string dataset;
    std::string setting;  // "0-shot", "3-shot", "p=40", ...
    std::uint64_t seed = 0;
    std::string notes;
    bool invalid = false;       // > 10% transport failures
    double failure_rate = 0.0;  // transport failures / examples
};

/// Accuracy, per-class precision/recall/F1 (empty denominators score 0), and
/// macro F1 as the unweighted mean over label_set. Zero-support classes stay
/// in the average so scores are comparable across models on one dataset.
inline EvalReport score(const std::vector<SentimentLabel>& truth,
                        const std::vector<Prediction>& preds,
                        const std::vector<SentimentLabel>& label_set) {
    if (truth.empty() || truth.size() != preds.size())
        throw ContractViolation("score: need |truth| = |preds| > 0");
    const std::size_t n_labels = label_set.size();
    auto index_of = [&](SentimentLabel l) -> std::size_t {
        for (std::size_t i = 0; i < n_labels; ++i)
            if (label_set[i] == l) return i;
        return n_labels;  // not in set: counts as the Unparseable column
    };

    EvalReport report;
    report.confusion.label_set = label_set;
    report.confusion.counts.assign(n_labels, std::vector<std::size_t>(n_labels + 1, 0));
    std::size_t correct = 0, unparseable = 0, failures = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        std::size_t row = index_of(truth[i]);
        if (row == n_labels) throw ContractViolation("truth label outside label_set");
        std::size_t col =
            preds[i].parsed_label ? index_of(*preds[i].parsed_label) : n_labels;
        report.confusion.counts[row][col] += 1;
        if (col < n_labels && label_set[col] == truth[i]) ++correct;
        if (col == n_labels) ++unparseable;
        if (!preds[i].error.empty()) ++failures;
    }
    const double total = static_cast<double>(truth.size());
    report.accuracy = static_cast<double>(correct) / total;
    report.unparseable_rate = static_cast<double>(unparseable) / total;
    report.failure_rate = static_cast<double>(failures) / total;

    double f1_sum = 0.0;
    for (std::size_t c = 0; c < n_labels; ++c) {
        std::size_t tp = report.confusion.counts[c][c];
        std::size_t fp = 0, fn = 0, support = 0;
        for (std::size_t r = 0; r < n_labels; ++r)
            if (r != c) fp += report.confusion.counts[r][c];
        for (std::size_t col = 0; col <= n_labels; ++col) {
            support += report.confusion.counts[c][col];
            if (col != c) fn += report.confusion.counts[c][col];
        }
        ClassScore s;
        s.support = support;
        s.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        s.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        s.f1 = (s.precision + s.recall > 0.0)
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        report.per_class[label_set[c]] = s;
        f1_sum += s.f1;
        report.max_class_share =
            std::max(report.max_class_share, static_cast<double>(support) / total);
    }
    report.macro_f1 = n_labels ? f1_sum / static_cast<double>(n_labels) : 0.0;
    report.trivial_baseline_flagged = report.accuracy <= report.max_class_share;
    return report;
}

// ---------------------------------------------------------------------------
// Aggregation over repeated runs
// ---------------------------------------------------------------------------

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct AggregateReport {
    std::string model;
    std::string dataset;
    std::string setting;
    std::size_t runs = 0;
    MetricSummary accuracy;
    MetricSummary macro_f1;
    MetricSummary unparseable_rate;
    std::vector<std::uint64_t> seeds;
};

namespace detail {

inline MetricSummary summarize(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

}  // namespace detail

/// Sample mean and population standard deviation per metric over repeated
/// runs of one (model, dataset, setting) cell. Full precision is retained;
/// the two-decimal rounding is display-only.
inline AggregateReport aggregate(const std::vector<EvalReport>& reports) {
    if (reports.size() < 2) throw DataError("aggregate: need at least 2 reports");
    for (const auto& r : reports)
        if (r.model != reports[0].model || r.dataset != reports[0].dataset ||
            r.setting != reports[0].setting)
            throw DataError("aggregate: mixed run keys");
    AggregateReport agg;
    agg.model = reports[0].model;
    agg.dataset = reports[0].dataset;
    agg.setting = reports[0].setting;
    agg.runs = reports.size();
    std::vector<double> acc, f1, unp;
    for (const auto& r : reports) {
        acc.push_back(r.accuracy);
        f1.push_back(r.macro_f1);
        unp.push_back(r.unparseable_rate);
        agg.seeds.push_back(r.seed);
    }
    agg.accuracy = detail::summarize(acc);
    agg.macro_f1 = detail::summarize(f1);
    agg.unparseable_rate = detail::summarize(unp);
    return agg;
}

/// Table-cell formatting: "0.60±0.02".
inline std::string format_pm(double mean, double stddev) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean, stddev);
    return buf;
}

inline std::string format_2dp(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (auto& [label, s] : r.per_class)
        per_class[std::string(label_name(label))] = {{"precision", s.precision},
                                                     {"recall", s.recall},
                                                     {"f1", s.f1},
                                                     {"support", s.support}};
    nlohmann::json labels = nlohmann::json::array();
    for (auto l : r.confusion.label_set) labels.push_back(std::string(label_name(l)));
    return {{"accuracy", r.accuracy},
            {"macro_f1", r.macro_f1},
            {"unparseable_rate", r.unparseable_rate},
            {"per_class", per_class},
            {"confusion", {{"labels", labels}, {"counts", r.confusion.counts}}},
            {"max_class_share", r.max_class_share},
            {"trivial_baseline_flagged", r.trivial_baseline_flagged},
            {"model", r.model},
            {"dataset", r.dataset},
            {"setting", r.setting},
            {"seed", r.seed},
            {"notes", r.notes},
            {"invalid", r.invalid},
            {"failure_rate", r.failure_rate}};
}

inline nlohmann::json to_json(const AggregateReport& r) {
    return {{"model", r.model},
            {"dataset", r.dataset},
            {"setting", r.setting},
            {"runs", r.runs},
            {"accuracy", {{"mean", r.accuracy.mean}, {"std", r.accuracy.stddev}}},
            {"macro_f1", {{"mean", r.macro_f1.mean}, {"std", r.macro_f1.stddev}}},
            {"unparseable_rate",
             {{"mean", r.unparseable_rate.mean}, {"std", r.unparseable_rate.stddev}}},
            {"seeds", r.seeds}};
}

}  // namespace finsent
