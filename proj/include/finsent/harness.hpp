// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/corpus.hpp"
#include "finsent/inference.hpp"
#include "finsent/metrics.hpp"
#include "finsent/prompts.hpp"
#include "finsent/sampler.hpp"
#include "finsent/trainer.hpp"

namespace finsent {

enum class ClassifierKind { endpoint, mock, reference };

inline std::string_view classifier_name(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::endpoint: return "endpoint";
        case ClassifierKind::mock: return "mock";
        case ClassifierKind::reference: return "reference";
    }
    return "?";
}

inline ClassifierKind classifier_from_name(std::string_view s) {
    if (s == "endpoint") return ClassifierKind::endpoint;
    if (s == "mock") return ClassifierKind::mock;
    if (s == "reference") return ClassifierKind::reference;
    throw ConfigError("unknown classifier " + std::string(s));
}

struct SweepConfig {
    std::vector<DomainId> datasets;  // empty = every domain in the corpus
    std::vector<int> shots;          // subset of {0,3,5}
    int few_shot_repeats = 3;
    std::vector<int> proportions;  // subset of {5,10,20,40,75,100}
    ClassifierKind classifier = ClassifierKind::mock;
    std::uint64_t master_seed = 7;
    ShotSource shot_source = ShotSource::train_pool;  // --paper-faithful flips this
    bool class_balanced_shots = false;
    EndpointConfig endpoint;
    // reference-trainer knobs for proportion sweeps; lr_max defaults to a
    // magnitude that actually moves the zero-initialized linear model (the
    // scheduler's own default mirrors LLM fine-tuning scale)
    std::int64_t total_steps = 1000;
    int batch_size = 16;
    double lr_max = 0.5;
    double lr_min = 0.0;
    TrainOptions train;
    double invalid_failure_threshold = 0.10;

    std::string model_label() const {
        return classifier == ClassifierKind::endpoint ? endpoint.model_name
                                                      : std::string(classifier_name(classifier));
    }
};

inline void validate_sweep(const SweepConfig& config) {
    if (config.shots.empty() && config.proportions.empty())
        throw ConfigError("sweep needs at least one of shots / proportions");
    for (int k : config.shots)
        if (k != 0 && k != 3 && k != 5) throw ConfigError("shots must be within {0,3,5}");
    for (int p : config.proportions)
        if (!is_allowed_proportion(p))
            throw ConfigError("proportions must be within {5,10,20,40,75,100}");
    if (config.few_shot_repeats < 2)
        throw ConfigError("few_shot_repeats must be >= 2 (mean±std needs repeats)");
}

// ---------------------------------------------------------------------------
// Report rows (the unit the renderers consume)
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string model;
    std::string dataset;
    std::string setting;  // "0-shot" | "p=40%"...
    int x = 0;            // shots count or proportion, the plot x-axis
    bool is_proportion = false;
    std::size_t runs = 1;
    double acc_mean = 0.0, acc_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
};

inline ReportRow row_from(const EvalReport& r, int x, bool is_proportion) {
    return {r.model, r.dataset, r.setting, x, is_proportion, 1,
            r.accuracy, 0.0, r.macro_f1, 0.0};
}

inline ReportRow row_from(const AggregateReport& r, int x, bool is_proportion) {
    return {r.model,          r.dataset,          r.setting,         x,
            is_proportion,    r.runs,             r.accuracy.mean,   r.accuracy.stddev,
            r.macro_f1.mean,  r.macro_f1.stddev};
}

// ---------------------------------------------------------------------------
// Shot sweep
// ---------------------------------------------------------------------------

struct SweepResult {
    std::vector<EvalReport> raw;
    std::vector<AggregateReport> aggregated;
    std::vector<ReportRow> rows;
    std::vector<std::map<DomainId, std::vector<TrajectoryPoint>>> trajectories;  // proportion sweeps
    bool any_invalid = false;
};

namespace detail {

inline std::vector<DomainId> sweep_datasets(const CorpusSet& corpus, const SweepConfig& config) {
    if (config.datasets.empty()) return corpus.domain_ids();
    for (const auto& d : config.datasets)
        if (!corpus.domains.count(d)) throw ConfigError("unknown dataset " + d);
    return config.datasets;
}

inline std::string shot_log_name(const DomainId& dataset, int k, int run_index) {
    return "preds_" + dataset + "_" + std::to_string(k) + "shot_r" +
           std::to_string(run_index) + ".jsonl";
}

}  // namespace detail

/// One (dataset, k, seed) evaluation cell: builds a prompt per test example,
/// classifies each, logs every prediction verbatim, and scores the result.
/// Endpoint failures are carried per example; the run is marked invalid when
/// more than the configured fraction of requests failed.
inline EvalReport run_eval_cell(const CorpusSet& corpus, const DomainId& dataset, int k,
                                std::uint64_t seed, const SweepConfig& config,
                                const std::filesystem::path& log_path,
                                const ChatTransport& transport = {}) {
    if (config.classifier == ClassifierKind::reference)
        throw ConfigError("prompted evaluation needs the mock or an endpoint, not reference");
    if (config.classifier == ClassifierKind::endpoint && !transport)
        throw ConfigError("endpoint classifier needs a transport");
    const auto& pair = corpus.domains.at(dataset);
    if (pair.test.empty()) throw DataError("dataset " + dataset + " has an empty test split");
    const DomainCorpus& pool =
        config.shot_source == ShotSource::train_pool ? pair.train : pair.test;

    std::vector<PromptBundle> bundles;
    bundles.reserve(pair.test.size());
    for (const auto& query : pair.test.examples)
        bundles.push_back(build_prompt(query, pool, k, seed, config.class_balanced_shots));

    std::vector<Prediction> preds;
    if (config.classifier == ClassifierKind::mock) {
        for (const auto& b : bundles) preds.push_back(mock_classify(b));
        std::sort(preds.begin(), preds.end(),
                  [](const Prediction& a, const Prediction& b) { return a.example_id < b.example_id; });
    } else {
        preds = classify_many(bundles, config.endpoint, transport);
    }
    write_prediction_log(log_path, preds);

    std::map<std::string, SentimentLabel> truth_by_id;
    for (const auto& e : pair.test.examples) truth_by_id.emplace(e.id, e.label);
    std::vector<SentimentLabel> truth;
    for (const auto& p : preds) truth.push_back(truth_by_id.at(p.example_id));

    auto report = score(truth, preds, pair.test.declared_labels);
    report.model = config.model_label();
    report.dataset = dataset;
    report.setting = std::to_string(k) + "-shot";
    report.seed = seed;
    report.notes = "log=" + log_path.filename().string();
    if (report.failure_rate > config.invalid_failure_threshold) {
        report.invalid = true;
        report.notes += "; invalid: transport failure rate above threshold";
    }
    return report;
}

/// Shot-sweep protocol: k = 0 runs once; k > 0 runs few_shot_repeats times with
/// seeds derived from the master seed, aggregated to mean±std. All raw
/// predictions are logged next to the reports, so every aggregated number is
/// recomputable from the logs.
inline SweepResult run_shot_sweep(const CorpusSet& corpus, const SweepConfig& config,
                                  const std::filesystem::path& out_dir,
                                  const ChatTransport& transport = {}) {
    validate_sweep(config);
    if (config.shots.empty()) throw ConfigError("shot sweep needs a non-empty shots set");
    std::filesystem::create_directories(out_dir);
    auto shots = config.shots;
    std::sort(shots.begin(), shots.end());

    SweepResult result;
    for (const auto& dataset : detail::sweep_datasets(corpus, config)) {
        for (int k : shots) {
            const int runs = k == 0 ? 1 : config.few_shot_repeats;
            std::vector<EvalReport> cell;
            for (int i = 0; i < runs; ++i) {
                std::uint64_t seed = derive_seed(config.master_seed,
                                                 static_cast<std::uint64_t>(k == 0 ? 0 : i + 1));
                auto log_name = detail::shot_log_name(dataset, k, i + 1);
                cell.push_back(run_eval_cell(corpus, dataset, k, seed, config,
                                             out_dir / log_name, transport));
                result.any_invalid = result.any_invalid || cell.back().invalid;
            }
            if (runs == 1) {
                result.rows.push_back(row_from(cell[0], k, false));
            } else {
                auto agg = aggregate(cell);
                result.rows.push_back(row_from(agg, k, false));
                result.aggregated.push_back(std::move(agg));
            }
            for (auto& r : cell) result.raw.push_back(std::move(r));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Proportion sweep
// ---------------------------------------------------------------------------

/// Proportion-sweep protocol with the reference trainer: for each proportion, take the
/// seeded nested subset of every domain's train split, emit a manifest over
/// the joint corpus, train, and evaluate on every dataset's full test split.
inline SweepResult run_proportion_sweep(const CorpusSet& corpus, const SweepConfig& config,
                                        const std::filesystem::path& out_dir) {
    validate_sweep(config);
    if (config.proportions.empty())
        throw ConfigError("proportion sweep needs a non-empty proportions set");
    if (config.classifier != ClassifierKind::reference)
        throw ConfigError("proportion sweep fine-tunes the reference model; endpoint SFT is out "
                          "of scope");
    std::filesystem::create_directories(out_dir);
    auto proportions = config.proportions;
    std::sort(proportions.begin(), proportions.end());
    const auto datasets = detail::sweep_datasets(corpus, config);

    SweepResult result;
    for (int p : proportions) {
        CorpusSet subset;
        for (const auto& d : datasets) {
            const auto& pair = corpus.domains.at(d);
            SplitPair sp;
            // one subset seed per domain, shared across proportions: nesting
            // makes sweep curves differ only by data quantity
            sp.train = subset_proportion(pair.train, p, derive_seed(config.master_seed,
                                                                    "subset/" + d));
            sp.test = pair.test;
            subset.domains.emplace(d, std::move(sp));
        }
        auto plan = make_plan(config.total_steps);
        plan.lr_max = config.lr_max;
        plan.lr_min = config.lr_min;
        validate(plan);
        auto manifest = emit_manifest(subset, plan, config.batch_size,
                                      derive_seed(config.master_seed,
                                                  "manifest/p" + std::to_string(p)));
        auto run = train_from_manifest(subset, manifest, config.train);
        write_trajectory_csv(out_dir / ("trajectory_p" + std::to_string(p) + ".csv"), run);

        std::map<DomainId, std::vector<TrajectoryPoint>> traj_by_domain;
        for (const auto& t : run.trajectory) traj_by_domain[t.domain].push_back(t);
        result.trajectories.push_back(std::move(traj_by_domain));

        for (const auto& d : datasets) {
            auto report = evaluate_model(run.model, corpus.domains.at(d).test);
            report.model = config.model_label();
            report.setting = std::to_string(p) + "%";
            report.seed = config.master_seed;
            report.notes = "trajectory=trajectory_p" + std::to_string(p) + ".csv";
            result.rows.push_back(row_from(report, p, true));
            result.raw.push_back(std::move(report));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Persistence of sweep results
// ---------------------------------------------------------------------------

inline void write_sweep_result(const std::filesystem::path& out_dir, const SweepResult& result) {
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : result.raw) arr.push_back(to_json(r));
        std::ofstream out(out_dir / "raw_reports.json", std::ios::binary);
        out << arr.dump(2) << "\n";
    }
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : result.aggregated) arr.push_back(to_json(r));
        std::ofstream out(out_dir / "aggregated_reports.json", std::ios::binary);
        out << arr.dump(2) << "\n";
    }
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : result.rows)
            arr.push_back({{"model", r.model},
                           {"dataset", r.dataset},
                           {"setting", r.setting},
                           {"x", r.x},
                           {"is_proportion", r.is_proportion},
                           {"runs", r.runs},
                           {"accuracy", {{"mean", r.acc_mean}, {"std", r.acc_std}}},
                           {"macro_f1", {{"mean", r.f1_mean}, {"std", r.f1_std}}}});
        std::ofstream out(out_dir / "rows.json", std::ios::binary);
        out << arr.dump(2) << "\n";
    }
}

inline std::vector<ReportRow> read_rows(const std::filesystem::path& rows_json) {
    std::ifstream in(rows_json, std::ios::binary);
    if (!in) throw DataError("cannot open " + rows_json.string());
    nlohmann::json arr;
    in >> arr;
    std::vector<ReportRow> rows;
    for (auto& j : arr) {
        ReportRow r;
        r.model = j.at("model").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.setting = j.at("setting").get<std::string>();
        r.x = j.at("x").get<int>();
        r.is_proportion = j.at("is_proportion").get<bool>();
        r.runs = j.at("runs").get<std::size_t>();
        r.acc_mean = j.at("accuracy").at("mean").get<double>();
        r.acc_std = j.at("accuracy").at("std").get<double>();
        r.f1_mean = j.at("macro_f1").at("mean").get<double>();
        r.f1_std = j.at("macro_f1").at("std").get<double>();
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

enum class ReportFormat { markdown, csv, plot_data };

namespace detail {

inline std::string fmt6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

inline void sort_rows(std::vector<ReportRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.model != b.model) return a.model < b.model;
        if (a.is_proportion != b.is_proportion) return a.is_proportion < b.is_proportion;
        if (a.x != b.x) return a.x < b.x;
        return a.dataset < b.dataset;
    });
}

}  // namespace detail

/// Writes the requested view of the rows into out_dir and returns the paths.
/// markdown: one table with a row per (model, setting, dataset) cell.
/// csv: the long form (model, dataset, setting, accuracy, macro_f1, std_acc,
/// std_f1), plus a wide per-proportion table when proportion rows are present
/// (one column per proportion). plot_data: x = shots or proportion, y = macro F1,
/// one series per (model, dataset).
inline std::vector<std::filesystem::path> render_report(std::vector<ReportRow> rows,
                                                        ReportFormat format,
                                                        const std::filesystem::path& out_dir) {
    if (rows.empty()) throw DataError("no reports to render");
    std::filesystem::create_directories(out_dir);
    detail::sort_rows(rows);
    std::vector<std::filesystem::path> written;

    if (format == ReportFormat::markdown) {
        auto path = out_dir / "report.md";
        std::ofstream out(path, std::ios::binary);
        out << "| Model | Setting | Dataset | Acc. | Macro F1 |\n";
        out << "|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            std::string acc = r.runs > 1 ? format_pm(r.acc_mean, r.acc_std) : format_2dp(r.acc_mean);
            std::string f1 = r.runs > 1 ? format_pm(r.f1_mean, r.f1_std) : format_2dp(r.f1_mean);
            out << "| " << r.model << " | " << r.setting << " | " << r.dataset << " | " << acc
                << " | " << f1 << " |\n";
        }
        written.push_back(path);
    } else if (format == ReportFormat::csv) {
        auto path = out_dir / "report.csv";
        std::ofstream out(path, std::ios::binary);
        out << "model,dataset,setting,accuracy,macro_f1,std_acc,std_f1\n";
        for (const auto& r : rows) {
            out << r.model << "," << r.dataset << "," << r.setting << ","
                << detail::fmt6(r.acc_mean) << "," << detail::fmt6(r.f1_mean) << ","
                << (r.runs > 1 ? detail::fmt6(r.acc_std) : std::string()) << ","
                << (r.runs > 1 ? detail::fmt6(r.f1_std) : std::string()) << "\n";
        }
        written.push_back(path);

        std::set<int> props;
        for (const auto& r : rows)
            if (r.is_proportion) props.insert(r.x);
        if (!props.empty()) {
            auto wide = out_dir / "proportion_table.csv";
            std::ofstream w(wide, std::ios::binary);
            w << "model,dataset,metric";
            for (int p : props) w << "," << p << "%";
            w << "\n";
            std::set<std::pair<std::string, std::string>> series;
            for (const auto& r : rows)
                if (r.is_proportion) series.insert({r.model, r.dataset});
            for (const auto& [model, dataset] : series) {
                auto cell = [&](int p, bool acc) -> std::string {
                    for (const auto& r : rows)
                        if (r.is_proportion && r.model == model && r.dataset == dataset && r.x == p)
                            return detail::fmt6(acc ? r.acc_mean : r.f1_mean);
                    return "";
                };
                w << model << "," << dataset << ",accuracy";
                for (int p : props) w << "," << cell(p, true);
                w << "\n" << model << "," << dataset << ",macro_f1";
                for (int p : props) w << "," << cell(p, false);
                w << "\n";
            }
            written.push_back(wide);
        }
    } else {
        auto path = out_dir / "plot_data.csv";
        std::ofstream out(path, std::ios::binary);
        out << "model,dataset,x,macro_f1\n";
        for (const auto& r : rows)
            out << r.model << "," << r.dataset << "," << r.x << "," << detail::fmt6(r.f1_mean)
                << "\n";
        written.push_back(path);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Sweep config file (JSON, one object)
// ---------------------------------------------------------------------------

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
    SweepConfig c;
    c.datasets = j.value("datasets", std::vector<std::string>{});
    c.shots = j.value("shots", std::vector<int>{});
    c.few_shot_repeats = j.value("few_shot_repeats", 3);
    c.proportions = j.value("proportions", std::vector<int>{});
    c.classifier = classifier_from_name(j.value("classifier", "mock"));
    c.master_seed = j.value("master_seed", std::uint64_t{7});
    c.shot_source = j.value("paper_faithful", false) ? ShotSource::test_pool
                                                     : ShotSource::train_pool;
    c.class_balanced_shots = j.value("class_balanced_shots", false);
    c.total_steps = j.value("total_steps", std::int64_t{1000});
    c.batch_size = j.value("batch_size", 16);
    c.lr_max = j.value("lr_max", 0.5);
    c.lr_min = j.value("lr_min", 0.0);
    c.train.eval_every = j.value("eval_every", std::int64_t{50});
    c.train.patience = j.value("patience", 3);
    c.train.min_delta = j.value("min_delta", 1e-3);
    if (j.contains("endpoint")) {
        const auto& e = j.at("endpoint");
        c.endpoint.base_url = e.value("base_url", "");
        c.endpoint.path = e.value("path", "/v1/chat/completions");
        c.endpoint.model_name = e.value("model_name", "unknown-model");
        c.endpoint.api_key_env = e.value("api_key_env", "FINSENT_API_KEY");
        c.endpoint.max_output_tokens = e.value("max_tokens", 16);
        c.endpoint.max_concurrency = e.value("max_concurrency", 4);
        c.endpoint.retry.max_attempts = e.value("retry_attempts", 3);
        c.endpoint.retry.backoff_ms = e.value("retry_backoff_ms", 100);
        c.endpoint.timeout_s = e.value("timeout_s", 30);
    }
    return c;
}

inline SweepConfig load_sweep_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(1, std::string("bad sweep config: ") + ex.what());
    }
    return sweep_config_from_json(j);
}

}  // namespace finsent
