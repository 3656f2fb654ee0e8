// SPDX-License-Identifier: Apache-2.0
//
// finsent: orchestrate heterogeneous financial sentiment corpora, emit
// balanced training manifests, and evaluate classifiers (remote endpoints,
// the offline mock, or the built-in reference trainer) under zero-shot,
// few-shot, and proportion-swept regimes.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "finsent/finsent.hpp"
#include "finsent/http.hpp"

namespace fs = std::filesystem;
using namespace finsent;

namespace {

std::map<std::string, SentimentLabel> parse_label_map(const std::string& raw) {
    std::map<std::string, SentimentLabel> map;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("label-map entries look like raw=positive, got '" + item + "'");
        auto label = label_from_name(trim(item.substr(eq + 1)));
        if (!label) throw ConfigError("unknown label in '" + item + "'");
        map.emplace(trim(item.substr(0, eq)), *label);
    }
    if (map.empty()) throw ConfigError("label-map is empty");
    return map;
}

std::vector<double> parse_scales(const std::string& raw) {
    std::vector<double> scales;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) scales.push_back(std::stod(trim(item)));
    return scales;
}

void write_plan_file(const fs::path& path, const PhasePlan& plan) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(plan).dump(2) << "\n";
}

PhasePlan read_plan_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return plan_from_json(j);
}

void write_report_file(const fs::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(report).dump(2) << "\n";
}

void render_all(const std::vector<ReportRow>& rows, const std::string& format,
                const fs::path& out_dir) {
    if (format == "markdown" || format == "all")
        render_report(rows, ReportFormat::markdown, out_dir);
    if (format == "csv" || format == "all") render_report(rows, ReportFormat::csv, out_dir);
    if (format == "plot_data" || format == "all")
        render_report(rows, ReportFormat::plot_data, out_dir);
}

struct EndpointOptions {
    std::string base_url;
    std::string model_name = "unknown-model";
    std::string api_key_env = "FINSENT_API_KEY";
    std::string path = "/v1/chat/completions";
    int max_tokens = 16;
    int max_concurrency = 4;
    int retries = 3;
    int backoff_ms = 100;
    int timeout_s = 30;

    void attach(CLI::App* cmd) {
        cmd->add_option("--base-url", base_url, "endpoint base url, e.g. https://api.host");
        cmd->add_option("--model-name", model_name, "model field of the chat request");
        cmd->add_option("--api-key-env", api_key_env,
                        "environment variable holding the API key");
        cmd->add_option("--endpoint-path", path, "request path");
        cmd->add_option("--max-tokens", max_tokens, "max_tokens per completion");
        cmd->add_option("--max-concurrency", max_concurrency, "requests in flight");
        cmd->add_option("--retries", retries, "attempts per request");
        cmd->add_option("--backoff-ms", backoff_ms, "initial retry backoff");
        cmd->add_option("--timeout-s", timeout_s, "connection/read timeout");
    }

    EndpointConfig to_config() const {
        EndpointConfig config;
        config.base_url = base_url;
        config.model_name = model_name;
        config.api_key_env = api_key_env;
        config.path = path;
        config.max_output_tokens = max_tokens;
        config.max_concurrency = max_concurrency;
        config.retry = {retries, backoff_ms};
        config.timeout_s = timeout_s;
        return config;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"financial sentiment pipeline: corpora, manifests, evaluation"};
    app.require_subcommand(1);

    // ingest ------------------------------------------------------------------
    std::string in_path, in_format = "csv", in_domain, in_language = "en", in_label_map;
    std::string in_text_col = "text", in_label_col = "label", in_split = "train", in_out;
    bool in_append = false;
    auto* ingest_cmd = app.add_subcommand("ingest", "read a dataset file into the corpus");
    ingest_cmd->add_option("--input", in_path, "source file")->required();
    ingest_cmd->add_option("--format", in_format, "csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    ingest_cmd->add_option("--domain", in_domain, "domain id, e.g. fpb")->required();
    ingest_cmd->add_option("--language", in_language, "en or zh")
        ->check(CLI::IsMember({"en", "zh"}));
    ingest_cmd->add_option("--label-map", in_label_map, "raw=label,raw=label")->required();
    ingest_cmd->add_option("--text-col", in_text_col, "text column/field name");
    ingest_cmd->add_option("--label-col", in_label_col, "label column/field name");
    ingest_cmd->add_option("--as-split", in_split, "split tag for these rows")
        ->check(CLI::IsMember({"train", "test"}));
    ingest_cmd->add_option("--out", in_out, "interchange jsonl to write")->required();
    ingest_cmd->add_flag("--append", in_append, "append to an existing interchange file");

    // split -------------------------------------------------------------------
    std::string sp_corpus, sp_out;
    double sp_fraction = 0.2;
    std::uint64_t sp_seed = 0;
    bool sp_force = false;
    auto* split_cmd = app.add_subcommand("split", "stratified train/test assignment");
    split_cmd->add_option("--corpus", sp_corpus, "interchange jsonl")->required();
    split_cmd->add_option("--test-fraction", sp_fraction, "held-out fraction (default 0.2)");
    split_cmd->add_option("--seed", sp_seed, "split seed")->required();
    split_cmd->add_option("--out", sp_out, "output interchange jsonl")->required();
    split_cmd->add_flag("--force", sp_force,
                        "re-split domains that already carry an official test split");

    // plan --------------------------------------------------------------------
    std::int64_t pl_steps = 0, pl_warmup = -1;
    double pl_lr_max = 2e-4, pl_lr_min = 0.0;
    std::string pl_scales = "1.0,0.5", pl_out;
    auto* plan_cmd = app.add_subcommand("plan", "write a three-phase schedule");
    plan_cmd->add_option("--total-steps", pl_steps, "total training steps")->required();
    plan_cmd->add_option("--warmup", pl_warmup, "warm-up steps (default: total/10)");
    plan_cmd->add_option("--lr-max", pl_lr_max, "peak learning rate");
    plan_cmd->add_option("--lr-min", pl_lr_min, "cosine floor");
    plan_cmd->add_option("--layer-scales", pl_scales, "finalization per-group scales");
    plan_cmd->add_option("--out", pl_out, "plan json path")->required();

    // emit-manifest -------------------------------------------------------------
    std::string em_corpus, em_plan, em_out;
    int em_batch = 16;
    std::uint64_t em_seed = 0;
    auto* emit_cmd = app.add_subcommand("emit-manifest", "materialize the step-by-step plan");
    emit_cmd->add_option("--corpus", em_corpus, "interchange jsonl")->required();
    emit_cmd->add_option("--plan", em_plan, "plan json")->required();
    emit_cmd->add_option("--batch-size", em_batch, "examples per step");
    emit_cmd->add_option("--seed", em_seed, "sampling seed")->required();
    emit_cmd->add_option("--out", em_out, "manifest jsonl")->required();

    // train-ref -------------------------------------------------------------------
    std::string tr_corpus, tr_manifest, tr_model_out, tr_traj_out;
    std::int64_t tr_eval_every = 50;
    int tr_patience = 3;
    double tr_min_delta = 1e-3;
    auto* train_cmd =
        app.add_subcommand("train-ref", "train the reference classifier from a manifest");
    train_cmd->add_option("--corpus", tr_corpus, "interchange jsonl")->required();
    train_cmd->add_option("--manifest", tr_manifest, "manifest jsonl")->required();
    train_cmd->add_option("--eval-every", tr_eval_every, "steps between validations");
    train_cmd->add_option("--patience", tr_patience, "per-domain early-stop patience");
    train_cmd->add_option("--min-delta", tr_min_delta, "improvement threshold");
    train_cmd->add_option("--model-out", tr_model_out, "checkpoint json")->required();
    train_cmd->add_option("--trajectory-out", tr_traj_out, "trajectory csv");

    // eval --------------------------------------------------------------------
    std::string ev_corpus, ev_dataset, ev_classifier = "mock", ev_model, ev_out, ev_log;
    int ev_shots = 0;
    std::uint64_t ev_seed = 7;
    bool ev_paper_faithful = false, ev_class_balanced = false;
    EndpointOptions ev_endpoint;
    auto* eval_cmd = app.add_subcommand("eval", "score one classifier on one dataset");
    eval_cmd->add_option("--corpus", ev_corpus, "interchange jsonl")->required();
    eval_cmd->add_option("--dataset", ev_dataset, "domain id to evaluate")->required();
    eval_cmd->add_option("--classifier", ev_classifier, "mock | endpoint | reference")
        ->check(CLI::IsMember({"mock", "endpoint", "reference"}));
    eval_cmd->add_option("--model", ev_model, "checkpoint json (reference only)");
    eval_cmd->add_option("--shots", ev_shots, "0, 3 or 5 exemplars in the prompt");
    eval_cmd->add_option("--seed", ev_seed, "shot-selection seed");
    eval_cmd->add_flag("--paper-faithful", ev_paper_faithful,
                       "draw exemplars from the test pool (reproduces published protocols; leaks eval data)");
    eval_cmd->add_flag("--class-balanced-shots", ev_class_balanced,
                       "rotate exemplars through classes");
    eval_cmd->add_option("--out", ev_out, "report json")->required();
    eval_cmd->add_option("--log", ev_log, "prediction log jsonl");
    ev_endpoint.attach(eval_cmd);

    // sweep-shots ----------------------------------------------------------------
    std::string ss_corpus, ss_config, ss_out_dir;
    auto* shots_cmd = app.add_subcommand("sweep-shots", "0/3/5-shot evaluation sweep");
    shots_cmd->add_option("--corpus", ss_corpus, "interchange jsonl")->required();
    shots_cmd->add_option("--config", ss_config, "sweep config json")->required();
    shots_cmd->add_option("--out-dir", ss_out_dir, "output directory")->required();

    // sweep-proportions ------------------------------------------------------------
    std::string sw_corpus, sw_config, sw_out_dir;
    auto* prop_cmd =
        app.add_subcommand("sweep-proportions", "5..100% training-proportion sweep");
    prop_cmd->add_option("--corpus", sw_corpus, "interchange jsonl")->required();
    prop_cmd->add_option("--config", sw_config, "sweep config json")->required();
    prop_cmd->add_option("--out-dir", sw_out_dir, "output directory")->required();

    // report ------------------------------------------------------------------
    std::vector<std::string> rp_rows;
    std::string rp_format = "all", rp_out_dir;
    auto* report_cmd = app.add_subcommand("report", "render tables and plot data");
    report_cmd->add_option("--rows", rp_rows, "rows.json files from sweeps")->required();
    report_cmd->add_option("--format", rp_format, "markdown | csv | plot_data | all")
        ->check(CLI::IsMember({"markdown", "csv", "plot_data", "all"}));
    report_cmd->add_option("--out-dir", rp_out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd) {
            IngestSpec spec;
            spec.format = in_format == "csv" ? IngestFormat::csv : IngestFormat::jsonl;
            spec.domain = in_domain;
            spec.language = in_language;
            spec.label_map = parse_label_map(in_label_map);
            spec.text_column = in_text_col;
            spec.label_column = in_label_col;
            auto result = ingest(in_path, spec);
            for (const auto& u : result.unmapped)
                std::fprintf(stderr, "unmapped row at line %zu: label '%s'\n", u.line,
                             u.raw_label.c_str());
            std::printf("%s: %zu examples ingested, %zu unmapped\n", in_domain.c_str(),
                        result.corpus.size(), result.unmapped.size());
            if (result.corpus.empty()) throw DataError("no usable rows in " + in_path);
            append_corpus_jsonl(in_out, result.corpus, in_split, in_append);
        } else if (*split_cmd) {
            auto set = read_corpus_jsonl(sp_corpus);
            CorpusSet out;
            for (auto& [d, pair] : set.domains) {
                if (!pair.test.empty() && !sp_force) {
                    // official split shipped with the data: honor it
                    out.domains.emplace(d, pair);
                    std::printf("%s: keeping official split (%zu train / %zu test)\n",
                                d.c_str(), pair.train.size(), pair.test.size());
                    continue;
                }
                std::vector<Example> all = pair.train.examples;
                all.insert(all.end(), pair.test.examples.begin(), pair.test.examples.end());
                auto merged = make_corpus(d, std::move(all));
                auto split = stratified_split(merged, {sp_seed, sp_fraction});
                std::printf("%s: split %zu train / %zu test (test fraction %.2f, seed %llu)\n",
                            d.c_str(), split.train.size(), split.test.size(), sp_fraction,
                            static_cast<unsigned long long>(sp_seed));
                out.domains.emplace(d, std::move(split));
            }
            write_corpus_jsonl(sp_out, out);
        } else if (*plan_cmd) {
            PhasePlan plan;
            plan.total_steps = pl_steps;
            plan.warmup_steps = pl_warmup >= 0 ? pl_warmup : pl_steps / 10;
            plan.lr_max = pl_lr_max;
            plan.lr_min = pl_lr_min;
            plan.layer_scales = parse_scales(pl_scales);
            validate(plan);
            write_plan_file(pl_out, plan);
            std::printf("plan: T=%lld, warmup=%lld, boundaries at %lld/%lld\n",
                        static_cast<long long>(plan.total_steps),
                        static_cast<long long>(plan.warmup_steps),
                        static_cast<long long>(plan.init_boundary()),
                        static_cast<long long>(plan.final_boundary()));
        } else if (*emit_cmd) {
            auto corpus = read_corpus_jsonl(em_corpus);
            auto plan = read_plan_file(em_plan);
            auto manifest = emit_manifest(corpus, plan, em_batch, em_seed);
            write_manifest(em_out, manifest);
            std::printf("manifest: %zu steps, fingerprint %s\n", manifest.steps.size(),
                        detail::fingerprint_hex(manifest.corpus_fp).c_str());
        } else if (*train_cmd) {
            auto corpus = read_corpus_jsonl(tr_corpus);
            auto manifest = read_manifest(tr_manifest);
            TrainOptions options;
            options.eval_every = tr_eval_every;
            options.patience = tr_patience;
            options.min_delta = tr_min_delta;
            auto run = train_from_manifest(corpus, manifest, options);
            save_model(tr_model_out, run.model);
            if (!tr_traj_out.empty()) write_trajectory_csv(tr_traj_out, run);
            std::printf("trained %lld steps (%lld resampled after freezes)\n",
                        static_cast<long long>(run.steps_executed),
                        static_cast<long long>(run.resampled_steps));
            for (auto& [d, st] : run.early_stop)
                std::printf("  %s: best macro F1 %.4f%s\n", d.c_str(), st.best_score,
                            st.frozen ? " [frozen]" : "");
        } else if (*eval_cmd) {
            auto corpus = read_corpus_jsonl(ev_corpus);
            if (!corpus.domains.count(ev_dataset))
                throw ConfigError("dataset " + ev_dataset + " not in corpus");
            EvalReport report;
            if (ev_classifier == "reference") {
                if (ev_model.empty()) throw ConfigError("reference eval needs --model");
                auto model = load_model(ev_model);
                report = evaluate_model(model, corpus.domains.at(ev_dataset).test);
                report.setting = "reference";
                if (!ev_log.empty()) {
                    // predictions are cheap to regenerate for the log
                    std::vector<Prediction> preds;
                    const auto& held = corpus.domains.at(ev_dataset).test;
                    for (const auto& e : held.examples) {
                        Prediction p;
                        p.example_id = e.id;
                        p.parsed_label =
                            predict(model, featurize(e.text, e.language, model.feature_dim),
                                    held.declared_labels);
                        p.raw_output = label_name(*p.parsed_label);
                        preds.push_back(std::move(p));
                    }
                    write_prediction_log(ev_log, preds);
                }
            } else {
                SweepConfig config;
                config.classifier =
                    ev_classifier == "mock" ? ClassifierKind::mock : ClassifierKind::endpoint;
                config.shot_source =
                    ev_paper_faithful ? ShotSource::test_pool : ShotSource::train_pool;
                config.class_balanced_shots = ev_class_balanced;
                config.endpoint = ev_endpoint.to_config();
                ChatTransport transport;
                if (config.classifier == ClassifierKind::endpoint) {
                    if (config.endpoint.base_url.empty())
                        throw ConfigError("endpoint eval needs --base-url");
                    transport = make_http_transport(config.endpoint);
                }
                fs::path log = ev_log.empty() ? fs::path(ev_out).replace_extension(".preds.jsonl")
                                              : fs::path(ev_log);
                report = run_eval_cell(corpus, ev_dataset, ev_shots, ev_seed, config, log,
                                       transport);
            }
            write_report_file(ev_out, report);
            std::printf("%s %s: accuracy %.4f, macro F1 %.4f%s\n", ev_dataset.c_str(),
                        report.setting.c_str(), report.accuracy, report.macro_f1,
                        report.trivial_baseline_flagged
                            ? " [does not beat the majority-class baseline]"
                            : "");
            if (report.invalid) return 1;
        } else if (*shots_cmd || *prop_cmd) {
            const bool shots = static_cast<bool>(*shots_cmd);
            auto corpus = read_corpus_jsonl(shots ? ss_corpus : sw_corpus);
            auto config = load_sweep_config(shots ? ss_config : sw_config);
            fs::path out_dir = shots ? ss_out_dir : sw_out_dir;
            ChatTransport transport;
            if (config.classifier == ClassifierKind::endpoint)
                transport = make_http_transport(config.endpoint);
            auto result = shots ? run_shot_sweep(corpus, config, out_dir, transport)
                                : run_proportion_sweep(corpus, config, out_dir);
            write_sweep_result(out_dir, result);
            render_all(result.rows, "all", out_dir);
            std::printf("%zu raw runs, %zu aggregated rows -> %s\n", result.raw.size(),
                        result.aggregated.size(), out_dir.string().c_str());
            if (result.any_invalid) {
                std::fprintf(stderr, "one or more runs marked invalid\n");
                return 1;
            }
        } else if (*report_cmd) {
            std::vector<ReportRow> rows;
            for (const auto& f : rp_rows) {
                auto part = read_rows(f);
                rows.insert(rows.end(), part.begin(), part.end());
            }
            render_all(rows, rp_format, rp_out_dir);
            std::printf("rendered %zu rows -> %s\n", rows.size(), rp_out_dir.c_str());
        }
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 0;
}
