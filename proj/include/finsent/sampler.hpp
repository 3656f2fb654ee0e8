// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/corpus.hpp"
#include "finsent/rng.hpp"
#include "finsent/scheduler.hpp"

namespace finsent {

enum class WeightMode { balanced, proportional, init_priority };

/// Per-domain selection probabilities, kept sorted by domain id so weighted
/// draws are order-stable. Within a domain, examples are drawn uniformly.
struct SamplingWeights {
    std::vector<std::pair<DomainId, double>> weights;  // sums to 1

    double weight_of(const DomainId& d) const {
        for (auto& [id, w] : weights)
            if (id == d) return w;
        return 0.0;
    }
};

/// balanced: every active domain gets 1/D. proportional: domain size over
/// total. init_priority: proportional to 1/size, so underrepresented domains
/// are drawn first during initialization.
inline SamplingWeights compute_weights(std::vector<std::pair<DomainId, std::size_t>> sizes,
                                       WeightMode mode) {
    if (sizes.empty()) throw ConfigError("no active domains to weight");
    for (auto& [d, n] : sizes)
        if (n == 0) throw ConfigError("domain " + d + " is empty");
    std::sort(sizes.begin(), sizes.end());
    SamplingWeights out;
    double total = 0;
    for (auto& [d, n] : sizes) {
        double raw = 1.0;
        switch (mode) {
            case WeightMode::balanced: raw = 1.0; break;
            case WeightMode::proportional: raw = static_cast<double>(n); break;
            case WeightMode::init_priority: raw = 1.0 / static_cast<double>(n); break;
        }
        out.weights.emplace_back(d, raw);
        total += raw;
    }
    for (auto& [d, w] : out.weights) w /= total;
    return out;
}

namespace detail {

inline const DomainId& pick_domain(const SamplingWeights& weights, SplitMix64& rng) {
    double u = rng.next_double();
    double acc = 0.0;
    for (auto& [d, w] : weights.weights) {
        acc += w;
        if (u < acc) return d;
    }
    return weights.weights.back().first;  // guard against rounding at u ~ 1
}

}  // namespace detail

/// Each batch slot independently picks a domain by weight, then an example
/// uniformly within it. Sampling is with replacement across steps, which is
/// what lets small domains reappear more often than their size suggests.
inline std::vector<Example> draw_batch(const SamplingWeights& weights, const CorpusSet& corpus,
                                       std::size_t batch_size, SplitMix64& rng) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (weights.weights.empty()) throw DataError("sampler exhausted: no active domains");
    std::vector<Example> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const DomainId& d = detail::pick_domain(weights, rng);
        const auto& pool = corpus.domains.at(d).train;
        if (pool.empty()) throw DataError("domain " + d + " has an empty train split");
        batch.push_back(pool.examples[rng.below(pool.size())]);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Training manifest
// ---------------------------------------------------------------------------

struct ManifestStep {
    std::int64_t step = 0;
    Phase phase = Phase::Init;
    double lr = 0.0;
    std::vector<double> layer_scales;
    DomainId domain;
    std::vector<std::string> example_ids;
};

/// The materialized step-by-step training plan. The header carries the plan,
/// the seed, a fingerprint of the train split, and the quantization stub a
/// real LLM trainer would read (informational here: the reference trainer
/// computes in plain doubles).
struct TrainingManifest {
    PhasePlan plan;
    std::uint64_t seed = 0;
    std::uint64_t corpus_fp = 0;
    int batch_size = 16;
    std::vector<ManifestStep> steps;
};

/// One deterministic stream: initialization steps draw domains by
/// init_priority weights, balanced steps by equal weights, finalization steps
/// by equal weights over the non-frozen domains. Batch records are
/// single-domain; slot-level domain mixing is equivalent in expectation.
inline TrainingManifest emit_manifest(const CorpusSet& corpus, const PhasePlan& plan,
                                      int batch_size, std::uint64_t seed,
                                      const std::set<DomainId>& frozen = {}) {
    validate(plan);
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::pair<DomainId, std::size_t>> sizes;
    for (auto& [d, pair] : corpus.domains) {
        if (pair.train.empty()) throw DataError("domain " + d + " has an empty train split");
        sizes.emplace_back(d, pair.train.size());
    }
    std::vector<std::pair<DomainId, std::size_t>> active;
    for (auto& s : sizes)
        if (!frozen.count(s.first)) active.push_back(s);
    if (active.empty()) throw DataError("sampler exhausted: all domains frozen");

    auto init_w = compute_weights(sizes, WeightMode::init_priority);
    auto balanced_w = compute_weights(sizes, WeightMode::balanced);
    auto final_w = compute_weights(active, WeightMode::balanced);

    TrainingManifest manifest;
    manifest.plan = plan;
    manifest.seed = seed;
    manifest.corpus_fp = corpus_fingerprint(corpus);
    manifest.batch_size = batch_size;
    SplitMix64 rng(seed);
    for (std::int64_t step = 0; step < plan.total_steps; ++step) {
        ManifestStep rec;
        rec.step = step;
        rec.phase = phase_of(step, plan);
        rec.lr = lr_at(step, plan);
        rec.layer_scales = scales_at(step, plan);
        const SamplingWeights& w = rec.phase == Phase::Init       ? init_w
                                   : rec.phase == Phase::Balanced ? balanced_w
                                                                  : final_w;
        rec.domain = detail::pick_domain(w, rng);
        const auto& pool = corpus.domains.at(rec.domain).train;
        rec.example_ids.reserve(static_cast<std::size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i)
            rec.example_ids.push_back(pool.examples[rng.below(pool.size())].id);
        manifest.steps.push_back(std::move(rec));
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Manifest file format: header JSON on line 1, one JSON object per step
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fingerprint_hex(std::uint64_t fp) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

}  // namespace detail

inline nlohmann::json manifest_header_json(const TrainingManifest& m) {
    // the early-stop defaults ride along for transparency; the consumer's
    // training options may override them
    return {{"plan", to_json(m.plan)},
            {"seed", m.seed},
            {"corpus_fingerprint", detail::fingerprint_hex(m.corpus_fp)},
            {"batch_size", m.batch_size},
            {"early_stop_defaults",
             {{"patience", kDefaultPatience}, {"min_delta", kDefaultMinDelta}}},
            {"quantization", {{"weight_storage", "4-bit"}, {"compute_dtype", "bfloat16"}}}};
}

inline nlohmann::json manifest_step_json(const ManifestStep& s) {
    return {{"step", s.step},
            {"phase", phase_name(s.phase)},
            {"lr", s.lr},
            {"layer_scales", s.layer_scales},
            {"domain", s.domain},
            {"example_ids", s.example_ids}};
}

inline void write_manifest(const std::filesystem::path& path, const TrainingManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << manifest_header_json(m).dump() << "\n";
    for (const auto& s : m.steps) out << manifest_step_json(s).dump() << "\n";
}

inline TrainingManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing manifest header");
    TrainingManifest m;
    try {
        auto header = nlohmann::json::parse(line);
        m.plan = plan_from_json(header.at("plan"));
        m.seed = header.at("seed").get<std::uint64_t>();
        m.corpus_fp = std::stoull(header.at("corpus_fingerprint").get<std::string>(), nullptr, 16);
        m.batch_size = header.at("batch_size").get<int>();
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(1, std::string("bad manifest header: ") + ex.what());
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            ManifestStep s;
            s.step = j.at("step").get<std::int64_t>();
            s.phase = phase_from_name(j.at("phase").get<std::string>());
            s.lr = j.at("lr").get<double>();
            s.layer_scales = j.at("layer_scales").get<std::vector<double>>();
            s.domain = j.at("domain").get<std::string>();
            s.example_ids = j.at("example_ids").get<std::vector<std::string>>();
            m.steps.push_back(std::move(s));
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(lineno, std::string("bad manifest step: ") + ex.what());
        }
    }
    return m;
}

}  // namespace finsent
