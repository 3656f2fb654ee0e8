// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "finsent/corpus.hpp"
#include "finsent/metrics.hpp"
#include "finsent/rng.hpp"
#include "finsent/sampler.hpp"
#include "finsent/scheduler.hpp"

namespace finsent {

// ---------------------------------------------------------------------------
// Hashed bag-of-words features
// ---------------------------------------------------------------------------

/// Sorted (bucket, count) pairs; duplicates merged.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    bool empty() const { return entries.empty(); }
};

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 16;

/// English: lower-cased alphanumeric tokens split on whitespace/punctuation.
/// Chinese: overlapping character bigrams over the codepoints (no stemming;
/// there is no stem to find). Tokens are hashed into `dim` buckets with
/// occurrence counts as values.
inline SparseVector featurize(std::string_view text, std::string_view language,
                              std::uint32_t dim = kDefaultFeatureDim) {
    std::vector<std::string> tokens;
    if (language == "zh") {
        std::vector<std::string> cps;
        for (auto& cp : utf8_codepoints(text)) {
            if (cp.size() == 1) {
                unsigned char c = static_cast<unsigned char>(cp[0]);
                if (std::isspace(c) || std::ispunct(c)) continue;
            }
            cps.push_back(cp);
        }
        for (std::size_t i = 0; i + 1 < cps.size(); ++i) tokens.push_back(cps[i] + cps[i + 1]);
        if (tokens.empty() && cps.size() == 1) tokens.push_back(cps[0]);
    } else {
        std::string token;
        auto flush = [&] {
            if (!token.empty()) tokens.push_back(std::exchange(token, {}));
        };
        for (char raw : text) {
            unsigned char c = static_cast<unsigned char>(raw);
            if (std::isalnum(c) || c >= 0x80)
                token.push_back(raw >= 'A' && raw <= 'Z' ? static_cast<char>(raw - 'A' + 'a')
                                                         : raw);
            else
                flush();
        }
        flush();
    }
    std::map<std::uint32_t, double> buckets;
    for (const auto& t : tokens) buckets[static_cast<std::uint32_t>(fnv1a64(t) % dim)] += 1.0;
    SparseVector v;
    v.entries.assign(buckets.begin(), buckets.end());
    return v;
}

// ---------------------------------------------------------------------------
// Reference model: multinomial logistic regression over hashed features
// ---------------------------------------------------------------------------

/// Stands in for the LLM under fine-tuning so the pipeline mechanics (phases,
/// weights, schedule, early stopping) are executable and testable on a desk.
/// Zero-initialized: the objective is convex, so no init seed is needed.
struct ReferenceModel {
    std::uint32_t feature_dim = kDefaultFeatureDim;
    std::vector<SentimentLabel> label_set;
    std::vector<std::vector<double>> weights;  // |L| x F
    std::vector<double> bias;                  // |L|
};

inline ReferenceModel make_model(std::vector<SentimentLabel> label_set,
                                 std::uint32_t feature_dim = kDefaultFeatureDim) {
    if (label_set.empty()) throw ConfigError("model needs a non-empty label set");
    ReferenceModel m;
    m.feature_dim = feature_dim;
    m.label_set = std::move(label_set);
    m.weights.assign(m.label_set.size(), std::vector<double>(feature_dim, 0.0));
    m.bias.assign(m.label_set.size(), 0.0);
    return m;
}

inline std::vector<double> logits_of(const ReferenceModel& m, const SparseVector& x) {
    std::vector<double> logits(m.bias);
    for (std::size_t c = 0; c < logits.size(); ++c)
        for (const auto& [bucket, value] : x.entries) logits[c] += m.weights[c][bucket] * value;
    return logits;
}

inline std::vector<double> softmax(std::vector<double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
    return logits;
}

inline std::vector<double> predict_proba(const ReferenceModel& m, const SparseVector& x) {
    return softmax(logits_of(m, x));
}

/// Argmax restricted to `allowed` (empty = model's full label set); ties go to
/// the earlier label in the model's ordering.
inline SentimentLabel predict(const ReferenceModel& m, const SparseVector& x,
                              const std::vector<SentimentLabel>& allowed = {}) {
    auto logits = logits_of(m, x);
    std::size_t best = m.label_set.size();
    for (std::size_t c = 0; c < m.label_set.size(); ++c) {
        if (!allowed.empty() && !contains_label(allowed, m.label_set[c])) continue;
        if (best == m.label_set.size() || logits[c] > logits[best]) best = c;
    }
    if (best == m.label_set.size()) throw ConfigError("no allowed label to predict");
    return m.label_set[best];
}

using LabeledFeatures = std::pair<SparseVector, SentimentLabel>;

struct Gradient {
    // same sparsity pattern per class: only buckets active in the batch
    std::vector<std::map<std::uint32_t, double>> weights;  // |L| maps
    std::vector<double> bias;
    double mean_loss = 0.0;
};

/// Mean softmax cross-entropy loss and its gradient over the batch.
inline Gradient loss_and_gradient(const ReferenceModel& m,
                                  const std::vector<LabeledFeatures>& batch) {
    const std::size_t n_labels = m.label_set.size();
    Gradient g;
    g.weights.resize(n_labels);
    g.bias.assign(n_labels, 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& [x, label] : batch) {
        auto probs = predict_proba(m, x);
        std::size_t y = n_labels;
        for (std::size_t c = 0; c < n_labels; ++c)
            if (m.label_set[c] == label) y = c;
        if (y == n_labels) throw DataError("example label outside model label set");
        g.mean_loss += -std::log(std::max(probs[y], 1e-300)) * inv_b;
        for (std::size_t c = 0; c < n_labels; ++c) {
            double coef = (probs[c] - (c == y ? 1.0 : 0.0)) * inv_b;
            g.bias[c] += coef;
            for (const auto& [bucket, value] : x.entries) g.weights[c][bucket] += coef * value;
        }
    }
    return g;
}

/// One descent step. layer_scales[0] scales the feature-weight group,
/// layer_scales[1] the bias group (the smallest faithful model of per-layer
/// learning-rate reduction). Returns the pre-update mean batch loss.
inline double sgd_step(ReferenceModel& m, const std::vector<LabeledFeatures>& batch, double lr,
                       const std::vector<double>& layer_scales) {
    if (lr < 0) throw ContractViolation("lr must be >= 0");
    if (batch.empty()) return 0.0;
    const double w_scale = layer_scales.empty() ? 1.0 : layer_scales[0];
    const double b_scale = layer_scales.size() > 1 ? layer_scales[1] : w_scale;
    auto g = loss_and_gradient(m, batch);
    if (!std::isfinite(g.mean_loss)) throw TrainingError("non-finite loss");
    for (std::size_t c = 0; c < m.label_set.size(); ++c) {
        for (const auto& [bucket, grad] : g.weights[c]) {
            if (!std::isfinite(grad)) throw TrainingError("non-finite gradient");
            m.weights[c][bucket] -= lr * w_scale * grad;
        }
        if (!std::isfinite(g.bias[c])) throw TrainingError("non-finite gradient");
        m.bias[c] -= lr * b_scale * g.bias[c];
    }
    return g.mean_loss;
}

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

struct TrajectoryPoint {
    std::int64_t step = 0;
    DomainId domain;
    double macro_f1 = 0.0;
};

struct TrainRun {
    ReferenceModel model;
    std::string strategy;  // "balanced_manifest" | "sequential"
    std::vector<TrajectoryPoint> trajectory;
    std::map<DomainId, EarlyStopState> early_stop;
    std::map<DomainId, std::int64_t> freeze_step;     // step at which a domain froze
    std::map<DomainId, std::int64_t> steps_by_domain; // executed updates per domain
    std::int64_t steps_executed = 0;
    std::int64_t resampled_steps = 0;  // frozen-domain steps given to active domains
    std::vector<double> losses;        // mean batch loss per executed step
};

struct TrainOptions {
    std::int64_t eval_every = 50;
    int patience = kDefaultPatience;
    double min_delta = kDefaultMinDelta;
    std::uint32_t feature_dim = kDefaultFeatureDim;
};

namespace detail {

class FeatureCache {
public:
    explicit FeatureCache(std::uint32_t dim) : dim_(dim) {}
    const SparseVector& of(const Example& e) {
        auto it = cache_.find(e.id);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(e.id, featurize(e.text, e.language, dim_)).first->second;
    }

private:
    std::uint32_t dim_;
    std::unordered_map<std::string, SparseVector> cache_;
};

inline std::vector<SentimentLabel> union_label_set(const CorpusSet& corpus) {
    std::vector<SentimentLabel> labels;
    for (auto l : kAllLabels)
        for (auto& [d, pair] : corpus.domains)
            if (contains_label(pair.train.declared_labels, l) ||
                contains_label(pair.test.declared_labels, l)) {
                if (!contains_label(labels, l)) labels.push_back(l);
                break;
            }
    return labels;
}

/// Macro F1 of the model on one domain's held-out split.
inline double validation_macro_f1(const ReferenceModel& model, const DomainCorpus& held_out,
                                  FeatureCache& cache) {
    std::vector<SentimentLabel> truth;
    std::vector<Prediction> preds;
    const auto& allowed = held_out.declared_labels;
    for (const auto& e : held_out.examples) {
        truth.push_back(e.label);
        Prediction p;
        p.example_id = e.id;
        p.parsed_label = predict(model, cache.of(e), allowed);
        p.raw_output = label_name(*p.parsed_label);
        preds.push_back(std::move(p));
    }
    return score(truth, preds, allowed).macro_f1;
}

struct StepOutcome {
    bool trained = false;
    bool exhausted = false;  // all domains frozen: training ends
};

}  // namespace detail

/// Shared per-step machinery for both strategies: run the batch, track loss
/// and counters, evaluate + update early stopping on the eval_every cadence.
class TrainLoop {
public:
    TrainLoop(const CorpusSet& corpus, const TrainOptions& options, std::string strategy)
        : corpus_(corpus), options_(options), cache_(options.feature_dim) {
        run_.strategy = std::move(strategy);
        run_.model = make_model(detail::union_label_set(corpus), options.feature_dim);
        for (auto& [d, pair] : corpus.domains) {
            EarlyStopState st;
            st.patience = options.patience;
            st.min_delta = options.min_delta;
            run_.early_stop.emplace(d, st);
            run_.steps_by_domain.emplace(d, 0);
        }
    }

    bool frozen(const DomainId& d) const { return run_.early_stop.at(d).frozen; }

    std::vector<DomainId> active_domains() const {
        std::vector<DomainId> out;
        for (auto& [d, st] : run_.early_stop)
            if (!st.frozen) out.push_back(d);
        return out;
    }

    void note_resampled() { run_.resampled_steps += 1; }

    /// Sequential training scores only the domain currently being trained;
    /// the others are still evaluated for the trajectory but their
    /// early-stop state is left alone (their scores are stale by design).
    void set_focus(const DomainId& d) { focus_ = d; }

    void train_step(std::int64_t step, const DomainId& domain,
                    const std::vector<const Example*>& batch, double lr,
                    const std::vector<double>& scales) {
        std::vector<LabeledFeatures> feats;
        feats.reserve(batch.size());
        for (const Example* e : batch) feats.emplace_back(cache_.of(*e), e->label);
        double loss;
        try {
            loss = sgd_step(run_.model, feats, lr, scales);
        } catch (const TrainingError& ex) {
            throw TrainingError(std::string(ex.what()) + " at step " + std::to_string(step) +
                                " (domain " + domain + ")");
        }
        run_.losses.push_back(loss);
        run_.steps_by_domain[domain] += 1;
        run_.steps_executed += 1;
        if (options_.eval_every > 0 && run_.steps_executed % options_.eval_every == 0)
            evaluate(step);
    }

    void evaluate(std::int64_t step) {
        for (auto& [d, st] : run_.early_stop) {
            if (st.frozen) continue;
            double f1 = detail::validation_macro_f1(run_.model, corpus_.domains.at(d).test, cache_);
            run_.trajectory.push_back({step, d, f1});
            if (focus_ && d != *focus_) continue;
            st = early_stop_update(st, f1).state;
            if (st.frozen) run_.freeze_step.emplace(d, step);
        }
    }

    TrainRun take() { return std::move(run_); }

private:
    const CorpusSet& corpus_;
    TrainOptions options_;
    detail::FeatureCache cache_;
    TrainRun run_;
    std::optional<DomainId> focus_;
};

/// Replays a manifest step by step. Steps belonging to domains frozen by
/// early stopping are redistributed: the slot is redrawn (balanced over the
/// still-active domains) with a deterministic per-step seed, so re-running a
/// manifest is reproducible. Training ends early if every domain freezes.
inline TrainRun train_from_manifest(const CorpusSet& corpus, const TrainingManifest& manifest,
                                    const TrainOptions& options = {}) {
    // resolve ids up front so a bad manifest fails before any work
    std::map<DomainId, std::unordered_map<std::string, const Example*>> index;
    for (auto& [d, pair] : corpus.domains)
        for (const auto& e : pair.train.examples) index[d].emplace(e.id, &e);

    TrainLoop loop(corpus, options, "balanced_manifest");
    for (const auto& rec : manifest.steps) {
        auto it = index.find(rec.domain);
        if (it == index.end()) throw DataError("manifest domain " + rec.domain + " not in corpus");
        DomainId domain = rec.domain;
        std::vector<const Example*> batch;
        if (!loop.frozen(domain)) {
            for (const auto& id : rec.example_ids) {
                auto eit = it->second.find(id);
                if (eit == it->second.end())
                    throw DataError("manifest id " + id + " not found in train split of " +
                                    rec.domain);
                batch.push_back(eit->second);
            }
        } else {
            auto active = loop.active_domains();
            if (active.empty()) break;  // sampler exhausted: training ends
            SplitMix64 rng(derive_seed(derive_seed(manifest.seed, "resample"),
                                       static_cast<std::uint64_t>(rec.step)));
            domain = active[rng.below(active.size())];
            const auto& pool = corpus.domains.at(domain).train;
            for (std::size_t i = 0; i < rec.example_ids.size(); ++i)
                batch.push_back(&pool.examples[rng.below(pool.size())]);
            loop.note_resampled();
        }
        loop.train_step(rec.step, domain, batch, rec.lr, rec.layer_scales);
    }
    return loop.take();
}

/// Same total step budget and learning-rate schedule as the balanced
/// manifest, but domains are trained one after another in the given order
/// (equal contiguous segments). Early stopping applies to the domain
/// currently being trained; a frozen domain's remaining segment falls through
/// to the next domain in order.
inline TrainRun train_sequential(const CorpusSet& corpus, const PhasePlan& plan,
                                 const std::vector<DomainId>& order, int batch_size,
                                 std::uint64_t seed, const TrainOptions& options = {}) {
    validate(plan);
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::set<DomainId> seen(order.begin(), order.end());
    for (auto& [d, pair] : corpus.domains) {
        if (!seen.count(d)) throw ConfigError("order does not cover domain " + d);
        if (pair.train.empty()) throw DataError("domain " + d + " has an empty train split");
    }
    if (order.size() != corpus.domains.size())
        throw ConfigError("order must list each domain exactly once");

    TrainLoop loop(corpus, options, "sequential");
    const std::int64_t seg = std::max<std::int64_t>(1, plan.total_steps /
                                                           static_cast<std::int64_t>(order.size()));
    SplitMix64 rng(seed);
    for (std::int64_t step = 0; step < plan.total_steps; ++step) {
        auto idx = static_cast<std::size_t>(
            std::min<std::int64_t>(step / seg, static_cast<std::int64_t>(order.size()) - 1));
        while (idx < order.size() && loop.frozen(order[idx])) ++idx;
        if (idx >= order.size()) break;  // nothing left to train
        const DomainId& domain = order[idx];
        // single-domain weighted draw, consuming the rng exactly like
        // manifest emission does, so a one-domain corpus trains identically
        // under both strategies given the same seed
        SamplingWeights w{{{domain, 1.0}}};
        (void)detail::pick_domain(w, rng);
        const auto& pool = corpus.domains.at(domain).train;
        std::vector<const Example*> batch;
        for (int i = 0; i < batch_size; ++i) batch.push_back(&pool.examples[rng.below(pool.size())]);
        loop.set_focus(domain);
        loop.train_step(step, domain, batch, lr_at(step, plan), scales_at(step, plan));
    }
    return loop.take();
}

/// Scores the model on one corpus (typically a test split) against its
/// declared label set.
inline EvalReport evaluate_model(const ReferenceModel& model, const DomainCorpus& held_out) {
    detail::FeatureCache cache(model.feature_dim);
    std::vector<SentimentLabel> truth;
    std::vector<Prediction> preds;
    const auto& allowed = held_out.declared_labels;
    for (const auto& e : held_out.examples) {
        truth.push_back(e.label);
        Prediction p;
        p.example_id = e.id;
        p.parsed_label = predict(model, cache.of(e), allowed);
        p.raw_output = label_name(*p.parsed_label);
        preds.push_back(std::move(p));
    }
    auto report = score(truth, preds, allowed);
    report.dataset = held_out.domain;
    report.model = "reference";
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints and trajectories
// ---------------------------------------------------------------------------

/// Versioned JSON checkpoint. Weights are stored sparsely (non-zero buckets
/// only): the model is dense in memory but zero-initialized, so after
/// training only buckets of seen tokens carry weight.
inline void save_model(const std::filesystem::path& path, const ReferenceModel& m) {
    nlohmann::json labels = nlohmann::json::array();
    for (auto l : m.label_set) labels.push_back(std::string(label_name(l)));
    nlohmann::json weights = nlohmann::json::object();
    for (std::size_t c = 0; c < m.label_set.size(); ++c) {
        nlohmann::json row = nlohmann::json::object();
        for (std::uint32_t f = 0; f < m.feature_dim; ++f)
            if (m.weights[c][f] != 0.0) row[std::to_string(f)] = m.weights[c][f];
        weights[std::string(label_name(m.label_set[c]))] = std::move(row);
    }
    nlohmann::json j{{"version", 1},
                     {"feature_dim", m.feature_dim},
                     {"labels", labels},
                     {"bias", m.bias},
                     {"weights", weights}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump() << "\n";
}

inline ReferenceModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("version").get<int>() != 1) throw DataError("unsupported checkpoint version");
        std::vector<SentimentLabel> labels;
        for (auto& name : j.at("labels")) {
            auto l = label_from_name(name.get<std::string>());
            if (!l) throw DataError("unknown label in checkpoint");
            labels.push_back(*l);
        }
        auto m = make_model(labels, j.at("feature_dim").get<std::uint32_t>());
        m.bias = j.at("bias").get<std::vector<double>>();
        for (std::size_t c = 0; c < m.label_set.size(); ++c) {
            const auto& row = j.at("weights").at(std::string(label_name(m.label_set[c])));
            for (auto it = row.begin(); it != row.end(); ++it)
                m.weights[c][static_cast<std::uint32_t>(std::stoul(it.key()))] =
                    it.value().get<double>();
        }
        return m;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(1, std::string("bad checkpoint: ") + ex.what());
    }
}

/// (step, domain, macro_f1) rows; the input for strategy-comparison plots.
inline void write_trajectory_csv(const std::filesystem::path& path, const TrainRun& run) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "step,domain,macro_f1\n";
    char buf[32];
    for (const auto& p : run.trajectory) {
        std::snprintf(buf, sizeof(buf), "%.6f", p.macro_f1);
        out << p.step << "," << p.domain << "," << buf << "\n";
    }
}

}  // namespace finsent
