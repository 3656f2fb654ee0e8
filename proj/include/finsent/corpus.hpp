// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/core.hpp"
#include "finsent/csv.hpp"
#include "finsent/rng.hpp"

namespace finsent {

inline constexpr int kAllowedProportions[] = {5, 10, 20, 40, 75, 100};

inline bool is_allowed_proportion(int p) {
    for (int q : kAllowedProportions)
        if (p == q) return true;
    return false;
}

// ---------------------------------------------------------------------------
// DomainCorpus
// ---------------------------------------------------------------------------

/// A dataset of examples for one domain. `label_set` is the set of labels
/// actually observed; `declared_labels` is the evaluation label set, which
/// splits and subsets inherit from their parent (a small test split may not
/// observe every declared class).
struct DomainCorpus {
    DomainId domain;
    std::vector<Example> examples;
    std::vector<SentimentLabel> label_set;
    std::vector<SentimentLabel> declared_labels;
    std::map<SentimentLabel, std::size_t> class_counts;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }

    std::string language() const {
        return examples.empty() ? std::string("en") : examples.front().language;
    }
};

/// Recomputes class_counts / label_set from the example list.
inline void refresh_counts(DomainCorpus& c) {
    c.class_counts.clear();
    for (const auto& e : c.examples) ++c.class_counts[e.label];
    c.label_set.clear();
    for (auto l : kAllLabels)
        if (c.class_counts.count(l)) c.label_set.push_back(l);
}

inline DomainCorpus make_corpus(DomainId domain, std::vector<Example> examples) {
    DomainCorpus c;
    c.domain = std::move(domain);
    c.examples = std::move(examples);
    refresh_counts(c);
    c.declared_labels = c.label_set;
    return c;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

enum class IngestFormat { csv, jsonl };

struct IngestSpec {
    IngestFormat format = IngestFormat::csv;
    DomainId domain;
    std::string language = "en";
    std::map<std::string, SentimentLabel> label_map;  // raw value -> label
    std::string text_column = "text";
    std::string label_column = "label";
};

struct UnmappedRow {
    std::size_t line;
    std::string raw_label;
};

/// Rows that could not be mapped are counted and reported, never dropped
/// silently.
struct IngestResult {
    DomainCorpus corpus;
    std::vector<UnmappedRow> unmapped;
};

namespace detail {

inline std::string make_example_id(const DomainId& domain, std::size_t ordinal) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu", ordinal);
    return domain + "-" + buf;
}

inline void add_row(IngestResult& out, const IngestSpec& spec, std::size_t line,
                    const std::string& raw_text, const std::string& raw_label) {
    auto it = spec.label_map.find(raw_label);
    if (it == spec.label_map.end()) {
        out.unmapped.push_back({line, raw_label});
        return;
    }
    std::string text = trim(raw_text);
    if (text.empty()) {
        out.unmapped.push_back({line, "(empty text)"});
        return;
    }
    Example e;
    e.id = make_example_id(spec.domain, out.corpus.examples.size());
    e.text = std::move(text);
    e.label = it->second;
    e.domain = spec.domain;
    e.language = spec.language;
    out.corpus.examples.push_back(std::move(e));
}

inline void ingest_csv(std::istream& in, const IngestSpec& spec, IngestResult& out) {
    CsvReader reader(in);
    CsvRow row;
    if (!reader.next(row)) throw ParseError(1, "missing CSV header row");
    std::ptrdiff_t text_idx = -1, label_idx = -1;
    for (std::size_t i = 0; i < row.fields.size(); ++i) {
        std::string name = trim(row.fields[i]);
        if (!name.empty() && static_cast<unsigned char>(name[0]) == 0xEF && name.size() >= 3)
            name = name.substr(3);  // UTF-8 BOM on the first header cell
        if (name == spec.text_column) text_idx = static_cast<std::ptrdiff_t>(i);
        if (name == spec.label_column) label_idx = static_cast<std::ptrdiff_t>(i);
    }
    if (text_idx < 0)
        throw ParseError(row.line, "header has no column named '" + spec.text_column + "'");
    if (label_idx < 0)
        throw ParseError(row.line, "header has no column named '" + spec.label_column + "'");
    const std::size_t ncols = row.fields.size();
    while (reader.next(row)) {
        if (row.fields.size() != ncols) {
            std::ostringstream msg;
            msg << "expected " << ncols << " fields, got " << row.fields.size();
            throw ParseError(row.line, msg.str());
        }
        add_row(out, spec, row.line, row.fields[static_cast<std::size_t>(text_idx)],
                row.fields[static_cast<std::size_t>(label_idx)]);
    }
}

inline void ingest_jsonl(std::istream& in, const IngestSpec& spec, IngestResult& out) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(lineno, std::string("invalid JSON: ") + ex.what());
        }
        if (!obj.is_object() || !obj.contains(spec.text_column) ||
            !obj.contains(spec.label_column))
            throw ParseError(lineno, "object must carry \"" + spec.text_column + "\" and \"" +
                                         spec.label_column + "\" fields");
        std::string raw_label = obj[spec.label_column].is_string()
                                    ? obj[spec.label_column].get<std::string>()
                                    : obj[spec.label_column].dump();
        add_row(out, spec, lineno, obj[spec.text_column].get<std::string>(), raw_label);
    }
}

}  // namespace detail

/// Reads one dataset file into a DomainCorpus. An empty-corpus error is
/// raised only when the file yields neither examples nor unmapped rows;
/// a file whose rows are all unmappable comes back with the report intact
/// so the caller can show what was rejected.
inline IngestResult ingest(const std::filesystem::path& path, const IngestSpec& spec) {
    if (spec.label_map.empty()) throw ConfigError("label_map must not be empty");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    IngestResult out;
    out.corpus.domain = spec.domain;
    if (spec.format == IngestFormat::csv)
        detail::ingest_csv(in, spec, out);
    else
        detail::ingest_jsonl(in, spec, out);
    refresh_counts(out.corpus);
    out.corpus.declared_labels = out.corpus.label_set;
    if (out.corpus.empty() && out.unmapped.empty())
        throw DataError("empty corpus: " + path.string() + " has no data rows");
    return out;
}

// ---------------------------------------------------------------------------
// Splits and subsets
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::uint64_t seed = 0;
    double test_fraction = 0.2;  // in (0,1)
    int train_proportion = 100;  // one of kAllowedProportions
};

struct SplitPair {
    DomainCorpus train;
    DomainCorpus test;
};

namespace detail {

/// Per-class index lists in corpus order, keyed in canonical label order.
inline std::vector<std::pair<SentimentLabel, std::vector<std::size_t>>> indices_by_class(
    const DomainCorpus& corpus) {
    std::vector<std::pair<SentimentLabel, std::vector<std::size_t>>> by_class;
    for (auto l : kAllLabels)
        if (contains_label(corpus.label_set, l)) by_class.emplace_back(l, std::vector<std::size_t>{});
    for (std::size_t i = 0; i < corpus.examples.size(); ++i)
        for (auto& [l, idx] : by_class)
            if (l == corpus.examples[i].label) idx.push_back(i);
    return by_class;
}

inline DomainCorpus subcorpus(const DomainCorpus& corpus, std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());  // keep corpus order
    DomainCorpus out;
    out.domain = corpus.domain;
    out.examples.reserve(indices.size());
    for (auto i : indices) out.examples.push_back(corpus.examples[i]);
    refresh_counts(out);
    out.declared_labels = corpus.declared_labels;
    return out;
}

}  // namespace detail

/// Seeded per-class split. Per-class train fraction lands within half an
/// example of (1 - test_fraction).
inline SplitPair stratified_split(const DomainCorpus& corpus, const SplitSpec& spec) {
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
        throw ConfigError("test_fraction must be in (0,1)");
    for (auto& [label, count] : corpus.class_counts)
        if (count < 2)
            throw DataError(std::string(label_name(label)) + " has fewer than 2 examples");

    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [label, idx] : detail::indices_by_class(corpus)) {
        auto shuffled = idx;
        SplitMix64 rng(derive_seed(derive_seed(spec.seed, corpus.domain),
                                   label_name(label)));
        shuffle(shuffled, rng);
        auto n_test = static_cast<std::size_t>(
            std::llround(spec.test_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            (i < n_test ? test_idx : train_idx).push_back(shuffled[i]);
    }
    return {detail::subcorpus(corpus, train_idx), detail::subcorpus(corpus, test_idx)};
}

namespace detail {

/// Class-interleaved nested ordering: position t goes to the class with the
/// largest quota deficit, so every prefix is stratified within one example
/// per class, and prefixes of increasing length nest by construction.
inline std::vector<std::size_t> nested_order(const DomainCorpus& corpus, std::uint64_t seed) {
    auto by_class = indices_by_class(corpus);
    for (auto& [label, idx] : by_class) {
        SplitMix64 rng(derive_seed(derive_seed(seed, corpus.domain), label_name(label)));
        shuffle(idx, rng);
    }
    const double total = static_cast<double>(corpus.size());
    std::vector<std::size_t> taken(by_class.size(), 0);
    std::vector<std::size_t> order;
    order.reserve(corpus.size());
    for (std::size_t t = 1; t <= corpus.size(); ++t) {
        std::size_t best = by_class.size();
        double best_deficit = -1e300;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (taken[c] >= by_class[c].second.size()) continue;
            double quota = static_cast<double>(by_class[c].second.size()) *
                           static_cast<double>(t) / total;
            double deficit = quota - static_cast<double>(taken[c]);
            if (deficit > best_deficit) {
                best_deficit = deficit;
                best = c;
            }
        }
        order.push_back(by_class[best].second[taken[best]++]);
    }
    return order;
}

}  // namespace detail

/// Takes the leading ceil(n * p / 100) examples of the seeded nested order,
/// so the 5% subset is contained in the 10% subset under the same seed and
/// sweep curves differ only by data quantity.
inline DomainCorpus subset_proportion(const DomainCorpus& train, int proportion,
                                      std::uint64_t seed) {
    if (!is_allowed_proportion(proportion))
        throw ConfigError("proportion " + std::to_string(proportion) +
                          " not in {5,10,20,40,75,100}");
    if (proportion == 100) return train;
    auto order = detail::nested_order(train, seed);
    auto want = static_cast<std::size_t>(
        std::ceil(static_cast<double>(train.size()) * proportion / 100.0));
    order.resize(std::min(want, order.size()));
    return detail::subcorpus(train, order);
}

// ---------------------------------------------------------------------------
// CorpusSet and interchange format
// ---------------------------------------------------------------------------

/// All domains with their split assignments. Train and test are disjoint by
/// construction; their union is the ingested corpus.
struct CorpusSet {
    std::map<DomainId, SplitPair> domains;

    std::vector<DomainId> domain_ids() const {
        std::vector<DomainId> ids;
        for (auto& [d, _] : domains) ids.push_back(d);
        return ids;
    }
};

/// FNV-1a over the sorted train-split example ids (newline separated).
/// Recorded in manifest headers so a manifest can be checked against the
/// corpus it was emitted for.
inline std::uint64_t corpus_fingerprint(const CorpusSet& set) {
    std::vector<std::string> ids;
    for (auto& [d, pair] : set.domains)
        for (auto& e : pair.train.examples) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto& id : ids) h = fnv1a64(id + "\n", h);
    return h;
}

/// JSONL interchange: one Example record per line with fields
/// id, text, label, domain, language, split.
inline void write_corpus_jsonl(const std::filesystem::path& path, const CorpusSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    auto emit = [&](const DomainCorpus& c, const char* split) {
        for (const auto& e : c.examples) {
            nlohmann::json obj{{"id", e.id},         {"text", e.text},
                               {"label", label_name(e.label)}, {"domain", e.domain},
                               {"language", e.language},       {"split", split}};
            out << obj.dump() << "\n";
        }
    };
    for (auto& [d, pair] : set.domains) {
        emit(pair.train, "train");
        emit(pair.test, "test");
    }
}

/// Appends one domain's examples to an interchange file under the given
/// split tag. Ingestion of multi-file datasets (e.g. an official train/test
/// pair) accumulates records this way.
inline void append_corpus_jsonl(const std::filesystem::path& path, const DomainCorpus& corpus,
                                const std::string& split, bool append) {
    if (split != "train" && split != "test") throw ConfigError("split must be train or test");
    std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& e : corpus.examples) {
        nlohmann::json obj{{"id", e.id},         {"text", e.text},
                           {"label", label_name(e.label)}, {"domain", e.domain},
                           {"language", e.language},       {"split", split}};
        out << obj.dump() << "\n";
    }
}

inline CorpusSet read_corpus_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::map<DomainId, std::pair<std::vector<Example>, std::vector<Example>>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(lineno, std::string("invalid JSON: ") + ex.what());
        }
        Example e;
        e.id = obj.at("id").get<std::string>();
        e.text = obj.at("text").get<std::string>();
        auto label = label_from_name(obj.at("label").get<std::string>());
        if (!label) throw ParseError(lineno, "unknown label " + obj.at("label").dump());
        e.label = *label;
        e.domain = obj.at("domain").get<std::string>();
        e.language = obj.value("language", "en");
        std::string split = obj.value("split", "train");
        if (split != "train" && split != "test")
            throw ParseError(lineno, "split must be train or test");
        auto& [train, test] = rows[e.domain];
        (split == "train" ? train : test).push_back(std::move(e));
    }
    CorpusSet set;
    for (auto& [d, pair] : rows) {
        SplitPair sp;
        sp.train = make_corpus(d, std::move(pair.first));
        sp.test = make_corpus(d, std::move(pair.second));
        // the evaluation label set spans both splits
        std::vector<SentimentLabel> declared;
        for (auto l : kAllLabels)
            if (contains_label(sp.train.label_set, l) || contains_label(sp.test.label_set, l))
                declared.push_back(l);
        sp.train.declared_labels = declared;
        sp.test.declared_labels = declared;
        set.domains.emplace(d, std::move(sp));
    }
    if (set.domains.empty()) throw DataError("empty corpus: " + path.string());
    return set;
}

}  // namespace finsent
