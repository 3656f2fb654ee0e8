// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "finsent/core.hpp"
#include "finsent/prompts.hpp"

namespace finsent {

struct Prediction {
    std::string example_id;
    std::string raw_output;
    std::optional<SentimentLabel> parsed_label;  // nullopt = Unparseable
    double latency_ms = 0.0;
    std::string error;  // transport/HTTP failure note; run continues
};

/// Case-insensitive scan for canonical label words and their Chinese
/// equivalents; the earliest occurrence wins and labels outside `allowed` are
/// ignored. Unparseable is a value, not an error.
inline std::optional<SentimentLabel> parse_label(std::string_view raw,
                                                 const std::vector<SentimentLabel>& allowed,
                                                 std::string_view /*language*/ = "en") {
    // Keyword table spans both languages; model output language is not
    // guaranteed to match the query language.
    static const std::pair<const char*, SentimentLabel> kKeywords[] = {
        {"positive", SentimentLabel::positive},
        {"negative", SentimentLabel::negative},
        {"neutral", SentimentLabel::neutral},
        {"正面", SentimentLabel::positive},  // 正面
        {"积极", SentimentLabel::positive},  // 积极
        {"负面", SentimentLabel::negative},  // 负面
        {"消极", SentimentLabel::negative},  // 消极
        {"中性", SentimentLabel::neutral},   // 中性
    };
    const std::string haystack = lower_ascii(raw);
    std::size_t best_pos = std::string::npos;
    std::optional<SentimentLabel> best;
    for (const auto& [word, label] : kKeywords) {
        if (!contains_label(allowed, label)) continue;
        std::size_t pos = haystack.find(word);
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best = label;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Deterministic mock classifier
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& mock_lexicon(SentimentLabel l, bool zh) {
    static const std::vector<std::string> en_pos = {
        "profit", "profits", "gain", "gains", "rose", "rise", "rises", "surged",
        "surge", "beat", "beats", "strong", "growth", "record", "improved",
        "rally", "jumped", "soared", "upgrade", "bullish", "exceeded", "won"};
    static const std::vector<std::string> en_neg = {
        "loss", "losses", "fell", "fall", "falls", "drop", "dropped", "decline",
        "declined", "weak", "miss", "missed", "cut", "cuts", "risk", "warning",
        "plunge", "plunged", "slump", "downgrade", "bearish", "bankruptcy", "lawsuit"};
    static const std::vector<std::string> zh_pos = {
        "利好", "上涨", "增长", "盈利",
        "大涨", "飙升", "看好", "回升"};
    static const std::vector<std::string> zh_neg = {
        "利空", "下跌", "亏损", "大跌",
        "暴跌", "风险", "看空", "下滑"};
    if (zh) return l == SentimentLabel::positive ? zh_pos : zh_neg;
    return l == SentimentLabel::positive ? en_pos : en_neg;
}

inline int count_hits(const std::string& text, const std::vector<std::string>& words, bool zh) {
    int hits = 0;
    if (zh) {
        for (const auto& w : words) {
            std::size_t pos = 0;
            while ((pos = text.find(w, pos)) != std::string::npos) {
                ++hits;
                pos += w.size();
            }
        }
    } else {
        // exact token matches so e.g. "upgrade" never fires inside "downgrade"
        std::string token;
        auto flush = [&] {
            if (token.empty()) return;
            for (const auto& w : words)
                if (token == w) ++hits;
            token.clear();
        };
        for (char c : lower_ascii(text)) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                token.push_back(c);
            else
                flush();
        }
        flush();
    }
    return hits;
}

}  // namespace detail

/// Fixed-lexicon classifier so the full pipeline runs offline and
/// byte-reproducibly. Ties (including no hits at all) resolve to neutral, or
/// to negative for two-class domains.
inline Prediction mock_classify(const PromptBundle& bundle) {
    const bool zh = bundle.language == "zh";
    int pos = detail::count_hits(bundle.query_text,
                                 detail::mock_lexicon(SentimentLabel::positive, zh), zh);
    int neg = detail::count_hits(bundle.query_text,
                                 detail::mock_lexicon(SentimentLabel::negative, zh), zh);
    SentimentLabel label;
    if (pos > neg)
        label = SentimentLabel::positive;
    else if (neg > pos)
        label = SentimentLabel::negative;
    else
        label = contains_label(bundle.allowed_labels, SentimentLabel::neutral)
                    ? SentimentLabel::neutral
                    : SentimentLabel::negative;
    Prediction p;
    p.example_id = bundle.query_id;
    p.raw_output = label_word(label, bundle.language);
    p.parsed_label = parse_label(p.raw_output, bundle.allowed_labels, bundle.language);
    return p;
}

// ---------------------------------------------------------------------------
// Remote chat-completion endpoints
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 100;  // doubled per retry
};

struct EndpointConfig {
    std::string base_url;  // e.g. "http://localhost:8080" or "https://api.example.com"
    std::string path = "/v1/chat/completions";
    std::string model_name = "unknown-model";
    std::string api_key_env = "FINSENT_API_KEY";  // name of the env var, never the key
    double temperature = 0.0;                     // fixed at 0 for determinism
    int max_output_tokens = 16;
    int max_concurrency = 4;
    RetryPolicy retry;
    int timeout_s = 30;
};

/// Transport result: HTTP status + body, or a transport-level error string.
struct ChatResponse {
    int status = 0;
    std::string body;
    std::string transport_error;
    bool ok() const { return transport_error.empty() && status >= 200 && status < 300; }
};

/// Seam for tests: anything that turns a request JSON into a response.
using ChatTransport = std::function<ChatResponse(const nlohmann::json& request)>;

inline nlohmann::json chat_request_json(const PromptBundle& bundle,
                                        const EndpointConfig& config) {
    return {{"model", config.model_name},
            {"messages", messages_json(render(bundle))},
            {"temperature", config.temperature},
            {"max_tokens", config.max_output_tokens}};
}

namespace detail {

inline std::string extract_content(const std::string& body, std::string& error) {
    try {
        auto j = nlohmann::json::parse(body);
        auto& choices = j.at("choices");
        if (choices.empty()) {
            error = "response has no choices";
            return {};
        }
        auto& msg = choices.at(0).at("message");
        return msg.at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        error = std::string("unparseable response body: ") + ex.what();
        return {};
    }
}

}  // namespace detail

/// Sends the rendered prompt through the transport with retry/backoff, keeps
/// the verbatim output, and parses the label. Never throws past the harness:
/// a failed request becomes a Prediction with the error recorded.
inline Prediction classify(const PromptBundle& bundle, const EndpointConfig& config,
                           const ChatTransport& transport) {
    Prediction p;
    p.example_id = bundle.query_id;
    const auto request = chat_request_json(bundle, config);
    const auto start = std::chrono::steady_clock::now();
    ChatResponse resp;
    int backoff = config.retry.backoff_ms;
    for (int attempt = 0; attempt < std::max(1, config.retry.max_attempts); ++attempt) {
        if (attempt > 0 && backoff > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        try {
            resp = transport(request);
        } catch (const std::exception& ex) {
            resp = {0, "", std::string("transport threw: ") + ex.what()};
        }
        if (resp.ok()) break;
    }
    p.latency_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    if (!resp.ok()) {
        p.error = !resp.transport_error.empty()
                      ? resp.transport_error
                      : "HTTP " + std::to_string(resp.status) + " after retries";
        return p;
    }
    std::string parse_err;
    p.raw_output = detail::extract_content(resp.body, parse_err);
    if (!parse_err.empty()) {
        p.error = parse_err;
        return p;
    }
    p.parsed_label = parse_label(p.raw_output, bundle.allowed_labels, bundle.language);
    return p;
}

/// Issues requests with at most config.max_concurrency in flight and returns
/// predictions ordered by example_id, so runs are reproducible regardless of
/// completion order.
inline std::vector<Prediction> classify_many(const std::vector<PromptBundle>& bundles,
                                             const EndpointConfig& config,
                                             const ChatTransport& transport) {
    std::vector<Prediction> out(bundles.size());
    const std::size_t workers =
        std::min<std::size_t>(std::max(1, config.max_concurrency), bundles.size());
    std::atomic<std::size_t> cursor{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = cursor.fetch_add(1);
            if (i >= bundles.size()) return;
            out[i] = classify(bundles[i], config, transport);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    std::sort(out.begin(), out.end(),
              [](const Prediction& a, const Prediction& b) { return a.example_id < b.example_id; });
    return out;
}

// ---------------------------------------------------------------------------
// Prediction log (JSONL, verbatim outputs)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Prediction& p) {
    nlohmann::json j{{"example_id", p.example_id},
                     {"raw_output", p.raw_output},
                     {"parsed_label",
                      p.parsed_label ? nlohmann::json(std::string(label_name(*p.parsed_label)))
                                     : nlohmann::json(nullptr)},
                     {"latency_ms", p.latency_ms}};
    if (!p.error.empty()) j["error"] = p.error;
    return j;
}

inline Prediction prediction_from_json(const nlohmann::json& j) {
    Prediction p;
    p.example_id = j.at("example_id").get<std::string>();
    p.raw_output = j.at("raw_output").get<std::string>();
    if (!j.at("parsed_label").is_null()) {
        auto l = label_from_name(j.at("parsed_label").get<std::string>());
        if (!l) throw DataError("unknown label in prediction log");
        p.parsed_label = *l;
    }
    p.latency_ms = j.at("latency_ms").get<double>();
    p.error = j.value("error", "");
    return p;
}

inline void write_prediction_log(const std::filesystem::path& path,
                                 const std::vector<Prediction>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& p : preds) out << to_json(p).dump() << "\n";
}

inline std::vector<Prediction> read_prediction_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<Prediction> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            preds.push_back(prediction_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(lineno, std::string("bad prediction record: ") + ex.what());
        }
    }
    return preds;
}

}  // namespace finsent
