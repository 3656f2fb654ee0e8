// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace finsent {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
struct ParseError : Error {
    ParseError(std::size_t line_, const std::string& what_)
        : Error("line " + std::to_string(line_) + ": " + what_), line(line_) {}
    std::size_t line;
};

/// Invalid configuration value (bad proportion, empty domain list, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// A documented precondition was violated by the caller.
struct ContractViolation : Error {
    using Error::Error;
};

/// Data-dependent failure: empty corpus, stratification impossible,
/// unresolvable manifest id, aggregation over mismatched runs.
struct DataError : Error {
    using Error::Error;
};

/// Non-finite values encountered while training.
struct TrainingError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class SentimentLabel { positive, negative, neutral };

/// Canonical label order used everywhere a deterministic ordering is needed.
inline constexpr SentimentLabel kAllLabels[] = {
    SentimentLabel::positive, SentimentLabel::negative, SentimentLabel::neutral};

inline std::string_view label_name(SentimentLabel l) {
    switch (l) {
        case SentimentLabel::positive: return "positive";
        case SentimentLabel::negative: return "negative";
        case SentimentLabel::neutral: return "neutral";
    }
    return "?";
}

/// Label word as rendered in prompts for the given language tag.
inline std::string_view label_word(SentimentLabel l, std::string_view language) {
    if (language == "zh") {
        switch (l) {
            case SentimentLabel::positive: return "正面";  // 正面
            case SentimentLabel::negative: return "负面";  // 负面
            case SentimentLabel::neutral: return "中性";   // 中性
        }
    }
    return label_name(l);
}

inline std::optional<SentimentLabel> label_from_name(std::string_view s) {
    for (auto l : kAllLabels)
        if (s == label_name(l)) return l;
    return std::nullopt;
}

inline bool contains_label(const std::vector<SentimentLabel>& set, SentimentLabel l) {
    return std::find(set.begin(), set.end(), l) != set.end();
}

// ---------------------------------------------------------------------------
// Examples
// ---------------------------------------------------------------------------

using DomainId = std::string;

/// One labeled text unit. `id` is unique within its domain; ingestion
/// prefixes ids with the domain name so they are unique globally too.
struct Example {
    std::string id;
    std::string text;
    SentimentLabel label = SentimentLabel::neutral;
    DomainId domain;
    std::string language = "en";  // "en" | "zh"
};

// ---------------------------------------------------------------------------
// Small text helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

/// ASCII-only lowercase; multi-byte UTF-8 sequences pass through untouched.
inline std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

/// Decodes UTF-8 into codepoint-sized substrings. Invalid bytes are kept
/// as single-byte units rather than rejected; corpora are trusted input.
inline std::vector<std::string> utf8_codepoints(std::string_view s) {
    std::vector<std::string> cps;
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        size_t len = 1;
        if ((c & 0x80u) == 0x00u) len = 1;
        else if ((c & 0xE0u) == 0xC0u) len = 2;
        else if ((c & 0xF0u) == 0xE0u) len = 3;
        else if ((c & 0xF8u) == 0xF0u) len = 4;
        if (i + len > s.size()) len = 1;
        cps.emplace_back(s.substr(i, len));
        i += len;
    }
    return cps;
}

}  // namespace finsent
