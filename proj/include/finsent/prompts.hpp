// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/corpus.hpp"
#include "finsent/rng.hpp"

namespace finsent {

/// Where few-shot exemplars come from. train_pool is the default: drawing
/// shots from the test split leaks evaluation data into the prompt. The
/// --paper-faithful switch selects test_pool for comparison against published
/// evaluations that sampled exemplars that way.
enum class ShotSource { train_pool, test_pool };

struct PromptBundle {
    std::string system_text;
    std::vector<std::pair<std::string, SentimentLabel>> shots;  // (text, label)
    std::string query_id;
    std::string query_text;
    std::vector<SentimentLabel> allowed_labels;
    std::string language = "en";
};

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;
};

namespace detail {

inline std::string label_list(const std::vector<SentimentLabel>& labels,
                              std::string_view language, bool with_mapping) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += language == "zh" ? "、" : ", ";
        out += label_word(labels[i], language);
        if (with_mapping && language == "zh") {
            out += "（";
            out += label_name(labels[i]);
            out += "）";
        }
    }
    return out;
}

// One canonical role-playing template per language, versioned with the repo.
inline std::string system_template(const PromptBundle& b) {
    if (b.language == "zh")
        return "你是一位金融情感分析专"
               "家。阅读给定的金融文本，"
               "只用一个词回答其情感倾"
               "向：" +
               label_list(b.allowed_labels, b.language, false) + "。";
    return "You are a financial sentiment analysis expert. Read the given financial "
           "text and answer with exactly one word: " +
           label_list(b.allowed_labels, b.language, false) + ".";
}

inline std::string shot_user_text(const std::string& text, std::string_view language) {
    if (language == "zh") return "文本：" + text + "\n情感：";
    return "Text: " + text + "\nSentiment:";
}

inline std::string final_user_text(const PromptBundle& b) {
    if (b.language == "zh")
        return "文本：" + b.query_text +
               "\n请只用以下词之一回答：" +
               label_list(b.allowed_labels, b.language, true) +
               "。\n情感：";
    return "Text: " + b.query_text + "\nAnswer with exactly one of: " +
           label_list(b.allowed_labels, b.language, false) + ".\nSentiment:";
}

}  // namespace detail

/// Draws k exemplars uniformly without replacement from the pool, never
/// including the query itself. k = 0 builds a zero-shot bundle. With
/// class_balanced set, exemplars rotate through the pool's classes instead of
/// being fully random.
inline PromptBundle build_prompt(const Example& query, const DomainCorpus& pool, int k,
                                 std::uint64_t seed, bool class_balanced = false) {
    if (k != 0 && k != 3 && k != 5) throw ConfigError("shots must be one of {0,3,5}");
    PromptBundle bundle;
    bundle.query_id = query.id;
    bundle.query_text = query.text;
    bundle.language = query.language;
    bundle.allowed_labels = pool.declared_labels.empty() ? pool.label_set : pool.declared_labels;
    bundle.system_text = detail::system_template(bundle);
    if (k == 0) return bundle;

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool.examples[i].id != query.id) candidates.push_back(i);
    if (candidates.size() < static_cast<std::size_t>(k))
        throw DataError("shot selection: pool has " + std::to_string(candidates.size()) +
                        " candidates, need " + std::to_string(k));

    SplitMix64 rng(derive_seed(seed, query.id));
    std::vector<std::size_t> chosen;
    if (!class_balanced) {
        shuffle(candidates, rng);
        chosen.assign(candidates.begin(), candidates.begin() + k);
    } else {
        std::vector<std::vector<std::size_t>> by_class;
        for (auto l : kAllLabels) {
            std::vector<std::size_t> members;
            for (auto i : candidates)
                if (pool.examples[i].label == l) members.push_back(i);
            if (!members.empty()) {
                shuffle(members, rng);
                by_class.push_back(std::move(members));
            }
        }
        std::size_t round = 0;
        while (chosen.size() < static_cast<std::size_t>(k)) {
            bool any = false;
            for (auto& members : by_class) {
                if (round < members.size() && chosen.size() < static_cast<std::size_t>(k)) {
                    chosen.push_back(members[round]);
                    any = true;
                }
            }
            if (!any) break;  // cannot happen: candidates >= k
            ++round;
        }
    }
    for (auto i : chosen)
        bundle.shots.emplace_back(pool.examples[i].text, pool.examples[i].label);
    return bundle;
}

/// Renders the bundle to a chat-message sequence: system persona, k
/// user/assistant exemplar turns, then the query with the instruction to
/// answer with exactly one allowed label. Always 2 + 2k messages. Pure
/// function of the bundle; output is bit-stable for caching.
inline std::vector<ChatMessage> render(const PromptBundle& bundle) {
    std::vector<ChatMessage> messages;
    messages.push_back({"system", bundle.system_text});
    for (const auto& [text, label] : bundle.shots) {
        messages.push_back({"user", detail::shot_user_text(text, bundle.language)});
        messages.push_back({"assistant", std::string(label_word(label, bundle.language))});
    }
    messages.push_back({"user", detail::final_user_text(bundle)});
    return messages;
}

/// The {role, content} array used by chat-completion wire APIs.
inline nlohmann::json messages_json(const std::vector<ChatMessage>& messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
}

}  // namespace finsent
