// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "finsent/inference.hpp"
#include "finsent/prompts.hpp"
#include "support.hpp"

using namespace finsent;

namespace {

DomainCorpus en_pool(std::size_t n) {
    std::vector<Example> examples;
    for (std::size_t i = 0; i < n; ++i) {
        Example e;
        e.id = detail::make_example_id("fpb", i);
        e.text = "sample text " + std::to_string(i);
        e.label = kAllLabels[i % 3];
        e.domain = "fpb";
        examples.push_back(std::move(e));
    }
    return make_corpus("fpb", std::move(examples));
}

DomainCorpus zh_pool(std::size_t n) {
    std::vector<Example> examples;
    for (std::size_t i = 0; i < n; ++i) {
        Example e;
        e.id = detail::make_example_id("csd", i);
        e.text = "样本文本" + std::to_string(i);
        e.label = i % 2 ? SentimentLabel::negative : SentimentLabel::positive;
        e.domain = "csd";
        e.language = "zh";
        examples.push_back(std::move(e));
    }
    return make_corpus("csd", std::move(examples));
}

}  // namespace

TEST(BuildPrompt, ZeroShotHasNoExemplars) {
    auto pool = en_pool(10);
    auto bundle = build_prompt(pool.examples[0], pool, 0, 7);
    EXPECT_TRUE(bundle.shots.empty());
    auto messages = render(bundle);
    ASSERT_EQ(messages.size(), 2u);
    EXPECT_EQ(messages[0].role, "system");
    EXPECT_EQ(messages[1].role, "user");
}

TEST(BuildPrompt, ThreeShotDistinctAndExcludesQuery) {
    auto pool = en_pool(10);
    const auto& query = pool.examples[4];
    auto bundle = build_prompt(query, pool, 3, 7);
    ASSERT_EQ(bundle.shots.size(), 3u);
    std::set<std::string> texts;
    for (auto& [text, label] : bundle.shots) {
        EXPECT_NE(text, query.text);
        texts.insert(text);
    }
    EXPECT_EQ(texts.size(), 3u);
}

TEST(BuildPrompt, DeterministicUnderSeed) {
    auto pool = en_pool(30);
    const auto& query = pool.examples[2];
    auto a = build_prompt(query, pool, 5, 123);
    auto b = build_prompt(query, pool, 5, 123);
    ASSERT_EQ(a.shots.size(), b.shots.size());
    for (std::size_t i = 0; i < a.shots.size(); ++i)
        EXPECT_EQ(a.shots[i].first, b.shots[i].first);
    auto c = build_prompt(query, pool, 5, 124);
    bool same = true;
    for (std::size_t i = 0; i < a.shots.size(); ++i)
        same = same && a.shots[i].first == c.shots[i].first;
    EXPECT_FALSE(same);
}

TEST(BuildPrompt, PoolTooSmallFails) {
    auto pool = en_pool(5);
    // query sits in the pool: only 4 candidates remain
    EXPECT_THROW(build_prompt(pool.examples[0], pool, 5, 7), DataError);
}

TEST(BuildPrompt, RejectsUnsupportedShotCounts) {
    auto pool = en_pool(10);
    EXPECT_THROW(build_prompt(pool.examples[0], pool, 2, 7), ConfigError);
    EXPECT_THROW(build_prompt(pool.examples[0], pool, -1, 7), ConfigError);
}

TEST(BuildPrompt, ClassBalancedCoversClasses) {
    auto pool = en_pool(30);
    auto bundle = build_prompt(pool.examples[0], pool, 3, 7, /*class_balanced=*/true);
    std::set<SentimentLabel> classes;
    for (auto& [text, label] : bundle.shots) classes.insert(label);
    EXPECT_EQ(classes.size(), 3u);
}

TEST(Render, MessageCountIsTwoPlusTwoK) {
    auto pool = en_pool(20);
    for (int k : {0, 3, 5}) {
        auto bundle = build_prompt(pool.examples[1], pool, k, 9);
        EXPECT_EQ(render(bundle).size(), 2u + 2u * static_cast<std::size_t>(k));
    }
}

TEST(Render, ExemplarTurnsAlternateRolesWithTrueLabels) {
    auto pool = en_pool(20);
    auto bundle = build_prompt(pool.examples[1], pool, 3, 9);
    auto messages = render(bundle);
    for (std::size_t i = 0; i < bundle.shots.size(); ++i) {
        const auto& user = messages[1 + 2 * i];
        const auto& assistant = messages[2 + 2 * i];
        EXPECT_EQ(user.role, "user");
        EXPECT_EQ(assistant.role, "assistant");
        EXPECT_NE(user.content.find(bundle.shots[i].first), std::string::npos);
        EXPECT_EQ(assistant.content, label_word(bundle.shots[i].second, "en"));
    }
    EXPECT_EQ(messages.back().role, "user");
    EXPECT_NE(messages.back().content.find(bundle.query_text), std::string::npos);
}

TEST(Render, PureFunctionOfBundle) {
    auto pool = en_pool(12);
    auto bundle = build_prompt(pool.examples[3], pool, 3, 5);
    auto a = messages_json(render(bundle)).dump();
    auto b = messages_json(render(bundle)).dump();
    EXPECT_EQ(a, b);
}

TEST(Render, ChineseBundleListsLabelMapping) {
    auto pool = zh_pool(10);
    auto bundle = build_prompt(pool.examples[0], pool, 0, 7);
    ASSERT_EQ(bundle.allowed_labels.size(), 2u);  // CSD never carries neutral
    auto messages = render(bundle);
    const auto& final_turn = messages.back().content;
    EXPECT_NE(final_turn.find("正面"), std::string::npos);  // 正面
    EXPECT_NE(final_turn.find("负面"), std::string::npos);  // 负面
    EXPECT_NE(final_turn.find("positive"), std::string::npos);
    EXPECT_NE(final_turn.find("negative"), std::string::npos);
    EXPECT_EQ(final_turn.find("中性"), std::string::npos);  // no neutral word
}

TEST(Render, LabelWordsRoundTripThroughParser) {
    // parse_label(render of label word) = label, for both languages
    std::vector<SentimentLabel> all(std::begin(kAllLabels), std::end(kAllLabels));
    for (auto lang : {"en", "zh"})
        for (auto l : kAllLabels)
            EXPECT_EQ(parse_label(std::string(label_word(l, lang)), all, lang), l) << lang;
}

TEST(Render, MessagesJsonShape) {
    auto pool = en_pool(10);
    auto bundle = build_prompt(pool.examples[0], pool, 0, 7);
    auto arr = messages_json(render(bundle));
    ASSERT_TRUE(arr.is_array());
    ASSERT_EQ(arr.size(), 2u);
    EXPECT_EQ(arr[0].at("role"), "system");
    EXPECT_TRUE(arr[0].contains("content"));
}
