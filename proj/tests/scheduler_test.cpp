// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <vector>

#include "finsent/rng.hpp"
#include "finsent/scheduler.hpp"

using namespace finsent;

TEST(PhaseOf, BoundariesAtTwentyAndEightyPercent) {
    auto plan = make_plan(1000);
    EXPECT_EQ(phase_of(0, plan), Phase::Init);
    EXPECT_EQ(phase_of(199, plan), Phase::Init);
    EXPECT_EQ(phase_of(200, plan), Phase::Balanced);
    EXPECT_EQ(phase_of(799, plan), Phase::Balanced);
    EXPECT_EQ(phase_of(800, plan), Phase::Final);
    EXPECT_EQ(phase_of(999, plan), Phase::Final);
}

TEST(PhaseOf, LastStepOfTinyPlanIsFinal) {
    auto plan = make_plan(10);
    EXPECT_EQ(phase_of(9, plan), Phase::Final);
}

TEST(PhaseOf, OutOfRangeIsContractViolation) {
    auto plan = make_plan(10);
    EXPECT_THROW(phase_of(-1, plan), ContractViolation);
    EXPECT_THROW(phase_of(10, plan), ContractViolation);
}

TEST(PhaseOf, PartitionsWholeRange) {
    for (std::int64_t total : {10, 100, 1000, 12345}) {
        auto plan = make_plan(total);
        std::int64_t init = 0, balanced = 0, final_steps = 0;
        for (std::int64_t s = 0; s < total; ++s) {
            switch (phase_of(s, plan)) {
                case Phase::Init: ++init; break;
                case Phase::Balanced: ++balanced; break;
                case Phase::Final: ++final_steps; break;
            }
        }
        EXPECT_EQ(init + balanced + final_steps, total);
        EXPECT_LT(std::abs(static_cast<double>(init) - 0.2 * static_cast<double>(total)), 1.0);
        EXPECT_LT(std::abs(static_cast<double>(balanced) - 0.6 * static_cast<double>(total)), 2.0);
        EXPECT_LT(std::abs(static_cast<double>(final_steps) - 0.2 * static_cast<double>(total)),
                  1.0);
    }
}

TEST(LrAt, WarmupStartsAtZero) {
    auto plan = make_plan(1000);
    EXPECT_DOUBLE_EQ(lr_at(0, plan), 0.0);
}

TEST(LrAt, PeaksAtWarmupEnd) {
    auto plan = make_plan(1000);
    EXPECT_DOUBLE_EQ(lr_at(plan.warmup_steps, plan), plan.lr_max);
}

TEST(LrAt, CosineMidpointIsMeanOfExtremes) {
    auto plan = make_plan(1000);
    plan.lr_min = 4e-5;
    std::int64_t mid = plan.warmup_steps + (plan.final_boundary() - plan.warmup_steps) / 2;
    EXPECT_NEAR(lr_at(mid, plan), (plan.lr_max + plan.lr_min) / 2, 1e-15);
}

TEST(LrAt, ApproachesFloorBeforeFinalization) {
    // brute-force tabulation of a large schedule: the minimum over the cosine
    // stretch sits at F-1 and lands on lr_min
    auto plan = make_plan(100000);
    double lowest = plan.lr_max;
    for (std::int64_t s = plan.warmup_steps; s < plan.final_boundary(); ++s)
        lowest = std::min(lowest, lr_at(s, plan));
    EXPECT_DOUBLE_EQ(lowest, lr_at(plan.final_boundary() - 1, plan));
    EXPECT_NEAR(lowest, plan.lr_min, 1e-9);
}

TEST(LrAt, HeldAtFloorThroughFinalization) {
    auto plan = make_plan(1000);
    plan.lr_min = 1e-5;
    for (std::int64_t s = plan.final_boundary(); s < plan.total_steps; ++s)
        EXPECT_DOUBLE_EQ(lr_at(s, plan), plan.lr_min);
}

TEST(LrAt, ZeroWarmupDegeneratesToPeak) {
    auto plan = make_plan(1000);
    plan.warmup_steps = 0;
    EXPECT_DOUBLE_EQ(lr_at(0, plan), plan.lr_max);
}

TEST(LrAt, ContinuousAtWarmupAndNonIncreasingToBoundary) {
    for (std::int64_t total : {100, 1000, 12345}) {
        auto plan = make_plan(total);
        // both branch formulas give lr_max at W
        double warmup_limit =
            plan.lr_max * static_cast<double>(plan.warmup_steps) /
            static_cast<double>(plan.warmup_steps);
        EXPECT_DOUBLE_EQ(warmup_limit, lr_at(plan.warmup_steps, plan));
        double prev = lr_at(plan.warmup_steps, plan);
        double peak = 0.0;
        for (std::int64_t s = 0; s < total; ++s) peak = std::max(peak, lr_at(s, plan));
        EXPECT_DOUBLE_EQ(peak, plan.lr_max);
        for (std::int64_t s = plan.warmup_steps + 1; s < plan.final_boundary(); ++s) {
            double cur = lr_at(s, plan);
            EXPECT_LE(cur, prev + 1e-18) << "s=" << s << " T=" << total;
            prev = cur;
        }
    }
}

TEST(LrAt, ScalesAreIdentityOutsideFinalization) {
    auto plan = make_plan(100);
    EXPECT_EQ(scales_at(0, plan), (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(scales_at(50, plan), (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(scales_at(80, plan), plan.layer_scales);
}

TEST(PlanValidation, RejectsBadFields) {
    auto plan = make_plan(100);
    plan.warmup_steps = 21;  // beyond the init boundary
    EXPECT_THROW(validate(plan), ConfigError);
    plan = make_plan(100);
    plan.lr_min = plan.lr_max;
    EXPECT_THROW(validate(plan), ConfigError);
    plan = make_plan(100);
    plan.layer_scales = {1.5};
    EXPECT_THROW(validate(plan), ConfigError);
}

TEST(PlanJson, RoundTrip) {
    auto plan = make_plan(12345);
    plan.lr_min = 3e-6;
    plan.layer_scales = {0.9, 0.4};
    auto back = plan_from_json(to_json(plan));
    EXPECT_EQ(back.total_steps, plan.total_steps);
    EXPECT_EQ(back.warmup_steps, plan.warmup_steps);
    EXPECT_DOUBLE_EQ(back.lr_max, plan.lr_max);
    EXPECT_DOUBLE_EQ(back.lr_min, plan.lr_min);
    EXPECT_EQ(back.layer_scales, plan.layer_scales);
}

// --- early stopping ----------------------------------------------------------

TEST(EarlyStop, FreezesAfterPlateau) {
    EarlyStopState st;
    st.patience = 3;
    st.min_delta = 1e-3;
    const double scores[] = {0.5, 0.6, 0.6, 0.6, 0.6};
    int frozen_at = -1;
    for (int i = 0; i < 5; ++i) {
        st = early_stop_update(st, scores[i]).state;
        if (st.frozen && frozen_at < 0) frozen_at = i + 1;
    }
    EXPECT_EQ(frozen_at, 5);  // hand trace: improve, improve, miss, miss, miss
}

TEST(EarlyStop, StrictlyIncreasingNeverFreezes) {
    EarlyStopState st;
    for (int i = 1; i <= 50; ++i) {
        st = early_stop_update(st, static_cast<double>(i) / 100.0).state;
        EXPECT_FALSE(st.frozen);
    }
}

TEST(EarlyStop, ZeroPatienceFreezesOnFirstMiss) {
    EarlyStopState st;
    st.patience = 0;
    st = early_stop_update(st, 0.5).state;  // improvement: still live
    EXPECT_FALSE(st.frozen);
    st = early_stop_update(st, 0.5).state;  // first non-improving eval
    EXPECT_TRUE(st.frozen);
}

TEST(EarlyStop, FrozenUpdateIsIgnoredNoOp) {
    EarlyStopState st;
    st.frozen = true;
    st.best_score = 0.4;
    auto upd = early_stop_update(st, 0.99);
    EXPECT_TRUE(upd.ignored);
    EXPECT_TRUE(upd.state.frozen);
    EXPECT_DOUBLE_EQ(upd.state.best_score, 0.4);
}

TEST(EarlyStop, FrozenIsAbsorbing) {
    EarlyStopState st;
    st.patience = 1;
    SplitMix64 rng(5);
    bool was_frozen = false;
    for (int i = 0; i < 200; ++i) {
        st = early_stop_update(st, rng.next_double()).state;
        if (was_frozen) EXPECT_TRUE(st.frozen);
        was_frozen = st.frozen;
    }
    EXPECT_TRUE(st.frozen);
}

TEST(EarlyStop, RejectsOutOfRangeScore) {
    EarlyStopState st;
    EXPECT_THROW(early_stop_update(st, 1.5), ContractViolation);
    EXPECT_THROW(early_stop_update(st, -0.1), ContractViolation);
}
