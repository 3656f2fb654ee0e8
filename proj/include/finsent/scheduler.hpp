// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/core.hpp"

namespace finsent {

enum class Phase { Init, Balanced, Final };

inline std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::Init: return "init";
        case Phase::Balanced: return "balanced";
        case Phase::Final: return "final";
    }
    return "?";
}

inline Phase phase_from_name(std::string_view s) {
    if (s == "init") return Phase::Init;
    if (s == "balanced") return Phase::Balanced;
    if (s == "final") return Phase::Final;
    throw ConfigError("unknown phase " + std::string(s));
}

/// Three-phase training schedule: initialization (first 20% of steps, warm-up,
/// small domains prioritized), balanced (middle 60%, cosine decay), and
/// finalization (last 20%, per-group learning-rate scales, early stopping).
/// The 20/60/20 split is fixed; boundaries land on floor(0.2 T) and
/// floor(0.8 T).
struct PhasePlan {
    std::int64_t total_steps = 0;
    std::int64_t warmup_steps = 0;  // <= init_boundary()
    double lr_max = 2e-4;
    double lr_min = 0.0;
    // Multiplicative factors applied during finalization, one per parameter
    // group. The reference trainer has two groups: feature weights and bias.
    std::vector<double> layer_scales = {1.0, 0.5};

    std::int64_t init_boundary() const { return total_steps / 5; }
    std::int64_t final_boundary() const { return total_steps * 4 / 5; }
};

inline void validate(const PhasePlan& plan) {
    if (plan.total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (plan.warmup_steps < 0 || plan.warmup_steps > plan.init_boundary())
        throw ConfigError("warmup_steps must lie within the initialization phase");
    if (!(plan.lr_max > 0)) throw ConfigError("lr_max must be positive");
    if (plan.lr_min < 0 || plan.lr_min >= plan.lr_max)
        throw ConfigError("lr_min must satisfy 0 <= lr_min < lr_max");
    if (plan.layer_scales.empty()) throw ConfigError("layer_scales must not be empty");
    for (double s : plan.layer_scales)
        if (!(s > 0.0 && s <= 1.0)) throw ConfigError("layer scales must be in (0,1]");
}

/// Plan with the documented defaults: warm-up over the first half of the
/// initialization phase, lr_max 2e-4 decaying to 0.
inline PhasePlan make_plan(std::int64_t total_steps) {
    PhasePlan plan;
    plan.total_steps = total_steps;
    plan.warmup_steps = total_steps / 10;
    validate(plan);
    return plan;
}

inline Phase phase_of(std::int64_t step, const PhasePlan& plan) {
    if (step < 0 || step >= plan.total_steps)
        throw ContractViolation("step " + std::to_string(step) + " outside [0," +
                                std::to_string(plan.total_steps) + ")");
    if (step < plan.init_boundary()) return Phase::Init;
    if (step < plan.final_boundary()) return Phase::Balanced;
    return Phase::Final;
}

/// Learning rate at a step: linear warm-up from 0 to lr_max over W steps,
/// half-cosine decay from lr_max to lr_min over [W, F), then the value at F
/// (= lr_min) held through finalization. Finalization parameter-group scales
/// are recorded separately in manifests, never folded into this base value.
/// W = 0 degenerates to lr_max at step 0.
inline double lr_at(std::int64_t step, const PhasePlan& plan) {
    if (step < 0 || step >= plan.total_steps)
        throw ContractViolation("step " + std::to_string(step) + " outside [0," +
                                std::to_string(plan.total_steps) + ")");
    const std::int64_t warmup = plan.warmup_steps;
    const std::int64_t final_b = plan.final_boundary();
    if (step < warmup)
        return plan.lr_max * static_cast<double>(step) / static_cast<double>(warmup);
    if (step < final_b) {
        double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(final_b - warmup);
        return plan.lr_min + 0.5 * (plan.lr_max - plan.lr_min) *
                                 (1.0 + std::cos(std::numbers::pi * progress));
    }
    return plan.lr_min;
}

/// Scales applied to the parameter groups at a step: identity outside the
/// finalization phase, the plan's layer_scales inside it.
inline std::vector<double> scales_at(std::int64_t step, const PhasePlan& plan) {
    if (phase_of(step, plan) == Phase::Final) return plan.layer_scales;
    return std::vector<double>(plan.layer_scales.size(), 1.0);
}

// ---------------------------------------------------------------------------
// Early stopping, tracked per domain
// ---------------------------------------------------------------------------

inline constexpr int kDefaultPatience = 3;
inline constexpr double kDefaultMinDelta = 1e-3;

struct EarlyStopState {
    double best_score = -std::numeric_limits<double>::infinity();
    int evals_since_improvement = 0;
    int patience = kDefaultPatience;
    double min_delta = kDefaultMinDelta;
    bool frozen = false;
};

struct EarlyStopUpdate {
    EarlyStopState state;
    bool improved = false;
    bool ignored = false;  // update arrived for an already-frozen domain
};

/// Improvement means new_score > best + min_delta; anything else bumps the
/// counter, and the domain freezes once the counter reaches patience. A
/// frozen domain never unfreezes; updating one is a no-op flagged `ignored`
/// so the caller can warn.
inline EarlyStopUpdate early_stop_update(const EarlyStopState& state, double new_score) {
    if (!(new_score >= 0.0 && new_score <= 1.0))
        throw ContractViolation("score must be in [0,1]");
    if (state.frozen) return {state, false, true};
    EarlyStopUpdate out{state, false, false};
    if (new_score > state.best_score + state.min_delta) {
        out.improved = true;
        out.state.best_score = new_score;
        out.state.evals_since_improvement = 0;
    } else {
        out.state.evals_since_improvement = state.evals_since_improvement + 1;
        if (out.state.evals_since_improvement >= state.patience) out.state.frozen = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization (embedded verbatim in manifest headers)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PhasePlan& plan) {
    return {{"total_steps", plan.total_steps},
            {"init_fraction", 0.2},
            {"balanced_fraction", 0.6},
            {"final_fraction", 0.2},
            {"warmup_steps", plan.warmup_steps},
            {"lr_max", plan.lr_max},
            {"lr_min", plan.lr_min},
            {"layer_scales", plan.layer_scales}};
}

inline PhasePlan plan_from_json(const nlohmann::json& j) {
    PhasePlan plan;
    plan.total_steps = j.at("total_steps").get<std::int64_t>();
    plan.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
    plan.lr_max = j.at("lr_max").get<double>();
    plan.lr_min = j.at("lr_min").get<double>();
    plan.layer_scales = j.at("layer_scales").get<std::vector<double>>();
    validate(plan);
    return plan;
}

}  // namespace finsent
