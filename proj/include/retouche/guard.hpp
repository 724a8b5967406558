#pragma once

#include "retouche/adapter.hpp"
#include "retouche/backbone.hpp"
#include "retouche/mat.hpp"
#include "retouche/metrics.hpp"

namespace retouche {

inline constexpr double default_guard_tolerance = 0.005;

struct GuardDecision {
    MetricKind metric = MetricKind::mse;
    double val_adapter = 0.0;
    double val_base = 0.0;
    double tolerance = default_guard_tolerance;
    bool use_adapter = false;
    bool forced = false;  // routing imposed (guard disabled), scores still recorded

    friend bool operator==(const GuardDecision&, const GuardDecision&) = default;
};

// Relative rule: adapt only when val_base > 0 and val_adapter <= (1 - tolerance) * val_base;
// an exact tie never adapts, even at tolerance 0.
bool guard_rule(double val_adapter, double val_base, double tolerance) noexcept;

// Scores both paths on the validation slice; `context` is the fit's training rows.
GuardDecision guard_decide(const AdapterParams& adapter, const Backbone& backbone, const Mat& context_x,
                           const Targets& context_y, const Mat& val_x, const Targets& val_y,
                           double tolerance = default_guard_tolerance);

Mat base_predict(const Backbone& backbone, const Mat& context_x, const Targets& context_y, const Mat& queries);

Mat routed_predict(const GuardDecision& decision, const AdapterParams& adapter, const Backbone& backbone,
                   const Mat& context_x, const Targets& context_y, const Mat& queries);

}  // namespace retouche
