#include "retouche/guard.hpp"

#include <cmath>
#include <limits>

#include "retouche/error.hpp"
#include "retouche/trainer.hpp"

namespace retouche {

bool guard_rule(double val_adapter, double val_base, double tolerance) noexcept {
    return val_base > 0.0 && val_adapter <= (1.0 - tolerance) * val_base && val_adapter < val_base;
}

GuardDecision guard_decide(const AdapterParams& adapter, const Backbone& backbone, const Mat& cx, const Targets& cy,
                           const Mat& vx, const Targets& vy, double tolerance) {
    if (vx.rows() == 0 || vy.size() == 0) throw FitError("guard: empty validation set");
    if (!(tolerance >= 0.0 && tolerance < 1.0)) throw ConfigError("guard tolerance must be in [0, 1)");
    GuardDecision d;
    d.metric = metric_for(vy.task);
    d.tolerance = tolerance;
    d.val_base = deployment_metric(base_predict(backbone, cx, cy, vx), vy);
    try {
        d.val_adapter = deployment_metric(adapted_predict(adapter, backbone, cx, cy, vx), vy);
    } catch (const NumericalError&) {
        d.val_adapter = std::numeric_limits<double>::quiet_NaN();
    }
    d.use_adapter = guard_rule(d.val_adapter, d.val_base, tolerance);
    return d;
}

Mat base_predict(const Backbone& backbone, const Mat& cx, const Targets& cy, const Mat& q) {
    return backbone.predict(cx, cy, q);
}

Mat routed_predict(const GuardDecision& d, const AdapterParams& adapter, const Backbone& backbone, const Mat& cx,
                   const Targets& cy, const Mat& q) {
    return d.use_adapter ? adapted_predict(adapter, backbone, cx, cy, q) : base_predict(backbone, cx, cy, q);
}

}  // namespace retouche
