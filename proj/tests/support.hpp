#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "retouche/adapter.hpp"
#include "retouche/backbone.hpp"
#include "retouche/data.hpp"
#include "retouche/error.hpp"
#include "retouche/guard.hpp"
#include "retouche/harness.hpp"
#include "retouche/kernels.hpp"
#include "retouche/mat.hpp"
#include "retouche/metrics.hpp"
#include "retouche/preprocess.hpp"
#include "retouche/rng.hpp"
#include "retouche/trainer.hpp"

namespace testing {

using namespace retouche;

inline Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Mat m(r, c);
    for (double& v : m.values()) v = n(rng);
    return m;
}

// Entries with |v| in [lo, hi] and random sign; keeps relu/log probes off their kinks.
inline Mat away_from_zero(std::size_t r, std::size_t c, Rng& rng, double lo = 0.2, double hi = 1.5) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::bernoulli_distribution sign(0.5);
    Mat m(r, c);
    for (double& v : m.values()) v = sign(rng) ? u(rng) : -u(rng);
    return m;
}

// Overwrites every trainable tensor with N(0, sd) draws (alpha in (0, 1)).
inline void scramble(AdapterParams& p, Rng& rng, double sd = 0.5) {
    std::normal_distribution<double> n(0.0, sd);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for_each_param(p, [&](Mat& m, ParamGroup g, ParamPart, const std::string&) {
        for (double& v : m.values()) v = g == ParamGroup::gate ? u(rng) : n(rng);
    });
}

// Holdout pipeline used by the behavioral checks: dataset -> (train, validation, test),
// preprocess on train, default-config fit, guard on validation, score on test.
struct Pipeline {
    Mat x_train, x_val, x_test;
    Targets y_train, y_val, y_test;
    std::unique_ptr<Backbone> backbone;
    FitResult fit;
    GuardDecision guard;
    double test_base = 0.0, test_adapter = 0.0, test_routed = 0.0;
};

inline Pipeline run_pipeline(const Dataset& ds, std::uint64_t seed, const TrialConfig& config = {},
                             const BackboneSpec& spec = {}, const TrainableMask& mask = {}) {
    Pipeline p;
    const Holdout h = holdout_split(ds, 0.2, seed);
    const Dataset dev = ds.subset(h.development), test = ds.subset(h.test);
    const SplitPlan plan = single_fold_plan(dev, 0.2, seed);
    const Dataset tr = dev.subset(plan.folds[0].train), va = dev.subset(plan.folds[0].validation);
    const FittedPreproc pp = fit_preproc(tr, PreprocSpec{config.preprocessor});
    p.x_train = transform(pp, tr);
    p.x_val = transform(pp, va);
    p.x_test = transform(pp, test);
    p.y_train = targets_of(tr);
    p.y_val = targets_of(va);
    p.y_test = targets_of(test);
    p.backbone = make_backbone(spec, p.x_train);
    TrainConfig tc = config.train;
    tc.seed = seed;
    const AdapterParams init = init_adapter(p.x_train.cols(), config.adapter, seed, &p.x_train);
    p.fit = fit(init, *p.backbone, {p.x_train, p.y_train, p.x_val, p.y_val}, tc, mask);
    p.guard = guard_decide(p.fit.best, *p.backbone, p.x_train, p.y_train, p.x_val, p.y_val);
    p.test_base = deployment_metric(base_predict(*p.backbone, p.x_train, p.y_train, p.x_test), p.y_test);
    p.test_adapter = deployment_metric(adapted_predict(p.fit.best, *p.backbone, p.x_train, p.y_train, p.x_test), p.y_test);
    p.test_routed = deployment_metric(
        routed_predict(p.guard, p.fit.best, *p.backbone, p.x_train, p.y_train, p.x_test), p.y_test);
    return p;
}

inline Dataset synth(Generator g, std::uint64_t seed, std::size_t n = 500, std::size_t d = 6,
                     TaskKind task = TaskKind::regression) {
    SynthSpec s;
    s.generator = g;
    s.seed = seed;
    s.n = n;
    s.d = d;
    s.task = task;
    return generate(s);
}

}  // namespace testing
