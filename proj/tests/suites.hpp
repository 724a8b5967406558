#pragma once

#include <cmath>
#include <cstdint>

#include "properties.hpp"

namespace testing {

struct GuardSuite {
    std::size_t trials = 0, fallbacks = 0, adapts = 0;
    std::size_t fallback_mismatches = 0;  // fallback predictions that differ from base in any bit
    std::size_t backbone_changes = 0;
};

// Random adapters (scrambled, random alpha) on random synthetic tasks, both
// backbones, random tolerance. Every fallback must reproduce the base exactly.
inline GuardSuite guard_suite(std::size_t trials, std::uint64_t seed) {
    GuardSuite out;
    for (std::size_t i = 0; i < trials; ++i) {
        Rng rng(mix_seed(seed, {i}));
        const std::size_t d = 2 + rng() % 5;
        const Generator gen = static_cast<Generator>(rng() % 3);
        const TaskKind task = rng() % 2 ? TaskKind::binary : TaskKind::regression;
        const Dataset ds = synth(gen, rng(), 80 + rng() % 60, d, task);
        const SplitPlan plan = single_fold_plan(ds, 0.25, i);
        const Dataset tr = ds.subset(plan.folds[0].train), va = ds.subset(plan.folds[0].validation);
        const FittedPreproc pp = fit_preproc(tr, {});
        const Mat xt = transform(pp, tr), xv = transform(pp, va);
        const Targets yt = targets_of(tr), yv = targets_of(va);

        BackboneSpec spec;
        spec.kind = rng() % 3 == 0 ? BackboneKind::toy_icl : BackboneKind::kernel;
        spec.toy.seed = i;
        const auto bb = make_backbone(spec, xt);
        const auto weights = bb->parameters();

        const AdapterConfig ac = drawn_config(rng(), rng() % 2 ? BlockType::cross : BlockType::mlp);
        AdapterParams p = init_adapter(d, ac, i);
        scramble(p, rng, std::uniform_real_distribution<double>(0.0, 0.6)(rng));
        const double tol = std::uniform_real_distribution<double>(0.0, 0.05)(rng);

        const GuardDecision dec = guard_decide(p, *bb, xt, yt, xv, yv, tol);
        ++out.trials;
        if (dec.use_adapter) {
            ++out.adapts;
        } else {
            ++out.fallbacks;
            const Mat routed = routed_predict(dec, p, *bb, xt, yt, xv);
            if (!(routed == bb->predict(xt, yt, xv))) ++out.fallback_mismatches;
        }
        if (!(bb->parameters() == weights)) ++out.backbone_changes;
    }
    return out;
}

// The documented rule evaluated directly: adapt iff base > 0, adapter <= (1 - tau) * base,
// and the scores are not tied.
inline bool rule_oracle(double va, double vb, double tau) {
    if (!(vb > 0.0)) return false;
    if (std::isnan(va)) return false;
    const double bar = (1.0 - tau) * vb;
    if (va == vb) return false;
    return va < bar || va == bar;
}

// Count of disagreements between guard_rule and the oracle on random triples,
// a quarter of them placed exactly on the threshold.
inline std::size_t rule_mismatches(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0), t(0.0, 0.1);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double vb = i % 50 == 0 ? 0.0 : u(rng);
        const double tau = i % 10 == 3 ? 0.0 : t(rng);
        double va = u(rng);
        if (i % 4 == 1) va = (1.0 - tau) * vb;
        if (i % 20 == 3) va = vb;
        if (i % 4 == 2) va = vb * (1.0 - tau * std::uniform_real_distribution<double>(0.5, 1.5)(rng));
        if (guard_rule(va, vb, tau) != rule_oracle(va, vb, tau)) ++bad;
    }
    return bad;
}

}  // namespace testing

namespace testing {

inline FoldData fold_data(const Dataset& ds, std::uint64_t seed) {
    const Holdout h = holdout_split(ds, 0.2, seed);
    const Dataset dev = ds.subset(h.development);
    const SplitPlan plan = single_fold_plan(dev, 0.2, seed);
    return {dev.subset(plan.folds[0].train), dev.subset(plan.folds[0].validation), ds.subset(h.test)};
}

inline SeedLineage lineage(std::uint64_t seed) {
    return {seed, mix_seed(seed, {0}), mix_seed(seed, {0, 1}), mix_seed(seed, {0, 2}), mix_seed(seed, {3})};
}

struct AblationCheck {
    bool random_frozen = true;    // every adapter tensor equals its initialization
    bool no_guard_forced = true;  // use_adapter and forced on every record
    bool alpha_held = true;       // alpha == 1 after every epoch and in the snapshot
};

inline AblationCheck ablation_contracts(std::uint64_t seed, std::size_t epochs = 40) {
    AblationCheck c;
    const Dataset ds = synth(Generator::planted_interaction, seed, 250, 4);
    const FoldData fd = fold_data(ds, seed);
    const SeedLineage sl = lineage(seed);
    TrialConfig base;
    base.train.epochs = epochs;

    {
        const TrialConfig cfg = apply_ablation(base, Ablation::random_adapter);
        const TrialOutput out = run_trial(fd, {}, cfg, sl);
        const Mat xtr = transform(out.preproc, fd.train);
        AdapterParams init = init_adapter(xtr.cols(), cfg.adapter, sl.init, &xtr);
        AdapterParams fitted = out.adapter;
        std::vector<Mat> a, b;
        for_each_param(init, [&](Mat& m, ParamGroup, ParamPart, const std::string&) { a.push_back(m); });
        for_each_param(fitted, [&](Mat& m, ParamGroup, ParamPart, const std::string&) { b.push_back(m); });
        c.random_frozen = a == b && !out.fit.trace.empty();
    }
    {
        const TrialOutput out = run_trial(fd, {}, apply_ablation(base, Ablation::no_guard), sl, 0.5);
        c.no_guard_forced = out.record.guard.use_adapter && out.record.guard.forced;
    }
    {
        const TrialOutput out = run_trial(fd, {}, apply_ablation(base, Ablation::alpha_fixed_1), sl);
        bool held = !out.fit.trace.empty();
        for (const EpochRecord& e : out.fit.trace) held = held && e.alpha_mean_abs == 1.0;
        for (double a : out.adapter.alpha.values()) held = held && a == 1.0;
        c.alpha_held = held;
    }
    return c;
}

}  // namespace testing
