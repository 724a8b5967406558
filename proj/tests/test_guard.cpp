#include "doctest.h"

#include <limits>

#include "suites.hpp"

using namespace testing;

TEST_CASE("guard rule examples") {
    CHECK(guard_rule(0.99, 1.0, 0.005));
    CHECK_FALSE(guard_rule(0.996, 1.0, 0.005));
    CHECK_FALSE(guard_rule(0.0, 0.0, 0.005));
    CHECK_FALSE(guard_rule(1.0, 1.0, 0.0));
    CHECK(guard_rule(0.995, 1.0, 0.0) );
    CHECK_FALSE(guard_rule(std::numeric_limits<double>::quiet_NaN(), 1.0, 0.005));
    CHECK_FALSE(guard_rule(0.5, std::numeric_limits<double>::quiet_NaN(), 0.005));
}

TEST_CASE("guard rule agrees with the direct oracle") { CHECK(rule_mismatches(2000, 3) == 0); }

TEST_CASE("raising the tolerance never turns a fallback into adaptation") {
    Rng rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double va = u(rng), vb = u(rng), t1 = 0.1 * u(rng), t2 = t1 + 0.1 * u(rng);
        if (!guard_rule(va, vb, t1)) CHECK_FALSE(guard_rule(va, vb, t2));
    }
}

TEST_CASE("fallback routing is bit-identical to the backbone alone") {
    const GuardSuite s = guard_suite(40, 21);
    CHECK(s.trials == 40);
    CHECK(s.fallbacks > 0);
    CHECK(s.fallback_mismatches == 0);
    CHECK(s.backbone_changes == 0);
}

TEST_CASE("use_adapter with alpha = 0 also equals the backbone alone") {
    const Dataset ds = synth(Generator::planted_interaction, 1, 100, 3);
    const Mat x = transform(fit_preproc(ds, {}), ds);
    const Targets y = targets_of(ds);
    AdapterConfig c;
    c.alpha_init = 0.0;
    const AdapterParams p = init_adapter(3, c, 0);
    const KernelBackbone bb(1.0);
    GuardDecision d;
    d.use_adapter = true;
    CHECK(routed_predict(d, p, bb, x, y, x) == bb.predict(x, y, x));
}

TEST_CASE("guard decision scores the deployment metric") {
    const Dataset ds = synth(Generator::linear_aligned, 4, 150, 3, TaskKind::binary);
    const SplitPlan plan = single_fold_plan(ds, 0.2, 0);
    const Dataset tr = ds.subset(plan.folds[0].train), va = ds.subset(plan.folds[0].validation);
    const FittedPreproc pp = fit_preproc(tr, {});
    const Mat xt = transform(pp, tr), xv = transform(pp, va);
    const KernelBackbone bb(1.0);
    const AdapterParams p = init_adapter(3, {}, 0);
    const GuardDecision d = guard_decide(p, bb, xt, targets_of(tr), xv, targets_of(va));
    CHECK(d.metric == MetricKind::one_minus_auc);
    CHECK(d.val_base == deployment_metric(bb.predict(xt, targets_of(tr), xv), targets_of(va)));
    CHECK(d.use_adapter == guard_rule(d.val_adapter, d.val_base, default_guard_tolerance));
    CHECK_THROWS_AS(guard_decide(p, bb, xt, targets_of(tr), Mat(0, 3), Targets{TaskKind::binary, 2, {}}), FitError);
    CHECK_THROWS_AS(guard_decide(p, bb, xt, targets_of(tr), xv, targets_of(va), 1.5), ConfigError);
}

TEST_CASE("AUC matches a brute-force pair count") {
    Rng rng(2);
    std::uniform_int_distribution<int> level(0, 5);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 25; ++i) {
            s.push_back(level(rng) / 5.0);  // many ties
            y.push_back(static_cast<int>(rng() % 2));
        }
        double wins = 0.0, pairs = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < s.size(); ++j)
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1;
                    wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
        if (pairs == 0) continue;
        CHECK(auc(s, y) == doctest::Approx(wins / pairs).epsilon(1e-12));
    }
    const std::vector<double> s{0.1, 0.2};
    const std::vector<int> one{1, 1};
    CHECK(auc(s, one) == 0.5);
}

TEST_CASE("metrics") {
    const Targets t{TaskKind::multiclass, 3, {0, 2}};
    const Mat p = Mat::from_rows({{0.5, 0.25, 0.25}, {0.0, 0.0, 1.0}});
    CHECK(logloss(p, t) == doctest::Approx(std::log(2.0) / 2));
    const Mat zero = Mat::from_rows({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
    CHECK(logloss(zero, t) == doctest::Approx(-std::log(probability_floor) / 2));
    const Targets r{TaskKind::regression, 0, {1, 3}};
    CHECK(mse(Mat::from_rows({{2}, {3}}), r) == 0.5);
    CHECK(metric_for(TaskKind::binary) == MetricKind::one_minus_auc);
    const Targets b{TaskKind::binary, 2, {0, 1}};
    CHECK(deployment_metric(Mat::from_rows({{0.8, 0.2}, {0.3, 0.7}}), b) == 0.0);
}
