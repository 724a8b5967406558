// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "gradcheck.hpp"
#include "properties.hpp"
#include "retouche/cli.hpp"
#include "retouche/inspect.hpp"
#include "retouche/serialize.hpp"
#include "suites.hpp"

using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    const double cross = equivalence_error(BlockType::cross, 100, 101);
    const double mlp = equivalence_error(BlockType::mlp, 100, 102);
    const double dt = seconds_since(t0);
    return {cross <= 1e-12 && mlp <= 1e-12 && dt < 5.0,
            fmt("max diff cross %.3g, mlp %.3g over 100 pairs each; %.2fs", cross, mlp, dt)};
}

Outcome identity() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto configs = sample_configs(SearchSpace{}, 100, 2024);
    std::size_t ok = 0, total = 0;
    for (const TrialConfig& c : configs) {
        ok += alpha_zero_identity(c.adapter, c.index);
        ok += alpha_zero_identity(apply_ablation(c, Ablation::mlp).adapter, c.index + 1000);
        total += 2;
    }
    const double dt = seconds_since(t0);
    return {ok == total && dt < 5.0, fmt("%zu/%zu (config, block) cases bit-identical; %.2fs", ok, total, dt)};
}

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double ops = 0.0, composite = 0.0;
    std::size_t op_count = 0;
    bool projection = true;
    for (std::uint64_t s = 0; s < 20; ++s) {
        for (const OpCheck& c : check_all_ops(1000 + s)) ops = std::max(ops, c.max_rel_err), ++op_count;
        const CompositeCheck cc = check_composite(2000 + s, s % 2 ? TaskKind::multiclass : TaskKind::regression);
        composite = std::max(composite, cc.max_rel_err);
        projection = projection && cc.projection_checked;
    }
    const double dt = seconds_since(t0);
    return {ops <= 1e-6 && composite <= 1e-5 && projection && dt < 60.0,
            fmt("ops max rel err %.3g (%zu checks), composite %.3g, 20 seeds; %.1fs", ops, op_count, composite, dt)};
}

Outcome frozenness() {
    std::size_t fits = 0, changed = 0, stray = 0;
    for (std::uint64_t s = 0; s < 4; ++s) {
        const FoldData fd = fold_data(synth(Generator::planted_interaction, s, 150, 3), s);
        const FittedPreproc pp = fit_preproc(fd.train, {});
        const Mat xt = transform(pp, fd.train), xv = transform(pp, fd.validation);
        ToyIclConfig tc;
        tc.seed = s;
        const ToyIclBackbone bb(tc);
        const auto before = bb.parameters();
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = s;
        fit(init_adapter(3, {}, s), bb, {xt, targets_of(fd.train), xv, targets_of(fd.validation)}, cfg);
        ++fits;
        changed += !(bb.parameters() == before);

        for (const TrainableMask mask : {TrainableMask{}, TrainableMask{false, true, true}, TrainableMask{false, false, false}}) {
            AdapterConfig ac;
            ac.d_cap = 2;
            const AdapterParams p = init_adapter(3, ac, s);
            ad::Tape t;
            BoundAdapter b = bind(t, p, mask);
            const auto z = project(t, b, adapter_forward(t, b, t.constant(xt), Mode::train));
            std::vector<std::size_t> ctx, q;
            for (std::size_t i = 0; i < xt.rows(); ++i) (i < 40 ? ctx : q).push_back(i);
            const Targets y = targets_of(fd.train);
            const auto pred =
                bb.predict(t, ad::slice_rows(t, z, 0, 40), y.subset(ctx), ad::slice_rows(t, z, 40, xt.rows()));
            const auto g = t.backprop(loss(t, pred, y.subset(q), 0.1));
            for (const auto& [index, grad] : g) stray += !t.requires_grad(ad::NodeRef{index, grad.rows(), grad.cols()});
        }
    }
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Pipeline p = run_pipeline(synth(Generator::linear_aligned, s, 150, 3), s);
        changed += !p.backbone->parameters().empty();
        ++fits;
    }
    return {changed == 0 && stray == 0,
            fmt("%zu fits, %zu backbones changed, %zu gradient entries on frozen leaves", fits, changed, stray)};
}

Outcome degree() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s)
        for (std::size_t layers : {1u, 2u}) worst = std::max(worst, degree_residual(layers, 10, 300 + s));
    return {worst <= 1e-6, fmt("max normalized (L+2)-th difference %.3g, L in {1,2}, 10 rays", worst)};
}

Outcome guard_identity() {
    const GuardSuite s = guard_suite(200, 6);
    const std::size_t rule = rule_mismatches(1000, 66);
    return {s.fallback_mismatches == 0 && s.fallbacks > 0 && rule == 0 && s.backbone_changes == 0,
            fmt("%zu fallbacks / %zu adapts, %zu non-identical; rule mismatches %zu/1000", s.fallbacks, s.adapts,
                s.fallback_mismatches, rule)};
}

struct Behavioral {
    std::size_t wins = 0, adapts = 0, hessian_hits = 0;
    std::string margins;
    double seconds = 0.0;
};

Behavioral planted_runs() {
    Behavioral b;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Pipeline p = run_pipeline(synth(Generator::planted_interaction, seed, 500, 6), seed);
        b.wins += p.test_adapter < p.test_base;
        b.adapts += p.guard.use_adapter;
        const InteractionReport rep = hessian_at_mean(p.fit.best, p.x_test, 3);
        bool hit = false;
        for (const InteractionPair& pr : rep.top) hit = hit || (pr.i == 0 && pr.j == 1);
        b.hessian_hits += hit;
        b.margins += fmt(" %llu:%.4f/%.4f%s", static_cast<unsigned long long>(seed), p.test_base, p.test_adapter,
                         p.guard.use_adapter ? "" : "(fb)");
    }
    b.seconds = seconds_since(t0);
    return b;
}

Outcome lift(const Behavioral& b) {
    return {b.wins >= 7 && b.adapts >= 7 && b.seconds < 180.0,
            fmt("adapter beats base on %zu/10, guard adapts on %zu/10 (pilot 10/10, 9/10); %.1fs; base/adapted:",
                b.wins, b.adapts, b.seconds) +
                b.margins};
}

Outcome aligned_safety() {
    std::size_t safe = 0, adapts = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Pipeline p = run_pipeline(synth(Generator::linear_aligned, seed, 500, 6), seed);
        safe += p.test_routed <= (1.0 + default_guard_tolerance) * p.test_base;
        adapts += p.guard.use_adapter;
    }
    return {safe == 10, fmt("guarded within tolerance of base on %zu/10 (guard adapted on %zu)", safe, adapts)};
}

Outcome ablations() {
    std::size_t r = 0, g = 0, a = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const AblationCheck c = ablation_contracts(seed, 150);
        r += c.random_frozen;
        g += c.no_guard_forced;
        a += c.alpha_held;
    }
    return {r == 5 && g == 5 && a == 5, fmt("random-adapter %zu/5, no-guard %zu/5, alpha1 %zu/5", r, g, a)};
}

Outcome hessian(const Behavioral& b) {
    double err = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        AdapterConfig c;
        c.num_layers = 1;
        c.low_rank_ratio.reset();
        c.use_batch_norm = false;
        const std::size_t d = 3 + s % 5;
        AdapterParams p = init_adapter(d, c, s);
        Rng rng(s);
        scramble(p, rng, 0.6);
        const Mat x = random_mat(1, d, rng);
        const Mat h = block_hessian(p, {x.values().begin(), x.values().end()});
        const Mat& w = p.cross[0].weight;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (i != j) err = std::max(err, std::abs(h(i, j) - w(i, j) - w(j, i)));
    }
    return {err <= 1e-5 && b.hessian_hits >= 7,
            fmt("one-layer max |H - (W + W^T)| %.3g; (x1, x2) in top 3 on %zu/10 (pilot 7/10)", err, b.hessian_hits)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
    const auto configs = sample_configs(SearchSpace{}, 10, 0);
    const TrialConfig& c = configs[0];
    const bool defaults = configs.size() == 11 && c.train.lr == 5e-3 && c.adapter.alpha_init == 0.02 &&
                          c.train.gate_lr_factor == 3.0 && c.train.epochs == 150 && c.train.patience == 10 &&
                          c.train.lr_schedule == Schedule::coslog4 && c.adapter.num_layers == 2 &&
                          c.adapter.low_rank_ratio == 0.25 && c.adapter.use_batch_norm &&
                          c.train.label_smoothing == 0.15 && c.train.beta2 == 0.97 && c.train.weight_decay == 3e-3 &&
                          c.train.max_grad_norm == 2.0 && c.adapter.hidden_dim == 64 &&
                          c.adapter.block == BlockType::cross && sample_configs(SearchSpace{}, 10, 0) == configs;

    const fs::path root = fs::temp_directory_path() / ("retouche_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const auto t0 = std::chrono::steady_clock::now();
    const auto bench = [&](const std::string& out, const std::string& jobs) {
        std::vector<std::string> args{"retouche", "bench", "--synth", "planted_interaction:n=150,d=4,seed=1", "--synth",
                                      "linear_aligned:n=150,d=3,seed=2,task=binary", "--protocol", "T+E",
                                      "--n-random", "10", "--folds", "8", "--seed", "17", "--jobs", jobs, "--out",
                                      (root / out).string()};
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream sink;
        return run_cli(static_cast<int>(argv.size()), argv.data(), sink, sink);
    };
    const int threads = std::max(1, kernels::max_threads());
    const bool ran = bench("a", std::to_string(threads)) == exit_ok && bench("b", std::to_string(threads)) == exit_ok;
    bool same = ran;
    std::size_t configs_written = 0;
    if (ran) {
        for (const char* f : {"trials.jsonl", "summary.json", "manifest.json"}) same = same && slurp(root / "a" / f) == slurp(root / "b" / f);
        configs_written = read_json_file(root / "a" / "manifest.json").at("configs").size();
    }
    const double dt = seconds_since(t0);
    fs::remove_all(root);
    return {defaults && same && configs_written == 11,
            fmt("11 configs, config 0 = defaults: %s; two bench runs (2 datasets x 11 configs x 8 folds) byte-identical: "
                "%s; %.1fs",
                defaults ? "yes" : "no", same ? "yes" : "no", dt)};
}

Outcome win_rates() {
    Rng rng(12);
    std::size_t tables = 0, bad_cells = 0, partition = 0;
    for (int t = 0; t < 300; ++t) {
        const std::size_t m = 2 + rng() % 5, n = 1 + rng() % 30;
        const bool higher = rng() % 2;
        std::vector<std::string> names;
        for (std::size_t i = 0; i < m; ++i) names.push_back("m" + std::to_string(i));
        std::vector<std::vector<double>> scores(n, std::vector<double>(m));
        for (auto& row : scores)
            for (double& v : row) v = static_cast<double>(rng() % 4) * 0.25;
        const WinRateMatrix w = win_rate_matrix(names, scores, higher);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) {
                    bad_cells += !std::isnan(w.win(i, j));
                    continue;
                }
                std::size_t wins = 0, ties = 0;
                for (const auto& row : scores) {
                    if (row[i] == row[j]) ++ties;
                    else if ((row[i] < row[j]) != higher) ++wins;
                }
                bad_cells += std::abs(w.win(i, j) - 100.0 * wins / n) > 1e-9;
                bad_cells += std::abs(w.tie(i, j) - 100.0 * ties / n) > 1e-9;
                partition += std::abs(w.win(i, j) + w.win(j, i) + w.tie(i, j) - 100.0) > 1e-9;
            }
        ++tables;
    }
    return {bad_cells == 0 && partition == 0,
            fmt("%zu random tables; %zu cells off the counting oracle, %zu partition violations", tables, bad_cells,
                partition)};
}

}  // namespace

int main() {
    const Behavioral planted = planted_runs();
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"residual-form equivalence", equivalence},
        {"alpha = 0 exact identity", identity},
        {"gradient correctness", gradients},
        {"backbone frozenness", frozenness},
        {"cross-block degree", degree},
        {"guard bit-identity and rule", guard_identity},
        {"adaptation lift", [&] { return lift(planted); }},
        {"aligned-task safety", aligned_safety},
        {"ablation contracts", ablations},
        {"hessian inspection", [&] { return hessian(planted); }},
        {"protocol determinism and counts", determinism},
        {"win-rate partition", win_rates},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
