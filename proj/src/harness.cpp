#include "retouche/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <random>

#include <omp.h>

#include "retouche/error.hpp"
#include "retouche/metrics.hpp"
#include "retouche/rng.hpp"

namespace retouche {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

double log_uniform(Rng& rng, Range r) {
    std::uniform_real_distribution<double> u(std::log(r.lo), std::log(r.hi));
    return std::exp(u(rng));
}

double uniform(Rng& rng, Range r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

std::size_t uniform_int(Rng& rng, IntRange r) { return std::uniform_int_distribution<std::size_t>(r.lo, r.hi)(rng); }

template <class T>
T choice(Rng& rng, const std::vector<T>& options) {
    if (options.empty()) throw ConfigError("search space has an empty choice set");
    return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::string_view ablation_name(Ablation a) noexcept {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::random_adapter: return "random-adapter";
        case Ablation::no_guard: return "no-guard";
        case Ablation::alpha_fixed_1: return "alpha1";
        case Ablation::alpha_init_plus_half: return "alpha-init+0.5";
        case Ablation::mlp: return "mlp";
    }
    return "unknown";
}

Ablation parse_ablation(std::string_view text) {
    for (Ablation a : {Ablation::none, Ablation::random_adapter, Ablation::no_guard, Ablation::alpha_fixed_1,
                       Ablation::alpha_init_plus_half, Ablation::mlp})
        if (text == ablation_name(a)) return a;
    throw ConfigError("unknown ablation '" + std::string(text) +
                      "' (none|random-adapter|no-guard|alpha1|alpha-init+0.5|mlp)");
}

std::vector<TrialConfig> sample_configs(const SearchSpace& space, std::size_t n_random, std::uint64_t master_seed) {
    std::vector<TrialConfig> configs(1);
    configs[0].adapter.block = space.block;
    configs[0].adapter.hidden_dim = space.hidden_dim;
    for (std::size_t i = 1; i <= n_random; ++i) {
        Rng rng(mix_seed(master_seed, {0xC0F1ULL, i}));
        TrialConfig c;
        c.index = i;
        AdapterConfig& a = c.adapter;
        TrainConfig& t = c.train;
        a.block = space.block;
        a.hidden_dim = space.hidden_dim;
        a.num_layers = choice(rng, space.num_layers);
        const bool full_rank = std::bernoulli_distribution(space.full_rank_probability)(rng);
        const double ratio = uniform(rng, space.low_rank_ratio);
        a.low_rank_ratio = full_rank || a.block != BlockType::cross ? std::nullopt : std::optional<double>(ratio);
        a.use_batch_norm = choice(rng, space.use_batch_norm);
        a.alpha_init = log_uniform(rng, space.alpha_init);
        a.alpha_shape = choice(rng, space.alpha_shape);
        t.gate_lr_factor = log_uniform(rng, space.gate_lr_factor);
        t.optimizer = choice(rng, space.optimizer);
        t.lr = log_uniform(rng, space.lr);
        t.weight_decay = log_uniform(rng, space.weight_decay);
        t.max_grad_norm = log_uniform(rng, space.max_grad_norm);
        t.label_smoothing = uniform(rng, space.label_smoothing);
        t.beta2 = uniform(rng, space.beta2);
        t.epochs = uniform_int(rng, space.epochs);
        t.patience = uniform_int(rng, space.patience);
        t.lr_schedule = choice(rng, space.lr_schedule);
        a.weight_init = choice(rng, space.weight_init);
        a.activation = choice(rng, space.activation);
        c.preprocessor = choice(rng, space.preprocessor);
        configs.push_back(c);
    }
    return configs;
}

TrialConfig apply_ablation(TrialConfig c, Ablation a) {
    c.ablation = a;
    switch (a) {
        case Ablation::alpha_fixed_1: c.adapter.alpha_init = 1.0; break;
        case Ablation::alpha_init_plus_half: c.adapter.alpha_init += 0.5; break;
        case Ablation::mlp:
            c.adapter.block = BlockType::mlp;
            c.adapter.low_rank_ratio.reset();
            break;
        default: break;
    }
    return c;
}

TrainableMask mask_for(Ablation a) noexcept {
    switch (a) {
        case Ablation::random_adapter: return {false, false, false};
        case Ablation::alpha_fixed_1: return {false, true, true};
        default: return {};
    }
}

// ---- trial ----

TrialOutput run_trial(const FoldData& data, const BackboneSpec& spec, const TrialConfig& config,
                      const SeedLineage& seeds, double tolerance) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialOutput out;
    TrialRecord& rec = out.record;
    rec.dataset = data.train.name;
    rec.config_index = config.index;
    rec.seeds = seeds;

    out.preproc = fit_preproc(data.train, PreprocSpec{config.preprocessor});
    const Mat xtr = transform(out.preproc, data.train);
    const Mat xva = transform(out.preproc, data.validation);
    const Mat xte = transform(out.preproc, data.test);
    const Targets ytr = targets_of(data.train), yva = targets_of(data.validation), yte = targets_of(data.test);
    const auto backbone = make_backbone(spec, xtr);

    const AdapterParams init = init_adapter(xtr.cols(), config.adapter, seeds.init, &xtr);
    TrainConfig tc = config.train;
    tc.seed = seeds.train;
    try {
        out.fit = fit(init, *backbone, FitData{xtr, ytr, xva, yva}, tc, mask_for(config.ablation));
    } catch (const FitError& e) {
        out.fit.best = init;
        out.fit.failed = true;
        out.fit.failure = e.what();
    }
    out.adapter = out.fit.best;
    rec.failed = out.fit.failed;
    rec.failure = out.fit.failure;
    rec.best_epoch = out.fit.best_epoch;
    rec.epochs_run = out.fit.trace.size();

    rec.base_predictions = base_predict(*backbone, xtr, ytr, xte);
    rec.test_base = deployment_metric(rec.base_predictions, yte);
    rec.guard = guard_decide(out.adapter, *backbone, xtr, ytr, xva, yva, tolerance);
    if (rec.failed) rec.guard.use_adapter = false;
    if (config.ablation == Ablation::no_guard) {
        rec.guard.use_adapter = true;
        rec.guard.forced = true;
    }
    rec.val_metric = rec.guard.use_adapter ? rec.guard.val_adapter : rec.guard.val_base;

    Mat adapted;
    try {
        adapted = adapted_predict(out.adapter, *backbone, xtr, ytr, xte);
        rec.test_adapter = deployment_metric(adapted, yte);
    } catch (const NumericalError&) {
        rec.test_adapter = nan;
    }
    if (rec.guard.use_adapter) {
        if (adapted.empty()) {
            rec.failed = true;
            if (rec.failure.empty()) rec.failure = "adapter path produced non-finite predictions";
            rec.test_metric = nan;
        } else {
            rec.test_predictions = std::move(adapted);
            rec.test_metric = rec.test_adapter;
        }
    } else {
        rec.test_predictions = rec.base_predictions;
        rec.test_metric = rec.test_base;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- protocols ----

std::string_view protocol_name(Protocol p) noexcept {
    switch (p) {
        case Protocol::D: return "D";
        case Protocol::T: return "T";
        case Protocol::TE: return "T+E";
    }
    return "unknown";
}

Protocol parse_protocol(std::string_view text) {
    if (text == "D") return Protocol::D;
    if (text == "T") return Protocol::T;
    if (text == "T+E") return Protocol::TE;
    throw ConfigError("unknown protocol '" + std::string(text) + "' (D|T|T+E)");
}

ProtocolScores summarize(std::span<const TrialRecord> records, Protocol protocol, std::size_t n_folds,
                         const Targets& test_targets) {
    ProtocolScores s;
    std::map<std::size_t, std::vector<const TrialRecord*>> by_fold;
    for (const TrialRecord& r : records) by_fold[r.fold].push_back(&r);

    std::vector<double> base, d;
    for (std::size_t f = 0; f < n_folds; ++f) {
        auto it = by_fold.find(f);
        if (it == by_fold.end()) continue;
        for (const TrialRecord* r : it->second) {
            if (r->config_index != 0) continue;
            base.push_back(r->test_base);
            if (std::isfinite(r->test_metric)) d.push_back(r->test_metric);
        }
    }
    if (!base.empty()) s.base = mean_of(base);
    if (!d.empty()) s.D = mean_of(d);
    if (protocol == Protocol::D) return s;

    std::vector<double> t;
    Mat ensemble;
    std::size_t members = 0;
    for (std::size_t f = 0; f < n_folds; ++f) {
        const TrialRecord* best = nullptr;
        auto it = by_fold.find(f);
        if (it != by_fold.end()) {
            for (const TrialRecord* r : it->second) {
                if (r->failed || !std::isfinite(r->val_metric) || !std::isfinite(r->test_metric)) continue;
                if (!best || r->val_metric < best->val_metric ||
                    (r->val_metric == best->val_metric && r->config_index < best->config_index))
                    best = r;
            }
        }
        if (!best) {
            s.missing_folds.push_back(f);
            continue;
        }
        s.selected.push_back(best->config_index);
        t.push_back(best->test_metric);
        if (ensemble.empty()) ensemble = Mat(best->test_predictions.rows(), best->test_predictions.cols());
        if (!ensemble.same_shape(best->test_predictions)) throw ShapeError("summarize: fold predictions differ in shape");
        for (std::size_t i = 0; i < ensemble.size(); ++i) ensemble[i] += best->test_predictions[i];
        ++members;
    }
    if (!t.empty()) {
        s.T = mean_of(t);
        for (double& v : ensemble.values()) v /= static_cast<double>(members);
        s.TE = deployment_metric(ensemble, test_targets);
    }
    return s;
}

FallbackReport fallback_report(std::span<const TrialRecord> records) {
    FallbackReport rep;
    std::map<std::size_t, std::vector<const TrialRecord*>> by_config;
    for (const TrialRecord& r : records) {
        ++rep.cells;
        rep.fallbacks += r.guard.use_adapter ? 0 : 1;
        by_config[r.config_index].push_back(&r);
    }
    if (rep.cells == 0) return rep;
    rep.aggregate_rate = 100.0 * static_cast<double>(rep.fallbacks) / static_cast<double>(rep.cells);

    // Best configuration: lowest mean validation metric; any failed fold ranks a config last.
    bool have = false;
    bool best_clean = false;
    double best_score = 0.0;
    for (const auto& [ci, rs] : by_config) {
        bool clean = true;
        std::vector<double> v;
        for (const TrialRecord* r : rs) {
            if (r->failed || !std::isfinite(r->val_metric)) clean = false;
            else v.push_back(r->val_metric);
        }
        const double score = v.empty() ? std::numeric_limits<double>::infinity() : mean_of(v);
        if (!have || (clean && !best_clean) || (clean == best_clean && score < best_score)) {
            have = true;
            best_clean = clean;
            best_score = score;
            rep.best_config = ci;
        }
    }
    for (const TrialRecord* r : by_config[rep.best_config]) {
        ++rep.best_config_folds;
        rep.best_config_fallbacks += r->guard.use_adapter ? 0 : 1;
    }
    rep.best_config_rate =
        100.0 * static_cast<double>(rep.best_config_fallbacks) / static_cast<double>(rep.best_config_folds);
    return rep;
}

WinRateMatrix win_rate_matrix(const std::vector<std::string>& methods, const std::vector<std::vector<double>>& scores,
                              bool higher_better) {
    const std::size_t m = methods.size();
    if (scores.empty()) throw DataError("win-rate matrix: no datasets");
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (scores[d].size() != m)
            throw DataError("win-rate matrix: dataset " + std::to_string(d) + " has " + std::to_string(scores[d].size()) +
                            " scores for " + std::to_string(m) + " methods");
        for (std::size_t i = 0; i < m; ++i)
            if (!std::isfinite(scores[d][i]))
                throw DataError("win-rate matrix: missing score for method '" + methods[i] + "' on dataset " +
                                std::to_string(d));
    }
    WinRateMatrix w{methods, Mat(m, m), Mat(m, m)};
    const double n = static_cast<double>(scores.size());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) {
                w.win(i, j) = nan;
                w.tie(i, j) = nan;
                continue;
            }
            std::size_t wins = 0, ties = 0;
            for (const auto& row : scores) {
                const double a = row[i], b = row[j];
                if (a == b) ++ties;
                else if (higher_better ? a > b : a < b) ++wins;
            }
            w.win(i, j) = 100.0 * static_cast<double>(wins) / n;
            w.tie(i, j) = 100.0 * static_cast<double>(ties) / n;
        }
    }
    return w;
}

BenchResult run_protocol(const std::vector<Dataset>& datasets, const std::vector<TrialConfig>& configs,
                         const ProtocolOptions& opt) {
    if (configs.empty()) throw ConfigError("run_protocol: no configurations");
    if (opt.n_folds == 0) throw ConfigError("--folds must be >= 1");
    if (!(opt.test_fraction > 0.0 && opt.test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");

    BenchResult result;
    const std::size_t n_configs = opt.protocol == Protocol::D ? 1 : configs.size();
    for (std::size_t c = 0; c < n_configs; ++c) result.configs.push_back(apply_ablation(configs[c], opt.ablation));

    struct Prepared {
        Dataset test;
        std::vector<FoldData> folds;
        std::uint64_t split_seed = 0;
    };
    std::vector<Prepared> prepared;
    for (std::size_t di = 0; di < datasets.size(); ++di) {
        const Dataset& ds = datasets[di];
        ds.validate();
        Prepared p;
        p.split_seed = mix_seed(opt.master_seed, {di, 0x5B1ULL});
        const Holdout h = holdout_split(ds, opt.test_fraction, mix_seed(opt.master_seed, {di, 0x401DULL}));
        const Dataset dev = ds.subset(h.development);
        p.test = ds.subset(h.test);
        const SplitPlan plan = opt.n_folds == 1 ? single_fold_plan(dev, opt.val_fraction, p.split_seed)
                                                : make_splits(dev, opt.n_folds, opt.val_fraction, p.split_seed);
        for (const FoldSplit& f : plan.folds) p.folds.push_back({dev.subset(f.train), dev.subset(f.validation), p.test});
        prepared.push_back(std::move(p));
    }

    struct Cell {
        std::size_t dataset, config, fold;
    };
    std::vector<Cell> cells;
    for (std::size_t di = 0; di < datasets.size(); ++di)
        for (std::size_t c = 0; c < n_configs; ++c)
            for (std::size_t f = 0; f < prepared[di].folds.size(); ++f) cells.push_back({di, c, f});

    result.records.resize(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    const int jobs = static_cast<int>(std::max<std::size_t>(1, opt.jobs));
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const Cell& cell = cells[k];
        try {
            SeedLineage seeds;
            seeds.master = opt.master_seed;
            seeds.trial = mix_seed(opt.master_seed, {cell.dataset, result.configs[cell.config].index, cell.fold});
            seeds.init = mix_seed(seeds.trial, {1});
            seeds.train = mix_seed(seeds.trial, {2});
            seeds.split = prepared[cell.dataset].split_seed;
            TrialRecord rec = run_trial(prepared[cell.dataset].folds[cell.fold], opt.backbone, result.configs[cell.config],
                                        seeds, opt.tolerance)
                                  .record;
            rec.dataset = datasets[cell.dataset].name;
            rec.dataset_index = cell.dataset;
            rec.fold = cell.fold;
            result.records[k] = std::move(rec);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<std::string> methods{"base", "D"};
    if (opt.protocol != Protocol::D) {
        methods.push_back("T");
        methods.push_back("T+E");
    }
    std::vector<std::vector<double>> table;
    bool complete = true;
    std::size_t offset = 0;
    for (std::size_t di = 0; di < datasets.size(); ++di) {
        const std::size_t count = n_configs * prepared[di].folds.size();
        const std::span<const TrialRecord> recs(result.records.data() + offset, count);
        offset += count;
        DatasetResult dr;
        dr.name = datasets[di].name;
        dr.metric = metric_for(datasets[di].task);
        dr.fingerprint = datasets[di].fingerprint();
        dr.n_rows = datasets[di].n_rows();
        dr.n_features = datasets[di].n_features();
        dr.n_test = prepared[di].test.n_rows();
        dr.scores = summarize(recs, opt.protocol, prepared[di].folds.size(), targets_of(prepared[di].test));
        dr.fallback = fallback_report(recs);
        std::vector<double> row{dr.scores.base.value_or(nan), dr.scores.D.value_or(nan)};
        if (opt.protocol != Protocol::D) {
            row.push_back(dr.scores.T.value_or(nan));
            row.push_back(dr.scores.TE.value_or(nan));
        }
        for (double v : row) complete = complete && std::isfinite(v);
        table.push_back(std::move(row));
        result.datasets.push_back(std::move(dr));
    }
    if (complete && !table.empty()) result.win_rates = win_rate_matrix(methods, table);
    else result.win_rates.methods = methods;
    return result;
}

}  // namespace retouche
