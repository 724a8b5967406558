#include "retouche/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "retouche/error.hpp"
#include "retouche/harness.hpp"
#include "retouche/inspect.hpp"
#include "retouche/rng.hpp"
#include "retouche/serialize.hpp"

namespace fs = std::filesystem;

namespace retouche {

namespace {

struct FitFlags {
    std::string data, target, task = "auto", backbone = "kernel", config, out = "model";
    std::uint64_t seed = 0;
    double tolerance = default_guard_tolerance;
    double val_fraction = default_val_fraction;
    std::optional<double> bandwidth;
};

struct BenchFlags {
    std::vector<std::string> data, synth;
    std::string target, task = "auto", backbone = "kernel", config, out = "bench_out", protocol = "T",
                ablation = "none";
    std::uint64_t seed = 0;
    std::size_t n_random = 10, folds = 8, jobs = 0;
    double tolerance = default_guard_tolerance;
    double test_fraction = 0.2;
    std::optional<double> bandwidth;
};

struct InspectFlags {
    std::string model, data, out;
    std::size_t top_k = default_top_k;
};

Json dataset_json(const Dataset& ds) {
    return Json{{"name", ds.name},
                {"rows", ds.n_rows()},
                {"columns", ds.n_features()},
                {"task", task_name(ds.task)},
                {"fingerprint", hex64(ds.fingerprint())}};
}

Json backbone_json(const BackboneSpec& spec) {
    Json j{{"kind", backbone_name(spec.kind)}};
    if (spec.kind == BackboneKind::kernel) {
        j["bandwidth"] = spec.bandwidth ? Json(*spec.bandwidth) : Json("median");
        j["ridge"] = spec.ridge;
    } else {
        j["width"] = spec.toy.width;
        j["layers"] = spec.toy.n_layers;
        j["heads"] = spec.toy.n_heads;
        j["seed"] = spec.toy.seed;
    }
    return j;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory " + p.string() + ": " + ec.message());
}

int cmd_fit(const FitFlags& f, std::ostream& out) {
    const Dataset ds = load_csv(f.data, f.target, parse_task_hint(f.task));
    TrialConfig config = f.config.empty() ? TrialConfig{} : load_config_file(f.config);
    BackboneSpec spec;
    spec.kind = parse_backbone(f.backbone);
    spec.bandwidth = f.bandwidth;
    spec.toy.seed = f.seed;

    SeedLineage seeds;
    seeds.master = f.seed;
    seeds.split = mix_seed(f.seed, {0x5B1ULL});
    seeds.trial = mix_seed(f.seed, {0, 0, 0});
    seeds.init = mix_seed(seeds.trial, {1});
    seeds.train = mix_seed(seeds.trial, {2});
    const SplitPlan plan = single_fold_plan(ds, f.val_fraction, seeds.split);
    const FoldSplit& fold = plan.folds.at(0);
    const FoldData data{ds.subset(fold.train), ds.subset(fold.validation), ds.subset(fold.validation)};

    const TrialOutput trial = run_trial(data, spec, config, seeds, f.tolerance);
    if (trial.fit.failed) throw FitError("fit failed: " + trial.fit.failure);

    const fs::path dir(f.out);
    ensure_dir(dir);
    write_json_file(dir / "preproc.json", to_json(trial.preproc));
    write_json_file(dir / "adapter.json", to_json(trial.adapter));
    write_json_file(dir / "guard.json", to_json(trial.record.guard));
    {
        auto trace = open_out(dir / "trace.jsonl");
        write_trace(trace, trial.fit.trace);
    }
    const auto backbone = make_backbone(spec, transform(trial.preproc, data.train));
    Json manifest{{"tool", "retouche"},
                  {"version", tool_version},
                  {"command", "fit"},
                  {"inputs",
                   Json{{"data", f.data},
                        {"target", f.target},
                        {"task", f.task},
                        {"backbone", f.backbone},
                        {"config", f.config},
                        {"tolerance", f.tolerance},
                        {"val_fraction", f.val_fraction}}},
                  {"seed", f.seed},
                  {"config", to_json(config)},
                  {"backbone", backbone_json(spec)},
                  {"backbone_resolved", backbone->describe()},
                  {"data", dataset_json(ds)},
                  {"train_rows", data.train.n_rows()},
                  {"validation_rows", data.validation.n_rows()},
                  {"best_epoch", trial.fit.best_epoch},
                  {"epochs_run", trial.fit.trace.size()}};
    write_json_file(dir / "manifest.json", manifest);

    const GuardDecision& g = trial.record.guard;
    out << "model written to " << dir.string() << "\n"
        << "guard: " << (g.use_adapter ? "adapter" : "base") << " (" << metric_name(g.metric)
        << " adapter=" << g.val_adapter << " base=" << g.val_base << ")\n";
    return exit_ok;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
    std::vector<Dataset> datasets;
    for (const std::string& path : f.data) {
        if (f.target.empty()) throw ConfigError("--data needs --target");
        Dataset ds = load_csv(path, f.target, parse_task_hint(f.task));
        ds.name = fs::path(path).stem().string();
        datasets.push_back(std::move(ds));
    }
    for (const std::string& s : f.synth) {
        const SynthSpec spec = parse_synth_spec(s);
        Dataset ds = generate(spec);
        ds.name = describe(spec);
        datasets.push_back(std::move(ds));
    }
    if (datasets.empty()) throw ConfigError("bench needs at least one --data or --synth");

    std::vector<TrialConfig> configs = sample_configs(SearchSpace{}, f.n_random, f.seed);
    if (!f.config.empty()) configs[0] = load_config_file(f.config, configs[0]);

    ProtocolOptions opt;
    opt.protocol = parse_protocol(f.protocol);
    opt.n_folds = f.folds;
    opt.test_fraction = f.test_fraction;
    opt.master_seed = f.seed;
    opt.ablation = parse_ablation(f.ablation);
    opt.backbone.kind = parse_backbone(f.backbone);
    opt.backbone.bandwidth = f.bandwidth;
    opt.backbone.toy.seed = f.seed;
    opt.tolerance = f.tolerance;
    opt.jobs = f.jobs;
    if (opt.jobs == 0) {
        const char* env = std::getenv("RETOUCHE_JOBS");
        opt.jobs = 1;
        if (env && *env) {
            try {
                opt.jobs = std::max<std::size_t>(1, std::stoul(env));
            } catch (const std::exception&) {
                throw ConfigError("RETOUCHE_JOBS must be a positive integer, got '" + std::string(env) + "'");
            }
        }
    }

    const BenchResult bench = run_protocol(datasets, configs, opt);

    const fs::path dir(f.out);
    ensure_dir(dir);
    {
        auto trials = open_out(dir / "trials.jsonl");
        for (const TrialRecord& r : bench.records) trials << to_json(r).dump() << '\n';
        auto timings = open_out(dir / "timings.jsonl");
        for (const TrialRecord& r : bench.records)
            timings << Json{{"dataset", r.dataset}, {"config", r.config_index}, {"fold", r.fold},
                            {"wall_seconds", r.wall_seconds}}
                           .dump()
                    << '\n';
    }
    write_json_file(dir / "summary.json", summary_json(bench, opt));
    Json config_list = Json::array();
    for (const TrialConfig& c : bench.configs) config_list.push_back(to_json(c));
    Json data_list = Json::array();
    for (const Dataset& ds : datasets) data_list.push_back(dataset_json(ds));
    write_json_file(dir / "manifest.json",
                    Json{{"tool", "retouche"},
                         {"version", tool_version},
                         {"command", "bench"},
                         {"inputs",
                          Json{{"data", f.data},
                               {"synth", f.synth},
                               {"target", f.target},
                               {"task", f.task},
                               {"backbone", f.backbone},
                               {"config", f.config},
                               {"protocol", f.protocol},
                               {"ablation", f.ablation},
                               {"n_random", f.n_random},
                               {"folds", f.folds},
                               {"tolerance", f.tolerance},
                               {"test_fraction", f.test_fraction}}},
                         {"seed", f.seed},
                         {"backbone", backbone_json(opt.backbone)},
                         {"configs", std::move(config_list)},
                         {"data", std::move(data_list)}});

    for (const DatasetResult& d : bench.datasets) {
        const auto& s = d.scores;
        const std::optional<double> score = opt.protocol == Protocol::D ? s.D : opt.protocol == Protocol::T ? s.T : s.TE;
        out << d.name << ": " << protocol_name(opt.protocol) << ' ' << metric_name(d.metric) << '='
            << (score ? std::to_string(*score) : "missing") << " base=" << (s.base ? std::to_string(*s.base) : "missing")
            << " fallback=" << d.fallback.aggregate_rate << "%\n";
    }
    out << "results written to " << dir.string() << "\n";
    return exit_ok;
}

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
    const fs::path dir(f.model);
    const Json manifest = read_json_file(dir / "manifest.json");
    const AdapterParams adapter = adapter_from_json(read_json_file(dir / "adapter.json"));
    if (adapter.config.block != BlockType::cross)
        throw IncompatibleModelError("interaction inspection needs a cross-block model; " + f.model +
                                     " was fitted with an MLP block");
    const FittedPreproc preproc = preproc_from_json(read_json_file(dir / "preproc.json"));
    std::string target, task;
    try {
        target = manifest.at("inputs").at("target").get<std::string>();
        task = manifest.at("inputs").at("task").get<std::string>();
    } catch (const Json::exception& e) {
        throw DataError("manifest.json: " + std::string(e.what()));
    }
    const Dataset ds = load_csv(f.data, target, parse_task_hint(task));
    const InteractionReport rep = hessian_at_mean(adapter, transform(preproc, ds), f.top_k);
    const Json j = report_json(rep, preproc.channel_names());
    if (f.out.empty()) {
        out << j.dump(2) << '\n';
    } else {
        write_json_file(f.out, j);
        out << "report written to " << f.out << "\n";
    }
    return exit_ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gated input adapters for frozen in-context tabular predictors", "retouche"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);

    FitFlags ff;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Train an adapter on one CSV and write a model directory");
    fit_cmd->add_option("--data", ff.data, "Input CSV")->required();
    fit_cmd->add_option("--target", ff.target, "Target column")->required();
    fit_cmd->add_option("--task", ff.task, "auto|binary|multiclass|regression");
    fit_cmd->add_option("--backbone", ff.backbone, "kernel|toy-icl");
    fit_cmd->add_option("--bandwidth", ff.bandwidth, "Kernel bandwidth (default: median heuristic)");
    fit_cmd->add_option("--config", ff.config, "key = value config file");
    fit_cmd->add_option("--seed", ff.seed, "Master seed");
    fit_cmd->add_option("--tolerance", ff.tolerance, "Guard tolerance (relative)");
    fit_cmd->add_option("--val-fraction", ff.val_fraction, "Inner validation fraction");
    fit_cmd->add_option("--out", ff.out, "Model directory");

    BenchFlags bf;
    CLI::App* bench_cmd = app.add_subcommand("bench", "Run a D/T/T+E protocol over k folds and write results");
    bench_cmd->add_option("--data", bf.data, "Input CSV (repeatable)");
    bench_cmd->add_option("--synth", bf.synth, "Synthetic spec, e.g. planted_interaction:n=500,d=6 (repeatable)");
    bench_cmd->add_option("--target", bf.target, "Target column for --data");
    bench_cmd->add_option("--task", bf.task, "auto|binary|multiclass|regression");
    bench_cmd->add_option("--backbone", bf.backbone, "kernel|toy-icl");
    bench_cmd->add_option("--bandwidth", bf.bandwidth, "Kernel bandwidth (default: median heuristic)");
    bench_cmd->add_option("--config", bf.config, "Overrides for configuration 0");
    bench_cmd->add_option("--protocol", bf.protocol, "D|T|T+E");
    bench_cmd->add_option("--n-random", bf.n_random, "Random configurations besides the default");
    bench_cmd->add_option("--folds", bf.folds, "Number of folds");
    bench_cmd->add_option("--ablation", bf.ablation, "none|random-adapter|no-guard|alpha1|alpha-init+0.5|mlp");
    bench_cmd->add_option("--seed", bf.seed, "Master seed");
    bench_cmd->add_option("--jobs", bf.jobs, "Parallel trials (default: RETOUCHE_JOBS or 1)");
    bench_cmd->add_option("--tolerance", bf.tolerance, "Guard tolerance (relative)");
    bench_cmd->add_option("--test-fraction", bf.test_fraction, "Holdout fraction");
    bench_cmd->add_option("--out", bf.out, "Results directory");

    InspectFlags inf;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "Report the strongest pairwise interactions of a cross block");
    inspect_cmd->add_option("--model", inf.model, "Model directory from `fit`")->required();
    inspect_cmd->add_option("--data", inf.data, "Reference rows (CSV with the model's columns)")->required();
    inspect_cmd->add_option("--top-k", inf.top_k, "Pairs to report");
    inspect_cmd->add_option("--out", inf.out, "Write the JSON report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_flags;
    }

    try {
        if (*fit_cmd) return cmd_fit(ff, out);
        if (*bench_cmd) return cmd_bench(bf, out);
        if (*inspect_cmd) return cmd_inspect(inf, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return exit_flags;
    } catch (const IncompatibleModelError& e) {
        err << "error: " << e.what() << '\n';
        return exit_incompatible;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const FitError& e) {
        err << "fit error: " << e.what() << '\n';
        return exit_fit;
    } catch (const NumericalError& e) {
        err << "fit error: " << e.what() << '\n';
        return exit_fit;
    }
    return exit_flags;
}

}  // namespace retouche
