#include "retouche/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "retouche/error.hpp"

namespace retouche {

namespace {

Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double real_of(const Json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

template <class T>
Json opt_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

Json bn_json(const std::optional<BatchNormState>& bn) {
    if (!bn) return nullptr;
    return Json{{"gamma", to_json(bn->gamma)},
                {"beta", to_json(bn->beta)},
                {"running_mean", to_json(bn->running_mean)},
                {"running_var", to_json(bn->running_var)}};
}

std::optional<BatchNormState> bn_from(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return BatchNormState{mat_from_json(j.at("gamma")), mat_from_json(j.at("beta")),
                          mat_from_json(j.at("running_mean")), mat_from_json(j.at("running_var"))};
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
    if (v == "true" || v == "True" || v == "1") return true;
    if (v == "false" || v == "False" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

bool is_none(const std::string& v) { return v == "none" || v == "None" || v == "full"; }

}  // namespace

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

Json to_json(const Mat& m) {
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Mat mat_from_json(const Json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw DataError("matrix entry count does not match its shape");
    return Mat(rows, cols, std::move(data));
}

Json to_json(const AdapterConfig& c) {
    return Json{{"block_type", block_name(c.block)},
                {"num_layers", c.num_layers},
                {"low_rank_ratio", opt_json(c.low_rank_ratio)},
                {"hidden_dim", c.hidden_dim},
                {"mlp_ratio", opt_json(c.mlp_ratio)},
                {"h_min", c.h_min},
                {"use_batch_norm", c.use_batch_norm},
                {"alpha_init", c.alpha_init},
                {"alpha_shape", alpha_shape_name(c.alpha_shape)},
                {"weight_init", init_name(c.weight_init)},
                {"activation", activation_name(c.activation)},
                {"mlp_activation", activation_name(c.mlp_activation)},
                {"d_cap", c.d_cap},
                {"projection_mode", projection_name(c.projection_mode)}};
}

AdapterConfig adapter_config_from_json(const Json& j) {
    AdapterConfig c;
    c.block = parse_block(j.at("block_type").get<std::string>());
    c.num_layers = j.at("num_layers").get<std::size_t>();
    if (!j.at("low_rank_ratio").is_null()) c.low_rank_ratio = j.at("low_rank_ratio").get<double>();
    else c.low_rank_ratio.reset();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    if (!j.at("mlp_ratio").is_null()) c.mlp_ratio = j.at("mlp_ratio").get<double>();
    c.h_min = j.at("h_min").get<std::size_t>();
    c.use_batch_norm = j.at("use_batch_norm").get<bool>();
    c.alpha_init = j.at("alpha_init").get<double>();
    c.alpha_shape = parse_alpha_shape(j.at("alpha_shape").get<std::string>());
    c.weight_init = parse_init(j.at("weight_init").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.mlp_activation = parse_activation(j.at("mlp_activation").get<std::string>());
    c.d_cap = j.at("d_cap").get<std::size_t>();
    c.projection_mode = parse_projection(j.at("projection_mode").get<std::string>());
    return c;
}

Json to_json(const TrainConfig& c) {
    return Json{{"optimizer", optimizer_name(c.optimizer)},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"beta2", c.beta2},
                {"max_grad_norm", c.max_grad_norm},
                {"label_smoothing", c.label_smoothing},
                {"epochs", c.epochs},
                {"patience", c.patience},
                {"lr_schedule", schedule_name(c.lr_schedule)},
                {"gate_lr_factor", c.gate_lr_factor},
                {"context_fraction", c.context_fraction},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.max_grad_norm = j.at("max_grad_norm").get<double>();
    c.label_smoothing = j.at("label_smoothing").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.lr_schedule = parse_schedule(j.at("lr_schedule").get<std::string>());
    c.gate_lr_factor = j.at("gate_lr_factor").get<double>();
    c.context_fraction = j.at("context_fraction").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Json to_json(const TrialConfig& c) {
    return Json{{"index", c.index},
                {"adapter", to_json(c.adapter)},
                {"train", to_json(c.train)},
                {"preprocessor", preproc_name(c.preprocessor)},
                {"ablation", ablation_name(c.ablation)}};
}

TrialConfig trial_config_from_json(const Json& j) {
    TrialConfig c;
    c.index = j.at("index").get<std::size_t>();
    c.adapter = adapter_config_from_json(j.at("adapter"));
    c.train = train_config_from_json(j.at("train"));
    c.preprocessor = parse_preproc(j.at("preprocessor").get<std::string>());
    c.ablation = parse_ablation(j.at("ablation").get<std::string>());
    return c;
}

Json to_json(const AdapterParams& p) {
    Json cross = Json::array();
    for (const CrossLayer& l : p.cross) {
        Json layer;
        if (l.low_rank()) {
            layer["u"] = to_json(l.u);
            layer["v"] = to_json(l.v);
        } else {
            layer["weight"] = to_json(l.weight);
        }
        layer["bias"] = to_json(l.bias);
        layer["bn"] = bn_json(l.bn);
        cross.push_back(std::move(layer));
    }
    Json mlp = Json::array();
    for (const MlpLayer& l : p.mlp)
        mlp.push_back(Json{{"w1", to_json(l.w1)},
                           {"b1", to_json(l.b1)},
                           {"w2", to_json(l.w2)},
                           {"b2", to_json(l.b2)},
                           {"bn", bn_json(l.bn)}});
    return Json{{"config", to_json(p.config)},
                {"input_dim", p.input_dim},
                {"init_seed", p.init_seed},
                {"alpha", to_json(p.alpha)},
                {"cross", std::move(cross)},
                {"mlp", std::move(mlp)},
                {"projection",
                 Json{{"enabled", p.projection.enabled},
                      {"mode", projection_name(p.projection.mode)},
                      {"d_cap", p.projection.d_cap},
                      {"matrix", to_json(p.projection.matrix)}}}};
}

AdapterParams adapter_from_json(const Json& j) {
    try {
        AdapterParams p;
        p.config = adapter_config_from_json(j.at("config"));
        p.input_dim = j.at("input_dim").get<std::size_t>();
        p.init_seed = j.at("init_seed").get<std::uint64_t>();
        p.alpha = mat_from_json(j.at("alpha"));
        for (const Json& l : j.at("cross")) {
            CrossLayer layer;
            if (l.contains("weight")) {
                layer.weight = mat_from_json(l.at("weight"));
            } else {
                layer.u = mat_from_json(l.at("u"));
                layer.v = mat_from_json(l.at("v"));
            }
            layer.bias = mat_from_json(l.at("bias"));
            layer.bn = bn_from(l.at("bn"));
            p.cross.push_back(std::move(layer));
        }
        for (const Json& l : j.at("mlp"))
            p.mlp.push_back(MlpLayer{mat_from_json(l.at("w1")), mat_from_json(l.at("b1")), mat_from_json(l.at("w2")),
                                     mat_from_json(l.at("b2")), bn_from(l.at("bn"))});
        const Json& pr = j.at("projection");
        p.projection.enabled = pr.at("enabled").get<bool>();
        p.projection.mode = parse_projection(pr.at("mode").get<std::string>());
        p.projection.d_cap = pr.at("d_cap").get<std::size_t>();
        p.projection.matrix = mat_from_json(pr.at("matrix"));
        return p;
    } catch (const Json::exception& e) {
        throw DataError(std::string("adapter file: ") + e.what());
    }
}

Json to_json(const FittedPreproc& p) {
    Json cols = Json::array();
    for (const ColumnTransform& c : p.columns)
        cols.push_back(Json{{"name", c.name},
                            {"kind", c.kind == ColumnKind::numeric ? "numeric" : "categorical"},
                            {"median", c.median},
                            {"mean", c.mean},
                            {"sd", c.sd},
                            {"levels", c.levels},
                            {"onehot", c.onehot}});
    return Json{{"variant", preproc_name(p.spec.variant)},
                {"onehot_max_levels", p.spec.onehot_max_levels},
                {"output_dim", p.output_dim},
                {"columns", std::move(cols)}};
}

FittedPreproc preproc_from_json(const Json& j) {
    try {
        FittedPreproc p;
        p.spec.variant = parse_preproc(j.at("variant").get<std::string>());
        p.spec.onehot_max_levels = j.at("onehot_max_levels").get<std::size_t>();
        p.output_dim = j.at("output_dim").get<std::size_t>();
        for (const Json& c : j.at("columns")) {
            ColumnTransform ct;
            ct.name = c.at("name").get<std::string>();
            ct.kind = c.at("kind").get<std::string>() == "numeric" ? ColumnKind::numeric : ColumnKind::categorical;
            ct.median = c.at("median").get<double>();
            ct.mean = c.at("mean").get<double>();
            ct.sd = c.at("sd").get<double>();
            ct.levels = c.at("levels").get<std::vector<std::string>>();
            ct.onehot = c.at("onehot").get<bool>();
            p.columns.push_back(std::move(ct));
        }
        return p;
    } catch (const Json::exception& e) {
        throw DataError(std::string("preprocessor file: ") + e.what());
    }
}

Json to_json(const GuardDecision& g) {
    return Json{{"metric", metric_name(g.metric)},
                {"val_adapter", real_or_null(g.val_adapter)},
                {"val_base", real_or_null(g.val_base)},
                {"tolerance", g.tolerance},
                {"use_adapter", g.use_adapter},
                {"forced", g.forced}};
}

GuardDecision guard_from_json(const Json& j) {
    GuardDecision g;
    g.metric = parse_metric(j.at("metric").get<std::string>());
    g.val_adapter = real_of(j.at("val_adapter"));
    g.val_base = real_of(j.at("val_base"));
    g.tolerance = j.at("tolerance").get<double>();
    g.use_adapter = j.at("use_adapter").get<bool>();
    g.forced = j.at("forced").get<bool>();
    return g;
}

Json to_json(const TrialRecord& r) {
    Json j{{"dataset", r.dataset},
           {"dataset_index", r.dataset_index},
           {"config", r.config_index},
           {"fold", r.fold},
           {"seeds",
            Json{{"master", r.seeds.master},
                 {"trial", hex64(r.seeds.trial)},
                 {"init", hex64(r.seeds.init)},
                 {"train", hex64(r.seeds.train)},
                 {"split", hex64(r.seeds.split)}}},
           {"failed", r.failed}};
    if (r.failed) j["failure"] = r.failure;
    j["guard"] = to_json(r.guard);
    j["val_metric"] = real_or_null(r.val_metric);
    j["test_metric"] = real_or_null(r.test_metric);
    j["test_base"] = real_or_null(r.test_base);
    j["test_adapter"] = real_or_null(r.test_adapter);
    j["best_epoch"] = r.best_epoch;
    j["epochs_run"] = r.epochs_run;
    return j;
}

Json summary_json(const BenchResult& bench, const ProtocolOptions& opt) {
    Json datasets = Json::array();
    for (const DatasetResult& d : bench.datasets) {
        Json scores{{"base", opt_json(d.scores.base)}, {"D", opt_json(d.scores.D)}};
        if (opt.protocol != Protocol::D) {
            scores["T"] = opt_json(d.scores.T);
            scores["T+E"] = opt_json(d.scores.TE);
            scores["selected_configs"] = d.scores.selected;
        }
        std::optional<double> headline = opt.protocol == Protocol::D   ? d.scores.D
                                         : opt.protocol == Protocol::T ? d.scores.T
                                                                       : d.scores.TE;
        datasets.push_back(Json{{"name", d.name},
                                {"fingerprint", hex64(d.fingerprint)},
                                {"rows", d.n_rows},
                                {"features", d.n_features},
                                {"test_rows", d.n_test},
                                {"metric", metric_name(d.metric)},
                                {"protocol_score", opt_json(headline)},
                                {"scores", std::move(scores)},
                                {"missing_folds", d.scores.missing_folds},
                                {"fallback",
                                 Json{{"cells", d.fallback.cells},
                                      {"fallbacks", d.fallback.fallbacks},
                                      {"rate_pct", d.fallback.aggregate_rate},
                                      {"best_config", d.fallback.best_config},
                                      {"best_config_folds", d.fallback.best_config_folds},
                                      {"best_config_fallbacks", d.fallback.best_config_fallbacks},
                                      {"best_config_rate_pct", d.fallback.best_config_rate}}}});
    }
    std::size_t cells = 0, fallbacks = 0;
    for (const DatasetResult& d : bench.datasets) {
        cells += d.fallback.cells;
        fallbacks += d.fallback.fallbacks;
    }
    Json win = nullptr;
    if (!bench.win_rates.win.empty()) {
        Json rows = Json::array(), ties = Json::array();
        for (std::size_t i = 0; i < bench.win_rates.methods.size(); ++i) {
            Json r = Json::array(), t = Json::array();
            for (std::size_t k = 0; k < bench.win_rates.methods.size(); ++k) {
                r.push_back(real_or_null(bench.win_rates.win(i, k)));
                t.push_back(real_or_null(bench.win_rates.tie(i, k)));
            }
            rows.push_back(std::move(r));
            ties.push_back(std::move(t));
        }
        win = Json{{"methods", bench.win_rates.methods}, {"win_pct", std::move(rows)}, {"tie_pct", std::move(ties)}};
    }
    return Json{{"protocol", protocol_name(opt.protocol)},
                {"ablation", ablation_name(opt.ablation)},
                {"folds", opt.n_folds},
                {"configs", bench.configs.size()},
                {"trials", bench.records.size()},
                {"failed_trials", std::count_if(bench.records.begin(), bench.records.end(),
                                                [](const TrialRecord& r) { return r.failed; })},
                {"datasets", std::move(datasets)},
                {"fallback",
                 Json{{"cells", cells},
                      {"fallbacks", fallbacks},
                      {"rate_pct", cells ? 100.0 * static_cast<double>(fallbacks) / static_cast<double>(cells) : 0.0}}},
                {"win_rates", std::move(win)}};
}

Json report_json(const InteractionReport& rep, const std::vector<std::string>& names) {
    auto name = [&](std::size_t i) { return i < names.size() ? names[i] : "x" + std::to_string(i + 1); };
    Json point = Json::object();
    for (std::size_t i = 0; i < rep.point.size(); ++i) point[name(i)] = rep.point[i];
    Json top = Json::array();
    for (const InteractionPair& p : rep.top)
        top.push_back(Json{{"i", name(p.i)}, {"j", name(p.j)}, {"magnitude", p.magnitude}});
    return Json{{"evaluation_point", std::move(point)}, {"top_pairs", std::move(top)}};
}

TrialConfig parse_config_text(std::string_view text, TrialConfig c) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    AdapterConfig& a = c.adapter;
    TrainConfig& t = c.train;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string v = trim(std::string_view(body).substr(eq + 1));

        if (key == "block_type") a.block = parse_block(v);
        else if (key == "num_layers") a.num_layers = parse_count(key, v);
        else if (key == "low_rank_ratio") a.low_rank_ratio = is_none(v) ? std::nullopt : std::optional(parse_real(key, v));
        else if (key == "hidden_dim") a.hidden_dim = parse_count(key, v);
        else if (key == "mlp_ratio") a.mlp_ratio = is_none(v) ? std::nullopt : std::optional(parse_real(key, v));
        else if (key == "h_min") a.h_min = parse_count(key, v);
        else if (key == "use_batch_norm") a.use_batch_norm = parse_flag(key, v);
        else if (key == "alpha_init") a.alpha_init = parse_real(key, v);
        else if (key == "alpha_shape") a.alpha_shape = parse_alpha_shape(v);
        else if (key == "weight_init") a.weight_init = parse_init(v);
        else if (key == "activation") a.activation = parse_activation(v);
        else if (key == "mlp_activation") a.mlp_activation = parse_activation(v);
        else if (key == "d_cap") a.d_cap = parse_count(key, v);
        else if (key == "projection_mode") a.projection_mode = parse_projection(v);
        else if (key == "optimizer") t.optimizer = parse_optimizer(v);
        else if (key == "lr") t.lr = parse_real(key, v);
        else if (key == "weight_decay") t.weight_decay = parse_real(key, v);
        else if (key == "beta2") t.beta2 = parse_real(key, v);
        else if (key == "max_grad_norm") t.max_grad_norm = parse_real(key, v);
        else if (key == "label_smoothing") t.label_smoothing = parse_real(key, v);
        else if (key == "epochs") t.epochs = parse_count(key, v);
        else if (key == "patience") t.patience = parse_count(key, v);
        else if (key == "lr_schedule") t.lr_schedule = parse_schedule(v);
        else if (key == "gate_lr_factor") t.gate_lr_factor = parse_real(key, v);
        else if (key == "context_fraction") t.context_fraction = parse_real(key, v);
        else if (key == "preprocessor") c.preprocessor = parse_preproc(v);
        else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    a.validate();
    t.validate();
    return c;
}

TrialConfig load_config_file(const std::filesystem::path& path, TrialConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace retouche
