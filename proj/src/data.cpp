#include "retouche/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "retouche/error.hpp"
#include "retouche/rng.hpp"

namespace retouche {

namespace {

std::optional<double> parse_real(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Splits one CSV record; handles quoted fields with doubled quotes. Returns
// false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            break;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

void write_field(std::ostream& out, const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        out << s;
        return;
    }
    out << '"';
    for (char c : s) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

bool blank(const std::vector<std::string>& fields) { return fields.size() == 1 && fields[0].empty(); }

std::vector<std::string> sorted_labels(const std::set<std::string>& labels, bool numeric) {
    std::vector<std::string> out(labels.begin(), labels.end());
    if (numeric)
        std::stable_sort(out.begin(), out.end(),
                         [](const std::string& a, const std::string& b) { return *parse_real(a) < *parse_real(b); });
    return out;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    std::shuffle(v.begin(), v.end(), rng);
}

// Row indices grouped by class (classification) or a single group (regression).
std::vector<std::vector<std::size_t>> strata(const Dataset& ds, std::span<const std::size_t> rows) {
    if (ds.task == TaskKind::regression) return {std::vector<std::size_t>(rows.begin(), rows.end())};
    std::vector<std::vector<std::size_t>> groups(ds.n_classes());
    for (std::size_t r : rows) groups[static_cast<std::size_t>(ds.label(r))].push_back(r);
    return groups;
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
    std::vector<std::size_t> rows(ds.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

// Stratified split of `rows` into (kept, taken) with |taken| ~= fraction * |rows|.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_take(const Dataset& ds,
                                                                              std::span<const std::size_t> rows,
                                                                              double fraction, Rng& rng) {
    std::vector<std::size_t> kept, taken;
    for (auto& group : strata(ds, rows)) {
        if (group.empty()) continue;
        shuffle(group, rng);
        auto n_take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size())));
        if (group.size() > 1) n_take = std::min(n_take, group.size() - 1);
        else n_take = 0;
        taken.insert(taken.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_take));
        kept.insert(kept.end(), group.begin() + static_cast<std::ptrdiff_t>(n_take), group.end());
    }
    std::sort(kept.begin(), kept.end());
    std::sort(taken.begin(), taken.end());
    return {std::move(kept), std::move(taken)};
}

}  // namespace

std::string_view task_name(TaskKind kind) noexcept {
    switch (kind) {
        case TaskKind::binary: return "binary";
        case TaskKind::multiclass: return "multiclass";
        case TaskKind::regression: return "regression";
    }
    return "unknown";
}

TaskHint parse_task_hint(std::string_view text) {
    if (text == "auto") return TaskHint::automatic;
    if (text == "binary") return TaskHint::binary;
    if (text == "multiclass") return TaskHint::multiclass;
    if (text == "regression") return TaskHint::regression;
    throw ConfigError("unknown task '" + std::string(text) + "' (auto|binary|multiclass|regression)");
}

bool Column::missing(std::size_t row) const {
    return kind == ColumnKind::numeric ? !numbers[row].has_value() : !tokens[row].has_value();
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.name = name;
    out.target_name = target_name;
    out.task = task;
    out.classes = classes;
    out.columns.reserve(columns.size());
    for (const Column& c : columns) {
        Column s{c.name, c.kind, {}, {}};
        for (std::size_t r : rows) {
            if (r >= n_rows()) throw DataError("subset: row " + std::to_string(r) + " out of range");
            if (c.kind == ColumnKind::numeric) s.numbers.push_back(c.numbers[r]);
            else s.tokens.push_back(c.tokens[r]);
        }
        out.columns.push_back(std::move(s));
    }
    for (std::size_t r : rows) out.y.push_back(y[r]);
    return out;
}

void Dataset::validate() const {
    for (const Column& c : columns)
        if (c.size() != n_rows()) throw DataError("column '" + c.name + "' has " + std::to_string(c.size()) + " cells, expected " + std::to_string(n_rows()));
    switch (task) {
        case TaskKind::binary:
            if (classes.size() != 2) throw DataError("binary target needs exactly 2 labels");
            break;
        case TaskKind::multiclass:
            if (classes.size() < 3) throw DataError("multiclass target needs at least 3 labels");
            break;
        case TaskKind::regression:
            for (double v : y)
                if (!std::isfinite(v)) throw DataError("regression target has a non-finite value");
            return;
    }
    for (double v : y)
        if (v < 0 || v >= static_cast<double>(classes.size()) || v != std::floor(v))
            throw DataError("class index out of range");
}

std::uint64_t Dataset::fingerprint() const {
    std::ostringstream os;
    write_csv(*this, os);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Dataset read_csv(std::istream& in, std::string_view target_column, TaskHint hint, std::string name) {
    std::vector<std::string> header;
    if (!read_record(in, header) || blank(header)) throw DataError("empty file: no header row");
    const auto target_it = std::find(header.begin(), header.end(), target_column);
    if (target_it == header.end()) throw DataError("target column '" + std::string(target_column) + "' not found");
    const auto target_idx = static_cast<std::size_t>(target_it - header.begin());

    std::vector<std::vector<std::string>> cells(header.size());
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (read_record(in, fields)) {
        ++line;
        if (blank(fields)) continue;
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line) + ": " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) cells[c].push_back(std::move(fields[c]));
    }
    if (cells[target_idx].empty()) throw DataError("empty file: no data rows");

    Dataset ds;
    ds.name = std::move(name);
    ds.target_name = std::string(target_column);

    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == target_idx) continue;
        const auto& col = cells[c];
        bool numeric = true;
        bool any_present = false;
        for (const auto& s : col) {
            if (s.empty()) continue;
            any_present = true;
            if (!parse_real(s)) {
                numeric = false;
                break;
            }
        }
        if (!any_present) throw DataError("column '" + header[c] + "' is entirely missing");
        Column out{header[c], numeric ? ColumnKind::numeric : ColumnKind::categorical, {}, {}};
        for (const auto& s : col) {
            if (numeric) out.numbers.push_back(parse_real(s));
            else out.tokens.push_back(s.empty() ? std::nullopt : std::optional<std::string>(s));
        }
        ds.columns.push_back(std::move(out));
    }

    const auto& target = cells[target_idx];
    std::set<std::string> labels;
    bool numeric_target = true;
    for (std::size_t r = 0; r < target.size(); ++r) {
        if (target[r].empty()) throw DataError("target column has a missing value at row " + std::to_string(r + 1));
        labels.insert(target[r]);
        numeric_target = numeric_target && parse_real(target[r]).has_value();
    }

    TaskKind task;
    switch (hint) {
        case TaskHint::regression:
            if (!numeric_target) throw DataError("regression target must be numeric");
            task = TaskKind::regression;
            break;
        case TaskHint::binary:
            task = TaskKind::binary;
            break;
        case TaskHint::multiclass:
            task = TaskKind::multiclass;
            break;
        case TaskHint::automatic:
        default:
            if (numeric_target && labels.size() > regression_distinct_threshold) task = TaskKind::regression;
            else if (labels.size() == 2) task = TaskKind::binary;
            else task = TaskKind::multiclass;
            break;
    }
    ds.task = task;
    if (task == TaskKind::regression) {
        for (const auto& s : target) ds.y.push_back(*parse_real(s));
    } else {
        ds.classes = sorted_labels(labels, numeric_target);
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < ds.classes.size(); ++i) index[ds.classes[i]] = i;
        for (const auto& s : target) ds.y.push_back(static_cast<double>(index.at(s)));
    }
    ds.validate();
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view target_column, TaskHint hint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return read_csv(in, target_column, hint, path.stem().string());
}

void write_csv(const Dataset& ds, std::ostream& out) {
    for (const Column& c : ds.columns) {
        write_field(out, c.name);
        out << ',';
    }
    write_field(out, ds.target_name);
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (const Column& c : ds.columns) {
            if (c.kind == ColumnKind::numeric) {
                if (c.numbers[r]) out << format_real(*c.numbers[r]);
            } else if (c.tokens[r]) {
                write_field(out, *c.tokens[r]);
            }
            out << ',';
        }
        if (ds.task == TaskKind::regression) out << format_real(ds.y[r]);
        else write_field(out, ds.classes[static_cast<std::size_t>(ds.label(r))]);
        out << '\n';
    }
}

std::string_view generator_name(Generator g) noexcept {
    switch (g) {
        case Generator::planted_interaction: return "planted_interaction";
        case Generator::linear_aligned: return "linear_aligned";
        case Generator::monotone_single: return "monotone_single";
    }
    return "unknown";
}

Generator parse_generator(std::string_view text) {
    for (Generator g : {Generator::planted_interaction, Generator::linear_aligned, Generator::monotone_single})
        if (text == generator_name(g)) return g;
    throw ConfigError("unknown generator '" + std::string(text) + "'");
}

void SynthSpec::validate() const {
    if (n < 50) throw ConfigError("synthetic n must be >= 50");
    if (d < 2) throw ConfigError("synthetic d must be >= 2");
    if (!(noise_sd >= 0.0)) throw ConfigError("synthetic noise_sd must be >= 0");
    if (task == TaskKind::multiclass) throw ConfigError("synthetic tasks are regression or binary");
    if (weights && weights->size() != d) throw ConfigError("weight override must have d entries");
}

SynthSpec parse_synth_spec(std::string_view text) {
    SynthSpec spec;
    const auto colon = text.find(':');
    spec.generator = parse_generator(text.substr(0, colon));
    if (colon == std::string_view::npos) return spec;
    std::string rest(text.substr(colon + 1));
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic spec item '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            if (key == "n") spec.n = std::stoul(value);
            else if (key == "d") spec.d = std::stoul(value);
            else if (key == "noise") spec.noise_sd = std::stod(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "task") {
                const TaskHint h = parse_task_hint(value);
                spec.task = h == TaskHint::binary ? TaskKind::binary : TaskKind::regression;
            } else throw ConfigError("unknown synthetic spec key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("bad value for synthetic spec key '" + key + "': " + value);
        }
    }
    spec.validate();
    return spec;
}

std::string describe(const SynthSpec& spec) {
    std::ostringstream os;
    os << generator_name(spec.generator) << ":n=" << spec.n << ",d=" << spec.d << ",noise=" << format_real(spec.noise_sd)
       << ",seed=" << spec.seed << ",task=" << task_name(spec.task);
    return os.str();
}

Dataset generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, {static_cast<std::uint64_t>(spec.generator)}));
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::vector<double>> x(spec.d, std::vector<double>(spec.n));
    for (std::size_t r = 0; r < spec.n; ++r)
        for (std::size_t c = 0; c < spec.d; ++c) x[c][r] = normal(rng);

    std::vector<double> w;
    if (spec.generator == Generator::linear_aligned) {
        if (spec.weights) {
            w = *spec.weights;
        } else {
            Rng wrng(mix_seed(spec.seed, {0x77ULL}));
            for (std::size_t c = 0; c < spec.d; ++c) w.push_back(normal(wrng));
        }
    }

    Dataset ds;
    ds.name = std::string(generator_name(spec.generator));
    ds.target_name = "y";
    for (std::size_t c = 0; c < spec.d; ++c) {
        Column col{"x" + std::to_string(c + 1), ColumnKind::numeric, {}, {}};
        col.numbers.assign(x[c].begin(), x[c].end());
        ds.columns.push_back(std::move(col));
    }
    std::vector<double> signal(spec.n);
    for (std::size_t r = 0; r < spec.n; ++r) {
        switch (spec.generator) {
            case Generator::planted_interaction:
                signal[r] = x[0][r] * x[1][r];
                break;
            case Generator::linear_aligned: {
                double s = 0.0;
                for (std::size_t c = 0; c < spec.d; ++c) s += w[c] * x[c][r];
                signal[r] = s;
                break;
            }
            case Generator::monotone_single:
                signal[r] = std::tanh(3.0 * x[0][r]);
                break;
        }
        if (spec.noise_sd > 0.0) signal[r] += spec.noise_sd * normal(rng);
    }
    ds.task = spec.task;
    if (spec.task == TaskKind::binary) {
        ds.classes = {"0", "1"};
        for (double s : signal) ds.y.push_back(s > 0.0 ? 1.0 : 0.0);
    } else {
        ds.y = std::move(signal);
    }
    ds.validate();
    return ds;
}

SplitPlan make_splits(const Dataset& ds, std::size_t n_folds, double val_fraction, std::uint64_t seed) {
    if (n_folds < 2) throw ConfigError("make_splits: n_folds must be >= 2");
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw ConfigError("make_splits: val_fraction must lie in (0, 0.5)");
    if (ds.n_rows() < n_folds) throw DataError("make_splits: fewer rows than folds");

    Rng rng(mix_seed(seed, {0xF01DULL}));
    auto groups = strata(ds, all_rows(ds));
    if (ds.task != TaskKind::regression)
        for (std::size_t k = 0; k < groups.size(); ++k)
            if (groups[k].size() < n_folds)
                throw DataError("make_splits: class '" + ds.classes[k] + "' has " + std::to_string(groups[k].size()) +
                                " rows, fewer than " + std::to_string(n_folds) + " folds");

    SplitPlan plan;
    plan.n_folds = n_folds;
    plan.val_fraction = val_fraction;
    plan.fold_of_row.assign(ds.n_rows(), 0);
    // Deal each shuffled stratum round-robin, continuing the rotation across strata
    // so fold sizes differ by at most one.
    std::size_t pos = 0;
    for (auto& group : groups) {
        shuffle(group, rng);
        for (std::size_t r : group) plan.fold_of_row[r] = pos++ % n_folds;
    }

    plan.folds.resize(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
        std::vector<std::size_t> remainder;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            if (plan.fold_of_row[r] == f) plan.folds[f].test.push_back(r);
            else remainder.push_back(r);
        }
        Rng frng(mix_seed(seed, {0xFA11ULL, f}));
        auto [train, val] = stratified_take(ds, remainder, val_fraction, frng);
        plan.folds[f].train = std::move(train);
        plan.folds[f].validation = std::move(val);
    }
    return plan;
}

SplitPlan single_fold_plan(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw ConfigError("single_fold_plan: val_fraction must lie in (0, 0.5)");
    SplitPlan plan;
    plan.n_folds = 1;
    plan.val_fraction = val_fraction;
    plan.fold_of_row.assign(ds.n_rows(), 0);
    Rng rng(mix_seed(seed, {0xFA11ULL, 0}));
    auto rows = all_rows(ds);
    auto [train, val] = stratified_take(ds, rows, val_fraction, rng);
    plan.folds.push_back(FoldSplit{std::move(train), std::move(val), {}});
    return plan;
}

Holdout holdout_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
    Rng rng(mix_seed(seed, {0x7E57ULL}));
    auto rows = all_rows(ds);
    auto [dev, test] = stratified_take(ds, rows, test_fraction, rng);
    return Holdout{std::move(dev), std::move(test)};
}

}  // namespace retouche
