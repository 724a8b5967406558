#include "retouche/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "retouche/error.hpp"

namespace retouche {

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population mean/sd; a constant column gets its exact value as mean and sd 1.
void fit_scale(const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) {
        mean = 0.0;
        sd = 1.0;
        return;
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) {
        mean = *lo;
        sd = 1.0;
        return;
    }
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
    if (!(sd > 0.0)) sd = 1.0;
}

const std::string& token_or_missing(const std::optional<std::string>& t) { return t ? *t : missing_token; }

}  // namespace

std::string_view preproc_name(PreprocVariant v) noexcept {
    return v == PreprocVariant::ordinal_scaled ? "ordinal-scaled" : "onehot-ordinal";
}

PreprocVariant parse_preproc(std::string_view text) {
    if (text == "ordinal-scaled") return PreprocVariant::ordinal_scaled;
    if (text == "onehot-ordinal") return PreprocVariant::onehot_ordinal;
    throw ConfigError("unknown preprocessor '" + std::string(text) + "'");
}

std::vector<std::string> FittedPreproc::channel_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns) {
        if (c.onehot)
            for (const auto& level : c.levels) names.push_back(c.name + "=" + level);
        else
            names.push_back(c.name);
    }
    return names;
}

FittedPreproc fit_preproc(const Dataset& train, const PreprocSpec& spec) {
    if (train.n_rows() == 0) throw DataError("preprocess fit: zero training rows");
    if (spec.onehot_max_levels < 2) throw ConfigError("onehot_max_levels must be >= 2");

    FittedPreproc fitted;
    fitted.spec = spec;
    for (const Column& col : train.columns) {
        ColumnTransform ct;
        ct.name = col.name;
        ct.kind = col.kind;
        if (col.kind == ColumnKind::numeric) {
            std::vector<double> present;
            for (const auto& v : col.numbers)
                if (v) present.push_back(*v);
            ct.median = median_of(present);
            std::vector<double> imputed;
            imputed.reserve(col.numbers.size());
            for (const auto& v : col.numbers) imputed.push_back(v ? *v : ct.median);
            fit_scale(imputed, ct.mean, ct.sd);
        } else {
            std::map<std::string, std::size_t> index;
            std::vector<double> codes;
            for (const auto& t : col.tokens) {
                const std::string& tok = token_or_missing(t);
                auto [it, inserted] = index.try_emplace(tok, ct.levels.size());
                if (inserted) ct.levels.push_back(tok);
                codes.push_back(static_cast<double>(it->second));
            }
            ct.onehot = spec.variant == PreprocVariant::onehot_ordinal && ct.levels.size() <= spec.onehot_max_levels;
            if (!ct.onehot) fit_scale(codes, ct.mean, ct.sd);
        }
        fitted.output_dim += ct.width();
        fitted.columns.push_back(std::move(ct));
    }
    return fitted;
}

Mat transform(const FittedPreproc& fitted, const Dataset& rows) {
    if (rows.n_features() != fitted.columns.size())
        throw DataError("transform: " + std::to_string(rows.n_features()) + " columns, fitted schema has " +
                        std::to_string(fitted.columns.size()));
    Mat out(rows.n_rows(), fitted.output_dim);
    std::size_t off = 0;
    for (std::size_t c = 0; c < fitted.columns.size(); ++c) {
        const ColumnTransform& ct = fitted.columns[c];
        const Column& col = rows.columns[c];
        if (col.kind != ct.kind)
            throw DataError("transform: column '" + col.name + "' kind differs from the fitted schema");
        if (ct.kind == ColumnKind::numeric) {
            for (std::size_t r = 0; r < rows.n_rows(); ++r) {
                const double v = col.numbers[r] ? *col.numbers[r] : ct.median;
                out(r, off) = (v - ct.mean) / ct.sd;
            }
        } else {
            std::map<std::string, std::size_t> index;
            for (std::size_t i = 0; i < ct.levels.size(); ++i) index.emplace(ct.levels[i], i);
            for (std::size_t r = 0; r < rows.n_rows(); ++r) {
                auto it = index.find(token_or_missing(col.tokens[r]));
                const std::size_t code = it == index.end() ? ct.levels.size() : it->second;
                if (ct.onehot) {
                    if (code < ct.levels.size()) out(r, off + code) = 1.0;
                } else {
                    out(r, off) = (static_cast<double>(code) - ct.mean) / ct.sd;
                }
            }
        }
        off += ct.width();
    }
    return out;
}

}  // namespace retouche
