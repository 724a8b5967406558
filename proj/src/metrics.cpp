#include "retouche/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "retouche/error.hpp"

namespace retouche {

std::string_view metric_name(MetricKind m) noexcept {
    switch (m) {
        case MetricKind::one_minus_auc: return "one_minus_auc";
        case MetricKind::logloss: return "logloss";
        case MetricKind::mse: return "mse";
    }
    return "unknown";
}

MetricKind parse_metric(std::string_view text) {
    for (MetricKind m : {MetricKind::one_minus_auc, MetricKind::logloss, MetricKind::mse})
        if (text == metric_name(m)) return m;
    throw ConfigError("unknown metric '" + std::string(text) + "'");
}

MetricKind metric_for(TaskKind task) noexcept {
    switch (task) {
        case TaskKind::binary: return MetricKind::one_minus_auc;
        case TaskKind::multiclass: return MetricKind::logloss;
        case TaskKind::regression: return MetricKind::mse;
    }
    return MetricKind::mse;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auc: score/label length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1 ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;

    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double logloss(const Mat& p, const Targets& t) {
    if (p.rows() != t.size() || p.cols() != t.n_classes)
        throw ShapeError("logloss: predictions " + p.shape_string() + " for " + std::to_string(t.size()) + " targets");
    if (t.size() == 0) throw DataError("logloss: no rows");
    double s = 0.0;
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto k = static_cast<std::size_t>(t.values[r]);
        s -= std::log(std::max(p(r, k), probability_floor));
    }
    return s / static_cast<double>(t.size());
}

double mse(const Mat& p, const Targets& t) {
    if (p.rows() != t.size() || p.cols() != 1)
        throw ShapeError("mse: predictions " + p.shape_string() + " for " + std::to_string(t.size()) + " targets");
    if (t.size() == 0) throw DataError("mse: no rows");
    double s = 0.0;
    for (std::size_t r = 0; r < t.size(); ++r) s += (p(r, 0) - t.values[r]) * (p(r, 0) - t.values[r]);
    return s / static_cast<double>(t.size());
}

double deployment_metric(const Mat& p, const Targets& t) {
    switch (metric_for(t.task)) {
        case MetricKind::one_minus_auc: {
            if (p.rows() != t.size() || p.cols() != 2) throw ShapeError("auc: expected n×2 probabilities");
            std::vector<double> s(t.size());
            std::vector<int> l(t.size());
            for (std::size_t r = 0; r < t.size(); ++r) {
                s[r] = p(r, 1);
                l[r] = static_cast<int>(t.values[r]);
            }
            return 1.0 - auc(s, l);
        }
        case MetricKind::logloss: return logloss(p, t);
        case MetricKind::mse: return mse(p, t);
    }
    return mse(p, t);
}

}  // namespace retouche
