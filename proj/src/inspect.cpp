#include "retouche/inspect.hpp"

#include <algorithm>
#include <cmath>

#include "retouche/error.hpp"

namespace retouche {

std::vector<double> summed_block_output(const AdapterParams& params, const Mat& x) {
    const Mat delta = cross_delta(params, x, Mode::eval);
    std::vector<double> f(delta.rows(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r)
        for (double v : delta.row_span(r)) f[r] += v;
    return f;
}

Mat block_hessian(const AdapterParams& params, const std::vector<double>& point, double h) {
    if (params.config.block != BlockType::cross)
        throw IncompatibleModelError("interaction inspection needs a cross-block adapter; this model has an MLP block");
    const std::size_t d = point.size();
    if (d != params.input_dim)
        throw ShapeError("inspect: point has " + std::to_string(d) + " coordinates, adapter expects " +
                         std::to_string(params.input_dim));
    if (!(h > 0.0)) throw ConfigError("inspect: step must be positive");

    // Four probes per (i <= j) pair, evaluated as one batch.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) pairs.emplace_back(i, j);
    Mat probes(4 * pairs.size(), d);
    const double signs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (std::size_t s = 0; s < 4; ++s) {
            const std::size_t r = 4 * p + s;
            for (std::size_t c = 0; c < d; ++c) probes(r, c) = point[c];
            probes(r, pairs[p].first) += signs[s][0] * h;
            probes(r, pairs[p].second) += signs[s][1] * h;
        }
    }
    const std::vector<double> f = summed_block_output(params, probes);

    Mat hess(d, d);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double v = (f[4 * p] - f[4 * p + 1] - f[4 * p + 2] + f[4 * p + 3]) / (4.0 * h * h);
        const auto [i, j] = pairs[p];
        hess(i, j) = v;
        hess(j, i) = v;
    }
    return hess;
}

std::vector<InteractionPair> top_pairs(const Mat& hess, std::size_t k) {
    std::vector<InteractionPair> all;
    for (std::size_t i = 0; i < hess.rows(); ++i)
        for (std::size_t j = i + 1; j < hess.cols(); ++j) all.push_back({i, j, std::abs(hess(i, j))});
    std::stable_sort(all.begin(), all.end(),
                     [](const InteractionPair& a, const InteractionPair& b) { return a.magnitude > b.magnitude; });
    if (all.size() > k) all.resize(k);
    return all;
}

InteractionReport hessian_at_mean(const AdapterParams& params, const Mat& reference, std::size_t top_k, double step) {
    if (reference.rows() == 0) throw DataError("inspect: no reference rows");
    InteractionReport rep;
    // Summing each column in sorted order makes the mean independent of row order.
    std::vector<double> col(reference.rows());
    for (std::size_t c = 0; c < reference.cols(); ++c) {
        for (std::size_t r = 0; r < reference.rows(); ++r) col[r] = reference(r, c);
        std::sort(col.begin(), col.end());
        double s = 0.0;
        for (double v : col) s += v;
        rep.point.push_back(s / static_cast<double>(reference.rows()));
    }
    rep.hessian = block_hessian(params, rep.point, step);
    rep.top = top_pairs(rep.hessian, top_k);
    return rep;
}

}  // namespace retouche
