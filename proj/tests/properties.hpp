#pragma once

#include <cmath>
#include <cstdint>

#include "support.hpp"

// Structural adapter properties shared by the unit tests and the acceptance run.
namespace testing {

// A configuration drawn from the search space with the block forced.
inline AdapterConfig drawn_config(std::uint64_t seed, BlockType block, std::optional<bool> batch_norm = {}) {
    const auto configs = sample_configs(SearchSpace{}, 1, seed);
    AdapterConfig c = configs[1].adapter;
    c.block = block;
    if (block == BlockType::mlp) {
        c.low_rank_ratio.reset();
        Rng rng(seed);
        c.hidden_dim = 2 + rng() % 10;
        c.mlp_activation = rng() % 2 ? Activation::relu : Activation::gelu;
    }
    if (batch_norm) c.use_batch_norm = *batch_norm;
    return c;
}

// Max |adapter_forward - residual_form| over n random (config, input) pairs, batchnorm off.
inline double equivalence_error(BlockType block, std::size_t pairs, std::uint64_t seed) {
    double worst = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
        Rng rng(mix_seed(seed, {i}));
        const std::size_t d = 2 + rng() % 9, n = 1 + rng() % 12;
        AdapterParams p = init_adapter(d, drawn_config(mix_seed(seed, {i, 1}), block, false), i);
        scramble(p, rng, 0.4);
        const Mat x = random_mat(n, d, rng);
        worst = std::max(worst, max_abs_diff(adapter_forward(p, x), residual_form(p, x)));
    }
    return worst;
}

// True when alpha = 0 reproduces the input bit for bit, train and eval mode.
inline bool alpha_zero_identity(const AdapterConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = 2 + rng() % 9;
    AdapterConfig c = config;
    c.alpha_init = 0.0;
    AdapterParams p = init_adapter(d, c, seed);
    const Mat alpha = p.alpha;
    scramble(p, rng, 0.5);
    p.alpha = alpha;
    const Mat x = random_mat(7, d, rng, 2.0);
    return adapter_forward(p, x, Mode::eval) == x && adapter_forward(p, x, Mode::train) == x;
}

// Largest normalized (L+2)-th forward difference of any delta channel along
// random rays; the cross block is a polynomial of degree L+1.
inline double degree_residual(std::size_t layers, std::size_t rays, std::uint64_t seed) {
    AdapterConfig c;
    c.num_layers = layers;
    c.low_rank_ratio.reset();
    c.use_batch_norm = false;
    c.activation = Activation::none;
    const std::size_t d = 5;
    Rng rng(seed);
    AdapterParams p = init_adapter(d, c, seed);
    scramble(p, rng, 0.5);
    const std::size_t order = layers + 2;
    double worst = 0.0;
    for (std::size_t r = 0; r < rays; ++r) {
        const Mat x0 = random_mat(1, d, rng);
        const Mat v = random_mat(1, d, rng);
        const double step = 0.5;
        Mat pts(order + 1, d);
        for (std::size_t k = 0; k <= order; ++k)
            for (std::size_t j = 0; j < d; ++j) pts(k, j) = x0[j] + static_cast<double>(k) * step * v[j];
        const Mat f = cross_delta(p, pts);
        for (std::size_t ch = 0; ch < d; ++ch) {
            double diff = 0.0, scale = 0.0, binom = 1.0;
            for (std::size_t k = 0; k <= order; ++k) {
                const double sign = (order - k) % 2 == 0 ? 1.0 : -1.0;
                diff += sign * binom * f(k, ch);
                scale += binom * std::abs(f(k, ch));
                binom = binom * static_cast<double>(order - k) / static_cast<double>(k + 1);
            }
            worst = std::max(worst, std::abs(diff) / std::max(scale, 1e-300));
        }
    }
    return worst;
}

}  // namespace testing
