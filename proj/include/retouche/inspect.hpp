#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "retouche/adapter.hpp"
#include "retouche/mat.hpp"

// Pairwise interaction strength of a cross block, read off the Hessian of its
// channel-summed output.
namespace retouche {

inline constexpr std::size_t default_top_k = 15;
inline constexpr double hessian_step = 1e-3;

struct InteractionPair {
    std::size_t i = 0, j = 0;  // 0-based, i < j
    double magnitude = 0.0;
};

struct InteractionReport {
    std::vector<double> point;  // column means of the reference rows
    Mat hessian;                // symmetric d×d
    std::vector<InteractionPair> top;
};

// f(x) = sum_k delta(x)_k, batchnorm in eval mode, one value per row of x.
std::vector<double> summed_block_output(const AdapterParams& params, const Mat& x);

// Nested central differences, stored symmetrized.
Mat block_hessian(const AdapterParams& params, const std::vector<double>& point, double step = hessian_step);

// Largest |H[i,j]| off the diagonal, descending; ties by (i, j).
std::vector<InteractionPair> top_pairs(const Mat& hessian, std::size_t k);

InteractionReport hessian_at_mean(const AdapterParams& params, const Mat& reference, std::size_t top_k = default_top_k,
                                  double step = hessian_step);

}  // namespace retouche
