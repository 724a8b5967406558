#pragma once

#include "retouche/mat.hpp"

// Dense kernels used by the tape and the backbones.
//
// The default entry points split the outer (row) loop across OpenMP threads.
// Every output element is accumulated by a single thread in the same order as
// the serial reference in `kernels::reference`, so both produce bit-identical
// results; the reference exists for tests and the benchmark.
namespace retouche::kernels {

enum class Trans { no, yes };

// op(A) * op(B).
Mat gemm(const Mat& a, const Mat& b, Trans ta = Trans::no, Trans tb = Trans::no);

// D[i,j] = ||a_i - b_j||^2 for row sets a (n×d) and b (m×d).
Mat pairwise_sq_dist(const Mat& a, const Mat& b);

// Work (multiply-adds) above which a kernel opens a parallel region.
inline constexpr std::size_t parallel_threshold = 1u << 15;

int max_threads();

namespace reference {

Mat gemm(const Mat& a, const Mat& b, Trans ta = Trans::no, Trans tb = Trans::no);
Mat pairwise_sq_dist(const Mat& a, const Mat& b);

}  // namespace reference

}  // namespace retouche::kernels
