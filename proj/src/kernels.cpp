#include "retouche/kernels.hpp"

#include <omp.h>

#include "retouche/error.hpp"

namespace retouche::kernels {

namespace {

const Mat& oriented(const Mat& m, Trans t, Mat& storage) {
    if (t == Trans::no) return m;
    storage = m.transposed();
    return storage;
}

void check_inner(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        throw ShapeError("gemm: inner dimensions differ " + a.shape_string() + " * " + b.shape_string());
}

// C row i accumulated as sum_k A[i,k] * B[k,:], k ascending.
inline void gemm_row(const Mat& a, const Mat& b, Mat& c, std::size_t i) {
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    double* out = c.data() + i * n;
    const double* arow = a.data() + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
        const double aik = arow[k];
        const double* brow = b.data() + k * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
    }
}

inline double sq_dist(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - y[k];
        s += diff * diff;
    }
    return s;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

Mat gemm(const Mat& a_in, const Mat& b_in, Trans ta, Trans tb) {
    Mat sa, sb;
    const Mat& a = oriented(a_in, ta, sa);
    const Mat& b = oriented(b_in, tb, sb);
    check_inner(a, b);
    Mat c(a.rows(), b.cols());
    const std::size_t work = a.rows() * a.cols() * b.cols();
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (work > parallel_threshold && !omp_in_parallel())
    for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_row(a, b, c, static_cast<std::size_t>(i));
    return c;
}

Mat pairwise_sq_dist(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols())
        throw ShapeError("pairwise_sq_dist: column counts differ " + a.shape_string() + " vs " + b.shape_string());
    Mat d(a.rows(), b.rows());
    const std::size_t work = a.rows() * b.rows() * a.cols();
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (work > parallel_threshold && !omp_in_parallel())
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < b.rows(); ++j) d(iu, j) = sq_dist(a.row_span(iu), b.row_span(j));
    }
    return d;
}

namespace reference {

Mat gemm(const Mat& a_in, const Mat& b_in, Trans ta, Trans tb) {
    Mat sa, sb;
    const Mat& a = oriented(a_in, ta, sa);
    const Mat& b = oriented(b_in, tb, sb);
    check_inner(a, b);
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Mat pairwise_sq_dist(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols())
        throw ShapeError("pairwise_sq_dist: column counts differ " + a.shape_string() + " vs " + b.shape_string());
    Mat d(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) d(i, j) = sq_dist(a.row_span(i), b.row_span(j));
    return d;
}

}  // namespace reference

}  // namespace retouche::kernels
