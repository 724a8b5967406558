#include "retouche/mat.hpp"

#include <algorithm>
#include <cmath>

#include "retouche/error.hpp"

namespace retouche {

Mat::Mat(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
        throw ShapeError("Mat: " + std::to_string(values_.size()) + " values do not fill a " + std::to_string(rows) +
                         "x" + std::to_string(cols) + " matrix");
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Mat(r, c, std::move(v));
}

Mat Mat::row(std::initializer_list<double> values) { return Mat(1, values.size(), std::vector<double>(values)); }

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Mat::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

std::string Mat::shape_string() const { return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

Mat Mat::transposed() const {
    Mat t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double max_abs(const Mat& m) noexcept {
    double best = 0.0;
    for (double x : m.values()) best = std::max(best, std::abs(x));
    return best;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
    return best;
}

}  // namespace retouche
