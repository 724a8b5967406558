#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace retouche {

// Dense row-major matrix of doubles. Vectors are 1×n or n×1 matrices.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Mat row(std::initializer_list<double> values);
    static Mat identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    std::span<const double> row_span(std::size_t r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }

    bool same_shape(const Mat& other) const noexcept { return rows_ == other.rows_ && cols_ == other.cols_; }
    bool all_finite() const noexcept;
    std::string shape_string() const;

    Mat transposed() const;

    // Bit-exact comparison of shape and contents.
    friend bool operator==(const Mat& a, const Mat& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

double max_abs(const Mat& m) noexcept;
double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace retouche
