#pragma once

#include <cstddef>
#include <vector>

#include "delta/error.hpp"

namespace delta {

/// Dense row-major matrix of doubles.  Small by design: the library operates
/// at desk scale and needs nothing beyond element access and row views.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    const double* row(std::size_t r) const { return values_.data() + r * cols_; }
    double* row(std::size_t r) { return values_.data() + r * cols_; }

    std::vector<double> row_vector(std::size_t r) const {
        return std::vector<double>(row(r), row(r) + cols_);
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

}  // namespace delta
