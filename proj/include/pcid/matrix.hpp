#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcid/errors.hpp"

namespace pcid {

/// Small dense row-major matrix of doubles.
///
/// Sized at runtime because the regression dimensions (n, m, p) come from the
/// scenario configuration. Every identifier in this library that holds a
/// vector uses an n x 1 Matrix.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), data_(std::move(entries)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("Matrix: entry count " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
        }
    }

    /// Row-wise literal: Matrix::from_rows({{1, 2}, {3, 4}}).
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        Matrix m(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw DimensionError("Matrix::from_rows: ragged rows");
            }
            std::size_t j = 0;
            for (double v : row) {
                m(i, j++) = v;
            }
            ++i;
        }
        return m;
    }

    static Matrix column(std::initializer_list<double> values) {
        return Matrix(values.size(), 1, std::vector<double>(values));
    }

    static Matrix column(std::span<const double> values) {
        return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<double> entries() noexcept { return data_; }
    [[nodiscard]] std::span<const double> entries() const noexcept { return data_; }

    [[nodiscard]] Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    /// Frobenius norm (Euclidean norm for vectors).
    [[nodiscard]] double norm() const noexcept {
        double s = 0.0;
        for (double v : data_) {
            s += v * v;
        }
        return std::sqrt(s);
    }

    [[nodiscard]] double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void set_zero() noexcept { std::fill(data_.begin(), data_.end(), 0.0); }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += o.data_[i];
        }
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] -= o.data_[i];
        }
        return *this;
    }

    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) {
            v *= s;
        }
        return *this;
    }

    /// this += s * o, without a temporary.
    Matrix& add_scaled(const Matrix& o, double s) {
        require_same_shape(o, "add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += s * o.data_[i];
        }
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) noexcept { return a *= s; }
    friend Matrix operator*(double s, Matrix a) noexcept { return a *= s; }
    friend Matrix operator/(Matrix a, double s) noexcept { return a *= (1.0 / s); }

    friend Matrix operator-(Matrix a) noexcept { return a *= -1.0; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) {
            throw DimensionError("Matrix product: " + a.shape() + " * " + b.shape());
        }
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) {
                    continue;
                }
                for (std::size_t j = 0; j < b.cols_; ++j) {
                    out(i, j) += aik * b(k, j);
                }
            }
        }
        return out;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) noexcept {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    [[nodiscard]] std::string shape() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw DimensionError(std::string("Matrix ") + op + ": " + shape() + " vs " + o.shape());
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Stacks column vectors vertically.
inline Matrix vstack(std::initializer_list<const Matrix*> parts) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const Matrix* p : parts) {
        if (cols != 0 && p->cols() != cols) {
            throw DimensionError("vstack: column mismatch");
        }
        cols = p->cols();
        rows += p->rows();
    }
    Matrix out(rows, cols);
    std::size_t r0 = 0;
    for (const Matrix* p : parts) {
        for (std::size_t i = 0; i < p->rows(); ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                out(r0 + i, j) = (*p)(i, j);
            }
        }
        r0 += p->rows();
    }
    return out;
}

/// Copies rows [first, first + count) into a new matrix.
inline Matrix row_block(const Matrix& m, std::size_t first, std::size_t count) {
    if (first + count > m.rows()) {
        throw DimensionError("row_block: out of range");
    }
    Matrix out(count, m.cols());
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = m(first + i, j);
        }
    }
    return out;
}

}  // namespace pcid
