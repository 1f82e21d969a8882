#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nre/errors.hpp"

namespace nre {

/// Dense row-major matrix of 64-bit floats. The only tensor type in the
/// library; column vectors are n x 1 matrices.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    void require_same_shape(const Matrix& o, const std::string& op) const {
        if (!same_shape(o))
            throw ShapeError(op + ": shape mismatch (" + std::to_string(rows_) + "x" +
                             std::to_string(cols_) + " vs " + std::to_string(o.rows_) + "x" +
                             std::to_string(o.cols_) + ")");
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C = A * B. ikj loop order keeps the inner loop contiguous in both B and C.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    Matrix c(a.rows(), b.cols(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        double* crow = c.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

/// C = A * B^T.
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_bt: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    Matrix c(a.rows(), b.rows(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        double* crow = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
    return c;
}

/// C = A^T * B.
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_at: inner dimensions " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
    Matrix c(a.cols(), b.cols(), 0.0);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        const double* brow = b.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("hcat: row counts differ");
    Matrix c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        auto arow = a.row(i);
        auto brow = b.row(i);
        std::copy(arow.begin(), arow.end(), crow.begin());
        std::copy(brow.begin(), brow.end(), crow.begin() + a.cols());
    }
    return c;
}

inline Matrix vcat(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("vcat: column counts differ");
    Matrix c(a.rows() + b.rows(), a.cols());
    std::copy(a.data(), a.data() + a.size(), c.data());
    std::copy(b.data(), b.data() + b.size(), c.data() + a.size());
    return c;
}

inline Matrix take_rows(const Matrix& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) throw ShapeError("take_rows: range out of bounds");
    Matrix c(count, a.cols());
    std::copy(a.data() + begin * a.cols(), a.data() + (begin + count) * a.cols(), c.data());
    return c;
}

inline Matrix take_rows(const Matrix& a, const std::vector<std::size_t>& idx) {
    Matrix c(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw ShapeError("take_rows: index out of bounds");
        auto src = a.row(idx[i]);
        std::copy(src.begin(), src.end(), c.row(i).begin());
    }
    return c;
}

inline std::vector<double> column_means(const Matrix& a) {
    std::vector<double> mu(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) mu[j] += r[j];
    }
    for (double& v : mu) v /= static_cast<double>(a.rows());
    return mu;
}

/// Population (1/N) variances per column.
inline std::vector<double> column_vars(const Matrix& a) {
    auto mu = column_means(a);
    std::vector<double> var(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = r[j] - mu[j];
            var[j] += d * d;
        }
    }
    for (double& v : var) v /= static_cast<double>(a.rows());
    return var;
}

}  // namespace nre
