// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/matrix.hpp"

#include <cmath>
#include <utility>

#include "racecar/errors.hpp"

namespace racecar {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length does not match rows*cols");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

std::vector<double> Matrix::col(std::size_t j) const {
    std::vector<double> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
}

bool Matrix::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw ShapeError("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw ShapeError("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    // ikj order: streams through b and c rows, accumulates left-to-right in k.
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a(i, kk);
            if (aik == 0.0) continue;
            const double* bk = b.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts disagree");
    Matrix c(a.cols(), b.cols());
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* ak = a.data() + kk * n;
        const double* bk = b.data() + kk * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts disagree");
    Matrix c(a.rows(), b.rows());
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
            c(i, j) = s;
        }
    }
    return c;
}

std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
    if (m.cols() != v.size()) throw ShapeError("matvec: dimension mismatch");
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.data() + i * m.cols();
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += row[j] * v[j];
        out[i] = s;
    }
    return out;
}

std::vector<double> matvec_t(const Matrix& m, const std::vector<double>& v) {
    if (m.rows() != v.size()) throw ShapeError("matvec_t: dimension mismatch");
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.data() + i * m.cols();
        const double vi = v[i];
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j] * vi;
    }
    return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

void ensure_finite(const Matrix& m, const char* what) {
    if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite entries");
}

}  // namespace racecar
