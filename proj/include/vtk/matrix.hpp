#pragma once

#include <cstddef>
#include <vector>

#include "vtk/common.hpp"

namespace vtk {

// Dense row-major matrix of doubles. Small helper, not a linear algebra
// library: just what the encoders, resampler and evaluators need.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    Vec row_vec(int r) const {
        return Vec(row(r), row(r) + cols);
    }

    void set_row(int r, const Vec& v) {
        for (int c = 0; c < cols; ++c) at(r, c) = v[static_cast<size_t>(c)];
    }

    bool empty() const { return rows == 0 || cols == 0; }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

// C = A(m x k) * B(k x n)
inline Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw Error("ShapeMismatch", "matmul_nn inner dims");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* crow = c.row(i);
        const double* arow = a.row(i);
        for (int l = 0; l < a.cols; ++l) {
            const double av = arow[l];
            const double* brow = b.row(l);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// C = A(m x k) * B(n x k)^T -> m x n. Rows of both operands are contiguous.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw Error("ShapeMismatch", "matmul_nt inner dims");
    Matrix c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int l = 0; l < a.cols; ++l) s += arow[l] * brow[l];
            crow[j] = s;
        }
    }
    return c;
}

// C = A(k x m)^T * B(k x n) -> m x n
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw Error("ShapeMismatch", "matmul_tn inner dims");
    Matrix c(a.cols, b.cols);
    for (int l = 0; l < a.rows; ++l) {
        const double* arow = a.row(l);
        const double* brow = b.row(l);
        for (int i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            double* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

}  // namespace vtk
