#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace ucr {

// Dense row-major matrix of doubles. Small and deliberately boring; every
// numeric routine in this library runs on fixed-order loops over it so that
// results are bit-reproducible.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return data[static_cast<size_t>(r) * cols + c];
    }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    Matrix& operator+=(const Matrix& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data) v *= s;
        return *this;
    }
};

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const double* a, int n) {
    return std::sqrt(dot(a, a, n));
}

// out = a * b, shapes (n,k) x (k,m)
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    assert(a.cols == b.rows);
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

}  // namespace ucr
