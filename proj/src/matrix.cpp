#include "rtn/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "rtn/errors.hpp"

namespace rtn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::of(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("Matrix::of: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (!same_shape(o)) throw DimensionError("Matrix +=: " + shape_str() + " vs " + o.shape_str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = C + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = A + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            C[i * m + j] += s;
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    // a: k x n, b: k x m, out: n x m
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = B + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = A[p * n + i];
            if (av == 0.0) continue;
            double* crow = C + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + a.shape_str() + " * " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    gemm_nn(a, b, out);
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace rtn
