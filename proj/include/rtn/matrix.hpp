#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rtn {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Literal construction, e.g. `Matrix::of({{1, 2}, {3, 4}})`.
    static Matrix of(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::span<const double> values);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    void fill(double v);
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix transpose(const Matrix& a);

// Raw kernels. `out` is accumulated into, not overwritten.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b^T
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T * b

Matrix matmul(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

}  // namespace rtn
