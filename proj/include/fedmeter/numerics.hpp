#ifndef FEDMETER_NUMERICS_HPP
#define FEDMETER_NUMERICS_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace fedmeter {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Small models only (H <= a few
// hundred), so no blocking or sparsity.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }

    static Matrix identity(std::size_t n);

    bool operator==(const Matrix&) const = default;
};

// result[i] = sum_j m[i,j] * v[j]
Vector matvec(const Matrix& m, std::span<const double> v);
void matvec_into(const Matrix& m, std::span<const double> v, double* out);

// result[j] = sum_i m[i,j] * v[i]
Vector matvec_transposed(const Matrix& m, std::span<const double> v);
void matvec_transposed_accumulate(const Matrix& m, std::span<const double> v,
                                  double* out);

// Rank-1 update: m[i,j] += a[i] * b[j]
void outer_accumulate(Matrix& m, std::span<const double> a,
                      std::span<const double> b);

Vector elementwise_add(std::span<const double> a, std::span<const double> b);
Vector elementwise_sub(std::span<const double> a, std::span<const double> b);
Vector elementwise_mul(std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double sigmoid(double x);
Vector sigmoid(std::span<const double> x);
Vector tanh_vec(std::span<const double> x);

bool all_finite(std::span<const double> x);

// Throws ShapeError naming both operands when sizes differ.
void require_same_size(std::span<const double> a, std::span<const double> b,
                       const char* op);

}  // namespace fedmeter

#endif
