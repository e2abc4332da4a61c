#include "fedmeter/numerics.hpp"

#include <cmath>
#include <string>

#include "fedmeter/errors.hpp"

namespace fedmeter {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

void matvec_into(const Matrix& m, std::span<const double> v, double* out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * v[c];
        out[r] = acc;
    }
}

Vector matvec(const Matrix& m, std::span<const double> v) {
    if (m.cols != v.size()) {
        throw ShapeError("matvec: Matrix(" + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols) + ") incompatible with Vector(" +
                         std::to_string(v.size()) + ")");
    }
    Vector out(m.rows);
    matvec_into(m, v, out.data());
    return out;
}

void matvec_transposed_accumulate(const Matrix& m, std::span<const double> v,
                                  double* out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        const double vr = v[r];
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += mr[c] * vr;
    }
}

Vector matvec_transposed(const Matrix& m, std::span<const double> v) {
    if (m.rows != v.size()) {
        throw ShapeError("matvec_transposed: Matrix(" + std::to_string(m.rows) +
                         "x" + std::to_string(m.cols) +
                         ") incompatible with Vector(" +
                         std::to_string(v.size()) + ")");
    }
    Vector out(m.cols, 0.0);
    matvec_transposed_accumulate(m, v, out.data());
    return out;
}

void outer_accumulate(Matrix& m, std::span<const double> a,
                      std::span<const double> b) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* mr = m.row(r);
        const double ar = a[r];
        for (std::size_t c = 0; c < m.cols; ++c) mr[c] += ar * b[c];
    }
}

void require_same_size(std::span<const double> a, std::span<const double> b,
                       const char* op) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(op) + ": Vector(" +
                         std::to_string(a.size()) + ") vs Vector(" +
                         std::to_string(b.size()) + ")");
    }
}

Vector elementwise_add(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "elementwise_add");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector elementwise_sub(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "elementwise_sub");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector elementwise_mul(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "elementwise_mul");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double sigmoid(double x) {
    // Saturating form; never divides by a denormal sum.
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector sigmoid(std::span<const double> x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

Vector tanh_vec(std::span<const double> x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return out;
}

bool all_finite(std::span<const double> x) {
    for (const double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace fedmeter
