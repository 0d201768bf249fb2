#pragma once

// Small dense linear algebra layer. Row-major storage; heavy factorizations
// are delegated to Eigen inside the implementation file.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fluxmc/errors.hpp"

namespace fluxmc {

using Vector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data.data() + r * cols, cols);
    }
    std::span<double> row(std::size_t r) {
        return std::span<double>(data.data() + r * cols, cols);
    }

    bool empty() const { return rows == 0 || cols == 0; }

    static Matrix identity(std::size_t n);
};

// ---- validation helpers ----

inline void require_dim(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

void require_finite(const Vector& v, const std::string& what);
void require_finite(const Matrix& a, const std::string& what);

// ---- vector ops ----

double dot(const Vector& a, const Vector& b);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scale(const Vector& a, double s);
void axpy(double s, const Vector& x, Vector& y); // y += s*x
double inf_norm(const Vector& v);
double two_norm(const Vector& v);
Vector constant_vector(std::size_t n, double value);

// ---- matrix ops ----

Vector matvec(const Matrix& a, const Vector& x);  // A x
Vector tmatvec(const Matrix& a, const Vector& w); // A^T w
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
void add_scaled_identity(Matrix& a, double s); // A += s*I
Matrix symmetrize(const Matrix& a);            // (A + A^T)/2

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double rel_frobenius_error(const Matrix& approx, const Matrix& reference);

/// Largest |eigenvalue| of a symmetric matrix (operator 2-norm).
double spectral_norm_symmetric(const Matrix& a);
double rel_spectral_error_symmetric(const Matrix& approx, const Matrix& reference);

/// Lower Cholesky factor of an SPD matrix. Throws FactorizationError.
Matrix cholesky_lower(const Matrix& spd);

/// Solve (L L^T) x = b given the lower factor.
Vector cholesky_solve(const Matrix& lower, const Vector& b);

/// Inverse of an SPD matrix via Cholesky; result is symmetrized.
Matrix spd_inverse(const Matrix& spd);

/// Ratio of extreme singular values; infinity for rank-deficient input.
double condition_number(const Matrix& a);

} // namespace fluxmc
