#include "fluxmc/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fluxmc {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;

ConstMap map_of(const Matrix& a) {
    return ConstMap(a.data.data(), static_cast<Eigen::Index>(a.rows),
                    static_cast<Eigen::Index>(a.cols));
}

MutMap map_of(Matrix& a) {
    return MutMap(a.data.data(), static_cast<Eigen::Index>(a.rows),
                  static_cast<Eigen::Index>(a.cols));
}

} // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void require_finite(const Vector& v, const std::string& what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DimensionError(what + ": non-finite entry");
}

void require_finite(const Matrix& a, const std::string& what) {
    for (double x : a.data)
        if (!std::isfinite(x)) throw DimensionError(what + ": non-finite entry");
}

double dot(const Vector& a, const Vector& b) {
    require_dim(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vector add(const Vector& a, const Vector& b) {
    require_dim(a.size() == b.size(), "add: length mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Vector sub(const Vector& a, const Vector& b) {
    require_dim(a.size() == b.size(), "sub: length mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

Vector scale(const Vector& a, double s) {
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

void axpy(double s, const Vector& x, Vector& y) {
    require_dim(x.size() == y.size(), "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

double inf_norm(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double two_norm(const Vector& v) { return std::sqrt(dot(v, v)); }

Vector constant_vector(std::size_t n, double value) { return Vector(n, value); }

Vector matvec(const Matrix& a, const Vector& x) {
    require_dim(a.cols == x.size(), "matvec: dimension mismatch");
    Vector r(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
        r[i] = s;
    }
    return r;
}

Vector tmatvec(const Matrix& a, const Vector& w) {
    require_dim(a.rows == w.size(), "tmatvec: dimension mismatch");
    Vector r(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        const double wi = w[i];
        for (std::size_t j = 0; j < a.cols; ++j) r[j] += row[j] * wi;
    }
    return r;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_dim(a.cols == b.rows, "matmul: dimension mismatch");
    Matrix r(a.rows, b.cols);
    map_of(r) = map_of(a) * map_of(b);
    return r;
}

Matrix transpose(const Matrix& a) {
    Matrix r(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) r(j, i) = a(i, j);
    return r;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_dim(a.rows == b.rows && a.cols == b.cols, "add: shape mismatch");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) r.data[i] = a.data[i] + b.data[i];
    return r;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_dim(a.rows == b.rows && a.cols == b.cols, "sub: shape mismatch");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) r.data[i] = a.data[i] - b.data[i];
    return r;
}

void add_scaled_identity(Matrix& a, double s) {
    require_dim(a.rows == a.cols, "add_scaled_identity: square required");
    for (std::size_t i = 0; i < a.rows; ++i) a(i, i) += s;
}

Matrix symmetrize(const Matrix& a) {
    require_dim(a.rows == a.cols, "symmetrize: square required");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
    return r;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data) s += x * x;
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data) m = std::max(m, std::abs(x));
    return m;
}

double rel_frobenius_error(const Matrix& approx, const Matrix& reference) {
    require_dim(approx.rows == reference.rows && approx.cols == reference.cols,
                "rel_frobenius_error: shape mismatch");
    const double denom = frobenius_norm(reference);
    if (denom == 0.0) return frobenius_norm(approx) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return frobenius_norm(sub(approx, reference)) / denom;
}

double spectral_norm_symmetric(const Matrix& a) {
    require_dim(a.rows == a.cols, "spectral_norm_symmetric: square required");
    if (a.rows == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<EigenRowMat> es(map_of(a), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("spectral_norm_symmetric: eigensolver failed");
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

double rel_spectral_error_symmetric(const Matrix& approx, const Matrix& reference) {
    const double denom = spectral_norm_symmetric(reference);
    if (denom == 0.0)
        return spectral_norm_symmetric(approx) == 0.0
                   ? 0.0
                   : std::numeric_limits<double>::infinity();
    return spectral_norm_symmetric(symmetrize(sub(approx, reference))) / denom;
}

Matrix cholesky_lower(const Matrix& spd) {
    require_dim(spd.rows == spd.cols, "cholesky_lower: square required");
    Eigen::LLT<EigenRowMat> llt(map_of(spd));
    if (llt.info() != Eigen::Success)
        throw FactorizationError("cholesky_lower: matrix is not positive definite");
    Matrix l(spd.rows, spd.cols);
    map_of(l) = llt.matrixL();
    return l;
}

Vector cholesky_solve(const Matrix& lower, const Vector& b) {
    const std::size_t n = lower.rows;
    require_dim(lower.cols == n && b.size() == n, "cholesky_solve: shape mismatch");
    Vector y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < i; ++j) s -= lower(i, j) * y[j];
        y[i] = s / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= lower(j, ii) * x[j];
        x[ii] = s / lower(ii, ii);
    }
    return x;
}

Matrix spd_inverse(const Matrix& spd) {
    require_dim(spd.rows == spd.cols, "spd_inverse: square required");
    Eigen::LLT<EigenRowMat> llt(map_of(spd));
    if (llt.info() != Eigen::Success)
        throw FactorizationError("spd_inverse: matrix is not positive definite");
    Matrix inv(spd.rows, spd.cols);
    map_of(inv) = llt.solve(EigenRowMat::Identity(
        static_cast<Eigen::Index>(spd.rows), static_cast<Eigen::Index>(spd.cols)));
    return symmetrize(inv);
}

double condition_number(const Matrix& a) {
    if (a.empty()) throw DimensionError("condition_number: empty matrix");
    Eigen::JacobiSVD<EigenRowMat> svd(map_of(a));
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0 || smax <= 0.0) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

} // namespace fluxmc
