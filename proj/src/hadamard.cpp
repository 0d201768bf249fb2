#include "fluxmc/hadamard.hpp"

#include <cmath>

namespace fluxmc {

Vector hadamard(const Vector& a, const Vector& b) {
    require_dim(a.size() == b.size(), "hadamard: length mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
}

Matrix hadamard_outer(const Matrix& s, const Vector& a) {
    require_dim(s.rows == s.cols, "hadamard_outer: square matrix required");
    require_dim(s.rows == a.size(), "hadamard_outer: vector length mismatch");
    Matrix r(s.rows, s.cols);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) r(i, j) = s(i, j) * a[i] * a[j];
    return r;
}

Vector scaled_apply(const Matrix& a, const Vector& mu, const Vector& c) {
    require_dim(mu.size() == c.size(), "scaled_apply: length mismatch");
    return matvec(a, hadamard(c, mu));
}

Vector scaled_adjoint_apply(const Matrix& a, const Vector& mu, const Vector& w) {
    require_dim(mu.size() == a.cols, "scaled_adjoint_apply: length mismatch");
    return hadamard(tmatvec(a, w), mu);
}

Matrix scaled_gram(const Matrix& a, const Vector& weight_diag, const Vector& mu) {
    require_dim(weight_diag.size() == a.rows, "scaled_gram: weight length mismatch");
    require_dim(mu.size() == a.cols, "scaled_gram: mu length mismatch");
    for (double w : weight_diag)
        if (!(w > 0.0) || !std::isfinite(w))
            throw DefinitenessError("scaled_gram: weights must be strictly positive");

    // G = A^T diag(w) A accumulated row by row, then scaled entrywise.
    Matrix g(a.cols, a.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* row = a.data.data() + k * a.cols;
        const double w = weight_diag[k];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double wi = w * row[i];
            if (wi == 0.0) continue;
            double* gi = g.data.data() + i * a.cols;
            for (std::size_t j = 0; j < a.cols; ++j) gi[j] += wi * row[j];
        }
    }
    return hadamard_outer(g, mu);
}

} // namespace fluxmc
