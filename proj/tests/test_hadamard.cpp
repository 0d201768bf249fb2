#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fluxmc/errors.hpp"
#include "fluxmc/hadamard.hpp"
#include "fluxmc/linalg.hpp"
#include "test_support.hpp"

using namespace fluxmc;
using testsup::TestRng;

namespace {

constexpr double kTol = 1e-12;

Matrix scaled_columns(const Matrix& a, const Vector& mu) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= mu[j];
    return out;
}

double vec_rel_err(const Vector& got, const Vector& want) {
    return two_norm(sub(got, want)) / std::max(two_norm(want), 1e-300);
}

Vector loop_mean(const std::vector<Vector>& draws) {
    Vector mean(draws.front().size(), 0.0);
    for (const Vector& d : draws)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
    for (double& v : mean) v /= static_cast<double>(draws.size());
    return mean;
}

Matrix loop_covariance(const std::vector<Vector>& draws) {
    const std::size_t m = draws.front().size();
    const Vector mean = loop_mean(draws);
    Matrix cov(m, m);
    for (const Vector& d : draws)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                cov(i, j) += (d[i] - mean[i]) * (d[j] - mean[j]);
    for (double& v : cov.data) v /= static_cast<double>(draws.size() - 1);
    return cov;
}

Matrix random_pd_matrix(TestRng& rng, std::size_t n) {
    const Matrix b = testsup::random_matrix(rng, n, n);
    Matrix m = matmul(transpose(b), b);
    add_scaled_identity(m, 0.1);
    return m;
}

} // namespace

TEST_CASE("entrywise product of the mean commutes with the mean") {
    TestRng rng(201);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(16);
        const std::size_t draws = 2 + rng.index(7);
        std::vector<Vector> xs;
        for (std::size_t k = 0; k < draws; ++k)
            xs.push_back(testsup::random_vector(rng, m, -3.0, 3.0));
        const Vector a = testsup::random_vector(rng, m, -2.0, 2.0);

        std::vector<Vector> scaled;
        for (const Vector& x : xs) scaled.push_back(hadamard(x, a));
        CHECK(vec_rel_err(loop_mean(scaled), hadamard(loop_mean(xs), a)) < kTol);
    }
}

TEST_CASE("entrywise product distributes over affine combinations") {
    TestRng rng(202);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(32);
        const Vector x = testsup::random_vector(rng, m);
        const Vector z = testsup::random_vector(rng, m);
        const Vector a = testsup::random_vector(rng, m, -2.0, 2.0);
        const double al = rng.uniform(-2.0, 2.0);
        const double be = rng.uniform(-2.0, 2.0);

        const Vector lhs = hadamard(add(scale(x, al), scale(z, be)), a);
        const Vector rhs = add(scale(hadamard(x, a), al), scale(hadamard(z, a), be));
        CHECK(two_norm(sub(lhs, rhs)) <=
              kTol * std::max(1.0, std::max(two_norm(lhs), two_norm(rhs))));
    }
}

TEST_CASE("sample covariance of scaled draws equals scaled sample covariance") {
    TestRng rng(203);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(12);
        const std::size_t draws = 2 + rng.index(8);
        std::vector<Vector> xs;
        for (std::size_t k = 0; k < draws; ++k)
            xs.push_back(testsup::random_vector(rng, m, -3.0, 3.0));
        const Vector a = testsup::random_vector(rng, m, -2.0, 2.0);

        std::vector<Vector> scaled;
        for (const Vector& x : xs) scaled.push_back(hadamard(x, a));
        const Matrix lhs = loop_covariance(scaled);
        const Matrix rhs = hadamard_outer(loop_covariance(xs), a);
        CHECK(frobenius_norm(sub(lhs, rhs)) <=
              kTol * std::max(1.0, frobenius_norm(rhs)));
    }
}

TEST_CASE("gram matrix of the column-scaled operator") {
    TestRng rng(204);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(64);
        const std::size_t n = 1 + rng.index(64);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);

        const Matrix a_mu = scaled_columns(a, mu);
        const Matrix lhs = matmul(transpose(a_mu), a_mu);
        const Matrix rhs = hadamard_outer(matmul(transpose(a), a), mu);
        CHECK(rel_frobenius_error(lhs, rhs) < kTol);
    }
}

TEST_CASE("weighted gram matrix of the column-scaled operator") {
    TestRng rng(205);
    SUBCASE("general positive-definite weight") {
        for (int rep = 0; rep < 210; ++rep) {
            const std::size_t m = 1 + rng.index(24);
            const std::size_t n = 1 + rng.index(24);
            const Matrix a = testsup::random_matrix(rng, n, m);
            const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
            const Matrix w = random_pd_matrix(rng, n);

            const Matrix a_mu = scaled_columns(a, mu);
            const Matrix lhs = matmul(transpose(a_mu), matmul(w, a_mu));
            const Matrix rhs =
                hadamard_outer(matmul(transpose(a), matmul(w, a)), mu);
            CHECK(rel_frobenius_error(lhs, rhs) < kTol);
        }
    }
    SUBCASE("diagonal weight via scaled_gram") {
        for (int rep = 0; rep < 210; ++rep) {
            const std::size_t m = 1 + rng.index(64);
            const std::size_t n = 1 + rng.index(64);
            const Matrix a = testsup::random_matrix(rng, n, m);
            const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
            const Vector w = testsup::random_positive_vector(rng, n, 0.1, 3.0);

            const Matrix a_mu = scaled_columns(a, mu);
            Matrix weighted = a_mu;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) weighted(i, j) *= w[i];
            const Matrix lhs = matmul(transpose(a_mu), weighted);
            CHECK(rel_frobenius_error(scaled_gram(a, w, mu), lhs) < kTol);
        }
    }
}

TEST_CASE("adjoint of the column-scaled operator") {
    TestRng rng(206);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(48);
        const std::size_t n = 1 + rng.index(48);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
        const Matrix w = random_pd_matrix(rng, n);
        const Vector y = testsup::random_vector(rng, n, -3.0, 3.0);

        const Vector wy = matvec(w, y);
        const Vector lhs = tmatvec(scaled_columns(a, mu), wy);
        const Vector rhs = scaled_adjoint_apply(a, mu, wy);
        CHECK(two_norm(sub(lhs, rhs)) <= kTol * std::max(1.0, two_norm(rhs)));
    }
}

TEST_CASE("applying to a scaled vector equals the column-scaled operator") {
    TestRng rng(207);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(48);
        const std::size_t n = 1 + rng.index(48);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
        const Vector c = testsup::random_vector(rng, m, -3.0, 3.0);

        const Vector lhs = scaled_apply(a, mu, c);
        const Vector rhs = matvec(scaled_columns(a, mu), c);
        CHECK(two_norm(sub(lhs, rhs)) <= kTol * std::max(1.0, two_norm(rhs)));
    }
}

TEST_CASE("scaled application is linear in the control vector") {
    TestRng rng(208);
    for (int rep = 0; rep < 220; ++rep) {
        const std::size_t m = 1 + rng.index(32);
        const std::size_t n = 1 + rng.index(32);
        const Matrix op = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
        const Vector a = testsup::random_vector(rng, m);
        const Vector b = testsup::random_vector(rng, m);
        const double al = rng.uniform(-2.0, 2.0);
        const double be = rng.uniform(-2.0, 2.0);

        const Vector lhs = scaled_apply(op, mu, add(scale(a, al), scale(b, be)));
        const Vector rhs =
            add(scale(scaled_apply(op, mu, a), al), scale(scaled_apply(op, mu, b), be));
        CHECK(two_norm(sub(lhs, rhs)) <=
              kTol * std::max(1.0, std::max(two_norm(lhs), two_norm(rhs))));
    }
}

TEST_CASE("positive definiteness survives the outer scaling") {
    // With strictly nonzero scaling the scaled gram plus a ridge must admit
    // a Cholesky factorization.
    TestRng rng(209);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = 1 + rng.index(16);
        const std::size_t n = 1 + rng.index(16);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_positive_vector(rng, m, 0.2, 2.0);
        const Vector w = testsup::random_positive_vector(rng, n, 0.1, 3.0);

        Matrix gram = scaled_gram(a, w, mu);
        add_scaled_identity(gram, 0.25);
        CHECK_NOTHROW(cholesky_lower(symmetrize(gram)));
    }
}

TEST_CASE("shape violations are rejected") {
    const Vector a = {1.0, 2.0};
    const Vector b = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(hadamard(a, b), DimensionError);

    Matrix s(2, 3);
    CHECK_THROWS_AS(hadamard_outer(s, a), DimensionError);

    Matrix sq(2, 2);
    CHECK_THROWS_AS(hadamard_outer(sq, b), DimensionError);

    TestRng rng(210);
    const Matrix op = testsup::random_matrix(rng, 3, 2);
    CHECK_THROWS_AS(scaled_apply(op, a, b), DimensionError);
    CHECK_THROWS_AS(scaled_gram(op, Vector{1.0, -1.0, 1.0}, a), DefinitenessError);
}
