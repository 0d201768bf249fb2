#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fluxmc/exact_posterior.hpp"
#include "fluxmc/solver.hpp"
#include "test_support.hpp"

using namespace fluxmc;
using testsup::TestRng;

namespace {

struct RandomProblem {
    ForwardOperator op;
    NoiseSpec noise;
    PriorSpec prior;
    Vector mu;
    Vector c_k;
    Vector y_k;
    Matrix a;
};

RandomProblem random_problem(TestRng& rng, std::size_t max_m = 64,
                             std::size_t max_n = 64, bool matrix_free = false) {
    const std::size_t m = 1 + rng.index(max_m);
    const std::size_t n = 1 + rng.index(max_n);
    Matrix a = testsup::random_matrix(rng, n, m);
    ForwardOperator op =
        matrix_free
            ? ForwardOperator::from_callables(
                  n, m, [a](const Vector& x) { return matvec(a, x); },
                  [a](const Vector& w) { return tmatvec(a, w); })
            : ForwardOperator::from_matrix(a);
    return RandomProblem{
        std::move(op),
        NoiseSpec(testsup::random_positive_vector(rng, n, 0.3, 2.5)),
        PriorSpec(testsup::random_vector(rng, m, 0.0, 2.0), rng.uniform(0.5, 5.0)),
        testsup::random_vector(rng, m, -1.5, 1.5),
        testsup::random_vector(rng, m, -1.0, 3.0),
        testsup::random_vector(rng, n, -2.0, 2.0),
        std::move(a),
    };
}

double fd_gradient_rel_error(const CostFunction& cost, const Vector& x) {
    const CostEvaluation at = cost(x);
    Vector fd(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (cost(xp).value - cost(xm).value) / (2.0 * h);
    }
    return two_norm(sub(fd, at.gradient)) / std::max(two_norm(at.gradient), 1e-300);
}

} // namespace

TEST_CASE("analytic gradient matches central finite differences") {
    TestRng rng(501);
    for (int rep = 0; rep < 25; ++rep) {
        const RandomProblem p = random_problem(rng, 24, 24, rep % 2 == 0);
        const CostFunction cost =
            make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu);
        const Vector x = testsup::random_vector(rng, p.op.input_dim(), -2.0, 2.0);
        CHECK(fd_gradient_rel_error(cost, x) < 1e-6);
    }
}

TEST_CASE("minimizer reproduces the closed-form posterior mode") {
    TestRng rng(502);
    for (int rep = 0; rep < 25; ++rep) {
        const RandomProblem p = random_problem(rng, 48, 48, true);
        const ForwardOperator dense = ForwardOperator::from_matrix(p.a);
        const Matrix sigma = posterior_covariance(dense, p.noise, p.prior, p.mu);
        const Vector exact =
            map_estimator(dense, p.noise, p.c_k, p.y_k, p.prior, p.mu, sigma);

        const SolverReport report = minimize(
            p.c_k, make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu));
        REQUIRE(report.converged);
        CHECK(two_norm(sub(report.solution, exact)) <=
              1e-6 * std::max(1.0, two_norm(exact)));
    }
}

TEST_CASE("cost trace never rises beyond rounding noise") {
    TestRng rng(503);
    for (int rep = 0; rep < 15; ++rep) {
        const RandomProblem p = random_problem(rng, 32, 32, false);
        const SolverReport report = minimize(
            p.c_k, make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu));
        REQUIRE(report.converged);
        REQUIRE(report.cost_trace.size() >= 1);
        for (std::size_t i = 1; i < report.cost_trace.size(); ++i) {
            const double prev = report.cost_trace[i - 1];
            CHECK(report.cost_trace[i] <= prev + 1e-11 * (1.0 + std::abs(prev)));
        }
        CHECK(report.final_cost == report.cost_trace.back());
    }
}

TEST_CASE("starting at the optimum terminates immediately") {
    TestRng rng(504);
    const RandomProblem p = random_problem(rng, 16, 16, false);
    const Matrix sigma = posterior_covariance(p.op, p.noise, p.prior, p.mu);
    const Vector exact = map_estimator(p.op, p.noise, p.c_k, p.y_k, p.prior, p.mu, sigma);

    const SolverReport report =
        minimize(exact, make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu));
    CHECK(report.converged);
    CHECK(report.iterations <= 2);
}

TEST_CASE("iteration cap produces a non-converged report, not an exception") {
    TestRng rng(505);
    const RandomProblem p = random_problem(rng, 32, 32, false);
    LbfgsConfig config;
    config.max_iterations = 0;
    const SolverReport report = minimize(
        p.c_k, make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu), config);
    CHECK_FALSE(report.converged);
    CHECK(report.diagnostic == "iteration limit reached");
}

TEST_CASE("solves are deterministic") {
    TestRng rng(506);
    const RandomProblem p = random_problem(rng, 24, 24, false);
    const CostFunction cost = make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu);
    const SolverReport r1 = minimize(p.c_k, cost);
    const SolverReport r2 = minimize(p.c_k, cost);
    CHECK(r1.solution == r2.solution);
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.evaluations == r2.evaluations);
}

TEST_CASE("short memory still converges") {
    TestRng rng(507);
    const RandomProblem p = random_problem(rng, 40, 40, false);
    LbfgsConfig config;
    config.memory = 2;
    const SolverReport report = minimize(
        p.c_k, make_cost(p.prior, p.c_k, p.y_k, p.noise, p.op, p.mu), config);
    CHECK(report.converged);
}

TEST_CASE("a classic curved valley is minimized") {
    const CostFunction rosenbrock = [](const Vector& v) {
        const double x = v[0], y = v[1];
        CostEvaluation ev;
        ev.value = (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
        ev.gradient = {-2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                       200.0 * (y - x * x)};
        return ev;
    };
    const SolverReport report = minimize(Vector{-1.2, 1.0}, rosenbrock);
    CHECK(report.converged);
    CHECK(std::abs(report.solution[0] - 1.0) < 1e-6);
    CHECK(std::abs(report.solution[1] - 1.0) < 1e-6);
}
