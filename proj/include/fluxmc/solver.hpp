#pragma once

// Quadratic data-assimilation cost in control space and an L-BFGS minimizer.
// The cost only touches the operator through apply/adjoint, so matrix-free
// operators work here even when the closed-form path refuses them.

#include <functional>
#include <string>
#include <vector>

#include "fluxmc/forward_model.hpp"
#include "fluxmc/linalg.hpp"

namespace fluxmc {

struct CostEvaluation {
    double value = 0.0;
    Vector gradient;
};

using CostFunction = std::function<CostEvaluation(const Vector&)>;

/// J(c) = 1/2 |c - c_k|^2 / b^2 + 1/2 (A(c .* mu) - y_k)^T R^-1 (A(c .* mu) - y_k)
/// and its exact gradient.
CostEvaluation cost_and_gradient(const Vector& c, const PriorSpec& prior,
                                 const Vector& prior_mean_k, const Vector& y_k,
                                 const NoiseSpec& noise, const ForwardOperator& op,
                                 const Vector& mu);

/// Bind the model pieces into a reusable cost closure. Vectors are copied.
CostFunction make_cost(const PriorSpec& prior, Vector prior_mean_k, Vector y_k,
                       const NoiseSpec& noise, ForwardOperator op, Vector mu);

struct LbfgsConfig {
    std::size_t memory = 10;
    double gradient_tolerance = 1e-9; // on |grad|_inf relative to max(1, |grad_0|_inf)
    std::size_t max_iterations = 500;
};

struct SolverReport {
    Vector solution;
    bool converged = false;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    double final_cost = 0.0;
    double final_gradient_norm = 0.0;
    std::vector<double> cost_trace; // cost_trace[0] is the starting cost
    std::string diagnostic;         // empty on clean convergence
};

SolverReport minimize(const Vector& start, const CostFunction& cost,
                      const LbfgsConfig& config = {});

} // namespace fluxmc
