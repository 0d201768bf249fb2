#include "fluxmc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fluxmc/hadamard.hpp"

namespace fluxmc {

CostEvaluation cost_and_gradient(const Vector& c, const PriorSpec& prior,
                                 const Vector& prior_mean_k, const Vector& y_k,
                                 const NoiseSpec& noise, const ForwardOperator& op,
                                 const Vector& mu) {
    require_dim(c.size() == op.input_dim(), "cost: control length mismatch");
    require_dim(prior_mean_k.size() == c.size(), "cost: prior draw length mismatch");
    require_dim(y_k.size() == op.output_dim(), "cost: observation length mismatch");
    require_dim(mu.size() == c.size(), "cost: mu length mismatch");
    require_dim(noise.dim() == op.output_dim(), "cost: noise length mismatch");

    const Vector dc = sub(c, prior_mean_k);
    Vector resid = op.apply(hadamard(c, mu));
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= y_k[i];

    double value = 0.5 * dot(dc, dc) / prior.b2;
    Vector weighted(resid.size());
    for (std::size_t i = 0; i < resid.size(); ++i) {
        weighted[i] = resid[i] / noise.variances[i];
        value += 0.5 * resid[i] * weighted[i];
    }

    CostEvaluation ev;
    ev.value = value;
    ev.gradient = hadamard(op.adjoint(weighted), mu);
    axpy(1.0 / prior.b2, dc, ev.gradient);
    return ev;
}

CostFunction make_cost(const PriorSpec& prior, Vector prior_mean_k, Vector y_k,
                       const NoiseSpec& noise, ForwardOperator op, Vector mu) {
    return [prior, prior_mean_k = std::move(prior_mean_k), y_k = std::move(y_k), noise,
            op = std::move(op), mu = std::move(mu)](const Vector& c) {
        return cost_and_gradient(c, prior, prior_mean_k, y_k, noise, op, mu);
    };
}

namespace {

struct LinePoint {
    double alpha = 0.0;
    double value = 0.0;
    double slope = 0.0; // d/dalpha of the cost along the search direction
    Vector x;
    Vector gradient;
};

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;

} // namespace

SolverReport minimize(const Vector& start, const CostFunction& cost,
                      const LbfgsConfig& config) {
    require_dim(!start.empty(), "minimize: empty start vector");

    SolverReport report;
    std::size_t evals = 0;
    const auto eval = [&](const Vector& x) {
        ++evals;
        CostEvaluation ev = cost(x);
        require_dim(ev.gradient.size() == x.size(), "minimize: gradient length mismatch");
        return ev;
    };

    Vector x = start;
    CostEvaluation cur = eval(x);
    report.cost_trace.push_back(cur.value);

    const double g0 = inf_norm(cur.gradient);
    const double gtol = config.gradient_tolerance * std::max(1.0, g0);

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    const auto evaluate_point = [&](const Vector& origin, const Vector& dir,
                                    double alpha) {
        LinePoint pt;
        pt.alpha = alpha;
        pt.x = origin;
        axpy(alpha, dir, pt.x);
        CostEvaluation ev = eval(pt.x);
        pt.value = ev.value;
        pt.slope = dot(ev.gradient, dir);
        pt.gradient = std::move(ev.gradient);
        return pt;
    };

    bool converged = g0 <= gtol;
    std::size_t it = 0;
    while (!converged && it < config.max_iterations) {
        ++it;

        // Two-loop recursion for the quasi-Newton direction.
        Vector q = cur.gradient;
        std::vector<double> alpha_coef(s_hist.size());
        for (std::size_t idx = s_hist.size(); idx-- > 0;) {
            alpha_coef[idx] = rho_hist[idx] * dot(s_hist[idx], q);
            axpy(-alpha_coef[idx], y_hist[idx], q);
        }
        if (!s_hist.empty()) {
            const Vector& sl = s_hist.back();
            const Vector& yl = y_hist.back();
            const double gamma = dot(sl, yl) / dot(yl, yl);
            for (double& v : q) v *= gamma;
        }
        for (std::size_t idx = 0; idx < s_hist.size(); ++idx) {
            const double beta = rho_hist[idx] * dot(y_hist[idx], q);
            axpy(alpha_coef[idx] - beta, s_hist[idx], q);
        }
        Vector dir = scale(q, -1.0);

        double slope0 = dot(cur.gradient, dir);
        if (!(slope0 < 0.0)) {
            // Degenerate curvature information; fall back to steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = scale(cur.gradient, -1.0);
            slope0 = -dot(cur.gradient, cur.gradient);
        }

        // Strong Wolfe line search: bracketing phase then zoom. Near the
        // minimum the cost is flat to rounding while the gradient tolerance
        // still asks for progress, so a step whose slope satisfies the
        // curvature condition is also accepted when its value is within a
        // rounding-noise band of the current value (approximate Wolfe).
        const double value0 = cur.value;
        const double value_fuzz = 1e-12 * (1.0 + std::abs(value0));
        const double alpha_init =
            it == 1 ? std::min(1.0, 1.0 / std::max(two_norm(cur.gradient), 1e-12)) : 1.0;

        // The origin doubles as the initial "previous" point; its alpha of 0
        // marks it as unusable as an accepted step.
        LinePoint origin;
        origin.alpha = 0.0;
        origin.value = value0;
        origin.slope = slope0;
        origin.x = x;
        origin.gradient = cur.gradient;

        LinePoint lo, hi, candidate;
        bool bracketed = false;
        bool accepted = false;

        LinePoint prev = origin;
        double alpha = alpha_init;
        for (int ls = 0; ls < 60; ++ls) {
            LinePoint pt = evaluate_point(x, dir, alpha);
            if (std::abs(pt.slope) <= -kC2 * slope0 &&
                pt.value <= value0 + value_fuzz) {
                candidate = std::move(pt);
                accepted = true;
                break;
            }
            if (pt.value > value0 + kC1 * pt.alpha * slope0 ||
                (ls > 0 && pt.value >= prev.value)) {
                lo = std::move(prev);
                hi = std::move(pt);
                bracketed = true;
                break;
            }
            if (pt.slope >= 0.0) {
                lo = std::move(pt);
                hi = std::move(prev);
                bracketed = true;
                break;
            }
            prev = std::move(pt);
            alpha = std::min(2.0 * alpha, 1e12);
        }

        if (bracketed && !accepted) {
            for (int zi = 0; zi < 60; ++zi) {
                // Quadratic interpolation using lo's value/slope and hi's value,
                // safeguarded toward bisection.
                double trial;
                const double span = hi.alpha - lo.alpha;
                const double denom = hi.value - lo.value - lo.slope * span;
                if (std::abs(denom) > 1e-300) {
                    trial = lo.alpha - 0.5 * lo.slope * span * span / denom;
                } else {
                    trial = lo.alpha + 0.5 * span;
                }
                const double a_min = std::min(lo.alpha, hi.alpha);
                const double a_max = std::max(lo.alpha, hi.alpha);
                const double margin = 0.1 * (a_max - a_min);
                if (!(trial > a_min + margin) || !(trial < a_max - margin))
                    trial = 0.5 * (lo.alpha + hi.alpha);

                LinePoint pt = evaluate_point(x, dir, trial);
                if (std::abs(pt.slope) <= -kC2 * slope0 &&
                    pt.value <= value0 + value_fuzz) {
                    candidate = std::move(pt);
                    accepted = true;
                    break;
                }
                if (pt.value > value0 + kC1 * pt.alpha * slope0 || pt.value >= lo.value) {
                    hi = std::move(pt);
                } else {
                    if (pt.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                    lo = std::move(pt);
                }
                if (std::abs(hi.alpha - lo.alpha) <
                    1e-14 * std::max(1.0, std::abs(lo.alpha))) {
                    break;
                }
            }
            if (!accepted && lo.alpha > 0.0 && lo.value < value0) {
                candidate = lo; // sufficient decrease without curvature: still usable
                accepted = true;
            }
        }

        if (!accepted) {
            report.diagnostic = "line search failed at iteration " + std::to_string(it);
            break;
        }

        Vector s = sub(candidate.x, x);
        Vector yv = sub(candidate.gradient, cur.gradient);
        const double sy = dot(s, yv);
        if (sy > 1e-10 * two_norm(s) * two_norm(yv)) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > config.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        x = std::move(candidate.x);
        cur.value = candidate.value;
        cur.gradient = std::move(candidate.gradient);
        report.cost_trace.push_back(cur.value);
        converged = inf_norm(cur.gradient) <= gtol;
    }

    report.solution = std::move(x);
    report.converged = converged;
    report.iterations = it;
    report.evaluations = evals;
    report.final_cost = cur.value;
    report.final_gradient_norm = inf_norm(cur.gradient);
    if (!converged && report.diagnostic.empty())
        report.diagnostic = "iteration limit reached";
    return report;
}

} // namespace fluxmc
