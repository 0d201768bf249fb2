#include "fluxmc/forward_model.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <utility>

#include "fluxmc/io.hpp"
#include "fluxmc/rng.hpp"

namespace fluxmc {

PriorSpec::PriorSpec(Vector mean_, double b2_) : mean(std::move(mean_)), b2(b2_) {
    require_dim(!mean.empty(), "PriorSpec: empty mean");
    require_finite(mean, "PriorSpec mean");
    if (!(b2 > 0.0) || !std::isfinite(b2))
        throw DefinitenessError("PriorSpec: b2 must be strictly positive");
}

NoiseSpec::NoiseSpec(Vector variances_) : variances(std::move(variances_)) {
    require_dim(!variances.empty(), "NoiseSpec: empty variance vector");
    for (double v : variances)
        if (!(v > 0.0) || !std::isfinite(v))
            throw DefinitenessError("NoiseSpec: variances must be strictly positive");
}

NoiseSpec NoiseSpec::isotropic(double sigma2, std::size_t n) {
    require_dim(n > 0, "NoiseSpec: n must be positive");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw DefinitenessError("NoiseSpec: sigma2 must be strictly positive");
    return NoiseSpec(Vector(n, sigma2));
}

Vector NoiseSpec::precision_diag() const {
    Vector r(variances.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = 1.0 / variances[i];
    return r;
}

namespace {

std::uint64_t hash_doubles(std::uint64_t h, const double* v, std::size_t count) {
    std::vector<std::uint8_t> bytes;
    append_le_doubles(bytes, v, count);
    return fnv1a64(bytes.data(), bytes.size(), h);
}

using ApplyFn = ForwardOperator::ApplyFn;

double adjoint_defect_fns(const ApplyFn& apply, const ApplyFn& adjoint, std::size_t m,
                          std::size_t n, int pairs) {
    double worst = 0.0;
    for (int p = 0; p < pairs; ++p) {
        rng::Stream sv(0xAD01ull, rng::kPurposeProbe, static_cast<std::uint64_t>(2 * p));
        rng::Stream sw(0xAD01ull, rng::kPurposeProbe, static_cast<std::uint64_t>(2 * p + 1));
        Vector v(m), w(n);
        for (std::size_t i = 0; i < m; ++i) v[i] = sv.normal(i);
        for (std::size_t i = 0; i < n; ++i) w[i] = sw.normal(i);
        const Vector av = apply(v);
        const Vector atw = adjoint(w);
        require_dim(av.size() == n, "adjoint probe: apply returned wrong length");
        require_dim(atw.size() == m, "adjoint probe: adjoint returned wrong length");
        const double s1 = dot(av, w);
        const double s2 = dot(v, atw);
        const double scale = std::max({std::abs(s1), std::abs(s2), 1.0});
        worst = std::max(worst, std::abs(s1 - s2) / scale);
    }
    return worst;
}

std::uint64_t explicit_fingerprint(const Matrix& a, const Vector& offset) {
    std::vector<std::uint8_t> head;
    head.push_back('X');
    append_le_u64(head, a.rows);
    append_le_u64(head, a.cols);
    std::uint64_t h = fnv1a64(head);
    h = hash_doubles(h, a.data.data(), a.data.size());
    return hash_doubles(h, offset.data(), offset.size());
}

// Matrix-free operators are fingerprinted behaviorally: outputs on a few
// deterministic probe inputs.
std::uint64_t probe_fingerprint(const ApplyFn& apply, std::size_t m, std::size_t n,
                                const Vector& offset) {
    std::vector<std::uint8_t> head;
    head.push_back('F');
    append_le_u64(head, n);
    append_le_u64(head, m);
    std::uint64_t h = fnv1a64(head);
    for (std::uint64_t p = 0; p < 3; ++p) {
        rng::Stream stream(0xF16E59ull, rng::kPurposeProbe, p);
        Vector x(m);
        for (std::size_t i = 0; i < m; ++i) x[i] = stream.normal(i);
        const Vector y = apply(x);
        h = hash_doubles(h, y.data(), y.size());
    }
    return hash_doubles(h, offset.data(), offset.size());
}

} // namespace

struct ForwardOperator::Impl {
    std::size_t m = 0; // input dim
    std::size_t n = 0; // output dim
    Matrix a;          // empty when matrix-free
    ApplyFn apply_fn;
    ApplyFn adjoint_fn;
    Vector offset;
    bool explicit_matrix = false;
    bool reentrant = true;
    std::uint64_t fingerprint = 0;
    mutable std::mutex guard; // used only when !reentrant

    Vector call(const ApplyFn& fn, const Vector& x) const {
        if (reentrant) return fn(x);
        std::lock_guard<std::mutex> lock(guard);
        return fn(x);
    }
};

ForwardOperator ForwardOperator::from_matrix(Matrix a, Vector offset) {
    require_dim(!a.empty(), "ForwardOperator: empty matrix");
    require_finite(a, "ForwardOperator matrix");
    if (offset.empty()) offset.assign(a.rows, 0.0);
    require_dim(offset.size() == a.rows, "ForwardOperator: offset length mismatch");
    require_finite(offset, "ForwardOperator offset");

    auto impl = std::make_shared<Impl>();
    impl->m = a.cols;
    impl->n = a.rows;
    impl->offset = std::move(offset);
    impl->explicit_matrix = true;
    impl->reentrant = true;
    impl->a = std::move(a);
    const Matrix* mat = &impl->a;
    impl->apply_fn = [mat](const Vector& x) { return matvec(*mat, x); };
    impl->adjoint_fn = [mat](const Vector& w) { return tmatvec(*mat, w); };
    impl->fingerprint = explicit_fingerprint(impl->a, impl->offset);
    return ForwardOperator(std::move(impl));
}

ForwardOperator ForwardOperator::from_callables(std::size_t output_dim,
                                                std::size_t input_dim, ApplyFn apply,
                                                ApplyFn adjoint, Vector offset,
                                                bool reentrant, int probe_pairs) {
    require_dim(output_dim > 0 && input_dim > 0, "ForwardOperator: zero dimension");
    if (!apply || !adjoint)
        throw DimensionError("ForwardOperator: apply and adjoint must both be callable");
    if (offset.empty()) offset.assign(output_dim, 0.0);
    require_dim(offset.size() == output_dim, "ForwardOperator: offset length mismatch");
    require_finite(offset, "ForwardOperator offset");

    auto impl = std::make_shared<Impl>();
    impl->m = input_dim;
    impl->n = output_dim;
    impl->offset = std::move(offset);
    impl->explicit_matrix = false;
    impl->reentrant = reentrant;
    impl->apply_fn = std::move(apply);
    impl->adjoint_fn = std::move(adjoint);

    // Registration is single threaded, so probe the callables directly.
    if (probe_pairs > 0) {
        const double defect = adjoint_defect_fns(impl->apply_fn, impl->adjoint_fn,
                                                 impl->m, impl->n, probe_pairs);
        if (defect > 1e-10)
            throw AdjointConsistencyError(
                "ForwardOperator: adjoint probes disagree, relative defect " +
                std::to_string(defect));
    }
    impl->fingerprint = probe_fingerprint(impl->apply_fn, impl->m, impl->n, impl->offset);
    return ForwardOperator(std::move(impl));
}

std::size_t ForwardOperator::input_dim() const { return impl_->m; }
std::size_t ForwardOperator::output_dim() const { return impl_->n; }

Vector ForwardOperator::apply(const Vector& x) const {
    require_dim(x.size() == impl_->m, "ForwardOperator::apply: length mismatch");
    Vector y = impl_->call(impl_->apply_fn, x);
    require_dim(y.size() == impl_->n, "ForwardOperator::apply: operator returned wrong length");
    return y;
}

Vector ForwardOperator::adjoint(const Vector& w) const {
    require_dim(w.size() == impl_->n, "ForwardOperator::adjoint: length mismatch");
    Vector r = impl_->call(impl_->adjoint_fn, w);
    require_dim(r.size() == impl_->m, "ForwardOperator::adjoint: operator returned wrong length");
    return r;
}

Vector ForwardOperator::observe(const Vector& x) const {
    Vector y = apply(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += impl_->offset[i];
    return y;
}

const Vector& ForwardOperator::offset() const { return impl_->offset; }

bool ForwardOperator::is_explicit() const { return impl_->explicit_matrix; }

const Matrix& ForwardOperator::matrix() const {
    if (!impl_->explicit_matrix)
        throw UnsupportedPathError("ForwardOperator: no explicit matrix on this operator");
    return impl_->a;
}

std::uint64_t ForwardOperator::fingerprint() const { return impl_->fingerprint; }

double adjoint_defect(const ForwardOperator& op, int pairs) {
    return adjoint_defect_fns([&op](const Vector& x) { return op.apply(x); },
                              [&op](const Vector& w) { return op.adjoint(w); },
                              op.input_dim(), op.output_dim(), pairs);
}

Vector debias_observations(const Vector& y_tilde, const ForwardOperator& op) {
    require_dim(y_tilde.size() == op.output_dim(),
                "debias_observations: length mismatch");
    return sub(y_tilde, op.offset());
}

ForwardOperator toy_operator(double epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw DefinitenessError("toy_operator: epsilon must be strictly positive");
    Matrix a(2, 2);
    a(0, 0) = 1.0 - epsilon;
    a(0, 1) = epsilon;
    a(1, 0) = epsilon;
    a(1, 1) = 1.0 - epsilon;
    return ForwardOperator::from_matrix(std::move(a));
}

ForwardOperator synthetic_operator(std::size_t output_dim, std::size_t input_dim,
                                   double smoothness, std::uint64_t seed) {
    require_dim(output_dim > 0 && input_dim > 0, "synthetic_operator: zero dimension");
    if (!(smoothness >= 0.0) || !std::isfinite(smoothness))
        throw DefinitenessError("synthetic_operator: smoothness must be nonnegative");

    const std::size_t n = output_dim;
    const std::size_t m = input_dim;
    Matrix a(n, m);
    rng::Stream jitter(seed, rng::kPurposeOperator, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double base = (static_cast<double>(i) + 0.5) *
                                static_cast<double>(m) / static_cast<double>(n) -
                            0.5;
        const double center = base + 0.5 * (jitter.uniform(2 * i) - 0.5);
        const double width = smoothness * (0.75 + 0.5 * jitter.uniform(2 * i + 1));

        // Peak entry is exactly 1 before normalization, so tiny widths
        // degrade gracefully to one-hot rows instead of underflowing.
        double d2min = std::numeric_limits<double>::infinity();
        std::size_t jmin = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = static_cast<double>(j) - center;
            if (d * d < d2min) {
                d2min = d * d;
                jmin = j;
            }
        }
        double sum = 0.0;
        if (width > 0.0) {
            for (std::size_t j = 0; j < m; ++j) {
                const double d = static_cast<double>(j) - center;
                const double e = std::exp(-0.5 * (d * d - d2min) / (width * width));
                a(i, j) = e;
                sum += e;
            }
        } else {
            a(i, jmin) = 1.0;
            sum = 1.0;
        }
        for (std::size_t j = 0; j < m; ++j) a(i, j) /= sum;
    }
    return ForwardOperator::from_matrix(std::move(a));
}

} // namespace fluxmc
