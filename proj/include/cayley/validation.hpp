#pragma once

// Closed forms laid out on finite balls and compared against the numerical
// oracle: PF profiles, eigen-relation residuals, finite-volume deviations.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/numerics.hpp"
#include "cayley/profiles.hpp"
#include "cayley/secular.hpp"
#include "cayley/tree.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cayley {

// The family extended to span a radius-n ball (root loops stay as they are).
inline PerturbationSpec spanning(const PerturbationSpec& p, int n) {
    return std::visit([&](const auto& s) -> PerturbationSpec {
        using T = std::decay_t<decltype(s)>;
        T t = s;
        if constexpr (!std::is_same_v<T, RootLoops>) t.m = n;
        return t;
    }, p);
}

// Closed-form PF vector of the family, evaluated at every vertex of the ball.
inline dvec closed_pf_on_ball(const TreeBall& ball, const PerturbationSpec& pert) {
    const int Q = ball.degree();
    const auto p = spanning(pert, ball.radius());
    const double a = closed_root_or_throw<double>(Q, p).a_star;
    dvec v(static_cast<std::size_t>(ball.vertex_count()));
    if (std::holds_alternative<RootLoops>(p)) {
        for (vertex_id x = 0; x < ball.vertex_count(); ++x) v[static_cast<std::size_t>(x)] = std::pow(a, ball.depth(x));
        return v;
    }
    const auto proj = project_to_set(ball, perturbed_vertex_ids(Q, p));
    for (vertex_id x = 0; x < ball.vertex_count(); ++x) {
        const auto i = static_cast<std::size_t>(x);
        const int d = proj.dist[i];
        const int k = ball.depth(proj.nearest[i]);
        double w = 1;
        if (std::holds_alternative<Ray>(p)) w = k * (1 - a) + 1;
        else if (const auto* s = std::get_if<Subtree>(&p)) w = spherical_phi_half<double>(s->q, k);
        v[i] = std::pow(a, d) * w;
    }
    return v;
}

// max |(A v)(x) - lambda* v(x)| over vertices of depth <= n - 1.
inline double interior_eigen_residual(const TreeBall& ball, const SparseAdjacency& A, const dvec& v, double lambda) {
    dvec Av(v.size());
    A.multiply(v, Av);
    double r = 0;
    for (vertex_id x = 0; x < ball.vertex_count(); ++x)
        if (ball.depth(x) <= ball.radius() - 1)
            r = std::max(r, std::abs(Av[static_cast<std::size_t>(x)] - lambda * v[static_cast<std::size_t>(x)]));
    return r;
}

struct PfComparison {
    int n = 0;
    double lambda_star = 0;
    double top_eigenvalue = 0;   // finite ball
    double closed_residual = 0;  // eigen-relation residual of the closed form, interior
    double max_deviation = 0;    // max |v_n - v| over depth <= n/2
    dvec finite;                 // v_n, root-normalized
    dvec closed;
};

inline PfComparison compare_pf(int Q, const PerturbationSpec& pert, int n, double tol = 1e-11) {
    const TreeBall ball(Q, n);
    const auto p = spanning(pert, n);
    const auto A = assemble_adjacency(ball, p);
    PfComparison c;
    c.n = n;
    c.lambda_star = closed_root_or_throw<double>(Q, p).lambda_star;
    c.closed = closed_pf_on_ball(ball, p);
    c.closed_residual = interior_eigen_residual(ball, A, c.closed, c.lambda_star);
    auto est = top_eigenpair(A, tol);
    c.top_eigenvalue = est.top_eigenvalue;
    c.finite = std::move(est.top_eigenvector);
    for (vertex_id x = 0; x < ball.vertex_count(); ++x)
        if (2 * ball.depth(x) <= n)
            c.max_deviation = std::max(c.max_deviation,
                                       std::abs(c.finite[static_cast<std::size_t>(x)] - c.closed[static_cast<std::size_t>(x)]));
    return c;
}

} // namespace cayley
