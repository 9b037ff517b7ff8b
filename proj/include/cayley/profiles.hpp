#pragma once

// Closed forms that live at or above the perturbed norm lambda*: PF
// eigenvector profiles, diagonal resolvent traces and transience limits.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/secular.hpp"

#include <cmath>
#include <string>

namespace cayley {

// lambda* in closed form; no_hidden_spectrum when the norm is not lifted.
template <class Real = double>
SecularRoot<Real> closed_root_or_throw(int Q, const PerturbationSpec& pert) {
    auto r = solve_secular_closed<Real>(Q, pert);
    if (auto* none = std::get_if<NoRoot>(&r)) throw no_hidden_spectrum(none->reason);
    return std::get<SecularRoot<Real>>(r);
}

namespace detail {

inline void require_chain_regime(int Q) {
    if (Q < 3) throw invalid_parameter("needs Q >= 3");
    if (Q > 7) throw no_hidden_spectrum("no hidden spectrum for Q > 7");
}

inline void require_subtree_regime(int Q, int q) {
    if (q < 2 || q > Q) throw invalid_parameter("needs 2 <= q <= Q");
    if (Q > q_threshold(q)) throw no_hidden_spectrum("Q exceeds the subtree threshold Q(q)");
}

template <class Real>
void require_above(Real lambda, Real lambda_star) {
    if (!(lambda > lambda_star)) throw domain_error("lambda must exceed lambda* = " + detail::num(static_cast<double>(lambda_star)));
}

} // namespace detail

template <class Real = double>
Real pf_vector_segment(int Q, int dist_to_set) {
    using std::pow;
    detail::require_chain_regime(Q);
    if (dist_to_set < 0) throw invalid_parameter("distance must be >= 0");
    const auto r = closed_root_or_throw<Real>(Q, Segment{});
    return pow(r.a_star, dist_to_set);
}

template <class Real = double>
Real pf_vector_ray(int Q, int dist_to_set, int ray_coord) {
    using std::pow;
    detail::require_chain_regime(Q);
    if (dist_to_set < 0 || ray_coord < 0) throw invalid_parameter("coordinates must be >= 0");
    const Real a = closed_root_or_throw<Real>(Q, Ray{}).a_star;
    return pow(a, dist_to_set) * (ray_coord * (1 - a) + 1);
}

template <class Real = double>
Real pf_vector_subtree(int Q, int q, int dist_to_set, int depth_in_set) {
    using std::pow;
    detail::require_subtree_regime(Q, q);
    if (dist_to_set < 0 || depth_in_set < 0) throw invalid_parameter("coordinates must be >= 0");
    const Real a = closed_root_or_throw<Real>(Q, Subtree{q, 0}).a_star;
    return pow(a, dist_to_set) * spherical_phi_half<Real>(q, depth_in_set);
}

template <class Real = double>
Real resolvent_trace_segment(int Q, Real lambda) {
    detail::require_chain_regime(Q);
    detail::require_above(lambda, closed_root_or_throw<Real>(Q, Segment{}).lambda_star);
    const auto p = spectral_params<Real>(Q, lambda);
    return segment_trace_from<Real>(p.a, p.mu);
}

template <class Real = double>
Real hardy_trace_ray(int Q, Real lambda) {
    detail::require_chain_regime(Q);
    detail::require_above(lambda, closed_root_or_throw<Real>(Q, Ray{}).lambda_star);
    const auto p = spectral_params<Real>(Q, lambda);
    return ray_trace_from<Real>(p.a, p.mu);
}

template <class Real = double>
Real resolvent_trace_subtree(int Q, int q, Real lambda) {
    detail::require_subtree_regime(Q, q);
    if (q == 2) return resolvent_trace_segment<Real>(Q, lambda);
    detail::require_above(lambda, closed_root_or_throw<Real>(Q, Subtree{q, 0}).lambda_star);
    const auto p = spectral_params<Real>(Q, lambda);
    return subtree_trace_from<Real>(q, p.a, p.mu);
}

// Limit of the root trace as lambda decreases to lambda*, order-q subtree.
template <class Real = double>
Real transience_limit_subtree(int Q, int q) {
    using std::sqrt;
    if (q == 2) throw recurrent_case("q = 2 perturbation is recurrent: the trace diverges");
    detail::require_subtree_regime(Q, q);
    const Real a = closed_root_or_throw<Real>(Q, Subtree{q, 0}).a_star;
    const Real b = sqrt(Real(q - 1));
    const Real t = 1 - a * b;
    return t * t * b / (a * Real(q - 2));
}

// Limit of the root trace for the ray perturbation.
template <class Real = double>
Real transience_limit_ray(int Q) {
    detail::require_chain_regime(Q);
    const Real a = closed_root_or_throw<Real>(Q, Ray{}).a_star;
    return (1 - a) / a;
}

} // namespace cayley
