#pragma once

// Closed-form resolvent quantities of the homogeneous tree and of the
// loop-perturbed trees, as functions of the spectral parameter lambda.
// Everything here is a pure function templated on the real type so the
// same code runs in double and in boost multiprecision.

#include "cayley/error.hpp"

#include <cmath>
#include <cstdio>
#include <complex>
#include <string>
#include <vector>

namespace cayley {

namespace detail {

template <class Real>
Real edge_of(int Q) {
    using std::sqrt;
    return 2 * sqrt(Real(Q - 1));
}

inline std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

// Norm of the unperturbed adjacency, 2 sqrt(Q-1).
template <class Real = double>
Real tree_norm(int Q) {
    if (Q < 2) throw invalid_parameter("degree Q must be >= 2");
    return detail::edge_of<Real>(Q);
}

template <class Real = double>
struct SpectralParams {
    int Q = 0;
    Real lambda{};
    Real a{};  // off-diagonal decay rate, smaller root of (Q-1)a^2 - lambda a + 1
    Real mu{}; // inverse diagonal resolvent entry
    Real s{};  // sqrt(lambda^2 - 4(Q-1))
};

template <class Real = double>
SpectralParams<Real> spectral_params(int Q, Real lambda) {
    using std::sqrt;
    if (Q < 2) throw invalid_parameter("degree Q must be >= 2");
    const Real e = detail::edge_of<Real>(Q);
    if (!(lambda > e))
        throw domain_error("lambda must exceed the tree norm 2 sqrt(Q-1)");
    SpectralParams<Real> p;
    p.Q = Q;
    p.lambda = lambda;
    // (lambda-e) is formed before the product so the band near the edge keeps full precision
    p.s = sqrt((lambda - e) * (lambda + e));
    p.a = 2 / (lambda + p.s);
    p.mu = ((Q - 2) * lambda + Q * p.s) / (2 * Real(Q - 1));
    return p;
}

// lambda as a function of a (inverse of a(lambda) on the physical branch).
template <class Real = double>
Real lambda_of_a(int Q, Real a) {
    return (Q - 1) * a + 1 / a;
}

// Resolvent entry of the unperturbed tree at distance d, from the walk
// generating function evaluated at xi = 1/lambda.
template <class Real = double>
Real walk_kernel(int Q, int dist, Real lambda) {
    using std::pow;
    using std::sqrt;
    if (Q < 2) throw invalid_parameter("degree Q must be >= 2");
    if (dist < 0) throw invalid_parameter("distance must be >= 0");
    if (!(lambda > detail::edge_of<Real>(Q)))
        throw domain_error("walk_kernel: lambda on or below the branch cut");
    const Real xi = 1 / lambda;
    // 1 - 4(Q-1)xi^2 = (lambda - e)(lambda + e)/lambda^2, factored to avoid cancellation at the edge
    const Real e = detail::edge_of<Real>(Q);
    const Real r = sqrt((lambda - e) * (lambda + e)) * xi;
    // (1 - r)/(2(Q-1)xi) rewritten without cancellation
    const Real step = 2 * xi / (1 + r);
    const Real w0 = 2 * Real(Q - 1) / (Real(Q - 2) + Q * r);
    return xi * w0 * pow(step, dist);
}

// Norm of convolution by a^{d} on the integers: the Poisson kernel at 1.
template <class Real = double>
Real poisson_norm(Real a) {
    if (!(a >= 0 && a < 1)) throw domain_error("poisson_norm needs 0 <= a < 1");
    return (1 + a) / (1 - a);
}

// Poisson kernel P_a(e^{i theta}).
template <class Real = double>
Real poisson_kernel(Real a, Real theta) {
    using std::cos;
    return (1 - a * a) / (1 - 2 * a * cos(theta) + a * a);
}

// Norm of convolution by a^{d} on the order-q tree.
template <class Real = double>
Real t_aq_norm(int q, Real a) {
    using std::sqrt;
    if (q < 2) throw invalid_parameter("t_aq_norm needs q >= 2");
    const Real b = sqrt(Real(q - 1));
    if (!(a >= 0) || !(a * b < 1)) throw domain_error("t_aq_norm needs 0 <= a < 1/sqrt(q-1)");
    const Real den = 1 - a * b;
    return (1 - a * a) / (den * den);
}

// Symbol of the order-q convolution operator, as a function on the
// spherical parameter z. Re z = 1/2 parametrizes the spectrum.
template <class Real = double>
std::complex<Real> t_aq_symbol(int q, Real a, std::complex<Real> z) {
    if (q < 3) throw invalid_parameter("t_aq_symbol needs q >= 3");
    const Real L = std::log(Real(q - 1));
    const std::complex<Real> one(1, 0);
    const std::complex<Real> p1 = std::exp((one - z) * L); // (q-1)^{1-z}
    const std::complex<Real> pz = std::exp(z * L);         // (q-1)^{z}
    const std::complex<Real> bracket = (p1 * p1 - one) / (one - a * p1) + (one - pz * pz) / (one - a * pz);
    return one + a / (p1 - pz) * bracket;
}

// Spherical function at the spectral edge of the order-q tree.
template <class Real = double>
Real spherical_phi_half(int q, int d) {
    using std::pow;
    if (q < 2) throw invalid_parameter("spherical_phi_half needs q >= 2");
    if (d < 0) throw invalid_parameter("distance must be >= 0");
    return (1 + Real(q - 2) / q * d) * pow(Real(q - 1), -Real(d) / 2);
}

// Smallest number of root loops that lifts the norm: k with k^2 (Q-1) > (Q-2)^2.
inline int min_loops_for_hidden_spectrum(int Q) {
    if (Q < 2) throw invalid_parameter("degree Q must be >= 2");
    const long long t = static_cast<long long>(Q - 2) * (Q - 2);
    int k = 1;
    while (static_cast<long long>(k) * k * (Q - 1) <= t) ++k;
    return k;
}

// ---------------------------------------------------------------------------
// Integrated density of states of the unperturbed tree (Laplace transform)

template <class Real = double>
Real ids_partition_series(int q, Real beta, int k_max) {
    using std::exp;
    using std::pow;
    using std::sin;
    using std::sqrt;
    if (q == 2) throw unsupported("ids_partition_series: prefactor vanishes at q = 2");
    if (q < 3) throw invalid_parameter("ids_partition_series needs q >= 3");
    if (!(beta >= 0)) throw domain_error("ids_partition_series needs beta >= 0");
    if (k_max < 1) throw invalid_parameter("k_max must be >= 1");
    const Real pi = Real(3.14159265358979323846264338327950288L);
    const Real c = 4 * beta * sqrt(Real(q - 1));
    Real total = 0;
    Real weight = 1;
    for (int k = 1; k <= k_max; ++k) {
        weight /= (q - 1);
        Real inner = 0;
        for (int n = 1; n <= k; ++n) {
            const Real s = sin(n * pi / (2 * (k + 1)));
            inner += exp(-c * s * s);
        }
        total += weight * inner;
    }
    return Real((q - 2) * (q - 2)) / (q - 1) * total;
}

// Smallest K with prefactor * sum_{k>K} k (q-1)^{-k} < tol.
inline int ids_series_kmax(int q, double tol = 1e-10) {
    if (q < 3) throw invalid_parameter("ids_series_kmax needs q >= 3");
    if (!(tol > 0)) throw invalid_parameter("tolerance must be positive");
    const double r = 1.0 / (q - 1);
    const double pre = double((q - 2) * (q - 2)) / (q - 1);
    for (int K = 1; K < 100000; ++K) {
        const double tail = std::pow(r, K + 1) * ((K + 1) - K * r) / ((1 - r) * (1 - r));
        if (pre * tail < tol) return K;
    }
    throw convergence_failure("ids_series_kmax: tolerance unreachable", tol);
}

// ---------------------------------------------------------------------------
// Contour roots for the diagonal trace of the perturbed resolvent

template <class Real = double>
struct ContourRoots {
    int q_eff = 2;
    Real Delta{};
    Real z_minus{};
    Real z_plus{};
};

// Roots of a mu z^2 - [(1 + a^2 (q-1)) mu - (1 - a^2)] z + a (q-1) mu.
template <class Real = double>
ContourRoots<Real> contour_roots(int q_eff, Real a, Real mu) {
    using std::sqrt;
    if (q_eff < 2) throw invalid_parameter("contour_roots needs q >= 2");
    const Real B = (1 + a * a * (q_eff - 1)) * mu - (1 - a * a);
    const Real Delta = B * B - 4 * Real(q_eff - 1) * a * a * mu * mu;
    if (Delta < 0) throw domain_error("contour_roots: negative discriminant (lambda below lambda*)");
    ContourRoots<Real> r;
    r.q_eff = q_eff;
    r.Delta = Delta;
    const Real sd = sqrt(Delta);
    r.z_plus = (B + sd) / (2 * a * mu);
    r.z_minus = Real(q_eff - 1) / r.z_plus; // product of the roots is q-1
    return r;
}

// Root-diagonal resolvent of the segment-perturbed tree, given a and mu.
template <class Real = double>
Real segment_trace_from(Real a, Real mu) {
    using std::sqrt;
    const Real A = (1 + a * a) * mu - (1 - a * a);
    const Real B = 2 * a * mu;
    const Real Delta = (A - B) * (A + B);
    if (!(Delta > 0)) throw domain_error("segment trace: lambda at or below lambda*");
    return (1 - a * a) / sqrt(Delta);
}

// Root-diagonal resolvent of the ray-perturbed tree, given a and mu.
template <class Real = double>
Real ray_trace_from(Real a, Real mu) {
    using std::sqrt;
    const auto r = contour_roots<Real>(2, a, mu);
    if (!(r.Delta > 0)) throw domain_error("ray trace: lambda at or below lambda*");
    const Real sd = sqrt(r.Delta);
    const Real zp = r.z_plus, zm = r.z_minus;
    const Real g0 = a / sd * ((a + 1 / a) - (zm + 1 / zp));
    const Real G = a * a / (sd * (zp - a)) * ((a + 1 / a) - (zp + 1 / zp));
    const Real h0 = (1 - a * a) / sd;
    const Real H = a * (1 - a * a) / (sd * (zp - a));
    return (g0 + h0 + 2 * (g0 * H - h0 * G)) / (1 - G + H + (mu - 1) * (g0 + g0 * H - h0 * G));
}

// Root-diagonal resolvent of the tree perturbed along an order-q subtree,
// from the residues of the contour representation at +-1 and z_minus.
template <class Real = double>
Real subtree_trace_from(int q, Real a, Real mu) {
    if (q < 3) throw invalid_parameter("subtree trace needs q >= 3");
    const auto r = contour_roots<Real>(q, a, mu);
    if (!(r.Delta > 0)) throw domain_error("subtree trace: lambda at or below lambda*");
    const Real b2 = Real(q - 1);
    const Real zm = r.z_minus, zp = r.z_plus;
    const Real at_plus_one = (1 - b2) / (2 * (1 - zm) * (1 - zp));
    const Real at_minus_one = -(1 - b2) / (2 * (1 + zm) * (1 + zp));
    const Real at_zm = (zm * zm - b2) / ((zm * zm - 1) * (zm - zp));
    return (a * a - 1) / (a * mu) * (at_plus_one + at_minus_one + at_zm);
}

// ---------------------------------------------------------------------------
// Finite-volume triangular recursions for the PF weights

// Ray: sigma(k) = 1 + (1/Lambda) sum_{l<k} (a^{2(k-l)} - 1) sigma(l).
template <class Real = double>
std::vector<Real> finite_recursion_ray(int Q, Real lambda_n, Real Lambda_n, int n) {
    if (!(Lambda_n > 0)) throw invalid_parameter("finite_recursion_ray needs Lambda > 0");
    if (n < 0) throw invalid_parameter("n must be >= 0");
    const Real a = spectral_params<Real>(Q, lambda_n).a;
    if (!(a > 0 && a < 1)) throw domain_error("finite_recursion_ray needs 0 < a < 1");
    std::vector<Real> a2pow(static_cast<std::size_t>(n) + 1);
    a2pow[0] = 1;
    for (int j = 1; j <= n; ++j) a2pow[static_cast<std::size_t>(j)] = a2pow[static_cast<std::size_t>(j) - 1] * a * a;
    std::vector<Real> sigma(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        Real acc = 0;
        for (int l = 0; l < k; ++l)
            acc += (a2pow[static_cast<std::size_t>(k - l)] - 1) * sigma[static_cast<std::size_t>(l)];
        sigma[static_cast<std::size_t>(k)] = 1 + acc / Lambda_n;
    }
    return sigma;
}

// Subtree: sigma(0)=1, sigma(m+1) = xi^2 sigma(m) + (1-a^2)(Sigma - R_m)/Lambda,
// R_m = sigma(0)+...+sigma(m), xi = a sqrt(q-1).
template <class Real = double>
std::vector<Real> finite_recursion_subtree(int q, Real a, Real Lambda, Real Sigma, int n) {
    if (q < 2) throw invalid_parameter("finite_recursion_subtree needs q >= 2");
    if (!(Lambda > 0)) throw invalid_parameter("finite_recursion_subtree needs Lambda > 0");
    if (!(a > 0 && a < 1)) throw domain_error("finite_recursion_subtree needs 0 < a < 1");
    if (n < 0) throw invalid_parameter("n must be >= 0");
    const Real xi2 = Real(q - 1) * a * a;
    std::vector<Real> sigma(static_cast<std::size_t>(n) + 1);
    sigma[0] = 1;
    Real R = 1;
    for (int m = 0; m < n; ++m) {
        const Real next = xi2 * sigma[static_cast<std::size_t>(m)] + (1 - a * a) * (Sigma - R) / Lambda;
        sigma[static_cast<std::size_t>(m) + 1] = next;
        R += next;
    }
    return sigma;
}

// Sigma_N from Lambda_N.
template <class Real = double>
Real subtree_sigma_of(int q, Real Lambda) {
    return ((q - 1) * Lambda + 1) / q;
}

// Residual of Lambda (sigma(n+1) - xi^2 sigma(n)) = (1-a^2)(Sigma - R_n) with
// sigma(n) = xi^n (1 + (q-2) n / q) and the matching Lambda, Sigma, R_n.
template <class Real = double>
Real subtree_fixed_point_residual(int q, Real a, int n) {
    using std::pow;
    using std::sqrt;
    if (q < 2) throw invalid_parameter("q must be >= 2");
    const Real xi = a * sqrt(Real(q - 1));
    if (!(xi < 1)) throw domain_error("needs a sqrt(q-1) < 1");
    const Real c = Real(q - 2) / q;
    auto sigma = [&](int m) { return pow(xi, m) * (1 + c * m); };
    const Real Lambda = (1 - a * a) / ((1 - xi) * (1 - xi));
    const Real Sigma = subtree_sigma_of<Real>(q, Lambda);
    const Real xin = pow(xi, n);
    const Real S0 = (1 - xin * xi) / (1 - xi);
    const Real S1 = xi * (1 - (n + 1) * xin + n * xin * xi) / ((1 - xi) * (1 - xi));
    const Real Rn = S0 + c * S1;
    return Lambda * (sigma(n + 1) - xi * xi * sigma(n)) - (1 - a * a) * (Sigma - Rn);
}

// Diagonal weight of the symmetrized radial kernel on the order-q subtree:
// 1 + ((q-2)/(q-1)) sum_{l=1}^{m-1} xi^{2l} + xi^{2m}, with xi^2 = (q-1) a^2.
template <class Real = double>
Real radial_shell_weight(int q, Real a, int m) {
    if (m == 0) return 1;
    const Real rho = Real(q - 1) * a * a;
    Real sum = 0, p = 1;
    for (int l = 1; l < m; ++l) {
        p *= rho;
        sum += p;
    }
    return 1 + Real(q - 2) / (q - 1) * sum + p * rho;
}

} // namespace cayley
