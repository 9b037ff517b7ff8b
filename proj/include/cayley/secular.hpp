#pragma once

// Secular equation ||P_S R(lambda) P_S|| = 1 for the loop families, solved
// in closed form and by bisection on truncated kernel matrices.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/tree.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace cayley {

// ---------------------------------------------------------------------------
// Structured kernel matrices

// Symmetric matrix M_ij = u_min(i,j) v_max(i,j) with u_i = xi^-i U_i and
// v_i = xi^i V_i. The family kernels (segment in its even sector, ray,
// subtree in radial coordinates) all have this form, so their inverses are
// tridiagonal. Storing U, V instead of u, v keeps every entry bounded.
template <class Real = double>
struct GreenMatrix {
    Real xi{};
    std::vector<Real> U;
    std::vector<Real> V;

    std::size_t size() const { return U.size(); }
    Real entry(std::size_t i, std::size_t j) const {
        using std::pow;
        const std::size_t lo = std::min(i, j), hi = std::max(i, j);
        return pow(xi, Real(hi - lo)) * U[lo] * V[hi];
    }
};

template <class Real = double>
struct Tridiagonal {
    std::vector<Real> diag;
    std::vector<Real> off; // off[i] couples i and i+1
    std::size_t size() const { return diag.size(); }
};

template <class Real>
Tridiagonal<Real> tridiagonal_inverse(const GreenMatrix<Real>& M) {
    const std::size_t N = M.size();
    if (N == 0) throw invalid_parameter("empty kernel matrix");
    Tridiagonal<Real> T;
    T.diag.resize(N);
    T.off.resize(N - 1);
    if (N == 1) {
        T.diag[0] = 1 / (M.U[0] * M.V[0]);
        return T;
    }
    const Real xi = M.xi;
    const auto& U = M.U;
    const auto& V = M.V;
    std::vector<Real> w(N - 1);
    for (std::size_t i = 0; i + 1 < N; ++i) {
        w[i] = U[i + 1] * V[i] / xi - xi * U[i] * V[i + 1];
        T.off[i] = -1 / w[i];
    }
    T.diag[0] = U[1] / (xi * U[0] * w[0]);
    for (std::size_t i = 1; i + 1 < N; ++i)
        T.diag[i] = (U[i + 1] * V[i - 1] / (xi * xi) - xi * xi * U[i - 1] * V[i + 1]) / (w[i - 1] * w[i]);
    T.diag[N - 1] = V[N - 2] / (xi * V[N - 1] * w[N - 2]);
    return T;
}

// Number of eigenvalues of T strictly below x (Sturm sequence via LDL^T pivots).
template <class Real>
std::size_t sturm_count_below(const Tridiagonal<Real>& T, Real x) {
    using std::abs;
    const Real tiny = std::numeric_limits<Real>::min() * 1e4;
    std::size_t count = 0;
    Real p = T.diag[0] - x;
    if (p == 0) p = -tiny;
    if (p < 0) ++count;
    for (std::size_t i = 1; i < T.size(); ++i) {
        p = T.diag[i] - x - T.off[i - 1] * T.off[i - 1] / p;
        if (p == 0) p = -tiny;
        if (p < 0) ++count;
    }
    return count;
}

template <class Real>
Real smallest_eigenvalue(const Tridiagonal<Real>& T) {
    using std::abs;
    using std::max;
    using std::min;
    const std::size_t N = T.size();
    Real lo = T.diag[0], hi = T.diag[0];
    for (std::size_t i = 0; i < N; ++i) {
        Real r = 0;
        if (i > 0) r += abs(T.off[i - 1]);
        if (i + 1 < N) r += abs(T.off[i]);
        lo = min(lo, T.diag[i] - r);
        hi = max(hi, T.diag[i] + r);
    }
    const Real scale = max(abs(lo), abs(hi));
    const Real eps = std::numeric_limits<Real>::epsilon();
    for (int it = 0; it < 400 && hi - lo > 4 * eps * scale; ++it) {
        const Real mid = (lo + hi) / 2;
        if (sturm_count_below(T, mid) >= 1) hi = mid;
        else lo = mid;
    }
    return (lo + hi) / 2;
}

// Reduced kernel [a^{d(x,y)}] of a family truncated at n (mu not applied).
// Segment: even sector of the 2n+1 chain. Ray: n+1 chain. Subtree: radial shells 0..n.
template <class Real = double>
GreenMatrix<Real> family_kernel(const PerturbationSpec& pert, Real a, int n) {
    using std::sqrt;
    if (n < 0) throw invalid_parameter("truncation must be >= 0");
    GreenMatrix<Real> M;
    const std::size_t N = static_cast<std::size_t>(n) + 1;
    auto radial = [&](int q) {
        const Real c = sqrt(Real(q) / Real(q - 1));
        M.xi = a * sqrt(Real(q - 1));
        M.U.assign(N, Real(1));
        M.V.assign(N, Real(1));
        M.U[0] = c;
        M.V[0] = 1 / c;
        // running form of radial_shell_weight
        const Real rho = Real(q - 1) * a * a;
        const Real w = Real(q - 2) / Real(q - 1);
        Real sum = 0, p = rho;
        for (std::size_t i = 1; i < N; ++i) {
            M.U[i] = 1 + w * sum + p;
            sum += p;
            p *= rho;
        }
    };
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) {
                M.xi = a;
                M.U.assign(1, Real(1));
                M.V.assign(1, Real(1));
            } else if constexpr (std::is_same_v<T, Segment>) {
                radial(2);
            } else if constexpr (std::is_same_v<T, Ray>) {
                M.xi = a;
                M.U.assign(N, Real(1));
                M.V.assign(N, Real(1));
            } else {
                radial(s.q);
            }
        },
        pert);
    return M;
}

inline int loop_multiplicity(const PerturbationSpec& pert) {
    if (const auto* r = std::get_if<RootLoops>(&pert)) return r->k;
    return 1;
}

// Top eigenvalue of the truncated kernel [m a^{d(x,y)} / mu] on S_n.
template <class Real = double>
Real secular_functional(int Q, const PerturbationSpec& pert, Real lambda, int trunc_n) {
    validate_perturbation(Q, pert);
    const auto p = spectral_params<Real>(Q, lambda);
    const int k = loop_multiplicity(pert);
    if (std::holds_alternative<RootLoops>(pert)) return Real(k) / p.mu;
    const auto T = tridiagonal_inverse(family_kernel<Real>(pert, p.a, trunc_n));
    return Real(k) / (p.mu * smallest_eigenvalue(T));
}

// f_n(lambda) > 1, decided by inertia rather than by computing f_n.
template <class Real = double>
bool secular_exceeds_one(int Q, const PerturbationSpec& pert, Real lambda, int trunc_n) {
    const auto p = spectral_params<Real>(Q, lambda);
    const int k = loop_multiplicity(pert);
    if (std::holds_alternative<RootLoops>(pert)) return Real(k) > p.mu;
    // top eig of M above mu/k  <=>  T has an eigenvalue below k/mu
    const auto T = tridiagonal_inverse(family_kernel<Real>(pert, p.a, trunc_n));
    return sturm_count_below(T, Real(k) / p.mu) >= 1;
}

// Unreduced |S| x |S| kernel [m_s m_t]^{1/2} a^{d(s,t)} / mu from tree distances.
template <class Real = double>
std::vector<std::vector<Real>> dense_kernel_matrix(int Q, const PerturbationSpec& pert, Real lambda,
                                                   Embedding emb = Embedding::first_children) {
    using std::pow;
    using std::sqrt;
    const auto p = spectral_params<Real>(Q, lambda);
    const auto sites = perturbed_sites(Q, pert, emb);
    const std::size_t N = sites.size();
    std::vector<std::vector<Real>> K(N, std::vector<Real>(N));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            K[i][j] = sqrt(Real(sites[i].loops) * Real(sites[j].loops)) *
                      pow(p.a, tree_distance(Q, sites[i].v, sites[j].v)) / p.mu;
    return K;
}

// ---------------------------------------------------------------------------
// Roots

enum class RootMethod { closed_form, bisection, fixed_point };

inline std::string method_name(RootMethod m) {
    switch (m) {
    case RootMethod::closed_form: return "closed_form";
    case RootMethod::bisection: return "bisection";
    case RootMethod::fixed_point: return "fixed_point";
    }
    return "unknown";
}

template <class Real = double>
struct SecularRoot {
    int Q = 0;
    PerturbationSpec pert;
    Real lambda_star{};
    Real a_star{};
    Real mu_star{};
    Real hidden_width{};
    RootMethod method = RootMethod::closed_form;
    int truncation_n = 0; // bisection only
    Real residual{};      // |f(lambda*) - 1|
};

struct NoRoot {
    int Q = 0;
    PerturbationSpec pert;
    double max_functional = 0; // largest functional value seen near the edge
    std::string reason;
};

template <class Real = double>
using SecularResult = std::variant<SecularRoot<Real>, NoRoot>;

template <class Real>
bool has_root(const SecularResult<Real>& r) {
    return std::holds_alternative<SecularRoot<Real>>(r);
}

// Largest Q for which an order-q subtree of loops lifts the norm.
inline int q_threshold(int q) {
    if (q < 2) throw invalid_parameter("q_threshold needs q >= 2");
    // Q - 1 < x^2 with x = (2b + 1 + sqrt(4b + 1)) / 2, b = sqrt(q - 1)
    const auto isqrt = [](long long v) {
        auto r = static_cast<long long>(std::llround(std::sqrt(static_cast<long double>(v))));
        while (r * r > v) --r;
        while ((r + 1) * (r + 1) <= v) ++r;
        return r;
    };
    const long long bi = isqrt(q - 1);
    if (bi * bi == q - 1) {
        const long long c = isqrt(4 * bi + 1);
        if (c * c == 4 * bi + 1) {
            // x^2 is an integer: Q - 1 = x^2 only touches the edge
            const long long x = (2 * bi + 1 + c) / 2;
            return static_cast<int>(x * x);
        }
    }
    const long double b = std::sqrt(static_cast<long double>(q - 1));
    const long double t = 2 * b + 1 + std::sqrt(4 * b + 1);
    return static_cast<int>(std::floor(t * t / 4)) + 1;
}

// a(lambda*) for an order-q subtree, the smaller root of a = (1 - a b)^2, b = sqrt(q-1).
template <class Real = double>
Real subtree_a_star(int q) {
    using std::sqrt;
    if (q < 2) throw invalid_parameter("q must be >= 2");
    const Real b = sqrt(Real(q - 1));
    return (2 * b + 1 - sqrt(4 * b + 1)) / (2 * b * b);
}

namespace detail {

template <class Real>
SecularRoot<Real> make_root(int Q, const PerturbationSpec& pert, Real lambda, RootMethod m) {
    const auto p = spectral_params<Real>(Q, lambda);
    SecularRoot<Real> r;
    r.Q = Q;
    r.pert = pert;
    r.lambda_star = lambda;
    r.a_star = p.a;
    r.mu_star = p.mu;
    r.hidden_width = lambda - tree_norm<Real>(Q);
    r.method = m;
    return r;
}

template <class Real>
Real subtree_secular_gap(int Q, int q, Real lambda) {
    const auto p = spectral_params<Real>(Q, lambda);
    return t_aq_norm<Real>(q, p.a) - p.mu;
}

} // namespace detail

template <class Real = double>
SecularResult<Real> solve_secular_closed(int Q, const PerturbationSpec& pert) {
    using std::abs;
    using std::sqrt;
    validate_perturbation(Q, pert);
    const Real edge = tree_norm<Real>(Q);
    NoRoot none{Q, pert, 0.0, ""};
    if (const auto* loops = std::get_if<RootLoops>(&pert)) {
        const long long k = loops->k;
        if (k * k * (Q - 1) <= static_cast<long long>(Q - 2) * (Q - 2)) {
            none.max_functional = static_cast<double>(Real(k) * sqrt(Real(Q - 1)) / Real(Q - 2));
            none.reason = "k loops do not lift the norm (k^2 (Q-1) <= (Q-2)^2)";
            return none;
        }
        // mu(lambda) = k  <=>  1/a - a = k
        const Real kk = Real(k);
        const Real a = (sqrt(kk * kk + 4) - kk) / 2;
        auto r = detail::make_root<Real>(Q, pert, lambda_of_a<Real>(Q, a), RootMethod::closed_form);
        r.residual = abs(kk / r.mu_star - 1);
        return r;
    }
    if (std::holds_alternative<Segment>(pert) || std::holds_alternative<Ray>(pert)) {
        if (Q > 7) {
            none.max_functional =
                static_cast<double>(poisson_norm<Real>(1 / sqrt(Real(Q - 1))) * sqrt(Real(Q - 1)) / Real(Q - 2));
            none.reason = "no solution of the segment secular equation for Q > 7";
            return none;
        }
        const Real s5 = sqrt(Real(5));
        const Real lambda = (3 - s5) * Q / 2 + s5;
        auto r = detail::make_root<Real>(Q, pert, lambda, RootMethod::closed_form);
        r.residual = abs(poisson_norm<Real>(r.a_star) / r.mu_star - 1);
        return r;
    }
    const int q = std::get<Subtree>(pert).q;
    // at the edge a sqrt(q-1) <= 1; q == Q makes the left side blow up there
    const Real lo = edge * (1 + 64 * std::numeric_limits<Real>::epsilon());
    const Real g_lo = (q == Q) ? Real(1) : detail::subtree_secular_gap<Real>(Q, q, lo);
    if (!(g_lo > 0)) {
        none.max_functional = static_cast<double>(
            t_aq_norm<Real>(q, spectral_params<Real>(Q, lo).a) / spectral_params<Real>(Q, lo).mu);
        none.reason = "Q exceeds the subtree threshold Q(q)";
        return none;
    }
    Real hi = edge + 1;
    while (detail::subtree_secular_gap<Real>(Q, q, hi) > 0) hi = edge + 2 * (hi - edge);
    Real left = lo;
    if (q == Q) {
        // step off the pole before handing the bracket to the solver
        left = edge + (hi - edge) / 2;
        while (detail::subtree_secular_gap<Real>(Q, q, left) < 0) left = edge + (left - edge) / 2;
    }
    boost::uintmax_t iters = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        [&](Real l) { return detail::subtree_secular_gap<Real>(Q, q, l); }, left, hi,
        boost::math::tools::eps_tolerance<Real>(std::numeric_limits<Real>::digits - 3), iters);
    const Real lambda = (bracket.first + bracket.second) / 2;
    auto r = detail::make_root<Real>(Q, pert, lambda, RootMethod::closed_form);
    r.residual = abs(t_aq_norm<Real>(q, r.a_star) / r.mu_star - 1);
    return r;
}

// Subtree root by iterating lambda <- 1 + 2 sqrt(q-1) + (Q-q) a(lambda).
// Converges only where that map contracts (away from the threshold Q(q)).
template <class Real = double>
SecularRoot<Real> solve_subtree_fixed_point(int Q, int q, int max_iter = 10000) {
    using std::abs;
    using std::sqrt;
    validate_perturbation(Q, Subtree{q, 0});
    const Real edge = tree_norm<Real>(Q);
    const Real base = 1 + 2 * sqrt(Real(q - 1));
    Real lambda = base + Real(Q - q) / sqrt(Real(Q - 1));
    const Real tol = 8 * std::numeric_limits<Real>::epsilon();
    for (int it = 0; it < max_iter; ++it) {
        if (!(lambda > edge))
            throw convergence_failure("fixed-point iterate fell below the tree norm", static_cast<double>(lambda - edge));
        const Real next = base + (Q - q) * spectral_params<Real>(Q, lambda).a;
        if (abs(next - lambda) <= tol * next) {
            auto r = detail::make_root<Real>(Q, Subtree{q, 0}, next, RootMethod::fixed_point);
            r.residual = abs(t_aq_norm<Real>(q, r.a_star) / r.mu_star - 1);
            return r;
        }
        lambda = next;
    }
    throw convergence_failure("fixed-point iteration did not settle", 0.0);
}

struct BisectionOptions {
    int n_start = 32;
    int n_max = 1 << 20;
    double move_tol = 1e-10;     // stop doubling when the root moves less than this
    double residual_tol = 1e-10; // required |f(lambda) - 1| at the returned root
};

namespace detail {

// Root of f_n = 1 by bisection on the inertia predicate.
inline std::optional<double> truncated_root(int Q, const PerturbationSpec& pert, int n, double lo, double& hi) {
    if (!secular_exceeds_one<double>(Q, pert, lo, n)) return std::nullopt;
    while (secular_exceeds_one<double>(Q, pert, hi, n)) hi = lo + 2 * (hi - lo);
    double a = lo, b = hi;
    for (int it = 0; it < 200 && b - a > 4 * std::numeric_limits<double>::epsilon() * b; ++it) {
        const double mid = a + (b - a) / 2;
        if (mid <= a || mid >= b) break;
        if (secular_exceeds_one<double>(Q, pert, mid, n)) a = mid;
        else b = mid;
    }
    return a + (b - a) / 2;
}

} // namespace detail

// Bisection on truncations n = n_start, 2 n_start, ... until the root settles.
inline SecularResult<double> solve_secular_bisection(int Q, const PerturbationSpec& pert,
                                                     const BisectionOptions& opt = {}) {
    validate_perturbation(Q, pert);
    const double edge = tree_norm<double>(Q);
    const double lo = edge * (1 + 1e-6);
    const bool single = std::holds_alternative<RootLoops>(pert);
    double hi = edge + 1;
    double prev = std::numeric_limits<double>::quiet_NaN();
    double best_f = 0;
    for (int n = single ? 0 : opt.n_start; n <= opt.n_max; n = single ? opt.n_max + 1 : 2 * n) {
        const auto root = detail::truncated_root(Q, pert, n, lo, hi);
        if (!root) {
            best_f = std::max(best_f, secular_functional<double>(Q, pert, lo, n));
            if (single) break;
            continue;
        }
        const double f = secular_functional<double>(Q, pert, *root, n);
        if (single || (!std::isnan(prev) && std::abs(*root - prev) < opt.move_tol)) {
            auto r = detail::make_root<double>(Q, pert, *root, RootMethod::bisection);
            r.truncation_n = n;
            r.residual = std::abs(f - 1);
            if (r.residual > opt.residual_tol)
                throw convergence_failure("secular bisection: residual above tolerance", r.residual);
            return r;
        }
        prev = *root;
    }
    if (!std::isnan(prev))
        throw convergence_failure("secular bisection: truncated roots did not settle", 0.0);
    NoRoot none{Q, pert, best_f, "functional stays below 1 up to the truncation cap"};
    return none;
}

} // namespace cayley
