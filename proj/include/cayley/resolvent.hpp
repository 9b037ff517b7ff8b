#pragma once

// Resolvent entries of the loop-perturbed tree, R_Y = R + R (1 - S)^{-1} P R,
// with the inverse realized on truncations of the perturbed set.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/secular.hpp"
#include "cayley/tree.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace cayley {

struct ResolventOptions {
    double change_tol = 1e-10; // stop growing the truncation once the entry moves less than this
    int n_start = 16;      // reduced root-root path
    int dense_n_start = 4; // dense path on explicit sites
    int n_max_reduced = 1 << 22;
    std::size_t dense_cap = 2048;
};

namespace detail {

// lambda* of a family, or the tree norm when the perturbation does not lift it.
inline double perturbed_norm(int Q, const PerturbationSpec& pert) {
    const auto r = solve_secular_closed<double>(Q, pert);
    if (const auto* root = std::get_if<SecularRoot<double>>(&r)) return root->lambda_star;
    return tree_norm<double>(Q);
}

template <class T>
PerturbationSpec with_extent(const T& s, int m) {
    T t = s;
    t.m = m;
    return t;
}

inline PerturbationSpec resize_family(const PerturbationSpec& p, int m) {
    return std::visit([&](const auto& s) -> PerturbationSpec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, RootLoops>) return s;
        else return with_extent(s, m);
    }, p);
}

// Root-root correction from the semiseparable kernel: r^T (I - M/mu)^{-1} r
// with (I - M/mu)^{-1} = (T - I/mu)^{-1} T and T = M^{-1} tridiagonal.
inline double reduced_root_entry(const PerturbationSpec& pert, const SpectralParams<double>& p, int n) {
    const auto M = family_kernel<double>(pert, p.a, n);
    const auto T = tridiagonal_inverse(M);
    const std::size_t N = M.size();
    // root column of R restricted to the reduced coordinates: sqrt(n_i) a^i / mu
    std::vector<double> r(N);
    const double lead = std::sqrt(M.U[0] / M.V[0]);
    double xi_pow = 1;
    for (std::size_t i = 0; i < N; ++i) {
        r[i] = (i == 0 ? 1.0 : lead) * xi_pow / p.mu;
        xi_pow *= M.xi;
    }
    // y = T r
    std::vector<double> y(N), d(N), c(N > 0 ? N - 1 : 0);
    for (std::size_t i = 0; i < N; ++i) {
        y[i] = T.diag[i] * r[i];
        if (i > 0) y[i] += T.off[i - 1] * r[i - 1];
        if (i + 1 < N) y[i] += T.off[i] * r[i + 1];
        d[i] = T.diag[i] - 1 / p.mu;
    }
    for (std::size_t i = 0; i + 1 < N; ++i) c[i] = T.off[i];
    // Thomas solve of (T - I/mu) z = y
    std::vector<double> cp(N), zp(N);
    double den = d[0];
    if (den == 0) throw domain_error("resolvent: singular reduced system");
    cp[0] = N > 1 ? c[0] / den : 0;
    zp[0] = y[0] / den;
    for (std::size_t i = 1; i < N; ++i) {
        den = d[i] - c[i - 1] * cp[i - 1];
        if (den == 0) throw domain_error("resolvent: singular reduced system");
        cp[i] = i + 1 < N ? c[i] / den : 0;
        zp[i] = (y[i] - c[i - 1] * zp[i - 1]) / den;
    }
    for (std::size_t i = N - 1; i-- > 0;) zp[i] -= cp[i] * zp[i + 1];
    double s = 0;
    for (std::size_t i = 0; i < N; ++i) s += r[i] * zp[i];
    return s;
}

// General entry from a dense solve on the sites of the truncated family.
inline double dense_entry(int Q, const PerturbationSpec& pert, const SpectralParams<double>& p, vertex_id x,
                          vertex_id y, Embedding emb) {
    const auto sites = perturbed_sites(Q, pert, emb);
    const auto N = static_cast<Eigen::Index>(sites.size());
    auto R = [&](vertex_id u, vertex_id v) { return std::pow(p.a, tree_distance(Q, u, v)) / p.mu; };
    Eigen::MatrixXd K(N, N);
    Eigen::VectorXd w(N), u(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double mi = std::sqrt(double(sites[static_cast<std::size_t>(i)].loops));
        for (Eigen::Index j = 0; j < N; ++j) {
            const double mj = std::sqrt(double(sites[static_cast<std::size_t>(j)].loops));
            K(i, j) = (i == j ? 1.0 : 0.0) - mi * mj * R(sites[static_cast<std::size_t>(i)].v, sites[static_cast<std::size_t>(j)].v);
        }
        w(i) = mi * R(sites[static_cast<std::size_t>(i)].v, y);
        u(i) = mi * R(x, sites[static_cast<std::size_t>(i)].v);
    }
    const Eigen::VectorXd z = K.partialPivLu().solve(w);
    return R(x, y) + u.dot(z);
}

} // namespace detail

// <delta_x, R_Y(lambda) delta_y> for vertex ids of the infinite tree (BFS addressing);
// an empty perturbation gives the free kernel.
inline double resolvent_entry_perturbed(int Q, const std::optional<PerturbationSpec>& pert, double lambda,
                                        vertex_id x, vertex_id y, const ResolventOptions& opt = {},
                                        Embedding emb = Embedding::first_children) {
    detail::require_degree(Q);
    if (x < 0 || y < 0) throw index_error("resolvent: negative vertex id");
    if (!pert) return walk_kernel<double>(Q, tree_distance(Q, x, y), lambda);
    validate_perturbation(Q, *pert);
    const double lstar = detail::perturbed_norm(Q, *pert);
    if (!(lambda > lstar)) throw domain_error("resolvent: lambda must exceed the perturbed norm " + detail::num(lstar));
    const auto p = spectral_params<double>(Q, lambda);
    if (const auto* loops = std::get_if<RootLoops>(&*pert)) {
        const double k = loops->k;
        const double rx = std::pow(p.a, tree_distance(Q, x, 0)) / p.mu;
        const double ry = std::pow(p.a, tree_distance(Q, 0, y)) / p.mu;
        return walk_kernel<double>(Q, tree_distance(Q, x, y), lambda) + rx * ry * k / (1 - k / p.mu);
    }
    const bool root_root = (x == 0 && y == 0);
    double prev = std::numeric_limits<double>::quiet_NaN();
    // branching sets grow geometrically with their extent, so they step one level at a time
    const auto* sub = std::get_if<Subtree>(&*pert);
    const bool branching = !root_root && sub && sub->q > 2;
    for (int n = root_root ? opt.n_start : opt.dense_n_start;; n = branching ? n + 1 : 2 * n) {
        double cur;
        if (root_root) {
            if (n > opt.n_max_reduced) break;
            cur = 1 / p.mu + detail::reduced_root_entry(*pert, p, n);
        } else {
            const auto fam = detail::resize_family(*pert, n);
            // deep sites have no int64 vertex id; that bounds the extent like the site cap does
            std::size_t count = 0;
            try {
                count = perturbed_sites(Q, fam, emb).size();
            } catch (const capacity_error&) {
                break;
            }
            if (count > opt.dense_cap) break;
            cur = detail::dense_entry(Q, fam, p, x, y, emb);
        }
        if (!std::isnan(prev) && std::abs(cur - prev) < opt.change_tol) return cur;
        prev = cur;
    }
    throw convergence_failure("resolvent: truncation did not settle", prev);
}

} // namespace cayley
