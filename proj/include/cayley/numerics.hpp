#pragma once

// Brute-force spectral oracle: top eigenpairs and resolvent solves on
// assembled balls, dense spectra, empirical IDS, and exact reduced
// resolvent traces of large balls.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/tree.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace cayley {

using dvec = std::vector<double>;

namespace detail {

inline double dot(const dvec& x, const dvec& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}
inline double norm2(const dvec& x) { return std::sqrt(dot(x, x)); }
inline void axpy(double a, const dvec& x, dvec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}
inline void scale(dvec& x, double a) {
    for (double& v : x) v *= a;
}

} // namespace detail

struct SpectralEstimate {
    double top_eigenvalue = 0;
    dvec top_eigenvector; // normalized so the root entry is 1
    int iterations = 0;
    double residual_2norm = 0; // ||A v - lambda v|| / ||v||
};

// Largest eigenpair of a symmetric adjacency by single-vector LOBPCG from the
// all-ones start: each step does Rayleigh-Ritz on {x, residual, previous step}.
inline SpectralEstimate top_eigenpair(const SparseAdjacency& A, double tol = 1e-10, int max_iter = 200000) {
    using detail::axpy;
    using detail::dot;
    using detail::norm2;
    const std::size_t N = static_cast<std::size_t>(A.dimension);
    if (N == 0) throw invalid_parameter("top_eigenpair: empty matrix");
    SpectralEstimate est;
    dvec x(N, 1.0 / std::sqrt(static_cast<double>(N))), Ax(N);
    A.multiply(x, Ax);
    double theta = dot(x, Ax);
    dvec r(N), Ar(N), p, Ap;
    auto residual = [&]() {
        for (std::size_t i = 0; i < N; ++i) r[i] = Ax[i] - theta * x[i];
        return norm2(r);
    };
    double res = residual();
    int it = 0;
    for (; it < max_iter && res > tol; ++it) {
        // orthonormal basis of span{x, r, p}, carrying A times each vector along
        std::vector<dvec*> basis{&x};
        std::vector<dvec*> abasis{&Ax};
        auto orthonormalize = [&](dvec& v, dvec& Av) {
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t k = 0; k < basis.size(); ++k) {
                    const double c = dot(*basis[k], v);
                    axpy(-c, *basis[k], v);
                    axpy(-c, *abasis[k], Av);
                }
            const double nv = norm2(v);
            if (nv < 1e-14) return false;
            detail::scale(v, 1 / nv);
            detail::scale(Av, 1 / nv);
            return true;
        };
        A.multiply(r, Ar);
        if (orthonormalize(r, Ar)) {
            basis.push_back(&r);
            abasis.push_back(&Ar);
        }
        if (!p.empty() && orthonormalize(p, Ap)) {
            basis.push_back(&p);
            abasis.push_back(&Ap);
        }
        const int k = static_cast<int>(basis.size());
        Eigen::MatrixXd H(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) H(i, j) = H(j, i) = dot(*basis[static_cast<std::size_t>(i)], *abasis[static_cast<std::size_t>(j)]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        const Eigen::VectorXd c = es.eigenvectors().col(k - 1);
        dvec np(N, 0.0), nAp(N, 0.0);
        for (int i = 1; i < k; ++i) {
            axpy(c(i), *basis[static_cast<std::size_t>(i)], np);
            axpy(c(i), *abasis[static_cast<std::size_t>(i)], nAp);
        }
        for (std::size_t i = 0; i < N; ++i) {
            x[i] = c(0) * x[i] + np[i];
            Ax[i] = c(0) * Ax[i] + nAp[i];
        }
        p.swap(np);
        Ap.swap(nAp);
        const double nx = norm2(x);
        detail::scale(x, 1 / nx);
        detail::scale(Ax, 1 / nx);
        if (it % 25 == 24) A.multiply(x, Ax); // refresh against drift
        theta = dot(x, Ax);
        res = residual();
    }
    A.multiply(x, Ax);
    theta = dot(x, Ax);
    res = residual();
    if (res > tol) throw convergence_failure("top_eigenpair: iteration cap reached", res);
    double sum = 0;
    for (double v : x) sum += v;
    if (sum < 0) detail::scale(x, -1);
    est.top_eigenvalue = theta;
    est.iterations = it;
    est.residual_2norm = res;
    detail::scale(x, 1 / x[0]);
    est.top_eigenvector = std::move(x);
    return est;
}

struct LinearSolve {
    dvec x;
    int iterations = 0;
    double residual = 0; // ||(lambda I - A) x - b|| / ||b||
};

// (lambda I - A) x = delta_rhs by conjugate gradients.
inline LinearSolve resolvent_solve(const SparseAdjacency& A, double lambda, std::int64_t rhs_vertex,
                                   double rel_tol = 1e-12, int max_iter = 100000) {
    using detail::axpy;
    using detail::dot;
    using detail::norm2;
    const std::size_t N = static_cast<std::size_t>(A.dimension);
    if (rhs_vertex < 0 || rhs_vertex >= A.dimension) throw index_error("resolvent_solve: rhs vertex out of range");
    dvec b(N, 0.0);
    b[static_cast<std::size_t>(rhs_vertex)] = 1;
    auto apply = [&](const dvec& v, dvec& out) {
        A.multiply(v, out);
        for (std::size_t i = 0; i < N; ++i) out[i] = lambda * v[i] - out[i];
    };
    LinearSolve s;
    s.x.assign(N, 0.0);
    dvec r = b, p = b, Bp(N), Bx(N);
    double rr = dot(r, r);
    int it = 0;
    for (int restart = 0; restart < 4; ++restart) {
        for (; it < max_iter && std::sqrt(rr) > rel_tol * 0.5; ++it) {
            apply(p, Bp);
            const double curv = dot(p, Bp);
            if (!(curv > 0)) throw domain_error("resolvent_solve: lambda I - A is not positive definite");
            const double alpha = rr / curv;
            axpy(alpha, p, s.x);
            axpy(-alpha, Bp, r);
            const double rr_new = dot(r, r);
            const double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t i = 0; i < N; ++i) p[i] = r[i] + beta * p[i];
        }
        apply(s.x, Bx);
        for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - Bx[i];
        rr = dot(r, r);
        if (std::sqrt(rr) <= rel_tol) break;
        p = r;
    }
    s.iterations = it;
    s.residual = std::sqrt(rr);
    if (s.residual > rel_tol) throw convergence_failure("resolvent_solve: tolerance not reached", s.residual);
    return s;
}

// All eigenvalues, ascending, by a dense symmetric solver.
inline dvec full_spectrum(const SparseAdjacency& A, std::int64_t cap = 4096) {
    if (A.dimension > cap)
        throw size_error("full_spectrum: dimension " + std::to_string(A.dimension) + " over cap " + std::to_string(cap));
    const Eigen::Index N = static_cast<Eigen::Index>(A.dimension);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    for (std::int64_t r = 0; r < A.dimension; ++r)
        for (auto p = A.row_ptr[static_cast<std::size_t>(r)]; p < A.row_ptr[static_cast<std::size_t>(r) + 1]; ++p)
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(A.col[static_cast<std::size_t>(p)])) = A.value[static_cast<std::size_t>(p)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw convergence_failure("full_spectrum: eigensolver failed", 0.0);
    dvec ev(es.eigenvalues().data(), es.eigenvalues().data() + N);
    std::sort(ev.begin(), ev.end());
    return ev;
}

// ---------------------------------------------------------------------------
// Empirical integrated density of states

struct IdsCurve {
    dvec grid;     // reference - eigenvalue, ascending
    dvec F_values; // F at each grid point (right-continuous step function)
    int n_ball = 0;
    double reference_norm = 0;
    std::vector<std::pair<double, double>> phi_table; // (beta, Phi_n(beta))
};

// F(x) of a step curve.
inline double ids_cdf(const IdsCurve& c, double x) {
    const auto it = std::upper_bound(c.grid.begin(), c.grid.end(), x);
    return static_cast<double>(it - c.grid.begin()) / static_cast<double>(c.grid.size());
}

inline double finite_partition_function(const dvec& eigenvalues, double reference, double beta) {
    double s = 0;
    for (double e : eigenvalues) s += std::exp(-beta * (reference - e));
    return s / static_cast<double>(eigenvalues.size());
}

inline IdsCurve ids_from_spectrum(const dvec& eigenvalues, double reference, int n, const dvec& betas = {}) {
    IdsCurve c;
    c.n_ball = n;
    c.reference_norm = reference;
    c.grid.reserve(eigenvalues.size());
    for (double e : eigenvalues) c.grid.push_back(reference - e);
    std::sort(c.grid.begin(), c.grid.end());
    const double N = static_cast<double>(c.grid.size());
    for (std::size_t i = 0; i < c.grid.size(); ++i) c.F_values.push_back(static_cast<double>(i + 1) / N);
    // ties: right-continuity means all tied points carry the top count
    for (std::size_t i = c.grid.size(); i-- > 1;)
        if (c.grid[i - 1] == c.grid[i]) c.F_values[i - 1] = c.F_values[i];
    for (double b : betas) c.phi_table.emplace_back(b, finite_partition_function(eigenvalues, reference, b));
    return c;
}

// IDS of the radius-n ball, unperturbed or perturbed; the reference norm is
// 2 sqrt(Q-1) unless given.
inline IdsCurve ids_empirical(int Q, int n, const std::optional<PerturbationSpec>& pert, const dvec& betas = {},
                              std::optional<double> reference = std::nullopt, std::int64_t cap = 4096) {
    const TreeBall ball(Q, n);
    if (ball.vertex_count() > cap) throw size_error("ids_empirical: ball over dense cap");
    const auto A = pert ? assemble_adjacency(ball, *pert) : assemble_adjacency(ball);
    const dvec ev = full_spectrum(A, cap);
    return ids_from_spectrum(ev, reference.value_or(tree_norm<double>(Q)), n, betas);
}

// sup_x |F(x) - G(x - shift)| over two step curves.
inline double kolmogorov_distance(const IdsCurve& F, const IdsCurve& G, double shift) {
    dvec pts = F.grid;
    for (double g : G.grid) pts.push_back(g + shift);
    std::sort(pts.begin(), pts.end());
    double d = 0;
    for (double x : pts) {
        d = std::max(d, std::abs(ids_cdf(F, x) - ids_cdf(G, x - shift)));
        // left limits matter for step functions too
        const double xl = std::nextafter(x, -std::numeric_limits<double>::infinity());
        d = std::max(d, std::abs(ids_cdf(F, xl) - ids_cdf(G, xl - shift)));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Exact root resolvent of a large ball by symmetry reduction

namespace detail {

// Radial description of the perturbed set spanning a radius-R ball: set
// shells 0..L with couplings between consecutive shells, loops per vertex
// and the number of hanging complete branches per vertex.
struct ReducedBall {
    int L = 0;
    dvec coupling; // size L
    dvec loops;    // size L+1
    std::vector<int> hanging;
};

inline ReducedBall reduce_ball(int Q, const std::optional<PerturbationSpec>& pert, int R) {
    ReducedBall rb;
    auto radial = [&](int q, double loops, int hang_root, int hang_other, int L) {
        rb.L = L;
        rb.coupling.assign(static_cast<std::size_t>(L), std::sqrt(double(q - 1)));
        if (L > 0) rb.coupling[0] = std::sqrt(double(q));
        rb.loops.assign(static_cast<std::size_t>(L) + 1, loops);
        rb.hanging.assign(static_cast<std::size_t>(L) + 1, hang_other);
        rb.hanging[0] = hang_root;
    };
    if (!pert) {
        radial(Q, 0, 0, 0, R);
        return rb;
    }
    validate_perturbation(Q, *pert);
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) {
                radial(Q, 0, Q, 0, 0);
                rb.loops[0] = s.k;
            } else if constexpr (std::is_same_v<T, Segment>) {
                radial(2, 1, Q - 2, Q - 2, R);
            } else if constexpr (std::is_same_v<T, Ray>) {
                radial(2, 1, Q - 1, Q - 2, R);
                std::fill(rb.coupling.begin(), rb.coupling.end(), 1.0);
            } else {
                radial(s.q, 1, Q - s.q, Q - s.q, R);
            }
        },
        *pert);
    return rb;
}

} // namespace detail

// <delta_0, (lambda - A_ball)^{-1} delta_0> for the radius-R ball with the
// perturbation spanning the ball. Hanging complete branches are eliminated
// exactly, the perturbed set is folded or reduced radially.
inline double reduced_ball_root_resolvent(int Q, const std::optional<PerturbationSpec>& pert, double lambda, int R) {
    if (R < 0) throw invalid_parameter("radius must be >= 0");
    const auto rb = detail::reduce_ball(Q, pert, R);
    // g[h]: root entry of a complete branch whose root has h further levels below
    dvec g(static_cast<std::size_t>(std::max(R, 1)), 0.0);
    for (int h = 0; h < R; ++h) {
        const double den = (h == 0) ? lambda : lambda - (Q - 1) * g[static_cast<std::size_t>(h) - 1];
        if (!(den > 0)) throw domain_error("reduced_ball_root_resolvent: lambda inside the ball spectrum");
        g[static_cast<std::size_t>(h)] = 1 / den;
    }
    auto diag = [&](int i) {
        // vertex at depth i in a radius-R ball: branches below have R-i-1 further levels
        double d = lambda - rb.loops[static_cast<std::size_t>(i)];
        const int levels = R - i - 1;
        if (levels >= 0) d -= rb.hanging[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(levels)];
        return d;
    };
    double t = diag(rb.L);
    if (!(t > 0)) throw domain_error("reduced_ball_root_resolvent: lambda inside the ball spectrum");
    for (int i = rb.L - 1; i >= 0; --i) {
        const double c = rb.coupling[static_cast<std::size_t>(i)];
        t = diag(i) - c * c / t;
        if (!(t > 0)) throw domain_error("reduced_ball_root_resolvent: lambda inside the ball spectrum");
    }
    return 1 / t;
}

struct ConvergedTrace {
    double value = 0;
    int radius = 0;
};

// Root trace of balls of doubling radius until the relative change drops below rel_tol.
inline ConvergedTrace converged_ball_trace(int Q, const std::optional<PerturbationSpec>& pert, double lambda,
                                           double rel_tol = 1e-10, int R0 = 64, int R_max = 1 << 24) {
    double prev = reduced_ball_root_resolvent(Q, pert, lambda, R0);
    for (int R = 2 * R0; R <= R_max; R *= 2) {
        const double cur = reduced_ball_root_resolvent(Q, pert, lambda, R);
        if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) return {cur, R};
        prev = cur;
    }
    throw convergence_failure("converged_ball_trace: radius cap reached", prev);
}

enum class TraceKind { divergent, finite, inconclusive };

inline std::string trace_kind_name(TraceKind k) {
    switch (k) {
    case TraceKind::divergent: return "recurrent";
    case TraceKind::finite: return "transient";
    case TraceKind::inconclusive: return "inconclusive";
    }
    return "unknown";
}

struct TracePoint {
    double lambda;
    double trace;
    int radius;
};

struct TraceVerdict {
    TraceKind kind = TraceKind::inconclusive;
    double exponent = 0; // fitted slope of log trace against log(lambda - lambda*)
    double limit = 0;    // extrapolated trace at lambda* when finite
    std::vector<TracePoint> points;
};

// Default schedule lambda* + eps0 4^{-j}, j = 1..count.
inline dvec geometric_schedule(double lambda_star, double eps0 = 1.0, int count = 10) {
    dvec s;
    for (int j = 1; j <= count; ++j) s.push_back(lambda_star + eps0 * std::pow(4.0, -j));
    return s;
}

// Polynomial extrapolation to t = 0 (Neville).
inline double extrapolate_to_zero(const dvec& t, const dvec& y) {
    dvec p = y;
    const std::size_t n = t.size();
    for (std::size_t m = 1; m < n; ++m)
        for (std::size_t i = 0; i + m < n; ++i) p[i] = (t[i + m] * p[i] - t[i] * p[i + 1]) / (t[i + m] - t[i]);
    return p[0];
}

inline TraceVerdict trace_extrapolate(int Q, const PerturbationSpec& pert, double lambda_star, const dvec& schedule,
                                      int fit_points = 4) {
    if (schedule.size() < 3) throw invalid_parameter("trace_extrapolate: schedule needs at least 3 points");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i] > lambda_star)) throw invalid_parameter("trace_extrapolate: schedule must lie above lambda*");
        if (i > 0 && !(schedule[i] < schedule[i - 1]))
            throw invalid_parameter("trace_extrapolate: schedule must decrease");
    }
    TraceVerdict v;
    for (double l : schedule) {
        const auto t = converged_ball_trace(Q, pert, l);
        v.points.push_back({l, t.value, t.radius});
    }
    const std::size_t n = v.points.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(fit_points, 2)), n);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    dvec ts, ys;
    for (std::size_t i = n - k; i < n; ++i) {
        const double x = std::log(v.points[i].lambda - lambda_star);
        const double y = std::log(v.points[i].trace);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ts.push_back(std::sqrt(v.points[i].lambda - lambda_star));
        ys.push_back(v.points[i].trace);
    }
    v.exponent = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    if (v.exponent <= -0.25) {
        v.kind = TraceKind::divergent;
    } else if (v.exponent >= -0.05) {
        v.kind = TraceKind::finite;
        v.limit = extrapolate_to_zero(ts, ys);
    } else {
        v.kind = TraceKind::inconclusive;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Projection onto a connected set containing the root

struct Projection {
    std::vector<vertex_id> nearest;
    std::vector<int> dist;
};

// Nearest set point and distance for every ball vertex (set must contain the root).
inline Projection project_to_set(const TreeBall& ball, const std::vector<vertex_id>& S) {
    std::vector<char> in(static_cast<std::size_t>(ball.vertex_count()), 0);
    for (vertex_id s : S) {
        ball.check(s);
        in[static_cast<std::size_t>(s)] = 1;
    }
    if (!in[0]) throw contract_violation("project_to_set: the set must contain the root");
    Projection p;
    p.nearest.resize(in.size());
    p.dist.resize(in.size());
    for (vertex_id v = 0; v < ball.vertex_count(); ++v) {
        const auto i = static_cast<std::size_t>(v);
        if (in[i]) {
            p.nearest[i] = v;
            p.dist[i] = 0;
        } else {
            const auto par = static_cast<std::size_t>(ball.parent(v));
            if (!in[par] && p.dist[par] == 0 && par != 0)
                throw contract_violation("project_to_set: set is not connected");
            p.nearest[i] = p.nearest[par];
            p.dist[i] = p.dist[par] + 1;
        }
    }
    return p;
}

} // namespace cayley
