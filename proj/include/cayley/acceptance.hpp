#pragma once

// The eight acceptance criteria, each evaluated directly against the library.

#include "cayley/error.hpp"
#include "cayley/kernel.hpp"
#include "cayley/numerics.hpp"
#include "cayley/profiles.hpp"
#include "cayley/resolvent.hpp"
#include "cayley/secular.hpp"
#include "cayley/tree.hpp"
#include "cayley/validation.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cayley {

enum class CriterionStatus { pass, fail, skipped };

inline std::string status_name(CriterionStatus s) {
    switch (s) {
    case CriterionStatus::pass: return "pass";
    case CriterionStatus::fail: return "fail";
    case CriterionStatus::skipped: return "skipped";
    }
    return "unknown";
}

struct CriterionResult {
    int id = 0;
    std::string title;
    CriterionStatus status = CriterionStatus::pass;
    std::vector<std::string> details;
};

struct AcceptanceOptions {
    bool fast = false; // skip criteria that need balls of radius > 8
    // Runs the report twice and says whether the outputs were byte-identical;
    // empty means the determinism part of criterion 8 is not evaluated here.
    std::function<bool(std::string&)> determinism_probe;
};

namespace detail {

inline std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// Collects named checks for one criterion.
class Checklist {
public:
    explicit Checklist(CriterionResult& r) : r_(r) {}
    bool check(const std::string& what, bool ok, const std::string& observed) {
        r_.details.push_back(what + ": " + observed + (ok ? " [ok]" : " [FAIL]"));
        if (!ok) r_.status = CriterionStatus::fail;
        return ok;
    }
    void note(const std::string& what, const std::string& observed) { r_.details.push_back(what + ": " + observed + " [info]"); }
    bool within(const std::string& what, double value, double bound) {
        return check(what, value <= bound, fmt("%.3e", value) + " <= " + fmt("%.1e", bound));
    }
    // Runs f; a thrown library error fails the check instead of the criterion run.
    template <class F>
    void guarded(const std::string& what, F&& f) {
        try {
            f();
        } catch (const std::exception& e) {
            check(what, false, std::string("threw: ") + e.what());
        }
    }

private:
    CriterionResult& r_;
};

inline double rel_diff(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

inline bool strictly_decreasing(const dvec& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

inline std::string join(const dvec& v, const char* f = "%.6g") {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(f, v[i]);
    return s + "]";
}

inline double ball_top(int Q, const PerturbationSpec& p, int n) {
    const TreeBall ball(Q, n);
    return top_eigenpair(assemble_adjacency(ball, spanning(p, n))).top_eigenvalue;
}

} // namespace detail

// 1. Norm closed forms.
inline CriterionResult criterion_norm(const AcceptanceOptions& opt) {
    CriterionResult r{1, "norm closed forms", CriterionStatus::pass, {}};
    if (opt.fast) return {1, r.title, CriterionStatus::skipped, {"needs balls up to radius 12"}};
    detail::Checklist c(r);
    c.guarded("segment Q=3", [&] {
        const double closed = closed_root_or_throw<double>(3, Segment{}).lambda_star;
        const auto bis = solve_secular_bisection(3, Segment{});
        c.check("segment Q=3 bisection root exists", has_root(bis), has_root(bis) ? "root" : "no root");
        if (has_root(bis))
            c.within("segment Q=3 |closed - bisection|", std::abs(std::get<SecularRoot<double>>(bis).lambda_star - closed), 1e-8);
        dvec tops;
        for (int n = 2; n <= 12; ++n) tops.push_back(detail::ball_top(3, Segment{}, n));
        bool increasing = true, below = true;
        for (std::size_t i = 0; i < tops.size(); ++i) {
            below = below && tops[i] < closed;
            if (i > 0) increasing = increasing && tops[i] > tops[i - 1];
        }
        c.check("ball tops n=2..12 increase", increasing, detail::join(tops, "%.8f"));
        c.check("ball tops below lambda*", below, "lambda* = " + detail::fmt("%.12f", closed));
        c.within("gap lambda* - top at n=12", closed - tops.back(), 1e-2);
    });
    c.guarded("root loop Q=3", [&] {
        const double l = closed_root_or_throw<double>(3, RootLoops{1}).lambda_star;
        c.within("RootLoops(1) vs 22/(1+3 sqrt5), relative", detail::rel_diff(l, 22 / (1 + 3 * std::sqrt(5.0))), 1e-12);
    });
    c.guarded("segment Q=8", [&] {
        const bool closed_none = !has_root(solve_secular_closed<double>(8, Segment{}));
        const bool bis_none = !has_root(solve_secular_bisection(8, Segment{}));
        c.check("Q=8 segment has no root (closed, bisection)", closed_none && bis_none,
                std::string(closed_none ? "none" : "root") + ", " + (bis_none ? "none" : "root"));
    });
    return r;
}

// 2. Thresholds for root loops and subtrees.
inline CriterionResult criterion_thresholds(const AcceptanceOptions&) {
    CriterionResult r{2, "hidden-spectrum thresholds", CriterionStatus::pass, {}};
    detail::Checklist c(r);
    const int expected[] = {1, 2, 2, 2, 3};
    for (int Q = 3; Q <= 7; ++Q) {
        c.guarded("min loops Q=" + std::to_string(Q), [&] {
            const int k = min_loops_for_hidden_spectrum(Q);
            c.check("min loops Q=" + std::to_string(Q), k == expected[Q - 3],
                    std::to_string(k) + " (expected " + std::to_string(expected[Q - 3]) + ")");
            const bool with_k = has_root(solve_secular_bisection(Q, RootLoops{k}));
            const bool with_less = k > 1 && has_root(solve_secular_bisection(Q, RootLoops{k - 1}));
            c.check("bisection Q=" + std::to_string(Q) + " feasible at k, infeasible at k-1", with_k && !with_less,
                    std::string(with_k ? "root" : "none") + " / " + (k > 1 ? (with_less ? "root" : "none") : "no loops"));
        });
    }
    for (auto [q, Qexp] : {std::pair{2, 7}, std::pair{3, 11}}) {
        c.guarded("q_threshold(" + std::to_string(q) + ")", [&] {
            const int t = q_threshold(q);
            c.check("q_threshold(" + std::to_string(q) + ")", t == Qexp, std::to_string(t));
            const bool at = has_root(solve_secular_bisection(t, Subtree{q, 0}));
            const bool above = has_root(solve_secular_bisection(t + 1, Subtree{q, 0}));
            c.check("bisection subtree q=" + std::to_string(q) + " root at Q(q), none at Q(q)+1", at && !above,
                    std::string(at ? "root" : "none") + " / " + (above ? "root" : "none"));
        });
    }
    return r;
}

// 3. PF profiles.
inline CriterionResult criterion_pf(const AcceptanceOptions& opt) {
    CriterionResult r{3, "Perron-Frobenius profiles", CriterionStatus::pass, {}};
    if (opt.fast) return {3, r.title, CriterionStatus::skipped, {"needs balls up to radius 10"}};
    detail::Checklist c(r);
    const std::vector<std::pair<int, PerturbationSpec>> cases{{3, Segment{}}, {3, Ray{}}, {4, Subtree{3, 0}}};
    for (const auto& [Q, p] : cases) {
        const std::string tag = perturbation_name(p) + " Q=" + std::to_string(Q);
        c.guarded(tag, [&] {
            dvec dev, near;
            for (int n : {6, 8, 10}) {
                const auto cmp = compare_pf(Q, p, n);
                if (n == 10) c.within(tag + " closed eigen-relation residual / lambda*, n=10", cmp.closed_residual / cmp.lambda_star, 1e-9);
                dev.push_back(cmp.max_deviation);
                const TreeBall ball(Q, n);
                double d = 0;
                for (vertex_id x = 0; x < ball.vertex_count(); ++x)
                    if (ball.depth(x) <= 2)
                        d = std::max(d, std::abs(cmp.finite[static_cast<std::size_t>(x)] - cmp.closed[static_cast<std::size_t>(x)]));
                near.push_back(d);
            }
            c.check(tag + " max |v_n - v| on depth <= n/2 strictly decreasing, n=6,8,10",
                    detail::strictly_decreasing(dev), detail::join(dev));
            c.note(tag + " max |v_n - v| on depth <= 2, n=6,8,10", detail::join(near));
        });
    }
    return r;
}

// 4. Recurrence and transience.
inline CriterionResult criterion_recurrence(const AcceptanceOptions& opt) {
    CriterionResult r{4, "recurrence / transience", CriterionStatus::pass, {}};
    if (opt.fast) return {4, r.title, CriterionStatus::skipped, {"needs a radius-14 ball solve"}};
    detail::Checklist c(r);
    c.guarded("segment Q=3", [&] {
        const double ls = closed_root_or_throw<double>(3, Segment{}).lambda_star;
        const auto v = trace_extrapolate(3, Segment{}, ls, geometric_schedule(ls));
        c.check("segment Q=3 classified recurrent", v.kind == TraceKind::divergent, trace_kind_name(v.kind));
        c.within("segment Q=3 |exponent + 0.5|", std::abs(v.exponent + 0.5), 0.1);
    });
    c.guarded("ray Q=3", [&] {
        const double ls = closed_root_or_throw<double>(3, Ray{}).lambda_star;
        const auto v = trace_extrapolate(3, Ray{}, ls, geometric_schedule(ls));
        c.check("ray Q=3 classified transient", v.kind == TraceKind::finite, trace_kind_name(v.kind));
        c.within("ray Q=3 limit vs (1-a*)/a*, relative", detail::rel_diff(v.limit, transience_limit_ray<double>(3)), 5e-3);
    });
    c.guarded("subtree Q=4 q=3", [&] {
        const double ls = closed_root_or_throw<double>(4, Subtree{3, 0}).lambda_star;
        const auto v = trace_extrapolate(4, Subtree{3, 0}, ls, geometric_schedule(ls));
        c.check("subtree Q=4 q=3 classified transient", v.kind == TraceKind::finite, trace_kind_name(v.kind));
        c.within("subtree Q=4 q=3 limit vs closed form, relative",
                 detail::rel_diff(v.limit, transience_limit_subtree<double>(4, 3)), 1e-2);
    });
    c.guarded("ray trace at lambda*+0.5", [&] {
        const double l = closed_root_or_throw<double>(3, Ray{}).lambda_star + 0.5;
        const TreeBall ball(3, 14);
        const auto sol = resolvent_solve(assemble_adjacency(ball, Ray{14}), l, 0);
        c.within("hardy_trace_ray vs CG on radius-14 ball, relative", detail::rel_diff(sol.x[0], hardy_trace_ray<double>(3, l)), 1e-4);
    });
    return r;
}

// 5. Kernel identities.
inline CriterionResult criterion_kernel(const AcceptanceOptions&) {
    CriterionResult r{5, "kernel identities", CriterionStatus::pass, {}};
    detail::Checklist c(r);
    c.guarded("kernel grid", [&] {
        double walk = 0, quad = 0;
        for (int Q : {3, 4}) {
            const double edge = tree_norm<double>(Q);
            for (int i = 0; i < 100; ++i) {
                const double lambda = edge * (1 + 1e-6 * std::pow(1e6, i / 99.0));
                const auto p = spectral_params<double>(Q, lambda);
                quad = std::max(quad, std::abs((Q - 1) * p.a * p.a - lambda * p.a + 1));
                for (int d = 0; d <= 8; ++d)
                    walk = std::max(walk, detail::rel_diff(walk_kernel<double>(Q, d, lambda), std::pow(p.a, d) / p.mu));
            }
        }
        c.within("walk kernel vs a^d/mu, relative, 100-point grid", walk, 1e-12);
        c.within("(Q-1)a^2 - lambda a + 1", quad, 1e-12);
        double poisson = 0;
        for (int i = 0; i < 100; ++i) {
            const double a = 0.99 * i / 99.0;
            poisson = std::max(poisson, detail::rel_diff(t_aq_norm<double>(2, a), poisson_norm<double>(a)));
        }
        c.within("t_aq_norm(q=2) vs poisson_norm, relative", poisson, 1e-14);
    });
    for (auto [Q, q] : {std::pair{3, 2}, std::pair{4, 2}, std::pair{4, 3}, std::pair{5, 3}}) {
        const std::string tag = "(Q,q)=(" + std::to_string(Q) + "," + std::to_string(q) + ")";
        c.guarded(tag, [&] {
            const auto root = closed_root_or_throw<double>(Q, Subtree{q, 0});
            const double rhs = 1 + 2 * std::sqrt(double(q - 1)) + (Q - q) * root.a_star;
            c.within("fixed-point identity " + tag, std::abs(root.lambda_star - rhs), 1e-10);
        });
    }
    return r;
}

// 6. Integrated density of states.
inline CriterionResult criterion_ids(const AcceptanceOptions& opt) {
    CriterionResult r{6, "integrated density of states", CriterionStatus::pass, {}};
    if (opt.fast) return {6, r.title, CriterionStatus::skipped, {"needs balls up to radius 9"}};
    detail::Checklist c(r);
    c.guarded("series mass", [&] {
        const double phi0 = ids_partition_series<double>(3, 0.0, ids_series_kmax(3));
        c.within("|Phi(0+) - 1|, q=3", std::abs(phi0 - 1), 1e-9);
    });
    c.guarded("finite volume Phi_n(1)", [&] {
        const double phi = ids_partition_series<double>(3, 1.0, ids_series_kmax(3));
        dvec gaps;
        for (int n = 5; n <= 9; ++n) {
            const auto curve = ids_empirical(3, n, std::nullopt, {1.0});
            gaps.push_back(std::abs(curve.phi_table[0].second - phi));
        }
        c.check("|Phi_n(1) - Phi(1)| strictly decreasing, n=5..9", detail::strictly_decreasing(gaps), detail::join(gaps));
        c.within("final gap at n=9", gaps.back(), 0.1);
    });
    c.guarded("shifted CDF", [&] {
        const PerturbationSpec p = Subtree{2, 9};
        const auto root = closed_root_or_throw<double>(3, p);
        const auto unpert = ids_empirical(3, 9, std::nullopt);
        const auto pert = ids_empirical(3, 9, p, {}, root.lambda_star);
        c.within("Kolmogorov distance F_pert(x) vs F(x - width), n=9", kolmogorov_distance(pert, unpert, root.hidden_width), 0.1);
    });
    return r;
}

// 7. Finite recursions (high precision: the recursions cancel heavily in double).
inline CriterionResult criterion_recursions(const AcceptanceOptions&) {
    using mp = boost::multiprecision::cpp_bin_float_100;
    CriterionResult r{7, "finite recursions", CriterionStatus::pass, {}};
    detail::Checklist c(r);
    c.guarded("ray recursion", [&] {
        const auto root = closed_root_or_throw<mp>(3, Ray{});
        const mp a = root.a_star;
        const auto sigma = finite_recursion_ray<mp>(3, root.lambda_star, (1 + a) / (1 - a), 200);
        double worst = 0;
        for (int k = 0; k <= 50; ++k) {
            const mp target = pow(a, k) * ((1 - a) * k + 1);
            worst = std::max(worst, static_cast<double>(abs(sigma[static_cast<std::size_t>(k)] / target - 1)));
        }
        c.within("ray recursion vs a*^k((1-a*)k+1), relative, k<=50", worst, 1e-8);
    });
    c.guarded("subtree recursion", [&] {
        const mp a = closed_root_or_throw<mp>(4, Subtree{3, 0}).a_star;
        double worst = 0;
        for (int n = 0; n <= 100; ++n)
            worst = std::max(worst, static_cast<double>(abs(subtree_fixed_point_residual<mp>(3, a, n))));
        c.within("subtree fixed-point residual, n<=100, (Q,q)=(4,3)", worst, 1e-10);
    });
    return r;
}

// 8. Oracle integrity.
inline CriterionResult criterion_oracle(const AcceptanceOptions& opt) {
    CriterionResult r{8, "oracle integrity", CriterionStatus::pass, {}};
    if (opt.fast) return {8, r.title, CriterionStatus::skipped, {"needs a radius-12 ball solve"}};
    detail::Checklist c(r);
    c.guarded("trace identities", [&] {
        struct Case {
            int Q, n;
            std::optional<PerturbationSpec> p;
        };
        double worst = 0;
        for (const auto& cs : {Case{3, 8, Segment{8}}, Case{4, 5, Subtree{3, 5}}, Case{3, 6, RootLoops{2}}, Case{4, 5, std::nullopt}}) {
            const TreeBall ball(cs.Q, cs.n);
            const auto A = cs.p ? assemble_adjacency(ball, *cs.p) : assemble_adjacency(ball);
            const auto ev = full_spectrum(A);
            double tr = 0, fro = 0, s1 = 0, s2 = 0;
            for (std::int64_t v = 0; v < A.dimension; ++v) tr += A.diagonal(v);
            for (int x : A.value) fro += double(x) * x;
            for (double e : ev) {
                s1 += e;
                s2 += e * e;
            }
            worst = std::max({worst, std::abs(s1 - tr), std::abs(s2 - fro) / fro});
        }
        c.within("sum / sum of squares of eigenvalues vs trace / Frobenius", worst, 1e-10);
    });
    c.guarded("CG residual", [&] {
        const TreeBall b12(3, 12);
        const auto s1 = resolvent_solve(assemble_adjacency(b12), 3.0, 0);
        const double l = closed_root_or_throw<double>(4, Subtree{3, 0}).lambda_star + 0.5;
        const TreeBall b8(4, 8);
        const auto s2 = resolvent_solve(assemble_adjacency(b8, Subtree{3, 8}), l, 0);
        c.within("||(lambda - A)x - delta|| for CG solves", std::max(s1.residual, s2.residual), 1e-12);
    });
    if (opt.determinism_probe) {
        c.guarded("determinism", [&] {
            std::string why;
            const bool same = opt.determinism_probe(why);
            c.check("two report runs byte-identical", same, why);
        });
    } else {
        r.details.push_back("two report runs byte-identical: evaluated by the acceptance runner");
    }
    return r;
}

using CriterionFn = CriterionResult (*)(const AcceptanceOptions&);

inline std::vector<CriterionFn> all_criteria() {
    return {criterion_norm, criterion_thresholds, criterion_pf, criterion_recurrence,
            criterion_kernel, criterion_ids, criterion_recursions, criterion_oracle};
}

} // namespace cayley
