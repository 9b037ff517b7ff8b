#include "cayley/numerics.hpp"
#include "cayley/secular.hpp"
#include "cayley/tree.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>

using namespace cayley;

namespace {

double dense_top(const std::vector<std::vector<double>>& K) {
    const auto N = static_cast<Eigen::Index>(K.size());
    Eigen::MatrixXd M(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j) M(i, j) = K[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

double closed_lambda(int Q, const PerturbationSpec& p) {
    return std::get<SecularRoot<double>>(solve_secular_closed<double>(Q, p)).lambda_star;
}

double bisection_lambda(int Q, const PerturbationSpec& p) {
    return std::get<SecularRoot<double>>(solve_secular_bisection(Q, p)).lambda_star;
}

} // namespace

TEST(GreenMatrix, TridiagonalInverse) {
    for (const PerturbationSpec& p : {PerturbationSpec{Segment{}}, PerturbationSpec{Ray{}}, PerturbationSpec{Subtree{3, 0}},
                                      PerturbationSpec{Subtree{5, 0}}}) {
        for (double a : {0.1, 0.35, 0.49}) {
            const auto M = family_kernel<double>(p, a, 12);
            const auto T = tridiagonal_inverse(M);
            const std::size_t N = M.size();
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    double s = T.diag[i] * M.entry(i, j);
                    if (i > 0) s += T.off[i - 1] * M.entry(i - 1, j);
                    if (i + 1 < N) s += T.off[i] * M.entry(i + 1, j);
                    EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-11);
                }
        }
    }
}

TEST(GreenMatrix, SturmCountMatchesDenseSpectrum) {
    const auto T = tridiagonal_inverse(family_kernel<double>(Subtree{3, 0}, 0.3, 9));
    const auto N = static_cast<Eigen::Index>(T.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index i = 0; i < N; ++i) D(i, i) = T.diag[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i + 1 < N; ++i) D(i, i + 1) = D(i + 1, i) = T.off[static_cast<std::size_t>(i)];
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(D).eigenvalues();
    EXPECT_NEAR(smallest_eigenvalue(T), ev(0), 1e-10 * std::abs(ev(0)));
    for (double x : {ev(0) - 1e-3, (ev(0) + ev(1)) / 2, (ev(3) + ev(4)) / 2, ev(N - 1) + 1})
        EXPECT_EQ(static_cast<Eigen::Index>(sturm_count_below(T, x)), (ev.array() < x).count());
}

TEST(Functional, ReducedEqualsUnreducedKernel) {
    const double l = 3.5;
    const int n = 5;
    for (auto emb : {Embedding::first_children, Embedding::last_children}) {
        EXPECT_NEAR(secular_functional<double>(3, Segment{}, l, n), dense_top(dense_kernel_matrix<double>(3, Segment{n}, l, emb)), 1e-12);
        EXPECT_NEAR(secular_functional<double>(3, Ray{}, l, n), dense_top(dense_kernel_matrix<double>(3, Ray{n}, l, emb)), 1e-12);
        EXPECT_NEAR(secular_functional<double>(4, Subtree{3, 0}, 4.2, 4),
                    dense_top(dense_kernel_matrix<double>(4, Subtree{3, 4}, 4.2, emb)), 1e-12);
        EXPECT_NEAR(secular_functional<double>(5, Subtree{4, 0}, 4.5, 3),
                    dense_top(dense_kernel_matrix<double>(5, Subtree{4, 3}, 4.5, emb)), 1e-12);
    }
    EXPECT_NEAR(secular_functional<double>(3, RootLoops{2}, l, 0), dense_top(dense_kernel_matrix<double>(3, RootLoops{2}, l)), 1e-14);
}

TEST(Functional, MonotoneInLambdaAndTruncation) {
    for (const PerturbationSpec& p : {PerturbationSpec{Segment{}}, PerturbationSpec{Ray{}}, PerturbationSpec{Subtree{3, 0}}}) {
        const int Q = 4;
        double prev = 1e300;
        for (double t = 1e-4; t < 20; t *= 2) {
            const double f = secular_functional<double>(Q, p, tree_norm<double>(Q) + t, 64);
            EXPECT_LT(f, prev);
            prev = f;
        }
        double prev_n = 0;
        for (int n = 1; n <= 256; n *= 2) {
            const double f = secular_functional<double>(Q, p, 3.6, n);
            EXPECT_GE(f, prev_n - 1e-14);
            prev_n = f;
        }
    }
}

TEST(Functional, LimitsOfTheTruncations) {
    const double l = 3.3;
    const auto p = spectral_params<double>(3, l);
    const double seg = poisson_norm<double>(p.a) / p.mu;
    double prev_gap = 1e9;
    for (int n : {50, 100, 200}) {
        const double gap = seg - secular_functional<double>(3, Segment{}, l, n);
        EXPECT_GT(gap, 0);
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 1e-3);
    const double l4 = 4.5;
    const auto p4 = spectral_params<double>(4, l4);
    EXPECT_NEAR(secular_functional<double>(4, Subtree{3, 0}, l4, 4000), t_aq_norm<double>(3, p4.a) / p4.mu, 1e-5);
    EXPECT_NEAR(secular_functional<double>(3, RootLoops{3}, l, 0), 3 / p.mu, 1e-15);
}

TEST(ClosedRoots, FrozenValues) {
    EXPECT_NEAR(closed_lambda(3, Segment{}), 3.381966011250105, 1e-13);
    EXPECT_NEAR(closed_lambda(3, Ray{}), 3.381966011250105, 1e-13);
    EXPECT_NEAR(closed_lambda(3, RootLoops{1}), (3 * std::sqrt(5.0) - 1) / 2, 1e-13);
    EXPECT_NEAR(closed_lambda(4, Subtree{3, 0}), 4.140511898096359, 1e-12);
    EXPECT_NEAR(closed_lambda(5, Subtree{3, 0}), 4.452596671446527, 1e-12);
    const auto r = std::get<SecularRoot<double>>(solve_secular_closed<double>(11, Subtree{3, 0}));
    EXPECT_NEAR(r.lambda_star, 6.325105311547540, 1e-10);
    EXPECT_NEAR(r.hidden_width, 5.5e-4, 1e-5);
    // the segment root sits where the Poisson norm equals mu
    const auto s = std::get<SecularRoot<double>>(solve_secular_closed<double>(3, Segment{}));
    EXPECT_LT(std::abs(poisson_norm<double>(s.a_star) - s.mu_star), 1e-12);
    EXPECT_NEAR(s.hidden_width, 0.5535388865039147, 1e-12);
}

TEST(ClosedRoots, NoRootOutsideTheRegion) {
    EXPECT_FALSE(has_root(solve_secular_closed<double>(8, Segment{})));
    EXPECT_FALSE(has_root(solve_secular_closed<double>(8, Ray{})));
    EXPECT_FALSE(has_root(solve_secular_closed<double>(12, Subtree{3, 0})));
    EXPECT_FALSE(has_root(solve_secular_closed<double>(7, RootLoops{2})));
    EXPECT_TRUE(has_root(solve_secular_closed<double>(7, RootLoops{3})));
    EXPECT_TRUE(has_root(solve_secular_closed<double>(7, Segment{})));
}

TEST(ClosedRoots, ThresholdFormula) {
    EXPECT_EQ(q_threshold(2), 7);
    EXPECT_EQ(q_threshold(3), 11);
    for (int q = 2; q <= 20; ++q) EXPECT_GT(q_threshold(q), q);
    for (int q = 2; q <= 12; ++q) {
        EXPECT_TRUE(has_root(solve_secular_closed<double>(q_threshold(q), Subtree{q, 0}))) << q;
        EXPECT_FALSE(has_root(solve_secular_closed<double>(q_threshold(q) + 1, Subtree{q, 0}))) << q;
    }
    // x^2 = 16 exactly: Q = 17 only touches the edge
    EXPECT_EQ(q_threshold(5), 16);
    EXPECT_EQ(q_threshold(37), 81);
}

TEST(ClosedRoots, MinLoopsIsSharp) {
    for (int Q = 3; Q <= 30; ++Q) {
        const int k = min_loops_for_hidden_spectrum(Q);
        EXPECT_TRUE(has_root(solve_secular_closed<double>(Q, RootLoops{k}))) << Q;
        if (k > 1) {
            EXPECT_FALSE(has_root(solve_secular_closed<double>(Q, RootLoops{k - 1}))) << Q;
        }
    }
}

TEST(Bisection, AgreesWithClosedForms) {
    for (const PerturbationSpec& p : {PerturbationSpec{Segment{}}, PerturbationSpec{Ray{}}, PerturbationSpec{RootLoops{1}}}) {
        for (int Q : {3, 5, 7}) {
            if (std::holds_alternative<RootLoops>(p) && Q > 3) continue;
            EXPECT_NEAR(bisection_lambda(Q, p), closed_lambda(Q, p), 1e-8);
        }
    }
    EXPECT_NEAR(bisection_lambda(4, Subtree{3, 0}), closed_lambda(4, Subtree{3, 0}), 1e-8);
    EXPECT_NEAR(bisection_lambda(5, Subtree{3, 0}), closed_lambda(5, Subtree{3, 0}), 1e-8);
    EXPECT_NEAR(bisection_lambda(4, Subtree{2, 0}), closed_lambda(4, Segment{}), 1e-8);
    EXPECT_NEAR(bisection_lambda(4, RootLoops{2}), closed_lambda(4, RootLoops{2}), 1e-10);
}

TEST(Bisection, SeesTheThresholds) {
    EXPECT_FALSE(has_root(solve_secular_bisection(8, Segment{})));
    EXPECT_FALSE(has_root(solve_secular_bisection(7, RootLoops{2})));
    EXPECT_TRUE(has_root(solve_secular_bisection(7, RootLoops{3})));
    EXPECT_TRUE(has_root(solve_secular_bisection(11, Subtree{3, 0})));
    EXPECT_FALSE(has_root(solve_secular_bisection(12, Subtree{3, 0})));
}

TEST(FixedPoint, AgreesAndFailsNearTheThreshold) {
    for (auto [Q, q] : {std::pair{4, 3}, std::pair{5, 3}, std::pair{3, 2}, std::pair{4, 2}}) {
        const auto r = solve_subtree_fixed_point<double>(Q, q);
        EXPECT_NEAR(r.lambda_star, closed_lambda(Q, Subtree{q, 0}), 1e-10);
        EXPECT_NEAR(r.lambda_star, 1 + 2 * std::sqrt(q - 1.0) + (Q - q) * r.a_star, 1e-10);
    }
    EXPECT_THROW(solve_subtree_fixed_point<double>(11, 3), convergence_failure);
}

TEST(Uniqueness, SingleSignChange) {
    for (const PerturbationSpec& p : {PerturbationSpec{Segment{}}, PerturbationSpec{Subtree{3, 0}}, PerturbationSpec{Ray{}}}) {
        const int Q = 5;
        int changes = 0;
        bool prev = secular_exceeds_one<double>(Q, p, tree_norm<double>(Q) + 1e-6, 256);
        for (double t = 1e-6; t < 100; t *= 1.1) {
            const bool now = secular_exceeds_one<double>(Q, p, tree_norm<double>(Q) + t, 256);
            if (now != prev) ++changes;
            prev = now;
        }
        EXPECT_EQ(changes, 1);
    }
}

TEST(FiniteVolume, BallNormsIncreaseTowardsTheRoot) {
    const double ls = closed_lambda(3, Segment{});
    double prev = 0;
    for (int n = 2; n <= 8; ++n) {
        const TreeBall b(3, n);
        const double top = top_eigenpair(assemble_adjacency(b, Segment{n})).top_eigenvalue;
        EXPECT_GT(top, prev);
        EXPECT_LT(top, ls);
        prev = top;
    }
}

TEST(FiniteVolume, RootLoopsConvergeGeometrically) {
    // the gap shrinks like ((Q-1) a*^2)^n
    const auto r = std::get<SecularRoot<double>>(solve_secular_closed<double>(4, RootLoops{2}));
    const double rate = 3 * r.a_star * r.a_star;
    double prev = 0;
    for (int n = 4; n <= 10; n += 2) {
        const TreeBall b(4, n);
        const double gap = r.lambda_star - top_eigenpair(assemble_adjacency(b, RootLoops{2})).top_eigenvalue;
        EXPECT_GT(gap, 0);
        if (prev > 0) {
            EXPECT_LT(gap / prev, 1.2 * rate * rate);
        }
        prev = gap;
    }
}
