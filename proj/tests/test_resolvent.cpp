#include "cayley/numerics.hpp"
#include "cayley/profiles.hpp"
#include "cayley/resolvent.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cayley;

namespace {

double lambda_star(int Q, const PerturbationSpec& p) { return closed_root_or_throw<double>(Q, p).lambda_star; }

// CG column of the ball resolvent with the family spanning the ball
dvec ball_column(int Q, const PerturbationSpec& p, int R, double lambda, vertex_id y) {
    const TreeBall b(Q, R);
    return resolvent_solve(assemble_adjacency(b, p), lambda, y).x;
}

} // namespace

TEST(Resolvent, FreeKernelWithoutPerturbation) {
    for (auto [x, y] : {std::pair<vertex_id, vertex_id>{0, 0}, {1, 2}, {4, 9}, {7, 7}})
        EXPECT_DOUBLE_EQ(resolvent_entry_perturbed(3, std::nullopt, 3.2, x, y),
                         walk_kernel<double>(3, tree_distance(3, x, y), 3.2));
}

TEST(Resolvent, RootLoopsAgainstCg) {
    const auto col = ball_column(3, RootLoops{1}, 14, 3.5, 0);
    for (vertex_id x : {0, 1, 4, 10, 22})
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, 3.5, x, 0), col[static_cast<std::size_t>(x)], 1e-6);
    const auto col5 = ball_column(3, RootLoops{1}, 14, 3.5, 5);
    EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, 3.5, 5, 8), col5[8], 1e-6);
}

TEST(Resolvent, RootEntryMatchesClosedTraces) {
    const double ls = lambda_star(3, Segment{});
    for (double t : {0.01, 0.5, 3.0}) {
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, ls + t, 0, 0),
                    resolvent_trace_segment<double>(3, ls + t), 1e-9 * resolvent_trace_segment<double>(3, ls + t));
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Ray{}}, ls + t, 0, 0), hardy_trace_ray<double>(3, ls + t),
                    1e-9 * hardy_trace_ray<double>(3, ls + t));
    }
    const double l4 = lambda_star(4, Subtree{3, 0});
    EXPECT_NEAR(resolvent_entry_perturbed(4, PerturbationSpec{Subtree{3, 0}}, l4 + 0.5, 0, 0), 0.447292477342045, 1e-10);
    EXPECT_NEAR(resolvent_entry_perturbed(4, PerturbationSpec{Subtree{3, 0}}, l4 + 0.5, 0, 0),
                resolvent_trace_subtree<double>(4, 3, l4 + 0.5), 1e-10);
}

TEST(Resolvent, GeneralEntriesAgainstCg) {
    const double l3 = lambda_star(3, Segment{}) + 1;
    const auto seg = ball_column(3, Segment{16}, 16, l3, 0);
    const auto ray = ball_column(3, Ray{16}, 16, l3, 0);
    for (vertex_id x : {1, 3, 4, 9}) {
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, l3, x, 0), seg[static_cast<std::size_t>(x)], 1e-6);
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Ray{}}, l3, x, 0), ray[static_cast<std::size_t>(x)], 1e-6);
    }
    const double l4 = lambda_star(4, Subtree{3, 0}) + 3;
    const auto sub = ball_column(4, Subtree{3, 10}, 10, l4, 2);
    for (vertex_id x : {0, 1, 2, 4, 7})
        EXPECT_NEAR(resolvent_entry_perturbed(4, PerturbationSpec{Subtree{3, 0}}, l4, x, 2), sub[static_cast<std::size_t>(x)], 1e-6);
}

TEST(Resolvent, BranchingSetNearTheNormReportsNonConvergence) {
    // off-root entries need a dense solve on the set, whose size doubles per level
    const double l4 = lambda_star(4, Subtree{3, 0}) + 0.2;
    EXPECT_THROW(resolvent_entry_perturbed(4, PerturbationSpec{Subtree{3, 0}}, l4, 1, 2), convergence_failure);
    EXPECT_NO_THROW(resolvent_entry_perturbed(4, PerturbationSpec{Subtree{3, 0}}, l4, 0, 0));
}

TEST(Resolvent, SymmetricAndEmbeddingInvariantAtTheRoot) {
    const double l = lambda_star(3, Ray{}) + 0.7;
    EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Ray{}}, l, 1, 4),
                resolvent_entry_perturbed(3, PerturbationSpec{Ray{}}, l, 4, 1), 1e-12);
    const ResolventOptions opt;
    for (const PerturbationSpec& p : {PerturbationSpec{Ray{}}, PerturbationSpec{Segment{}}})
        EXPECT_NEAR(resolvent_entry_perturbed(3, p, l, 0, 1, opt, Embedding::first_children),
                    resolvent_entry_perturbed(3, p, l, 0, 3, opt, Embedding::last_children), 1e-10);
}

TEST(Resolvent, LargeLambdaLimit) {
    const double l = 1e6;
    EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, l, 0, 0) * l, 1, 1e-5);
    EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{2}}, l, 0, 0) * l, 1, 1e-5);
    EXPECT_LT(std::abs(resolvent_entry_perturbed(3, PerturbationSpec{Ray{}}, l, 0, 5)) * l, 1e-5);
}

TEST(Resolvent, Errors) {
    const double ls = lambda_star(3, Segment{});
    EXPECT_THROW(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, ls, 0, 0), domain_error);
    EXPECT_THROW(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, 3.0, 0, 0), domain_error);
    EXPECT_THROW(resolvent_entry_perturbed(3, PerturbationSpec{Segment{}}, 4.0, -1, 0), index_error);
    EXPECT_THROW(resolvent_entry_perturbed(1, std::nullopt, 4.0, 0, 0), invalid_parameter);
    // below lambda* only the perturbed norm matters, not the tree norm
    EXPECT_THROW(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, 2.85, 0, 0), domain_error);
    EXPECT_NO_THROW(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, 2.9, 0, 0));
}

TEST(Resolvent, PoleAtTheNormForRootLoops) {
    // R(lambda) delta_0 is proportional to a^{|x|}, the closed PF vector
    const auto r = closed_root_or_throw<double>(3, RootLoops{1});
    const double l = r.lambda_star + 1e-7;
    const double g0 = resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, l, 0, 0);
    EXPECT_GT(g0, 1e5);
    for (vertex_id x : {1, 4, 10})
        EXPECT_NEAR(resolvent_entry_perturbed(3, PerturbationSpec{RootLoops{1}}, l, x, 0) / g0,
                    std::pow(r.a_star, tree_distance(3, x, 0)), 1e-5);
}
