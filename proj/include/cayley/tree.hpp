#pragma once

// Finite balls of the homogeneous Cayley tree, loop perturbations and
// their sparse adjacency matrices.
//
// Vertex ids follow one global BFS numbering of the infinite tree: the
// root is 0, children of a vertex are contiguous and ordered by parent id.
// The ids of a radius-n ball are therefore the prefix [0, V(n)) of the ids
// of every larger ball, and parent/depth are computable from the id alone.

#include "cayley/error.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

namespace cayley {

using vertex_id = std::int64_t;

namespace detail {

inline bool mul_overflows(std::int64_t a, std::int64_t b) {
    return a != 0 && b > std::numeric_limits<std::int64_t>::max() / a;
}

inline void require_degree(int Q) {
    if (Q < 2) throw invalid_parameter("degree Q must be >= 2, got " + std::to_string(Q));
}

} // namespace detail

// Number of vertices at distance exactly d from the root.
inline std::int64_t shell_size(int Q, int d) {
    detail::require_degree(Q);
    if (d < 0) throw invalid_parameter("negative depth");
    if (d == 0) return 1;
    std::int64_t s = Q;
    for (int i = 1; i < d; ++i) {
        if (detail::mul_overflows(s, Q - 1)) throw capacity_error("shell size overflows int64");
        s *= (Q - 1);
    }
    return s;
}

// |V| of the radius-n ball; throws capacity_error on int64 overflow.
inline std::int64_t ball_vertex_count(int Q, int n) {
    detail::require_degree(Q);
    if (n < 0) throw invalid_parameter("radius n must be >= 0, got " + std::to_string(n));
    std::int64_t total = 1;
    for (int d = 1; d <= n; ++d) {
        std::int64_t s = shell_size(Q, d);
        if (total > std::numeric_limits<std::int64_t>::max() - s)
            throw capacity_error("vertex count overflows int64");
        total += s;
    }
    return total;
}

// Depth of a global id in the degree-Q tree.
inline int depth_of(int Q, vertex_id v) {
    if (v < 0) throw index_error("negative vertex id");
    int d = 0;
    std::int64_t first_of_next = 1;
    std::int64_t shell = 1;
    while (v >= first_of_next) {
        ++d;
        shell = (d == 1) ? Q : shell * (Q - 1);
        first_of_next += shell;
    }
    return d;
}

inline vertex_id first_id_at_depth(int Q, int d) {
    return d == 0 ? 0 : ball_vertex_count(Q, d - 1);
}

inline vertex_id parent_of(int Q, vertex_id v) {
    if (v < 0) throw index_error("negative vertex id");
    if (v == 0) return 0;
    const int d = depth_of(Q, v);
    if (d == 1) return 0;
    const std::int64_t pos = v - first_id_at_depth(Q, d);
    return first_id_at_depth(Q, d - 1) + pos / (Q - 1);
}

inline int child_count(int Q, vertex_id v) { return v == 0 ? Q : Q - 1; }

// i-th child (0-based) of v in the global numbering.
inline vertex_id child_of(int Q, vertex_id v, int i) {
    if (i < 0 || i >= child_count(Q, v)) throw index_error("child index out of range");
    if (v == 0) return 1 + i;
    const int d = depth_of(Q, v);
    const std::int64_t pos = v - first_id_at_depth(Q, d);
    return first_id_at_depth(Q, d + 1) + pos * (Q - 1) + i;
}

class TreeBall {
public:
    TreeBall(int Q, int n) : Q_(Q), n_(n) {
        detail::require_degree(Q);
        if (n < 0) throw invalid_parameter("radius n must be >= 0");
        count_ = ball_vertex_count(Q, n);
        if (count_ > static_cast<std::int64_t>(std::numeric_limits<std::int32_t>::max()))
            throw capacity_error("ball too large to materialize: " + std::to_string(count_) + " vertices");
        parent_.resize(static_cast<std::size_t>(count_));
        depth_.resize(static_cast<std::size_t>(count_));
        parent_[0] = 0;
        depth_[0] = 0;
        // BFS: children of v occupy a contiguous block right after the previous parent's block.
        vertex_id next = 1;
        for (vertex_id v = 0; v < count_ && next < count_; ++v) {
            const int c = child_count(Q, v);
            for (int i = 0; i < c && next < count_; ++i, ++next) {
                parent_[static_cast<std::size_t>(next)] = v;
                depth_[static_cast<std::size_t>(next)] = depth_[static_cast<std::size_t>(v)] + 1;
            }
        }
    }

    int degree() const noexcept { return Q_; }
    int radius() const noexcept { return n_; }
    std::int64_t vertex_count() const noexcept { return count_; }

    bool contains(vertex_id v) const noexcept { return v >= 0 && v < count_; }

    vertex_id parent(vertex_id v) const {
        check(v);
        return parent_[static_cast<std::size_t>(v)];
    }
    int depth(vertex_id v) const {
        check(v);
        return depth_[static_cast<std::size_t>(v)];
    }
    // Children inside the ball (empty on the boundary shell).
    std::vector<vertex_id> children(vertex_id v) const {
        check(v);
        std::vector<vertex_id> out;
        if (depth(v) == n_) return out;
        for (int i = 0; i < child_count(Q_, v); ++i) out.push_back(child_of(Q_, v, i));
        return out;
    }

    void check(vertex_id v) const {
        if (!contains(v)) throw index_error("vertex id " + std::to_string(v) + " not in ball");
    }

private:
    int Q_;
    int n_;
    std::int64_t count_ = 0;
    std::vector<vertex_id> parent_;
    std::vector<int> depth_;
};

inline TreeBall build_ball(int Q, int n) { return TreeBall(Q, n); }

// Tree distance between two global ids (no ball needed).
inline int tree_distance(int Q, vertex_id x, vertex_id y) {
    int dx = depth_of(Q, x), dy = depth_of(Q, y);
    int d = 0;
    while (dx > dy) { x = parent_of(Q, x); --dx; ++d; }
    while (dy > dx) { y = parent_of(Q, y); --dy; ++d; }
    while (x != y) { x = parent_of(Q, x); y = parent_of(Q, y); d += 2; }
    return d;
}

inline int distance(const TreeBall& ball, vertex_id x, vertex_id y) {
    ball.check(x);
    ball.check(y);
    int d = 0;
    int dx = ball.depth(x), dy = ball.depth(y);
    while (dx > dy) { x = ball.parent(x); --dx; ++d; }
    while (dy > dx) { y = ball.parent(y); --dy; ++d; }
    while (x != y) { x = ball.parent(x); y = ball.parent(y); d += 2; }
    return d;
}

struct NearestPoint {
    vertex_id y;
    int d;
};

// Unique closest point of a connected vertex set S to x.
inline NearestPoint nearest_in_set(const TreeBall& ball, vertex_id x, const std::vector<vertex_id>& S) {
    if (S.empty()) throw invalid_parameter("nearest_in_set: empty set");
    ball.check(x);
    std::unordered_set<vertex_id> members;
    for (vertex_id s : S) {
        ball.check(s);
        members.insert(s);
    }
    // In a tree a vertex set is connected iff it spans |S|-1 edges, i.e. all but
    // one member have their parent inside the set.
    vertex_id top = -1;
    std::size_t tops = 0;
    for (vertex_id s : members) {
        if (s == 0 || !members.count(ball.parent(s))) {
            top = s;
            ++tops;
        }
    }
    if (tops != 1) throw contract_violation("nearest_in_set: set is not connected");

    // The closest point is the first member met on the geodesic from x to the top of S.
    int d = 0;
    vertex_id u = x;
    while (true) {
        if (members.count(u)) return {u, d};
        if (u == top || ball.depth(u) <= ball.depth(top)) break;
        u = ball.parent(u);
        ++d;
    }
    return {top, distance(ball, x, top)};
}

// ---------------------------------------------------------------------------
// Perturbations

struct RootLoops {
    int k = 1;
};
struct Segment {
    int m = 0; // half length: 2m+1 vertices through the root
};
struct Ray {
    int m = 0; // m+1 vertices starting at the root
};
struct Subtree {
    int q = 2;
    int m = 0; // depth of the order-q subtree ball
};

using PerturbationSpec = std::variant<RootLoops, Segment, Ray, Subtree>;

enum class Embedding { first_children, last_children };

// Depth reached by the perturbed set (0 for root loops).
inline int perturbation_extent(const PerturbationSpec& p) {
    return std::visit(
        [](const auto& s) -> int {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) return 0;
            else return s.m;
        },
        p);
}

inline std::string perturbation_name(const PerturbationSpec& p) {
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) return "root-loops";
            else if constexpr (std::is_same_v<T, Segment>) return "segment";
            else if constexpr (std::is_same_v<T, Ray>) return "ray";
            else return "subtree";
        },
        p);
}

inline void validate_perturbation(int Q, const PerturbationSpec& p) {
    detail::require_degree(Q);
    std::visit(
        [Q](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) {
                if (s.k < 1) throw invalid_parameter("RootLoops needs k >= 1");
            } else {
                if (s.m < 0) throw invalid_parameter("perturbation depth must be >= 0");
                if constexpr (std::is_same_v<T, Subtree>) {
                    if (s.q < 2 || s.q > Q)
                        throw invalid_parameter("Subtree needs 2 <= q <= Q, got q=" + std::to_string(s.q));
                }
            }
        },
        p);
}

struct LoopSite {
    vertex_id v;
    int loops;
};

// Perturbed vertices (global ids) with their loop counts, in increasing id order.
inline std::vector<LoopSite> perturbed_sites(int Q, const PerturbationSpec& p,
                                             Embedding emb = Embedding::first_children) {
    validate_perturbation(Q, p);
    auto pick = [&](vertex_id v, int offset) {
        // offset-th child from the front (or back for the alternate embedding)
        const int c = child_count(Q, v);
        return child_of(Q, v, emb == Embedding::first_children ? offset : c - 1 - offset);
    };
    std::vector<LoopSite> out;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) {
                out.push_back({0, s.k});
            } else if constexpr (std::is_same_v<T, Segment>) {
                out.push_back({0, 1});
                for (int arm = 0; arm < 2; ++arm) {
                    if (s.m == 0) break;
                    vertex_id v = pick(0, arm);
                    out.push_back({v, 1});
                    for (int k = 2; k <= s.m; ++k) {
                        v = pick(v, 0);
                        out.push_back({v, 1});
                    }
                }
            } else if constexpr (std::is_same_v<T, Ray>) {
                out.push_back({0, 1});
                vertex_id v = 0;
                for (int k = 1; k <= s.m; ++k) {
                    v = pick(v, 0);
                    out.push_back({v, 1});
                }
            } else {
                std::vector<vertex_id> frontier{0};
                out.push_back({0, 1});
                for (int d = 1; d <= s.m; ++d) {
                    std::vector<vertex_id> next;
                    for (vertex_id v : frontier) {
                        const int take = (v == 0) ? s.q : s.q - 1;
                        for (int i = 0; i < take; ++i) next.push_back(pick(v, i));
                    }
                    for (vertex_id v : next) out.push_back({v, 1});
                    frontier = std::move(next);
                }
            }
        },
        p);
    std::sort(out.begin(), out.end(), [](const LoopSite& a, const LoopSite& b) { return a.v < b.v; });
    return out;
}

inline std::vector<vertex_id> perturbed_vertex_ids(int Q, const PerturbationSpec& p,
                                                   Embedding emb = Embedding::first_children) {
    std::vector<vertex_id> ids;
    for (const auto& s : perturbed_sites(Q, p, emb)) ids.push_back(s.v);
    return ids;
}

// ---------------------------------------------------------------------------
// Sparse adjacency (CSR, symmetric, loops on the diagonal)

struct SparseAdjacency {
    std::int64_t dimension = 0;
    std::vector<std::int64_t> row_ptr; // size dimension+1
    std::vector<std::int64_t> col;
    std::vector<int> value;

    int diagonal(std::int64_t v) const {
        for (auto p = row_ptr[static_cast<std::size_t>(v)]; p < row_ptr[static_cast<std::size_t>(v) + 1]; ++p)
            if (col[static_cast<std::size_t>(p)] == v) return value[static_cast<std::size_t>(p)];
        return 0;
    }
    int entry(std::int64_t r, std::int64_t c) const {
        for (auto p = row_ptr[static_cast<std::size_t>(r)]; p < row_ptr[static_cast<std::size_t>(r) + 1]; ++p)
            if (col[static_cast<std::size_t>(p)] == c) return value[static_cast<std::size_t>(p)];
        return 0;
    }
    std::int64_t nonzeros() const { return static_cast<std::int64_t>(col.size()); }

    // y = A x, rows summed in fixed column order.
    template <class Vec>
    void multiply(const Vec& x, Vec& y) const {
        for (std::int64_t r = 0; r < dimension; ++r) {
            double acc = 0.0;
            for (auto p = row_ptr[static_cast<std::size_t>(r)]; p < row_ptr[static_cast<std::size_t>(r) + 1]; ++p)
                acc += value[static_cast<std::size_t>(p)] * x[static_cast<std::size_t>(col[static_cast<std::size_t>(p)])];
            y[static_cast<std::size_t>(r)] = acc;
        }
    }
};

struct Triplet {
    std::int64_t row;
    std::int64_t col;
    int value;
};

inline SparseAdjacency from_triplets(std::int64_t dim, std::vector<Triplet> t) {
    if (dim < 0) throw invalid_parameter("negative dimension");
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseAdjacency A;
    A.dimension = dim;
    A.row_ptr.assign(static_cast<std::size_t>(dim) + 1, 0);
    std::int64_t last_row = -1, last_col = -1;
    for (const auto& e : t) {
        if (e.row < 0 || e.row >= dim || e.col < 0 || e.col >= dim)
            throw index_error("triplet index out of range");
        if (e.row == last_row && e.col == last_col) {
            A.value.back() += e.value; // duplicates are summed
            continue;
        }
        last_row = e.row;
        last_col = e.col;
        A.col.push_back(e.col);
        A.value.push_back(e.value);
        ++A.row_ptr[static_cast<std::size_t>(e.row) + 1];
    }
    std::partial_sum(A.row_ptr.begin(), A.row_ptr.end(), A.row_ptr.begin());
    return A;
}

inline SparseAdjacency assemble_adjacency(const TreeBall& ball, const PerturbationSpec& pert,
                                          Embedding emb = Embedding::first_children) {
    validate_perturbation(ball.degree(), pert);
    if (perturbation_extent(pert) > ball.radius())
        throw invalid_parameter("perturbation exceeds ball radius");
    const std::int64_t N = ball.vertex_count();
    std::vector<int> loops(static_cast<std::size_t>(N), 0);
    for (const auto& s : perturbed_sites(ball.degree(), pert, emb)) loops[static_cast<std::size_t>(s.v)] += s.loops;

    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(3 * N));
    for (vertex_id v = 0; v < N; ++v) {
        if (loops[static_cast<std::size_t>(v)] != 0) t.push_back({v, v, loops[static_cast<std::size_t>(v)]});
        if (v != 0) {
            const vertex_id p = ball.parent(v);
            t.push_back({v, p, 1});
            t.push_back({p, v, 1});
        }
    }
    return from_triplets(N, std::move(t));
}

inline SparseAdjacency assemble_adjacency(const TreeBall& ball) {
    const std::int64_t N = ball.vertex_count();
    std::vector<Triplet> t;
    for (vertex_id v = 1; v < N; ++v) {
        t.push_back({v, ball.parent(v), 1});
        t.push_back({ball.parent(v), v, 1});
    }
    return from_triplets(N, std::move(t));
}

// Text format: "dim=<N>" then one "row col value" line per stored entry.
inline void write_triplets(std::ostream& os, const SparseAdjacency& A) {
    os << "dim=" << A.dimension << '\n';
    for (std::int64_t r = 0; r < A.dimension; ++r)
        for (auto p = A.row_ptr[static_cast<std::size_t>(r)]; p < A.row_ptr[static_cast<std::size_t>(r) + 1]; ++p)
            os << r << ' ' << A.col[static_cast<std::size_t>(p)] << ' ' << A.value[static_cast<std::size_t>(p)] << '\n';
}

inline SparseAdjacency read_triplets(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("dim=", 0) != 0)
        throw invalid_parameter("triplet stream: missing 'dim=<N>' header");
    std::int64_t dim = 0;
    try {
        dim = std::stoll(header.substr(4));
    } catch (const std::exception&) {
        throw invalid_parameter("triplet stream: bad dimension '" + header + "'");
    }
    std::vector<Triplet> t;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Triplet e{};
        if (!(ls >> e.row >> e.col >> e.value)) throw invalid_parameter("triplet stream: bad line '" + line + "'");
        t.push_back(e);
    }
    return from_triplets(dim, std::move(t));
}

// ---------------------------------------------------------------------------
// Density of the perturbation inside the radius-n ball

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }
};

inline Rational make_rational(std::int64_t num, std::int64_t den) {
    const std::int64_t g = std::gcd(num, den);
    return {num / g, den / g};
}

// Loop edges inside the ball over its vertex count; infinite families are
// taken at full extent n (their own depth m is ignored).
inline Rational perturbation_density(int Q, const PerturbationSpec& pert, int n) {
    validate_perturbation(Q, pert);
    const std::int64_t V = ball_vertex_count(Q, n);
    const std::int64_t loops = std::visit(
        [&](const auto& s) -> std::int64_t {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RootLoops>) return s.k;
            else if constexpr (std::is_same_v<T, Segment>) return 2 * static_cast<std::int64_t>(n) + 1;
            else if constexpr (std::is_same_v<T, Ray>) return static_cast<std::int64_t>(n) + 1;
            else return ball_vertex_count(s.q, n);
        },
        pert);
    return make_rational(loops, V);
}

} // namespace cayley
