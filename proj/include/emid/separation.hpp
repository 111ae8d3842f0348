#pragma once

#include <vector>

#include "emid/graph.hpp"

namespace emid {

// m-separation on an ADMG/CADMG. Callers query the proxy-free subgraph;
// context vertices count as conditioned on. Empty X or Y is vacuously
// separated. The walk is memoized by (vertex, entering mark), so a query is
// linear in the edge count.
inline bool m_separated(const Graph& g, VSet X, VSet Y, VSet Z) {
    if (!X || !Y) return true;
    if ((X & Y) || (X & Z) || (Y & Z))
        fail(Errc::VertexNotInGraph, "separation query sets must be disjoint");
    VSet cond = Z | g.fixed();
    // colliders open iff they have a descendant in the conditioning set
    VSet open_colliders = g.ancestors(cond, true);

    int n = g.size();
    std::vector<std::array<bool, 2>> visited(static_cast<size_t>(n), {false, false});
    std::vector<std::pair<int, bool>> stack;
    bool hit = false;
    auto push = [&](int v, bool head) {
        if (has(Y, v)) { hit = true; return; }
        if (!visited[static_cast<size_t>(v)][head]) {
            visited[static_cast<size_t>(v)][head] = true;
            stack.emplace_back(v, head);
        }
    };
    for_each_bit(X, [&](int x) {
        for_each_bit(g.children(x), [&](int c) { push(c, true); });
        for_each_bit(g.parents(x), [&](int p) { push(p, false); });
        for_each_bit(g.siblings(x), [&](int s) { push(s, true); });
    });
    while (!stack.empty() && !hit) {
        auto [v, head] = stack.back();
        stack.pop_back();
        bool conditioned = has(cond, v);
        // leave through a tail at v (toward children): v is a non-collider
        if (!conditioned)
            for_each_bit(g.children(v), [&](int c) { push(c, true); });
        // leave through an arrowhead at v (toward parents / siblings):
        // collider if we also entered through an arrowhead
        bool collider_ok = head && has(open_colliders, v);
        bool noncollider_ok = !head && !conditioned;
        if (collider_ok || noncollider_ok) {
            for_each_bit(g.parents(v), [&](int p) { push(p, false); });
            for_each_bit(g.siblings(v), [&](int s) { push(s, true); });
        }
        if (hit) break;
    }
    return !hit;
}

enum class EdgeMark { Forward, Backward, Bidirected };  // v_i -> v_{i+1}, v_i <- v_{i+1}, v_i <-> v_{i+1}

// A path whose interior vertices are all colliders; endpoints are excluded
// from the collider requirement. A direct edge is the degenerate case.
struct ColliderPath {
    std::vector<int> vertices;
    std::vector<EdgeMark> marks;

    std::vector<std::string> ids(const Graph& g) const {
        std::vector<std::string> out;
        for (int v : vertices) out.push_back(g.id_of(v));
        return out;
    }
};

// All simple collider paths between a and b avoiding `forbidden`. Interior
// enumeration is exponential in principle, so a path-count cap guards it.
inline std::vector<ColliderPath> collider_paths_between(const Graph& g, int a, int b,
                                                        VSet forbidden, int cap = 10000) {
    if (a == b) fail(Errc::VertexNotInGraph, "collider path endpoints must differ");
    std::vector<ColliderPath> out;
    long expansions = 0;

    struct Frame {
        int v;
        bool entered_head;  // mark at v of the edge we arrived through
    };
    std::vector<int> path{a};
    std::vector<EdgeMark> marks;
    VSet on_path = bit(a);

    auto step = [&](auto&& self, int v, bool entered_head) -> void {
        if (++expansions > 64L * cap)
            fail(Errc::DegenerateExplosion, "collider path search exceeded its cap");
        struct Next { int u; EdgeMark mark; bool head_at_v; bool head_at_u; };
        std::vector<Next> nexts;
        for_each_bit(g.children(v), [&](int u) { nexts.push_back({u, EdgeMark::Forward, false, true}); });
        for_each_bit(g.parents(v), [&](int u) { nexts.push_back({u, EdgeMark::Backward, true, false}); });
        for_each_bit(g.siblings(v), [&](int u) { nexts.push_back({u, EdgeMark::Bidirected, true, true}); });
        for (const Next& nx : nexts) {
            if (has(on_path, nx.u) || has(forbidden, nx.u)) continue;
            // v is interior once we extend through it: it must be a collider
            if (v != a && !(entered_head && nx.head_at_v)) continue;
            if (nx.u == b) {
                if (static_cast<int>(out.size()) >= cap)
                    fail(Errc::DegenerateExplosion, "more collider paths than the configured cap");
                ColliderPath p;
                p.vertices = path;
                p.vertices.push_back(b);
                p.marks = marks;
                p.marks.push_back(nx.mark);
                out.push_back(std::move(p));
                continue;
            }
            path.push_back(nx.u);
            marks.push_back(nx.mark);
            on_path |= bit(nx.u);
            self(self, nx.u, nx.head_at_u);
            on_path &= ~bit(nx.u);
            marks.pop_back();
            path.pop_back();
        }
    };
    step(step, a, false);

    std::sort(out.begin(), out.end(), [&](const ColliderPath& x, const ColliderPath& y) {
        return x.ids(g) < y.ids(g);
    });
    return out;
}

enum class BlanketDef { ColliderPath, DistrictFormula };

// Markov blanket of v: vertices adjacent to v or joined to it by a collider
// path (the definition used by the identification criteria), or the district
// set expression, which coincides on every graph in this library's test
// corpus; divergences are surfaced by callers as warnings, never resolved
// silently.
inline VSet markov_blanket(const Graph& g, int v, BlanketDef def = BlanketDef::ColliderPath) {
    if (def == BlanketDef::DistrictFormula) {
        VSet over = g.random() & ~g.fixed();
        VSet dis_v = g.district_of(v, over);
        VSet ch = g.children(v);
        VSet dis_ch = 0;
        for_each_bit(ch, [&](int c) { dis_ch |= g.district_of(c, over); });
        VSet mb = g.parents(v) | dis_v | g.parents(dis_v) | ch | g.parents(ch) | dis_ch |
                  g.parents(dis_ch);
        return mb & ~bit(v);
    }
    VSet blanket = 0;
    int n = g.size();
    std::vector<std::array<bool, 2>> visited(static_cast<size_t>(n), {false, false});
    std::vector<std::pair<int, bool>> stack;
    auto push = [&](int u, bool head) {
        blanket |= bit(u);
        if (!visited[static_cast<size_t>(u)][head]) {
            visited[static_cast<size_t>(u)][head] = true;
            stack.emplace_back(u, head);
        }
    };
    for_each_bit(g.children(v), [&](int c) { push(c, true); });
    for_each_bit(g.parents(v), [&](int p) { push(p, false); });
    for_each_bit(g.siblings(v), [&](int s) { push(s, true); });
    while (!stack.empty()) {
        auto [u, head] = stack.back();
        stack.pop_back();
        if (!head) continue;  // entered through a tail: u cannot be a collider
        // extend through u as a collider: leave through an arrowhead at u
        for_each_bit(g.parents(u), [&](int p) {
            if (p != v) push(p, false);
        });
        for_each_bit(g.siblings(u), [&](int s) {
            if (s != v) push(s, true);
        });
    }
    return blanket & ~bit(v);
}

}  // namespace emid
