#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "emid/bits.hpp"
#include "emid/errors.hpp"

namespace emid {

enum class Role { Covariate, Counterfactual, Indicator, Proxy, Hidden, Context };
enum class Mode { Classic, Interference, RelaxedIid };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::Covariate: return "covariate";
        case Role::Counterfactual: return "counterfactual";
        case Role::Indicator: return "indicator";
        case Role::Proxy: return "proxy";
        case Role::Hidden: return "hidden";
        case Role::Context: return "context";
    }
    return "?";
}

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Classic: return "classic";
        case Mode::Interference: return "interference";
        case Mode::RelaxedIid: return "relaxed_iid";
    }
    return "?";
}

// One entry of a counterfactual's missingness pattern: a foreign indicator
// pinned to 0 or 1. Entries are kept sorted by the indicator's vertex id so
// two spellings of the same pattern are one vertex.
struct PatternEntry {
    int indicator = -1;
    int value = 0;
    friend bool operator==(const PatternEntry&, const PatternEntry&) = default;
};

struct Vertex {
    std::string id;    // canonical token, unique in the graph
    Role role = Role::Covariate;
    std::string unit;  // owning unit; empty for hidden/context
    std::string name;  // base variable name (missing variable, covariate, hidden label)
    std::vector<PatternEntry> pattern;  // counterfactuals only
    int own_indicator = -1;             // proxy/counterfactual: the variable's indicator
    int proxy = -1;                     // counterfactual/indicator: the variable's proxy
};

// Mixed graph over at most 64 vertices. Directed, bidirected and
// deterministic (gray, proxy-defining) edges; an optional context partition
// makes it a CADMG. Immutable after construction: every "mutation" below
// returns a new graph, so concurrent readers are safe.
class Graph {
public:
    Graph() = default;

    static Graph make(std::vector<Vertex> verts, Mode mode = Mode::Classic) {
        Graph g;
        if (verts.size() > static_cast<size_t>(kMaxVertices))
            fail(Errc::SizeCapExceeded, "graphs are capped at 64 vertices");
        g.verts_ = std::move(verts);
        g.mode_ = mode;
        size_t n = g.verts_.size();
        g.par_.assign(n, 0);
        g.ch_.assign(n, 0);
        g.sib_.assign(n, 0);
        g.det_par_.assign(n, 0);
        for (size_t i = 0; i < n; ++i) {
            if (!g.index_.emplace(g.verts_[i].id, static_cast<int>(i)).second)
                fail(Errc::VertexNotInGraph, "duplicate vertex id " + g.verts_[i].id);
        }
        return g;
    }

    // Plain ADMG over covariate-role vertices; handy for tests and the
    // nested-Markov machinery.
    static Graph plain_admg(const std::vector<std::string>& ids,
                            const std::vector<std::pair<std::string, std::string>>& directed,
                            const std::vector<std::pair<std::string, std::string>>& bidirected) {
        std::vector<Vertex> vs;
        vs.reserve(ids.size());
        for (const auto& id : ids) vs.push_back(Vertex{id, Role::Covariate, "", id, {}, -1, -1});
        Graph g = make(std::move(vs));
        for (const auto& [a, b] : directed) g.add_directed(g.index_of(a), g.index_of(b), false);
        for (const auto& [a, b] : bidirected) g.add_bidirected(g.index_of(a), g.index_of(b));
        return g;
    }

    int size() const { return static_cast<int>(verts_.size()); }
    const Vertex& vertex(int v) const { return verts_[static_cast<size_t>(v)]; }
    Mode mode() const { return mode_; }

    int find(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? -1 : it->second;
    }
    int index_of(const std::string& id) const {
        int v = find(id);
        if (v < 0) fail(Errc::VertexNotInGraph, id);
        return v;
    }

    VSet all() const { return size() == kMaxVertices ? ~VSet{0} : (bit(size()) - 1); }
    VSet fixed() const { return fixed_; }
    VSet random() const { return all() & ~fixed_; }

    VSet parents(int v) const { return par_[static_cast<size_t>(v)]; }
    VSet children(int v) const { return ch_[static_cast<size_t>(v)]; }
    VSet siblings(int v) const { return sib_[static_cast<size_t>(v)]; }
    VSet det_parents(int v) const { return det_par_[static_cast<size_t>(v)]; }

    VSet parents(VSet s) const { return fold(par_, s); }
    VSet children(VSet s) const { return fold(ch_, s); }

    bool has_directed(int a, int b) const { return has(ch_[static_cast<size_t>(a)], b); }
    bool has_bidirected(int a, int b) const { return has(sib_[static_cast<size_t>(a)], b); }
    bool is_deterministic(int a, int b) const { return has_directed(a, b) && has(det_par_[static_cast<size_t>(b)], a); }

    VSet mask(Role r) const {
        VSet s = 0;
        for (int v = 0; v < size(); ++v)
            if (verts_[static_cast<size_t>(v)].role == r) s |= bit(v);
        return s;
    }
    VSet proxies() const { return mask(Role::Proxy); }
    VSet indicators() const { return mask(Role::Indicator); }
    VSet counterfactuals() const { return mask(Role::Counterfactual); }
    VSet covariates() const { return mask(Role::Covariate); }
    VSet hidden() const { return mask(Role::Hidden); }

    // Random vertices that take part in separation / identification /
    // district queries: proxies and hidden vertices are excluded.
    VSet analysis_mask() const { return random() & ~proxies() & ~hidden() & ~mask(Role::Context); }

    VSet descendants(VSet s, bool inclusive = true) const { return closure(ch_, s, inclusive); }
    VSet ancestors(VSet s, bool inclusive = true) const { return closure(par_, s, inclusive); }

    bool acyclic() const {
        VSet done = 0;
        VSet rest = all();
        while (rest) {
            VSet progress = 0;
            for_each_bit(rest, [&](int v) {
                if (!(par_[static_cast<size_t>(v)] & rest & ~bit(v))) progress |= bit(v);
            });
            if (!progress) return false;
            done |= progress;
            rest &= ~progress;
        }
        (void)done;
        return true;
    }

    std::vector<int> topo_order() const {
        std::vector<int> order;
        VSet rest = all();
        while (rest) {
            int pick = -1;
            for_each_bit(rest, [&](int v) {
                if (pick < 0 && !(par_[static_cast<size_t>(v)] & rest)) pick = v;
            });
            if (pick < 0) fail(Errc::NotADag, "directed part is cyclic");
            order.push_back(pick);
            rest &= ~bit(pick);
        }
        return order;
    }

    // Connected components of the bidirected subgraph restricted to `over`,
    // each reported as a mask, ordered by their lowest vertex.
    std::vector<VSet> districts(VSet over) const {
        std::vector<VSet> out;
        VSet seen = 0;
        for_each_bit(over, [&](int v) {
            if (has(seen, v)) return;
            VSet comp = bit(v);
            VSet frontier = comp;
            while (frontier) {
                VSet next = 0;
                for_each_bit(frontier, [&](int u) { next |= sib_[static_cast<size_t>(u)] & over; });
                next &= ~comp;
                comp |= next;
                frontier = next;
            }
            seen |= comp;
            out.push_back(comp);
        });
        return out;
    }
    std::vector<VSet> districts() const { return districts(analysis_mask()); }

    VSet district_of(int v, VSet over) const {
        for (VSet d : districts(over))
            if (has(d, v)) return d;
        return bit(v);
    }

    // Induced subgraph on `keep`; vertex ids survive, indices are remapped.
    Graph induced(VSet keep) const {
        std::vector<int> old_ids = to_vector(keep);
        std::vector<int> remap(static_cast<size_t>(size()), -1);
        std::vector<Vertex> vs;
        vs.reserve(old_ids.size());
        for (size_t i = 0; i < old_ids.size(); ++i) {
            remap[static_cast<size_t>(old_ids[i])] = static_cast<int>(i);
            vs.push_back(verts_[static_cast<size_t>(old_ids[i])]);
        }
        for (auto& v : vs) {
            v.own_indicator = v.own_indicator >= 0 ? remap[static_cast<size_t>(v.own_indicator)] : -1;
            v.proxy = v.proxy >= 0 ? remap[static_cast<size_t>(v.proxy)] : -1;
            std::vector<PatternEntry> pat;
            for (const auto& pe : v.pattern) {
                int m = remap[static_cast<size_t>(pe.indicator)];
                if (m >= 0) pat.push_back({m, pe.value});
            }
            v.pattern = std::move(pat);
        }
        Graph g = make(std::move(vs), mode_);
        for (int old_a : old_ids) {
            int a = remap[static_cast<size_t>(old_a)];
            for_each_bit(ch_[static_cast<size_t>(old_a)] & keep, [&](int old_b) {
                g.add_directed(a, remap[static_cast<size_t>(old_b)], is_deterministic(old_a, old_b));
            });
            for_each_bit(sib_[static_cast<size_t>(old_a)] & keep, [&](int old_b) {
                if (old_b > old_a) g.add_bidirected(a, remap[static_cast<size_t>(old_b)]);
            });
            if (has(fixed_, old_a)) g.fixed_ |= bit(a);
        }
        return g;
    }

    // CADMG obtained by moving `v` to the context: edges with an arrowhead
    // at v are removed, outgoing directed edges survive.
    Graph contexted(int v) const {
        Graph g = *this;
        for_each_bit(g.par_[static_cast<size_t>(v)], [&](int p) { g.ch_[static_cast<size_t>(p)] &= ~bit(v); });
        for_each_bit(g.sib_[static_cast<size_t>(v)], [&](int s) { g.sib_[static_cast<size_t>(s)] &= ~bit(v); });
        g.par_[static_cast<size_t>(v)] = 0;
        g.det_par_[static_cast<size_t>(v)] = 0;
        g.sib_[static_cast<size_t>(v)] = 0;
        g.fixed_ |= bit(v);
        return g;
    }

    std::vector<std::pair<int, int>> directed_edges() const {
        std::vector<std::pair<int, int>> out;
        for (int a = 0; a < size(); ++a)
            for_each_bit(ch_[static_cast<size_t>(a)], [&](int b) { out.emplace_back(a, b); });
        return out;
    }
    std::vector<std::pair<int, int>> bidirected_edges() const {
        std::vector<std::pair<int, int>> out;
        for (int a = 0; a < size(); ++a)
            for_each_bit(sib_[static_cast<size_t>(a)], [&](int b) {
                if (b > a) out.emplace_back(a, b);
            });
        return out;
    }

    std::string id_of(int v) const { return verts_[static_cast<size_t>(v)].id; }
    std::vector<std::string> ids_of(VSet s) const {
        std::vector<std::string> out;
        for_each_bit(s, [&](int v) { out.push_back(id_of(v)); });
        return out;
    }

    // Construction hooks, used by builders before the graph is shared.
    void add_directed(int a, int b, bool deterministic) {
        ch_[static_cast<size_t>(a)] |= bit(b);
        par_[static_cast<size_t>(b)] |= bit(a);
        if (deterministic) det_par_[static_cast<size_t>(b)] |= bit(a);
    }
    void add_bidirected(int a, int b) {
        sib_[static_cast<size_t>(a)] |= bit(b);
        sib_[static_cast<size_t>(b)] |= bit(a);
    }
    void set_context(int v) { fixed_ |= bit(v); }

private:
    VSet fold(const std::vector<VSet>& adj, VSet s) const {
        VSet out = 0;
        for_each_bit(s, [&](int v) { out |= adj[static_cast<size_t>(v)]; });
        return out;
    }
    VSet closure(const std::vector<VSet>& adj, VSet s, bool inclusive) const {
        VSet acc = s;
        VSet frontier = s;
        while (frontier) {
            VSet next = fold(adj, frontier) & ~acc;
            acc |= next;
            frontier = next;
        }
        return inclusive ? acc : (acc & ~s);
    }

    std::vector<Vertex> verts_;
    std::unordered_map<std::string, int> index_;
    std::vector<VSet> par_, ch_, sib_, det_par_;
    VSet fixed_ = 0;
    Mode mode_ = Mode::Classic;
};

// Unit -> affector units, plus the indicator-level refinement used by the
// relaxed i.i.d. mode (variable -> foreign indicators indexing it).
struct AffectorMap {
    std::map<std::string, std::set<std::string>> units;
    std::map<std::string, std::set<std::string>> variables;

    std::set<std::string> aff(const std::string& unit) const {
        auto it = units.find(unit);
        return it == units.end() ? std::set<std::string>{} : it->second;
    }
};

inline AffectorMap derive_affectors(const Graph& g) {
    AffectorMap m;
    for (int v = 0; v < g.size(); ++v) {
        const Vertex& vx = g.vertex(v);
        if (vx.role != Role::Counterfactual) continue;
        m.units.try_emplace(vx.unit);
        for (const auto& pe : vx.pattern) {
            const Vertex& ind = g.vertex(pe.indicator);
            m.variables[vx.unit + "." + vx.name].insert(ind.id);
            if (ind.unit != vx.unit) m.units[vx.unit].insert(ind.unit);
        }
    }
    for (int v = 0; v < g.size(); ++v)
        if (g.vertex(v).role == Role::Counterfactual) m.units.try_emplace(g.vertex(v).unit);
    return m;
}

// Indicators of all affector units of `unit` (unit-level R_aff).
inline VSet affector_indicators(const Graph& g, const AffectorMap& m, const std::string& unit) {
    VSet out = 0;
    auto it = m.units.find(unit);
    if (it == m.units.end()) return out;
    for (int v = 0; v < g.size(); ++v)
        if (g.vertex(v).role == Role::Indicator && it->second.count(g.vertex(v).unit)) out |= bit(v);
    return out;
}

// Standard latent projection onto the complement of `drop`:
//   a -> b kept iff a directed path a -> ... -> b runs through dropped
//   vertices only; a <-> b added iff a path with arrowheads at both ends
//   runs through dropped non-colliders only.
// `force` lifts the role restriction on what may be dropped.
inline Graph latent_project(const Graph& g, VSet drop, bool force = false) {
    if (!force) {
        for_each_bit(drop, [&](int v) {
            Role r = g.vertex(v).role;
            if (r == Role::Hidden) return;
            if (r == Role::Counterfactual) {
                // Dropping a counterfactual is only safe when it has no
                // indicator children (the Assumption-1 shape).
                if (g.children(v) & g.indicators())
                    fail(Errc::DropRetainedRole,
                         "counterfactual " + g.id_of(v) + " points into an indicator");
                return;
            }
            fail(Errc::DropRetainedRole, g.id_of(v) + " has role " + role_name(r));
        });
    }
    VSet keep = g.all() & ~drop;
    std::vector<int> keep_ids = to_vector(keep);

    Graph out = g.induced(keep);
    // Drop edges inherited from induced() are already correct; add the
    // projected ones.
    std::vector<int> remap(static_cast<size_t>(g.size()), -1);
    for (size_t i = 0; i < keep_ids.size(); ++i) remap[static_cast<size_t>(keep_ids[i])] = static_cast<int>(i);

    for (int a : keep_ids) {
        // Directed reach through dropped vertices.
        VSet seen = 0;
        VSet frontier = g.children(a) & drop;
        seen |= frontier;
        while (frontier) {
            VSet next = 0;
            for_each_bit(frontier, [&](int d) { next |= g.children(d); });
            for_each_bit(next & keep, [&](int b) {
                if (!out.has_directed(remap[static_cast<size_t>(a)], remap[static_cast<size_t>(b)]))
                    out.add_directed(remap[static_cast<size_t>(a)], remap[static_cast<size_t>(b)], false);
            });
            next &= drop & ~seen;
            seen |= next;
            frontier = next;
        }
    }

    // Bidirected reach: walk dropped non-colliders keeping track of the mark
    // at the current vertex on the edge we arrived through (true = arrowhead).
    for (int a : keep_ids) {
        // state (d, arrived_with_arrowhead_at_d)
        std::vector<std::array<bool, 2>> visited(static_cast<size_t>(g.size()), {false, false});
        std::vector<std::pair<int, bool>> stack;
        auto push = [&](int d, bool head) {
            if (!visited[static_cast<size_t>(d)][head ? 1 : 0]) {
                visited[static_cast<size_t>(d)][head ? 1 : 0] = true;
                stack.emplace_back(d, head);
            }
        };
        // First edge must carry an arrowhead at `a`.
        for_each_bit(g.parents(a) & drop, [&](int d) { push(d, false); });
        for_each_bit(g.siblings(a) & drop, [&](int d) { push(d, true); });
        auto emit = [&](int b) {
            if (b == a) return;
            int ra = remap[static_cast<size_t>(a)], rb = remap[static_cast<size_t>(b)];
            if (!out.has_bidirected(ra, rb)) out.add_bidirected(ra, rb);
        };
        while (!stack.empty()) {
            auto [d, head] = stack.back();
            stack.pop_back();
            // Leaving d through an edge whose mark at d is an arrowhead is
            // only allowed if we arrived with a tail (non-collider rule).
            // children(d): mark at d is a tail -> always allowed.
            for_each_bit(g.children(d), [&](int b) {
                if (has(drop, b)) push(b, true);
                else emit(b);
            });
            if (!head) {
                for_each_bit(g.parents(d), [&](int b) {
                    if (has(drop, b)) push(b, false);
                    // A kept parent is not an endpoint: the mark there is a tail.
                });
                for_each_bit(g.siblings(d), [&](int b) {
                    if (has(drop, b)) push(b, true);
                    else emit(b);
                });
            }
        }
    }
    return out;
}

}  // namespace emid
