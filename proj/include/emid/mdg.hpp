#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emid/graph.hpp"
#include "emid/gspec.hpp"

namespace emid {

struct Violation {
    std::string code;
    std::string message;
    std::vector<std::string> where;  // offending vertex/edge ids
};

// A single-world query as declared in a spec file: counterfactual vertices
// plus a world assignment over all indicators.
struct SingleWorldQuery {
    std::vector<int> ctfs;
    std::map<int, int> world;  // indicator vertex -> 0/1
};

struct BuildResult {
    std::optional<Graph> graph;
    std::vector<Violation> violations;
    std::vector<SingleWorldQuery> queries;
    std::vector<ScenarioStmt> scenarios;

    bool ok() const { return graph.has_value(); }
};

namespace detail {

struct VarInfo {
    std::string unit;
    DeclKind kind;
};

inline std::string ctf_id(const std::string& var,
                          const std::vector<std::pair<std::string, int>>& pattern) {
    std::string s = var + "[1";
    for (size_t i = 0; i < pattern.size(); ++i)
        s += (i == 0 ? "; r" : ", r") + pattern[i].first + "=" + std::to_string(pattern[i].second);
    return s + "]";
}

}  // namespace detail

// Builds the graph a spec describes and checks every mode-appropriate edge
// restriction. Deterministic proxy edges (counterfactuals, the own
// indicator, and affector indicators into each proxy) are implied by the
// spec and added here; writing them by hand is a violation.
inline BuildResult build_and_validate(const GraphSpec& spec, Mode mode) {
    BuildResult res;
    auto violate = [&](const std::string& code, const std::string& msg,
                       std::vector<std::string> where = {}) {
        res.violations.push_back({code, msg, std::move(where)});
    };

    // --- declaration tables ---
    std::map<std::string, detail::VarInfo> vars;          // name -> info
    std::map<std::string, std::vector<std::string>> unit_missing;
    for (const auto& u : spec.units)
        for (const auto& d : u.decls) {
            if (!vars.emplace(d.name, detail::VarInfo{u.unit, d.kind}).second) {
                violate("DuplicateVertex", "name '" + d.name + "' declared twice", {d.name});
                continue;
            }
            if (d.kind == DeclKind::Missing) unit_missing[u.unit].push_back(d.name);
            if (d.name.rfind("R_", 0) == 0 || d.name.rfind("O.", 0) == 0)
                violate("DuplicateVertex", "name '" + d.name + "' collides with a reserved prefix",
                        {d.name});
        }

    // ref -> missing variable (unit id shorthand or variable name)
    auto resolve_ref = [&](const std::string& ref) -> std::string {
        auto um = unit_missing.find(ref);
        if (um != unit_missing.end() && um->second.size() == 1) return um->second.front();
        auto vi = vars.find(ref);
        if (vi != vars.end() && vi->second.kind == DeclKind::Missing) return ref;
        return "";
    };
    auto canonical_ref = [&](const std::string& var) -> std::string {
        const auto& unit = vars.at(var).unit;
        return unit_missing.at(unit).size() == 1 ? unit : var;
    };

    // --- canonicalize counterfactual patterns, collect family key sets ---
    // canonical pattern: sorted (canonical ref, value); key = referenced var
    struct Pat {
        std::vector<std::pair<std::string, int>> refs;   // canonical refs
        std::vector<std::pair<std::string, int>> keyvars;  // (missing var, value)
    };
    auto canon_pattern = [&](const TermRef& t) -> std::optional<Pat> {
        Pat p;
        std::set<std::string> seen;
        for (const auto& [ref, v] : t.pattern) {
            std::string var = resolve_ref(ref);
            if (var.empty()) {
                violate("PatternReferencesUnknownIndicator",
                        "pattern key 'r" + ref + "' in " + t.name + " resolves to no indicator",
                        {t.name});
                return std::nullopt;
            }
            if (!seen.insert(var).second) {
                violate("PatternReferencesUnknownIndicator",
                        "pattern of " + t.name + " repeats key 'r" + ref + "'", {t.name});
                return std::nullopt;
            }
            if (vars.at(var).unit == vars.at(t.name).unit && mode != Mode::RelaxedIid) {
                violate("IllegalPatternKey",
                        "pattern key 'r" + ref + "' of " + t.name +
                            " references the variable's own unit (relaxed_iid only)",
                        {t.name});
                return std::nullopt;
            }
            if (var == t.name) {
                violate("IllegalPatternKey", "pattern of " + t.name + " references its own indicator",
                        {t.name});
                return std::nullopt;
            }
            p.refs.emplace_back(canonical_ref(var), v);
            p.keyvars.emplace_back(var, v);
        }
        if (mode == Mode::Classic && !p.refs.empty()) {
            violate("IllegalPatternKey", "classic mode forbids missingness-pattern keys", {t.name});
            return std::nullopt;
        }
        std::sort(p.refs.begin(), p.refs.end());
        std::sort(p.keyvars.begin(), p.keyvars.end());
        return p;
    };

    // family key sets per missing variable; members seen in the spec
    std::map<std::string, std::set<std::string>> family_keys;  // var -> key vars
    auto note_ctf = [&](const TermRef& t) {
        auto p = canon_pattern(t);
        if (!p) return;
        for (const auto& [kv, val] : p->keyvars) family_keys[t.name].insert(kv);
    };
    for (const auto& e : spec.edges) {
        if (e.a.kind == TermKind::Ctf) note_ctf(e.a);
        if (e.b.kind == TermKind::Ctf) note_ctf(e.b);
    }
    for (const auto& q : spec.queries)
        for (const auto& c : q.ctfs) note_ctf(c);

    if (!res.violations.empty()) return res;

    // --- vertex list ---
    std::vector<Vertex> verts;
    auto add_vertex = [&](Vertex v) { verts.push_back(std::move(v)); };
    std::map<std::string, std::vector<std::vector<std::pair<std::string, int>>>> family_members;
    for (const auto& [name, info] : vars) {
        switch (info.kind) {
            case DeclKind::Covariate:
                add_vertex({name, Role::Covariate, info.unit, name, {}, -1, -1});
                break;
            case DeclKind::Hidden:
                add_vertex({name, Role::Hidden, info.unit, name, {}, -1, -1});
                break;
            case DeclKind::Missing: {
                add_vertex({"R_" + name, Role::Indicator, info.unit, name, {}, -1, -1});
                add_vertex({name, Role::Proxy, info.unit, name, {}, -1, -1});
                // expand the full 2^k family over the key set
                std::vector<std::string> keys(family_keys[name].begin(), family_keys[name].end());
                if (keys.size() > 12) {
                    violate("SizeCapExceeded", "family of " + name + " has too many affector keys");
                    break;
                }
                for (int m = 0; m < (1 << keys.size()); ++m) {
                    std::vector<std::pair<std::string, int>> refs;
                    for (size_t j = 0; j < keys.size(); ++j)
                        refs.emplace_back(canonical_ref(keys[j]), (m >> j) & 1);
                    std::sort(refs.begin(), refs.end());
                    add_vertex({detail::ctf_id(name, refs), Role::Counterfactual, info.unit, name,
                                {}, -1, -1});
                    family_members[name].push_back(refs);
                }
                break;
            }
        }
    }
    if (verts.size() > static_cast<size_t>(kMaxVertices)) {
        violate("SizeCapExceeded", "spec expands to more than 64 vertices");
        return res;
    }
    std::sort(verts.begin(), verts.end(), [](const Vertex& a, const Vertex& b) { return a.id < b.id; });
    Graph g = Graph::make(std::move(verts), mode);

    // cross-references and pattern entries (need final indices)
    {
        std::vector<Vertex> vs;
        vs.reserve(static_cast<size_t>(g.size()));
        for (int v = 0; v < g.size(); ++v) vs.push_back(g.vertex(v));
        for (auto& v : vs) {
            if (v.role == Role::Proxy || v.role == Role::Counterfactual)
                v.own_indicator = g.index_of("R_" + v.name);
            if (v.role == Role::Counterfactual || v.role == Role::Indicator)
                v.proxy = g.index_of(v.name);
            if (v.role == Role::Counterfactual) {
                // recover pattern from the id's family member list
                for (const auto& refs : family_members[v.name]) {
                    if (detail::ctf_id(v.name, refs) != v.id) continue;
                    for (const auto& [ref, val] : refs) {
                        std::string var = resolve_ref(ref);
                        v.pattern.push_back({g.index_of("R_" + var), val});
                    }
                }
                std::sort(v.pattern.begin(), v.pattern.end(),
                          [&](const PatternEntry& a, const PatternEntry& b) {
                              return g.id_of(a.indicator) < g.id_of(b.indicator);
                          });
            }
        }
        Graph g2 = Graph::make(std::move(vs), mode);
        for (auto [a, b] : g.directed_edges()) g2.add_directed(a, b, g.is_deterministic(a, b));
        for (auto [a, b] : g.bidirected_edges()) g2.add_bidirected(a, b);
        g = std::move(g2);
    }

    // --- implied deterministic edges ---
    for (const auto& [name, members] : family_members) {
        int proxy = g.index_of(name);
        int own = g.index_of("R_" + name);
        g.add_directed(own, proxy, true);
        for (const auto& refs : members)
            g.add_directed(g.index_of(detail::ctf_id(name, refs)), proxy, true);
        for (const auto& key : family_keys[name])
            g.add_directed(g.index_of("R_" + key), proxy, true);
    }

    // --- user edges ---
    auto term_vertex = [&](const TermRef& t) -> int {
        switch (t.kind) {
            case TermKind::Covariate:
            case TermKind::Proxy:
            case TermKind::Hidden:
                return g.find(t.name);
            case TermKind::Indicator:
                return g.find("R_" + t.name);
            case TermKind::Ctf: {
                auto p = canon_pattern(t);
                if (!p) return -1;
                // pad to the full key set: absent keys are not allowed
                if (p->keyvars.size() != family_keys[t.name].size()) {
                    violate("PatternReferencesUnknownIndicator",
                            "pattern of " + detail::ctf_id(t.name, p->refs) +
                                " does not cover the family key set of " + t.name,
                            {t.name});
                    return -1;
                }
                return g.find(detail::ctf_id(t.name, p->refs));
            }
            default:
                return -1;
        }
    };

    for (const auto& e : spec.edges) {
        int a = term_vertex(e.a), b = term_vertex(e.b);
        if (a < 0 || b < 0) {
            if (res.violations.empty())
                violate("UndeclaredReference", "edge references an unknown vertex");
            continue;
        }
        if (a == b) {
            violate("IllegalEdge", "self loop at " + g.id_of(a), {g.id_of(a)});
            continue;
        }
        const Vertex& va = g.vertex(a);
        const Vertex& vb = g.vertex(b);
        std::string edge_str = g.id_of(a) + (e.bidirected ? " <-> " : " -> ") + g.id_of(b);
        if (va.role == Role::Proxy || vb.role == Role::Proxy) {
            violate("MalformedProxyParents",
                    "proxy edges are deterministic and implied, cannot write " + edge_str,
                    {edge_str});
            continue;
        }
        if (e.bidirected) {
            g.add_bidirected(a, b);
            continue;
        }
        if (va.role == Role::Indicator &&
            (vb.role == Role::Covariate || vb.role == Role::Counterfactual)) {
            bool relaxed_ok = mode == Mode::RelaxedIid && vb.role == Role::Counterfactual &&
                              va.unit == vb.unit && family_keys[vb.name].count(va.name);
            if (!relaxed_ok) {
                violate("IllegalIndicatorEdge",
                        "indicators cannot point into always-observed or counterfactual "
                        "vertices: " + edge_str,
                        {edge_str});
                continue;
            }
        }
        g.add_directed(a, b, false);
    }

    if (!g.acyclic())
        violate("CyclicDirectedPart", "directed part of the graph has a cycle");

    if (!res.violations.empty()) return res;

    // --- queries ---
    for (const auto& q : spec.queries) {
        SingleWorldQuery sw;
        bool ok = true;
        for (const auto& c : q.ctfs) {
            int v = term_vertex(c);
            if (v < 0) { ok = false; break; }
            sw.ctfs.push_back(v);
        }
        std::set<int> covered;
        for (const auto& [ref, val] : q.world) {
            std::string var = resolve_ref(ref);
            if (var.empty()) { ok = false; break; }
            int r = g.index_of("R_" + var);
            sw.world[r] = val;
            covered.insert(r);
        }
        if (ok) {
            for_each_bit(g.indicators(), [&](int r) {
                if (!covered.count(r)) ok = false;
            });
        }
        if (!ok) {
            violate("InvalidQuery", "query does not resolve against this graph");
            continue;
        }
        std::sort(sw.ctfs.begin(), sw.ctfs.end());
        res.queries.push_back(std::move(sw));
    }
    res.scenarios = spec.scenarios;
    if (!res.violations.empty()) return res;

    res.graph = std::move(g);
    return res;
}

// DOT rendering (write-only; there is no DOT import).
inline std::string to_dot(const Graph& g) {
    std::ostringstream os;
    os << "digraph mdg {\n  rankdir=TB;\n";
    for (int v = 0; v < g.size(); ++v) {
        const Vertex& vx = g.vertex(v);
        const char* shape = vx.role == Role::Hidden ? "ellipse" : "plaintext";
        const char* color = vx.role == Role::Indicator ? "blue"
                            : vx.role == Role::Proxy   ? "gray"
                            : vx.role == Role::Hidden  ? "lightgray"
                                                       : "black";
        os << "  \"" << vx.id << "\" [shape=" << shape << ", color=" << color << "];\n";
    }
    for (auto [a, b] : g.directed_edges())
        os << "  \"" << g.id_of(a) << "\" -> \"" << g.id_of(b) << "\""
           << (g.is_deterministic(a, b) ? " [color=gray]" : "") << ";\n";
    for (auto [a, b] : g.bidirected_edges())
        os << "  \"" << g.id_of(a) << "\" -> \"" << g.id_of(b)
           << "\" [dir=both, color=red, constraint=false];\n";
    os << "}\n";
    return os.str();
}

}  // namespace emid
