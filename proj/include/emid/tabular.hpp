#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "emid/errors.hpp"
#include "emid/graph.hpp"

namespace emid {

// One variable of a tabular law. Proxies carry an extra "?" state, always
// the last value index.
struct LawVar {
    std::string name;
    int card = 2;
    bool has_missing_state = false;

    int missing_value() const { return card - 1; }
};

// Dense joint distribution over named discrete variables, the object
// functionals are evaluated against. Row-major, last variable fastest.
class TabularLaw {
public:
    TabularLaw() = default;
    TabularLaw(std::vector<LawVar> vars, std::vector<double> table)
        : vars_(std::move(vars)), table_(std::move(table)) {
        size_t n = 1;
        for (const auto& v : vars_) n *= static_cast<size_t>(v.card);
        if (n != table_.size()) fail(Errc::ScopeMismatch, "law table size mismatch");
    }

    const std::vector<LawVar>& vars() const { return vars_; }
    const std::vector<double>& table() const { return table_; }
    std::vector<double>& table() { return table_; }

    int position(const std::string& name) const {
        for (size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i].name == name) return static_cast<int>(i);
        return -1;
    }
    int require(const std::string& name) const {
        int p = position(name);
        if (p < 0) fail(Errc::ScopeMismatch, "law has no variable '" + name + "'");
        return p;
    }
    int card(const std::string& name) const { return vars_[static_cast<size_t>(require(name))].card; }

    double sum() const {
        double s = 0;
        for (double x : table_) s += x;
        return s;
    }

    void normalize() {
        double s = sum();
        if (s <= 0) fail(Errc::PositivityViolation, "law has zero mass");
        for (double& x : table_) x /= s;
    }

    template <typename F>
    void iterate(F&& f) const {
        std::vector<int> a(vars_.size(), 0);
        for (size_t idx = 0; idx < table_.size(); ++idx) {
            f(a, table_[idx]);
            for (int j = static_cast<int>(vars_.size()) - 1; j >= 0; --j) {
                if (++a[static_cast<size_t>(j)] < vars_[static_cast<size_t>(j)].card) break;
                a[static_cast<size_t>(j)] = 0;
            }
        }
    }

    size_t flat(const std::vector<int>& a) const {
        size_t idx = 0;
        for (size_t i = 0; i < vars_.size(); ++i)
            idx = idx * static_cast<size_t>(vars_[i].card) + static_cast<size_t>(a[i]);
        return idx;
    }

    // probability of an event given by (position -> value) constraints
    double event(const std::map<int, int>& fixed) const {
        double s = 0;
        iterate([&](const std::vector<int>& a, double p) {
            for (const auto& [pos, val] : fixed)
                if (a[static_cast<size_t>(pos)] != val) return;
            s += p;
        });
        return s;
    }

private:
    std::vector<LawVar> vars_;
    std::vector<double> table_;
};

// --- constructing discrete laws from a missing data graph --------------------

// Random conditional probability tables for every random non-proxy vertex
// (hidden included); full-support by construction. `alpha` < 1 pushes tables
// toward the faithful/extreme region.
struct DagCpts {
    // cpt[v]: indexed by parent assignment (ascending parent order), holds p(v=1 | pa)
    std::map<int, std::vector<double>> p1;
};

inline DagCpts random_cpts(const Graph& g, std::mt19937& rng, double lo = 0.1, double hi = 0.9) {
    std::uniform_real_distribution<double> u(lo, hi);
    DagCpts c;
    for (int v = 0; v < g.size(); ++v) {
        if (g.vertex(v).role == Role::Proxy) continue;
        int np = popcount(g.parents(v) & ~g.proxies());
        std::vector<double> t(static_cast<size_t>(1) << np);
        for (auto& x : t) x = u(rng);
        c.p1[v] = std::move(t);
    }
    return c;
}

// Exact full law over the non-proxy random vertices of g: the product of the
// CPTs with hidden vertices summed out. Variable names are vertex ids.
inline TabularLaw full_law_from_cpts(const Graph& g, const DagCpts& cpts) {
    // walk vertices in topological order so parents are assigned first
    std::vector<int> order;
    for (int v : g.topo_order())
        if (g.vertex(v).role != Role::Proxy) order.push_back(v);
    // visible variables sorted by id for a stable law scope
    std::vector<int> visible;
    for (int v : order)
        if (g.vertex(v).role != Role::Hidden) visible.push_back(v);
    std::sort(visible.begin(), visible.end(),
              [&](int a, int b) { return g.id_of(a) < g.id_of(b); });

    std::vector<LawVar> vars;
    for (int v : visible) vars.push_back({g.id_of(v), 2, false});
    std::vector<double> table(static_cast<size_t>(1) << visible.size(), 0.0);

    int n = static_cast<int>(order.size());
    std::vector<int> value(static_cast<size_t>(g.size()), 0);
    std::function<void(int, double)> rec = [&](int i, double p) {
        if (p == 0) return;
        if (i == n) {
            size_t idx = 0;
            for (int v : visible) idx = (idx << 1) | static_cast<size_t>(value[static_cast<size_t>(v)]);
            table[idx] += p;
            return;
        }
        int v = order[static_cast<size_t>(i)];
        // CPT row index from parents (ascending vertex order)
        size_t row = 0;
        for_each_bit(g.parents(v) & ~g.proxies(), [&](int q) {
            row = (row << 1) | static_cast<size_t>(value[static_cast<size_t>(q)]);
        });
        double p1 = cpts.p1.at(v)[row];
        value[static_cast<size_t>(v)] = 1;
        rec(i + 1, p * p1);
        value[static_cast<size_t>(v)] = 0;
        rec(i + 1, p * (1 - p1));
    };
    rec(0, 1.0);
    return TabularLaw(std::move(vars), std::move(table));
}

// The observed margin p(O, Z, R) of a full law, with proxies defined by the
// consistency rule: Z_i equals the counterfactual selected by the realized
// affector pattern when R_i = 1 and "?" otherwise.
inline TabularLaw observed_margin(const Graph& g, const TabularLaw& full) {
    std::vector<int> full_pos_of(static_cast<size_t>(g.size()), -1);
    for (int v = 0; v < g.size(); ++v) {
        int p = full.position(g.id_of(v));
        full_pos_of[static_cast<size_t>(v)] = p;
    }
    std::vector<int> obs_vertices;
    for (int v = 0; v < g.size(); ++v) {
        Role r = g.vertex(v).role;
        if (r == Role::Covariate || r == Role::Indicator || r == Role::Proxy)
            obs_vertices.push_back(v);
    }
    std::sort(obs_vertices.begin(), obs_vertices.end(),
              [&](int a, int b) { return g.id_of(a) < g.id_of(b); });
    std::vector<LawVar> vars;
    for (int v : obs_vertices) {
        bool proxy = g.vertex(v).role == Role::Proxy;
        vars.push_back({g.id_of(v), proxy ? 3 : 2, proxy});
    }
    TabularLaw obs(vars, std::vector<double>(
        [&] { size_t n = 1; for (auto& v : vars) n *= static_cast<size_t>(v.card); return n; }(), 0.0));

    full.iterate([&](const std::vector<int>& a, double p) {
        if (p == 0) return;
        std::vector<int> o;
        o.reserve(obs_vertices.size());
        for (int v : obs_vertices) {
            const Vertex& vx = g.vertex(v);
            if (vx.role != Role::Proxy) {
                o.push_back(a[static_cast<size_t>(full_pos_of[static_cast<size_t>(v)])]);
                continue;
            }
            int own = full_pos_of[static_cast<size_t>(vx.own_indicator)];
            if (a[static_cast<size_t>(own)] == 0) {
                o.push_back(2);  // "?"
                continue;
            }
            // pick the family member whose pattern matches the realized world
            int chosen = -1;
            for_each_bit(g.counterfactuals(), [&](int c) {
                const Vertex& cx = g.vertex(c);
                if (cx.name != vx.name || cx.unit != vx.unit) return;
                for (const auto& pe : cx.pattern) {
                    int rp = full_pos_of[static_cast<size_t>(pe.indicator)];
                    if (a[static_cast<size_t>(rp)] != pe.value) return;
                }
                chosen = c;
            });
            o.push_back(a[static_cast<size_t>(full_pos_of[static_cast<size_t>(chosen)])]);
        }
        obs.table()[obs.flat(o)] += p;
    });
    return obs;
}

}  // namespace emid
