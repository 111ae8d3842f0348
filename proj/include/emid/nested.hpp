#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emid/graph.hpp"
#include "emid/kernel.hpp"

namespace emid {

// Markov blanket used by the kernel fixing operator: the district of v plus
// the parents of that district.
inline VSet fixing_blanket(const Graph& g, int v) {
    VSet dis = g.district_of(v, g.random());
    return (dis | g.parents(dis)) & ~bit(v);
}

// v is fixable iff no other vertex lies both in v's district and among v's
// descendants (no B with both v <-> ... <-> B and v -> ... -> B).
inline bool is_fixable(const Graph& g, int v) {
    if (!has(g.random(), v)) return false;
    VSet dis = g.district_of(v, g.random());
    VSet de = g.descendants(bit(v), true);
    return !((dis & de) & ~bit(v));
}

inline Graph fix_vertex_graph(const Graph& g, int v) {
    if (!is_fixable(g, v)) fail(Errc::NotFixable, g.id_of(v) + " is not fixable");
    return g.contexted(v);
}

inline Kernel fix_kernel(const Kernel& q, const Graph& g, int v) {
    if (!is_fixable(g, v)) fail(Errc::NotFixable, g.id_of(v) + " is not fixable");
    return q.fix(v, fixing_blanket(g, v));
}

// Applies a whole fixing sequence to a (kernel, graph) pair in lockstep.
inline std::pair<Kernel, Graph> fix_sequence(Kernel q, Graph g, const std::vector<int>& seq) {
    for (int v : seq) {
        q = fix_kernel(q, g, v);
        g = fix_vertex_graph(g, v);
    }
    return {std::move(q), std::move(g)};
}

struct ReachableSet {
    VSet set = 0;                // the remaining random vertices
    std::vector<int> sequence;   // lexicographically least valid fixing sequence for V \ set
};

// Rebuilds the CADMG reached by fixing V \ set (any valid order).
inline Graph reach(const Graph& root, const std::vector<int>& sequence) {
    Graph g = root;
    for (int v : sequence) g = fix_vertex_graph(g, v);
    return g;
}

// All reachable sets of the CADMG, each with its lexicographically least
// witnessing sequence. Level-synchronous search: all sequences reaching a
// set have the same length, so finalizing a level before expanding it keeps
// recorded sequences lexicographically least. Capped because enumeration is
// exponential. The CADMG reached for a set is order-independent, so the memo
// key is the remaining random set itself.
inline std::map<VSet, ReachableSet> reachable_sets(const Graph& root, int cap = 14) {
    if (popcount(root.random()) > cap)
        fail(Errc::SizeCapExceeded, "too many random vertices for intrinsic-set enumeration");
    std::map<VSet, ReachableSet> seen;
    VSet full = root.random();
    seen[full] = {full, {}};
    std::vector<VSet> level{full};
    while (!level.empty()) {
        std::vector<VSet> next;
        for (VSet s : level) {
            const std::vector<int> base = seen[s].sequence;
            Graph g = reach(root, base);
            for_each_bit(s, [&](int v) {
                if (!is_fixable(g, v)) return;
                VSet child = s & ~bit(v);
                std::vector<int> seq = base;
                seq.push_back(v);
                auto it = seen.find(child);
                if (it == seen.end()) {
                    seen[child] = {child, seq};
                    next.push_back(child);
                } else if (seq < it->second.sequence) {
                    it->second.sequence = seq;
                }
            });
        }
        level = std::move(next);
    }
    return seen;
}

struct IntrinsicSetRecord {
    VSet set = 0;
    std::vector<int> sequence;  // valid fixing sequence for V \ set
    VSet head = 0;              // childless vertices of the set in the reached CADMG
    VSet tail = 0;              // parents of the head there, minus the head
};

inline std::vector<IntrinsicSetRecord> intrinsic_sets(const Graph& root, int cap = 14) {
    std::vector<IntrinsicSetRecord> out;
    for (auto& [mask, rec] : reachable_sets(root, cap)) {
        if (!mask) continue;
        Graph g = reach(root, rec.sequence);
        auto ds = g.districts(g.random());
        if (ds.size() != 1 || ds.front() != mask) continue;
        IntrinsicSetRecord r;
        r.set = mask;
        r.sequence = rec.sequence;
        for_each_bit(mask, [&](int v) {
            if (!g.children(v)) r.head |= bit(v);
        });
        r.tail = g.parents(r.head) & ~r.head;
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const IntrinsicSetRecord& a, const IntrinsicSetRecord& b) {
        return std::make_pair(popcount(a.set), a.set) < std::make_pair(popcount(b.set), b.set);
    });
    return out;
}

struct MobiusSetCount {
    IntrinsicSetRecord record;
    VSet pinned = 0;  // tail indicators forced to 1 by the deterministic consistency rows
    long parameters = 1;
};

struct MobiusCount {
    long total = 0;
    std::vector<MobiusSetCount> breakdown;
};

// Counts binary Möbius parameters of an ADMG. `pins[v]`, for a proxy vertex
// v, holds the indicators that are forced to 1 whenever v appears in a head
// and they appear in the tail; such tail coordinates count one assignment,
// not two.
inline MobiusCount count_parameters(const Graph& g, const std::map<int, VSet>& pins = {},
                                    int cap = 14) {
    MobiusCount out;
    for (auto& rec : intrinsic_sets(g, cap)) {
        MobiusSetCount c;
        c.record = rec;
        for_each_bit(rec.head, [&](int h) {
            auto it = pins.find(h);
            if (it != pins.end()) c.pinned |= it->second & rec.tail;
        });
        c.parameters = 1L << popcount(rec.tail & ~c.pinned);
        out.total += c.parameters;
        out.breakdown.push_back(std::move(c));
    }
    return out;
}

enum class LawKind { FullObservability, Observed };

struct CountCertificate {
    MobiusCount full_observability;
    MobiusCount observed;
    bool non_identified() const { return full_observability.total > observed.total; }
};

// Projection of a missing data graph onto the vertices of one of the two
// laws the completeness argument counts.
inline Graph law_projection(const Graph& g, LawKind law) {
    VSet drop = g.hidden();
    if (law == LawKind::FullObservability) {
        drop |= g.proxies();
        for_each_bit(g.counterfactuals(), [&](int v) {
            for (const auto& pe : g.vertex(v).pattern)
                if (pe.value == 0) drop |= bit(v);
        });
    } else {
        drop |= g.counterfactuals();
    }
    return latent_project(g, drop, /*force=*/true);
}

inline MobiusCount count_mobius_parameters(const Graph& g, LawKind law, int cap = 14) {
    Graph proj = law_projection(g, law);
    std::map<int, VSet> pins;
    if (law == LawKind::Observed) {
        AffectorMap aff = derive_affectors(g);
        for_each_bit(proj.proxies(), [&](int p) {
            const Vertex& vx = proj.vertex(p);
            VSet pin = 0;
            int own = proj.find("R_" + vx.name);
            if (own >= 0) pin |= bit(own);
            for (const auto& unit : aff.aff(vx.unit)) {
                for (int u = 0; u < proj.size(); ++u)
                    if (proj.vertex(u).role == Role::Indicator && proj.vertex(u).unit == unit)
                        pin |= bit(u);
            }
            pins[p] = pin;
        });
    }
    return count_parameters(proj, pins, cap);
}

inline CountCertificate count_certificate(const Graph& g, int cap = 14) {
    CountCertificate c;
    c.full_observability = count_mobius_parameters(g, LawKind::FullObservability, cap);
    c.observed = count_mobius_parameters(g, LawKind::Observed, cap);
    return c;
}

// A certificate of non-identification, or nothing. Nothing is inconclusive:
// count equality does not prove identifiability.
inline std::optional<CountCertificate> non_id_certificate(const Graph& g, int cap = 14) {
    CountCertificate c = count_certificate(g, cap);
    if (c.non_identified()) return c;
    return std::nullopt;
}

struct FactorizationReport {
    int sets_checked = 0;
    int sequences_compared = 0;
    double max_sequence_diff = 0;
    double max_factorization_diff = 0;
    std::vector<std::string> violations;

    bool clean(double tol = 1e-10) const {
        return max_sequence_diff < tol && max_factorization_diff < tol;
    }
};

namespace detail {

inline void all_sequences(const Graph& g, VSet target, std::vector<int>& cur,
                          std::vector<std::vector<int>>& out, size_t cap) {
    if (out.size() >= cap) return;
    if (g.random() == target) {
        out.push_back(cur);
        return;
    }
    for_each_bit(g.random() & ~target, [&](int v) {
        if (out.size() >= cap || !is_fixable(g, v)) return;
        cur.push_back(v);
        all_sequences(fix_vertex_graph(g, v), target, cur, out, cap);
        cur.pop_back();
    });
}

}  // namespace detail

// Checks sequence invariance of kernel fixing and the district (Tian)
// factorization of the joint against the CADMG. Violations are reported,
// never thrown: a distribution outside the nested model is a legitimate
// input here.
inline FactorizationReport verify_nested_factorization(const Kernel& joint, const Graph& g,
                                                       int trials, unsigned seed = 1,
                                                       size_t seq_cap = 720) {
    FactorizationReport rep;
    auto reachable = reachable_sets(g);
    std::vector<VSet> sets;
    for (auto& [mask, rec] : reachable)
        if (mask != g.random()) sets.push_back(mask);
    std::mt19937 rng(seed);
    std::shuffle(sets.begin(), sets.end(), rng);
    if (static_cast<int>(sets.size()) > trials) sets.resize(static_cast<size_t>(trials));

    for (VSet target : sets) {
        std::vector<std::vector<int>> seqs;
        std::vector<int> cur;
        detail::all_sequences(g, target, cur, seqs, seq_cap);
        if (seqs.empty()) continue;
        ++rep.sets_checked;
        Kernel first = fix_sequence(joint, g, seqs.front()).first;
        for (size_t i = 1; i < seqs.size(); ++i) {
            Kernel k = fix_sequence(joint, g, seqs[i]).first;
            double d = first.max_abs_diff(k);
            rep.max_sequence_diff = std::max(rep.max_sequence_diff, d);
            ++rep.sequences_compared;
            if (d > 1e-10)
                rep.violations.push_back("sequence-dependent kernel for set " +
                                         std::to_string(target) + " (diff " + std::to_string(d) + ")");
        }
    }

    // district factorization: p(V | W) = prod_D q_D(D | rest)
    auto districts = g.districts(g.random());
    std::vector<Kernel> qd;
    for (VSet d : districts) {
        auto it = reachable.find(d);
        if (it == reachable.end()) {
            rep.violations.push_back("district not reachable");
            return rep;
        }
        qd.push_back(fix_sequence(joint, g, it->second.sequence).first);
    }
    joint.iterate([&](const std::vector<int>& a, double p) {
        std::map<int, int> assign;
        auto sc = joint.scope();
        for (size_t i = 0; i < sc.size(); ++i) assign[sc[i]] = a[i];
        double prod = 1;
        for (auto& k : qd) prod *= k.value(assign);
        rep.max_factorization_diff = std::max(rep.max_factorization_diff, std::abs(prod - p));
    });
    if (rep.max_factorization_diff > 1e-10)
        rep.violations.push_back("district factorization mismatch (diff " +
                                 std::to_string(rep.max_factorization_diff) + ")");
    return rep;
}

}  // namespace emid
