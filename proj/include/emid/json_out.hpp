#pragma once

#include <json.hpp>

#include "emid/estimate.hpp"
#include "emid/functional.hpp"
#include "emid/id.hpp"
#include "emid/mdg.hpp"
#include "emid/nested.hpp"

namespace emid {

using nlohmann::json;

// Canonical graph JSON: sorted vertex ids, adjacency split by edge kind.
inline json graph_to_json(const Graph& g) {
    json verts = json::array();
    std::vector<int> order;
    for (int v = 0; v < g.size(); ++v) order.push_back(v);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return g.id_of(a) < g.id_of(b); });
    for (int v : order) {
        const Vertex& vx = g.vertex(v);
        json jv{{"id", vx.id}, {"role", role_name(vx.role)}};
        if (!vx.unit.empty()) jv["unit"] = vx.unit;
        if (vx.role == Role::Counterfactual) {
            json pat = json::object();
            for (const auto& pe : vx.pattern) pat[g.id_of(pe.indicator)] = pe.value;
            jv["pattern"] = pat;
        }
        verts.push_back(jv);
    }
    auto edges = [&](bool bidirected, bool det) {
        std::vector<std::array<std::string, 2>> out;
        if (bidirected) {
            for (auto [a, b] : g.bidirected_edges()) {
                std::array<std::string, 2> e{g.id_of(a), g.id_of(b)};
                if (e[1] < e[0]) std::swap(e[0], e[1]);
                out.push_back(e);
            }
        } else {
            for (auto [a, b] : g.directed_edges())
                if (g.is_deterministic(a, b) == det) out.push_back({g.id_of(a), g.id_of(b)});
        }
        std::sort(out.begin(), out.end());
        return json(out);
    };
    return json{{"mode", mode_name(g.mode())},
                {"vertices", verts},
                {"directed", edges(false, false)},
                {"deterministic", edges(false, true)},
                {"bidirected", edges(true, false)}};
}

inline json witness_to_json(const Witness& w) {
    return json{{"kind", w.kind}, {"vertices", w.vertices}};
}

inline json verdict_to_json(const IdVerdict& v, const FunctionalStore* store = nullptr) {
    json witnesses = json::array();
    for (const auto& w : v.witnesses) witnesses.push_back(w.vertices);
    json out{{"decision", decision_name(v.decision)},
             {"theorem", v.theorem},
             {"witnesses", witnesses},
             {"witness_kinds", json::array()},
             {"warnings", v.warnings}};
    for (const auto& w : v.witnesses) out["witness_kinds"].push_back(w.kind);
    if (v.functional_id) {
        out["functional_id"] = *v.functional_id;
        if (store) out["functional"] = render(store->get(*v.functional_id));
    }
    return out;
}

inline json count_to_json(const Graph& g, const MobiusCount& c) {
    json sets = json::array();
    for (const auto& b : c.breakdown) {
        sets.push_back(json{{"set", g.ids_of(b.record.set)},
                            {"head", g.ids_of(b.record.head)},
                            {"tail", g.ids_of(b.record.tail)},
                            {"pinned", g.ids_of(b.pinned)},
                            {"parameters", b.parameters}});
    }
    return json{{"total", c.total}, {"intrinsic_sets", sets}};
}

inline json certificate_to_json(const Graph& g, const CountCertificate& c) {
    Graph fo = law_projection(g, LawKind::FullObservability);
    Graph ob = law_projection(g, LawKind::Observed);
    return json{{"full_observability", count_to_json(fo, c.full_observability)},
                {"observed", count_to_json(ob, c.observed)},
                {"non_identified", c.non_identified()}};
}

inline json report_to_json(const EstimateReport& r, const std::string& target,
                           const std::string& mechanism) {
    json out{{"target", target},         {"mechanism", mechanism}, {"estimate", r.estimate},
             {"boot_mean", r.boot_mean}, {"q05", r.q05},           {"q95", r.q95},
             {"replicates", r.replicates}, {"seed", r.seed}};
    if (!std::isnan(r.bias)) out["bias"] = r.bias;
    return out;
}

inline json diagnostics_to_json(const std::vector<Diagnostic>& ds) {
    json out = json::array();
    for (const auto& d : ds)
        out.push_back(json{{"severity", d.severity == Severity::Error ? "error" : "warning"},
                           {"message", d.message},
                           {"line", d.span.line},
                           {"col", d.span.col},
                           {"hint", d.hint}});
    return out;
}

inline json violations_to_json(const std::vector<Violation>& vs) {
    json out = json::array();
    for (const auto& v : vs)
        out.push_back(json{{"code", v.code}, {"message", v.message}, {"where", v.where}});
    return out;
}

}  // namespace emid
