#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "emid/functional.hpp"
#include "emid/gspec_parse.hpp"
#include "emid/mdg.hpp"
#include "emid/separation.hpp"
#include "emid/tabular.hpp"

namespace emid {

inline std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(EMID_FIXTURES) + "/" + name);
    if (!in) throw std::runtime_error("missing fixture " + name);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::string fig2d_text() { return read_fixture("fig2d.mdg"); }
inline std::string fig3a_text() { return read_fixture("fig3a.mdg"); }
inline std::string fig3b_text() { return read_fixture("fig3b.mdg"); }
inline std::string fig3c_text() { return read_fixture("fig3c.mdg"); }
inline std::string fig4a_mar_text() { return read_fixture("fig4a_mar.mdg"); }
inline std::string fig4a_selfcensor_text() { return read_fixture("fig4a_selfcensor.mdg"); }
inline std::string fig4_colluding_text() { return read_fixture("fig4_colluding.mdg"); }
inline std::string fig5_text() { return read_fixture("fig5.mdg"); }
inline std::string fig6a_text() { return read_fixture("fig6a.mdg"); }
inline std::string fig6b_text() { return read_fixture("fig6b.mdg"); }
inline std::string fig8a_text() { return read_fixture("fig8a.mdg"); }
inline std::string fig8d_text() { return read_fixture("fig8d.mdg"); }
inline std::string fig9_text() { return read_fixture("fig9.mdg"); }

inline BuildResult build_fixture(const std::string& text, Mode mode) {
    auto pr = parse(text);
    if (!pr.ok()) {
        BuildResult br;
        for (const auto& d : pr.diagnostics)
            br.violations.push_back({"ParseError", d.message, {}});
        return br;
    }
    return build_and_validate(*pr.spec, mode);
}

inline Graph must_build(const std::string& fixture, Mode mode) {
    auto br = build_fixture(read_fixture(fixture), mode);
    if (!br.ok()) {
        std::string msg = "fixture " + fixture + " failed to build:";
        for (const auto& v : br.violations) msg += " [" + v.code + "] " + v.message;
        throw std::runtime_error(msg);
    }
    return *br.graph;
}

// Random DAG over n visible vertices plus h hidden confounders, each hidden
// pointing at two distinct visible vertices.
inline Graph random_admg_with_hidden(std::mt19937& rng, int n, int h, double edge_p = 0.4) {
    std::vector<Vertex> vs;
    for (int i = 0; i < n; ++i)
        vs.push_back({"V" + std::to_string(i), Role::Covariate, "", "V" + std::to_string(i), {}, -1, -1});
    for (int j = 0; j < h; ++j)
        vs.push_back({"U" + std::to_string(j), Role::Hidden, "", "U" + std::to_string(j), {}, -1, -1});
    Graph g = Graph::make(std::move(vs));
    std::uniform_real_distribution<double> u(0, 1);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (u(rng) < edge_p) g.add_directed(a, b, false);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int j = 0; j < h; ++j) {
        int a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        g.add_directed(n + j, a, false);
        g.add_directed(n + j, b, false);
    }
    return g;
}

// Random ADMG over n vertices: random upper-triangular directed edges plus
// random bidirected edges.
inline Graph random_admg(std::mt19937& rng, int n, double dir_p = 0.35, double bi_p = 0.25) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("V" + std::to_string(i));
    Graph g = Graph::plain_admg(ids, {}, {});
    std::uniform_real_distribution<double> u(0, 1);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            if (u(rng) < dir_p) g.add_directed(a, b, false);
            if (u(rng) < bi_p) g.add_bidirected(a, b);
        }
    return g;
}

// Joint distribution in the nested Markov model of an ADMG: built from the
// canonical hidden-variable DAG (one hidden parent per bidirected edge).
inline TabularLaw nested_law(const Graph& admg, std::mt19937& rng) {
    std::vector<Vertex> vs;
    for (int v = 0; v < admg.size(); ++v) vs.push_back(admg.vertex(v));
    int nh = 0;
    std::vector<std::pair<int, int>> bi = admg.bidirected_edges();
    for (size_t e = 0; e < bi.size(); ++e)
        vs.push_back({"Ubi" + std::to_string(nh++), Role::Hidden, "", "", {}, -1, -1});
    Graph dag = Graph::make(std::move(vs));
    for (auto [a, b] : admg.directed_edges()) dag.add_directed(a, b, false);
    for (size_t e = 0; e < bi.size(); ++e) {
        dag.add_directed(admg.size() + static_cast<int>(e), bi[e].first, false);
        dag.add_directed(admg.size() + static_cast<int>(e), bi[e].second, false);
    }
    return full_law_from_cpts(dag, random_cpts(dag, rng));
}

// Identified three-indicator MNAR graphs used by the reconstruction checks:
// a cross-censoring DAG cycle and a fig-6(a)-style indicator chain.
inline std::string three_indicator_dag() {
    return
        "unit 1 { covariate O1  missing Z1  missing Z2  missing Z3 }\n"
        "O.O1 -> Z1[1]\nO.O1 -> Z2[1]\nO.O1 -> Z3[1]\n"
        "Z1[1] -> Z2[1]\n"
        "Z1[1] -> R_Z2\nZ2[1] -> R_Z3\nZ3[1] -> R_Z1\n"
        "O.O1 -> R_Z1\nO.O1 -> R_Z2\nO.O1 -> R_Z3\n";
}

inline std::string three_indicator_admg() {
    return
        "unit 1 { covariate O1  missing Z1  missing Z2  missing Z3 }\n"
        "O.O1 -> Z1[1]\nO.O1 -> Z2[1]\nO.O1 -> Z3[1]\n"
        "Z3[1] -> R_Z1\nZ3[1] -> R_Z2\n"
        "R_Z1 -> R_Z2\nR_Z2 -> R_Z3\nO.O1 -> R_Z3\n"
        "Z1[1] <-> Z2[1]\n";
}

// Max-abs error of the emitted full-law functional against the true full
// law, evaluated only through the observed margin (the IPW/odds-ratio
// round trip).
inline double full_law_roundtrip_error(const Graph& g, const Ast& functional,
                                       std::mt19937& rng) {
    TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
    TabularLaw obs = observed_margin(g, full);
    Evaluator ev(obs);
    double worst = 0;
    full.iterate([&](const std::vector<int>& a, double truth) {
        Assignment assign;
        for (size_t i = 0; i < full.vars().size(); ++i) {
            const std::string& name = full.vars()[i].name;
            int v = g.index_of(name);
            if (g.vertex(v).role == Role::Counterfactual)
                assign[g.id_of(g.vertex(v).proxy)] = a[i];
            else
                assign[name] = a[i];
        }
        worst = std::max(worst, std::abs(ev.at(functional, assign) - truth));
    });
    return worst;
}

// Exact conditional-independence gap: max over z of the total variation
// between p(x, y | z) and p(x | z) p(y | z).
inline double ci_gap(const TabularLaw& law, const std::string& x, const std::string& y,
                     const std::vector<std::string>& z) {
    int px = law.require(x), py = law.require(y);
    std::vector<int> pz;
    for (const auto& v : z) pz.push_back(law.require(v));
    std::map<std::vector<int>, std::map<std::pair<int, int>, double>> cells;
    law.iterate([&](const std::vector<int>& a, double p) {
        std::vector<int> zkey;
        for (int q : pz) zkey.push_back(a[static_cast<size_t>(q)]);
        cells[zkey][{a[static_cast<size_t>(px)], a[static_cast<size_t>(py)]}] += p;
    });
    double worst = 0;
    for (auto& [zkey, joint] : cells) {
        double mass = 0;
        std::map<int, double> mx, my;
        for (auto& [xy, p] : joint) {
            mass += p;
            mx[xy.first] += p;
            my[xy.second] += p;
        }
        if (mass < 1e-12) continue;
        double tv = 0;
        for (auto& [xy, p] : joint)
            tv += std::abs(p / mass - (mx[xy.first] / mass) * (my[xy.second] / mass));
        for (auto& [xv, p1] : mx)
            for (auto& [yv, p2] : my)
                if (!joint.count({xv, yv})) tv += (p1 / mass) * (p2 / mass);
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

}  // namespace emid
