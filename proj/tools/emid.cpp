// emid: identification, counting, simulation and estimation for missing data
// graphs with entangled missingness.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "emid/emit.hpp"
#include "emid/estimate.hpp"
#include "emid/gspec_parse.hpp"
#include "emid/gspec_serialize.hpp"
#include "emid/id.hpp"
#include "emid/json_out.hpp"
#include "emid/nested.hpp"
#include "emid/simulate.hpp"

using namespace emid;

namespace {

struct LoadedSpec {
    GraphSpec spec;
    Graph graph;
    std::vector<SingleWorldQuery> queries;
};

int fail_input(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return 2;
}

std::optional<std::string> slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Mode detect_mode(const GraphSpec& spec, const std::string& flag) {
    if (flag == "classic") return Mode::Classic;
    if (flag == "interference") return Mode::Interference;
    if (flag == "relaxed") return Mode::RelaxedIid;
    // auto: any nonempty counterfactual pattern means interference
    for (const auto& e : spec.edges)
        for (const TermRef* t : {&e.a, &e.b})
            if (t->kind == TermKind::Ctf && !t->pattern.empty()) return Mode::Interference;
    for (const auto& q : spec.queries)
        for (const auto& c : q.ctfs)
            if (!c.pattern.empty()) return Mode::Interference;
    return Mode::Classic;
}

std::optional<LoadedSpec> load_spec(const std::string& path, const std::string& mode_flag,
                                    int& exit_code) {
    auto text = slurp(path);
    if (!text) {
        exit_code = fail_input("cannot open " + path);
        return std::nullopt;
    }
    auto pr = parse(*text);
    for (const auto& d : pr.diagnostics)
        std::cerr << path << ":" << d.span.line << ":" << d.span.col << ": "
                  << (d.severity == Severity::Error ? "error: " : "warning: ") << d.message
                  << (d.hint.empty() ? "" : " (" + d.hint + ")") << "\n";
    if (!pr.ok()) {
        exit_code = 2;
        return std::nullopt;
    }
    auto br = build_and_validate(*pr.spec, detect_mode(*pr.spec, mode_flag));
    if (!br.ok()) {
        for (const auto& v : br.violations)
            std::cerr << path << ": [" << v.code << "] " << v.message << "\n";
        exit_code = 2;
        return std::nullopt;
    }
    return LoadedSpec{*pr.spec, *br.graph, br.queries};
}

// normalize a counterfactual token against a graph vertex id (whitespace-insensitive)
int find_ctf(const Graph& g, const std::string& token) {
    auto strip = [](const std::string& s) {
        std::string out;
        for (char c : s)
            if (!std::isspace(static_cast<unsigned char>(c))) out += c;
        return out;
    };
    std::string want = strip(token);
    for (int v = 0; v < g.size(); ++v)
        if (g.vertex(v).role == Role::Counterfactual && strip(g.id_of(v)) == want) return v;
    return -1;
}

std::string csv_num(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"identification and estimation for missing data graphs with entanglement"};
    app.require_subcommand(1);

    std::string spec_path, scenario_path, data_path, out_path, dot_path;
    std::string mode_flag = "auto", theorem = "auto", law = "full-obs", target, mechanisms = "mcar,mar,mnar";
    std::string mechanism_flag = "auto";
    bool as_json = false, fail_on_nonid = false;
    long n_rows = 50000;
    std::uint64_t seed = 1;
    int bootstrap_b = 0;

    auto add_mode = [&](CLI::App* cmd) {
        cmd->add_option("--mode", mode_flag, "graph mode: auto|classic|interference|relaxed");
    };

    auto* validate = app.add_subcommand("validate", "parse and validate a .mdg spec");
    validate->add_option("spec", spec_path)->required();
    validate->add_flag("--json", as_json);
    validate->add_option("--dot", dot_path, "write a DOT rendering (write-only)");
    add_mode(validate);

    auto* checkid = app.add_subcommand("check-id", "decide identifiability");
    checkid->add_option("spec", spec_path)->required();
    checkid->add_option("--theorem", theorem, "auto|1|2|3|4");
    checkid->add_flag("--json", as_json);
    checkid->add_flag("--fail-on-nonid", fail_on_nonid);
    add_mode(checkid);

    auto* mobius = app.add_subcommand("mobius-count", "count binary Möbius parameters");
    mobius->add_option("spec", spec_path)->required();
    mobius->add_option("--law", law, "full-obs|observed");
    mobius->add_flag("--json", as_json);
    add_mode(mobius);

    auto* intrinsic = app.add_subcommand("intrinsic", "list intrinsic sets with heads and tails");
    intrinsic->add_option("spec", spec_path)->required();
    intrinsic->add_option("--law", law, "full-obs|observed|asis");
    intrinsic->add_flag("--json", as_json);
    add_mode(intrinsic);

    auto* emitf = app.add_subcommand("emit-functional", "emit an identifying functional");
    emitf->add_option("spec", spec_path)->required();
    emitf->add_option("--target", target, "full-law|full-obs|singleworld[:k]|gformula:A=1,...")
        ->required();
    emitf->add_flag("--json", as_json);
    add_mode(emitf);

    auto* sim = app.add_subcommand("simulate", "generate block data from a scenario JSON");
    sim->add_option("scenario", scenario_path)->required();
    sim->add_option("-n", n_rows, "number of blocks");
    sim->add_option("--seed", seed);
    sim->add_option("-o,--out", out_path)->required();
    sim->add_option("--mechanism", mechanism_flag, "override: mcar|mar|mnar");

    auto* est = app.add_subcommand("estimate", "IPW estimation of a counterfactual mean");
    est->add_option("spec", spec_path)->required();
    est->add_option("data", data_path)->required();
    est->add_option("--target", target, "counterfactual token, e.g. Z1[1; r2=1]")->required();
    est->add_option("--bootstrap", bootstrap_b, "bootstrap replicates");
    est->add_option("--seed", seed);
    est->add_option("--mechanism", mechanism_flag, "auto|mcar|mar|mnar");
    est->add_flag("--json", as_json);
    est->add_option("-o,--out", out_path, "write the JSON report here");
    add_mode(est);

    auto* bench = app.add_subcommand("bench-bias", "bias table across mechanisms");
    bench->add_option("scenario", scenario_path)->required();
    bench->add_option("--mechanisms", mechanisms, "comma list of mcar,mar,mnar");
    bench->add_option("-n", n_rows);
    bench->add_option("--seed", seed);
    bench->add_option("--bootstrap", bootstrap_b);
    bench->add_option("-o,--out", out_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        int exit_code = 0;
        if (validate->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            if (!dot_path.empty()) {
                std::ofstream dot(dot_path);
                if (!dot) return fail_input("cannot write " + dot_path);
                dot << to_dot(loaded->graph);
            }
            if (as_json) std::cout << graph_to_json(loaded->graph).dump(2) << "\n";
            else
                std::cout << loaded->graph.size() << " vertices, "
                          << loaded->graph.directed_edges().size() << " directed, "
                          << loaded->graph.bidirected_edges().size() << " bidirected ("
                          << mode_name(loaded->graph.mode()) << " mode)\n";
            return 0;
        }

        if (checkid->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            const Graph& g = loaded->graph;
            FunctionalStore store;
            IdVerdict verdict;
            bool interference = false;
            for_each_bit(g.counterfactuals(), [&](int v) {
                interference |= !g.vertex(v).pattern.empty();
            });
            if (theorem == "3") {
                if (loaded->queries.empty())
                    return fail_input("--theorem 3 needs a query statement in the spec");
                verdict = check_single_world_query(g, loaded->queries.front(), store);
            } else if (theorem == "4" || (theorem == "auto" && interference)) {
                verdict = check_full_observability_id(g, store);
            } else {
                verdict = check_full_law_id(g, store);
            }
            if (as_json) std::cout << verdict_to_json(verdict, &store).dump(2) << "\n";
            else {
                std::cout << decision_name(verdict.decision) << " (theorem " << verdict.theorem
                          << ")\n";
                for (const auto& w : verdict.witnesses) {
                    std::cout << "  " << w.kind << ":";
                    for (const auto& v : w.vertices) std::cout << " " << v;
                    std::cout << "\n";
                }
                for (const auto& w : verdict.warnings) std::cout << "  warning: " << w << "\n";
                if (verdict.functional_id)
                    std::cout << "  functional: " << render(store.get(*verdict.functional_id))
                              << "\n";
            }
            if (fail_on_nonid && verdict.decision == Decision::NotIdentified) return 1;
            return 0;
        }

        if (mobius->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            LawKind kind = law == "observed" ? LawKind::Observed : LawKind::FullObservability;
            MobiusCount count = count_mobius_parameters(loaded->graph, kind);
            if (as_json) {
                Graph proj = law_projection(loaded->graph, kind);
                std::cout << count_to_json(proj, count).dump(2) << "\n";
            } else {
                std::cout << count.total << "\n";
            }
            return 0;
        }

        if (intrinsic->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            Graph g = loaded->graph;
            if (law == "observed") g = law_projection(g, LawKind::Observed);
            else if (law == "full-obs") g = law_projection(g, LawKind::FullObservability);
            else g = latent_project(g, g.hidden());
            auto sets = intrinsic_sets(g);
            if (as_json) {
                json arr = json::array();
                for (const auto& r : sets) {
                    json seq = json::array();
                    for (int v : r.sequence) seq.push_back(g.id_of(v));
                    arr.push_back(json{{"set", g.ids_of(r.set)},
                                       {"head", g.ids_of(r.head)},
                                       {"tail", g.ids_of(r.tail)},
                                       {"sequence", seq}});
                }
                std::cout << arr.dump(2) << "\n";
            } else {
                for (const auto& r : sets) {
                    std::cout << "{";
                    bool first = true;
                    for (const auto& id : g.ids_of(r.set)) {
                        std::cout << (first ? "" : ", ") << id;
                        first = false;
                    }
                    std::cout << "}  head={";
                    first = true;
                    for (const auto& id : g.ids_of(r.head)) {
                        std::cout << (first ? "" : ", ") << id;
                        first = false;
                    }
                    std::cout << "}  tail={";
                    first = true;
                    for (const auto& id : g.ids_of(r.tail)) {
                        std::cout << (first ? "" : ", ") << id;
                        first = false;
                    }
                    std::cout << "}\n";
                }
            }
            return 0;
        }

        if (emitf->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            const Graph& g = loaded->graph;
            FunctionalStore store;
            Ast ast;
            if (target == "full-law") {
                auto v = check_full_law_id(g, store);
                if (v.decision != Decision::Identified)
                    return fail_input("full law is not identified for this graph");
                ast = store.get(*v.functional_id);
            } else if (target == "full-obs") {
                auto v = check_full_observability_id(g, store);
                if (v.decision != Decision::Identified)
                    return fail_input("full observability law is not identified");
                ast = store.get(*v.functional_id);
            } else if (target.rfind("singleworld", 0) == 0) {
                size_t idx = 0;
                auto colon = target.find(':');
                if (colon != std::string::npos)
                    idx = static_cast<size_t>(std::stoul(target.substr(colon + 1)));
                if (idx >= loaded->queries.size())
                    return fail_input("the spec has no single-world query #" + std::to_string(idx));
                auto v = check_single_world_query(g, loaded->queries[idx], store);
                if (v.decision != Decision::Identified)
                    return fail_input("query is not identified (" +
                                      std::string(decision_name(v.decision)) + ")");
                ast = store.get(*v.functional_id);
            } else if (target.rfind("gformula:", 0) == 0) {
                std::map<int, int> doset;
                std::stringstream ss(target.substr(9));
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    auto eq = tok.find('=');
                    if (eq == std::string::npos) return fail_input("gformula wants A=value pairs");
                    int v = g.find(tok.substr(0, eq));
                    if (v < 0) return fail_input("unknown vertex " + tok.substr(0, eq));
                    doset[v] = std::stoi(tok.substr(eq + 1));
                }
                Emitter em(g);
                ast = em.g_formula(doset);
            } else {
                return fail_input("unknown --target " + target);
            }
            if (as_json) {
                std::cout << json{{"target", target}, {"functional", render(ast)}}.dump(2) << "\n";
            } else {
                std::cout << render(ast) << "\n";
            }
            return 0;
        }

        if (sim->parsed()) {
            std::string mech = mechanism_flag == "auto" ? "" : mechanism_flag;
            BlockScenario scn = load_scenario(scenario_path, mech);
            Dataset ds = simulate(scn, n_rows, seed);
            write_csv(ds, out_path);
            std::cout << "wrote " << ds.rows() << " blocks to " << out_path << "\n";
            return 0;
        }

        if (est->parsed()) {
            auto loaded = load_spec(spec_path, mode_flag, exit_code);
            if (!loaded) return exit_code;
            const Graph& g = loaded->graph;
            Dataset ds = read_csv(g, data_path);
            int ctf = find_ctf(g, target);
            if (ctf < 0) return fail_input("target " + target + " is not a counterfactual of the graph");
            MechanismClass mech = mechanism_flag == "mcar"  ? MechanismClass::MCAR
                                  : mechanism_flag == "mar" ? MechanismClass::MAR
                                  : mechanism_flag == "mnar"
                                      ? MechanismClass::MNAR
                                      : classify_mechanism(g);
            auto estimator = [&](const Dataset& d) {
                PropensityModel pm = fit_propensities(d, g, mech);
                return ipw_estimate(d, g, pm, ctf).estimate;
            };
            EstimateReport rep;
            if (bootstrap_b > 0) {
                rep = bootstrap(ds, estimator, bootstrap_b, seed);
            } else {
                rep.estimate = estimator(ds);
                rep.boot_mean = rep.estimate;
                rep.q05 = rep.q95 = rep.estimate;
                rep.seed = seed;
            }
            json out = report_to_json(rep, g.id_of(ctf), mechanism_name(mech));
            if (!out_path.empty()) {
                std::ofstream f(out_path);
                f << out.dump(2) << "\n";
            }
            if (as_json || out_path.empty()) std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (bench->parsed()) {
            std::ofstream out(out_path);
            if (!out) return fail_input("cannot write " + out_path);
            out << "target,mechanism,adjusted_bias,unadjusted_bias,q05,q95\n";
            std::stringstream ss(mechanisms);
            std::string mech;
            int B = bootstrap_b > 0 ? bootstrap_b : 50;
            while (std::getline(ss, mech, ',')) {
                BlockScenario scn = load_scenario(scenario_path, mech);
                Dataset ds = simulate(scn, n_rows, seed);
                const Graph& g = scn.graph;
                for (const auto& id : scn.ctf_order) {
                    int ctf = g.index_of(id);
                    if (g.vertex(ctf).pattern.empty()) continue;  // interference targets only
                    double truth = ground_truth(scn, id);
                    auto estimator = [&](const Dataset& d) {
                        PropensityModel pm = fit_propensities(d, g, scn.mechanism);
                        return ipw_estimate(d, g, pm, ctf).estimate;
                    };
                    EstimateReport rep = bootstrap(ds, estimator, B, seed);
                    double unadj = unadjusted_mean(ds, g, ctf);
                    out << detail::csv_quote(id) << "," << mech << ","
                        << csv_num(rep.estimate - truth) << "," << csv_num(unadj - truth) << ","
                        << csv_num(rep.q05 - truth) << "," << csv_num(rep.q95 - truth) << "\n";
                }
            }
            std::cout << "wrote " << out_path << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
