#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "emid/emit.hpp"
#include "emid/id.hpp"
#include "support.hpp"

using namespace emid;

namespace {

// true conditional p(target = t | ctx = c) straight off a law table
double true_conditional(const TabularLaw& law, const std::map<std::string, int>& target,
                        const std::map<std::string, int>& ctx) {
    std::map<int, int> num, den;
    for (const auto& [n, v] : ctx) den[law.require(n)] = v;
    num = den;
    for (const auto& [n, v] : target) num[law.require(n)] = v;
    double d = law.event(den);
    REQUIRE(d > 0);
    return law.event(num) / d;
}

// full-law round trip through the shared support helper
double roundtrip(const Graph& g, std::mt19937& rng) {
    FunctionalStore store;
    auto verdict = check_full_law_id(g, store);
    REQUIRE(verdict.decision == Decision::Identified);
    return full_law_roundtrip_error(g, store.get(*verdict.functional_id), rng);
}

}  // namespace

TEST_CASE("g-formula on the conditionally ignorable DAG") {
    Graph g = must_build("fig1a.mdg", Mode::Classic);
    Emitter em(g);
    Ast ast = em.g_formula({{g.index_of("A"), 1}});
    CHECK(render(ast) == "p(C) * p(Y | A, C) |_{A=1}");
}

TEST_CASE("g-formula with empty intervention is the DAG factorization") {
    Graph g = must_build("fig1a.mdg", Mode::Classic);
    Emitter em(g);
    Ast ast = em.g_formula({});
    std::mt19937 rng(2);
    TabularLaw law = full_law_from_cpts(g, random_cpts(g, rng));
    Evaluator ev(law);
    double worst = 0;
    law.iterate([&](const std::vector<int>& a, double p) {
        Assignment assign;
        for (size_t i = 0; i < law.vars().size(); ++i) assign[law.vars()[i].name] = a[i];
        worst = std::max(worst, std::abs(ev.at(ast, assign) - p));
    });
    CHECK(worst < 1e-12);
}

TEST_CASE("g-formula on the interference dyad reads both parent sets") {
    Graph g = must_build("fig1c.mdg", Mode::Classic);
    Emitter em(g);
    Ast ast = em.g_formula({{g.index_of("A1"), 1}, {g.index_of("A2"), 0}});
    std::string text = render(ast);
    CHECK(text.find("p(Y1 | A1, A2, C1, C2)") != std::string::npos);
    CHECK(text.find("p(Y2 | A1, A2, C1, C2)") != std::string::npos);
    CHECK(text.find("p(C1)") != std::string::npos);
    CHECK(text.find("p(C2)") != std::string::npos);
}

TEST_CASE("adjustment functional equals the brute-force standardization") {
    Graph g = must_build("fig1a.mdg", Mode::Classic);
    std::mt19937 rng(3);
    for (int t = 0; t < 20; ++t) {
        TabularLaw law = full_law_from_cpts(g, random_cpts(g, rng));
        Emitter em(g);
        Ast ast = em.g_formula({{g.index_of("A"), 1}});
        Evaluator ev(law);
        // E[Y(1)] via the emitted functional
        double mean = 0;
        for (int y = 0; y < 2; ++y)
            for (int c = 0; c < 2; ++c)
                mean += y * ev.at(ast, {{"Y", y}, {"C", c}});
        // brute force: sum_C E[Y | A=1, C] p(C)
        double direct = 0;
        for (int c = 0; c < 2; ++c) {
            double ey = true_conditional(law, {{"Y", 1}}, {{"A", 1}, {"C", c}});
            direct += ey * law.event({{law.require("C"), c}});
        }
        CHECK(mean == Catch::Approx(direct).margin(1e-12));
    }
}

TEST_CASE("g-formula matches exact truncated-factorization intervention") {
    std::mt19937 rng(29);
    for (int t = 0; t < 30; ++t) {
        int n = 5;
        Graph g = random_admg(rng, n, 0.5, 0.0);
        DagCpts cpts = random_cpts(g, rng);
        int avar = std::uniform_int_distribution<int>(0, n - 1)(rng);
        int aval = std::uniform_int_distribution<int>(0, 1)(rng);
        // oracle: replace A's CPT by a point mass and re-enumerate
        DagCpts doc = cpts;
        for (auto& x : doc.p1[avar]) x = aval;
        TabularLaw intervened = full_law_from_cpts(g, doc);
        TabularLaw law = full_law_from_cpts(g, cpts);
        Emitter em(g);
        Ast ast = em.g_formula({{avar, aval}});
        Evaluator ev(law);
        // compare marginals over V \ A
        std::map<std::vector<int>, double> truth;
        intervened.iterate([&](const std::vector<int>& a, double p) {
            std::vector<int> key;
            for (size_t i = 0; i < intervened.vars().size(); ++i)
                if (intervened.vars()[i].name != g.id_of(avar)) key.push_back(a[i]);
            truth[key] += p;
        });
        double worst = 0;
        law.iterate([&](const std::vector<int>& a, double) {
            Assignment assign;
            std::vector<int> key;
            for (size_t i = 0; i < law.vars().size(); ++i) {
                if (law.vars()[i].name == g.id_of(avar)) continue;
                assign[law.vars()[i].name] = a[i];
                key.push_back(a[i]);
            }
            if (assign.size() + 1 < law.vars().size()) return;
            worst = std::max(worst, std::abs(ev.at(ast, assign) - truth[key]));
        });
        REQUIRE(worst < 1e-11);
    }
}

TEST_CASE("fig 2(d) mechanism collapses to p(R_A | C) p(R_Y | C)") {
    Graph g = must_build("fig2d.mdg", Mode::Classic);
    Emitter em(g);
    Ast mech = em.or_mechanism({g.index_of("R_A"), g.index_of("R_Y")},
                               g.counterfactuals() | g.covariates());
    std::string text = render(mech);
    CHECK(text.find("p(R_A | C1, C2)") != std::string::npos);
    CHECK(text.find("p(R_Y | C1, C2)") != std::string::npos);
    CHECK(text.find("OR(") == std::string::npos);  // OR detected as 1
}

TEST_CASE("single indicator mechanism has no OR factors") {
    Graph g = must_build("fig3b.mdg", Mode::Classic);
    Emitter em(g);
    Ast mech = em.or_mechanism({g.index_of("R_Y")}, g.counterfactuals() | g.covariates());
    CHECK(mech->kids.size() == 1);
}

TEST_CASE("fig 6(a) mechanism pieces carry the worked complete-case restrictions") {
    Graph g = must_build("fig6a.mdg", Mode::Interference);
    Emitter em(g);
    std::vector<int> order{g.index_of("R_Z1"), g.index_of("R_Z2"), g.index_of("R_Z3")};
    Ast mech = em.or_mechanism(order, full_observability_ctfs(g) | g.covariates());
    std::string text = render(mech);
    // p(R_1 | ..., R_3 = 1) with the proxy Z3 substituted
    CHECK(text.find("p(R_Z1 | Z3, R_Z2=1, R_Z3=1)") != std::string::npos);
    CHECK(text.find("p(R_Z2 | Z3, R_Z1=1, R_Z3=1)") != std::string::npos);
    // p(R_3 | R_2 = 1) after dropping the independent rest
    CHECK(text.find("p(R_Z3 | R_Z2=1)") != std::string::npos);
    // the nontrivial OR pieces evaluated under R_3 = 1
    CHECK(text.find("OR(R_Z2, R_Z1 | R_Z3=1, Z3)") != std::string::npos);
}

TEST_CASE("mechanism matches the true missingness process on fig 6(a)") {
    Graph g = must_build("fig6a.mdg", Mode::Interference);
    std::mt19937 rng(11);
    for (int t = 0; t < 20; ++t) {
        TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
        TabularLaw obs = observed_margin(g, full);
        Emitter em(g);
        std::vector<int> order{g.index_of("R_Z1"), g.index_of("R_Z2"), g.index_of("R_Z3")};
        Ast mech = em.or_mechanism(order, full_observability_ctfs(g));
        Evaluator ev(obs);
        // the mechanism only depends on Z3[1]; compare against the truth
        for (int z3 = 0; z3 < 2; ++z3)
            for (int r = 0; r < 8; ++r) {
                Assignment assign{{"Z1", 0}, {"Z2", 0}, {"Z3", z3},
                                  {"R_Z1", r & 1}, {"R_Z2", (r >> 1) & 1}, {"R_Z3", (r >> 2) & 1}};
                double got = ev.at(mech, assign);
                double truth = true_conditional(
                    full,
                    {{"R_Z1", r & 1}, {"R_Z2", (r >> 1) & 1}, {"R_Z3", (r >> 2) & 1}},
                    {{"Z3[1]", z3}});
                REQUIRE(got == Catch::Approx(truth).margin(1e-10));
            }
    }
}

TEST_CASE("assembled mechanism sums to one over R for every context") {
    Graph g = must_build("fig6a.mdg", Mode::Interference);
    std::mt19937 rng(12);
    TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
    TabularLaw obs = observed_margin(g, full);
    Emitter em(g);
    std::vector<int> order{g.index_of("R_Z1"), g.index_of("R_Z2"), g.index_of("R_Z3")};
    Ast mech = em.or_mechanism(order, full_observability_ctfs(g));
    Evaluator ev(obs);
    for (int z3 = 0; z3 < 2; ++z3) {
        double s = 0;
        for (int r = 0; r < 8; ++r)
            s += ev.at(mech, {{"Z1", 0}, {"Z2", 1}, {"Z3", z3},
                              {"R_Z1", r & 1}, {"R_Z2", (r >> 1) & 1}, {"R_Z3", (r >> 2) & 1}});
        CHECK(s == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("mechanism value is invariant to the indicator ordering") {
    Graph g = must_build("fig6a.mdg", Mode::Interference);
    std::mt19937 rng(13);
    TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
    TabularLaw obs = observed_margin(g, full);
    Emitter em(g);
    std::vector<int> base{g.index_of("R_Z1"), g.index_of("R_Z2"), g.index_of("R_Z3")};
    std::vector<std::vector<int>> orders{base};
    {
        std::vector<int> p = base;
        std::sort(p.begin(), p.end());
        do orders.push_back(p);
        while (std::next_permutation(p.begin(), p.end()));
    }
    std::vector<Ast> mechs;
    for (const auto& o : orders) mechs.push_back(em.or_mechanism(o, full_observability_ctfs(g)));
    Evaluator ev(obs);
    for (int z3 = 0; z3 < 2; ++z3)
        for (int r = 0; r < 8; ++r) {
            Assignment assign{{"Z1", 1}, {"Z2", 0}, {"Z3", z3},
                              {"R_Z1", r & 1}, {"R_Z2", (r >> 1) & 1}, {"R_Z3", (r >> 2) & 1}};
            double first = ev.at(mechs.front(), assign);
            for (size_t i = 1; i < mechs.size(); ++i)
                REQUIRE(ev.at(mechs[i], assign) == Catch::Approx(first).margin(1e-10));
        }
}

TEST_CASE("full law of fig 2(d) reconstructs from the observed margin") {
    Graph g = must_build("fig2d.mdg", Mode::Classic);
    std::mt19937 rng(17);
    for (int t = 0; t < 25; ++t) CHECK(roundtrip(g, rng) < 1e-8);
}

TEST_CASE("three-indicator identified MNAR graphs reconstruct exactly") {
    std::mt19937 rng(19);
    auto dag = build_fixture(three_indicator_dag(), Mode::Classic);
    REQUIRE(dag.ok());
    for (int t = 0; t < 10; ++t) CHECK(roundtrip(*dag.graph, rng) < 1e-8);
    auto admg = build_fixture(three_indicator_admg(), Mode::Classic);
    REQUIRE(admg.ok());
    for (int t = 0; t < 10; ++t) CHECK(roundtrip(*admg.graph, rng) < 1e-8);
}

TEST_CASE("full observability law of fig 6(a) reconstructs from observed data") {
    Graph g = must_build("fig6a.mdg", Mode::Interference);
    std::mt19937 rng(23);
    FunctionalStore store;
    auto verdict = check_full_observability_id(g, store);
    REQUIRE(verdict.decision == Decision::Identified);
    Ast ast = store.get(*verdict.functional_id);
    std::vector<int> ones = to_vector(full_observability_ctfs(g));
    for (int t = 0; t < 10; ++t) {
        TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
        TabularLaw obs = observed_margin(g, full);
        Evaluator ev(obs);
        double worst = 0;
        for (int z = 0; z < 8; ++z)
            for (int r = 0; r < 8; ++r) {
                Assignment assign;
                std::map<int, int> event;
                for (size_t i = 0; i < 3; ++i) {
                    int c = ones[i];
                    assign[g.id_of(g.vertex(c).proxy)] = (z >> i) & 1;
                    event[full.require(g.id_of(c))] = (z >> i) & 1;
                }
                int k = 0;
                for (int rv : {g.index_of("R_Z1"), g.index_of("R_Z2"), g.index_of("R_Z3")}) {
                    assign[g.id_of(rv)] = (r >> k) & 1;
                    event[full.require(g.id_of(rv))] = (r >> k) & 1;
                    ++k;
                }
                worst = std::max(worst, std::abs(ev.at(ast, assign) - full.event(event)));
            }
        REQUIRE(worst < 1e-8);
    }
}

TEST_CASE("consistency substitution: proxies equal counterfactuals under R = 1") {
    Graph g = must_build("fig2d.mdg", Mode::Classic);
    std::mt19937 rng(31);
    TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
    // factor over counterfactuals, all indicators pinned to 1
    Ast ctf_form = make_factor({"A[1]", "Y[1]"}, {}, {"C1"}, {{"R_A", 1}, {"R_Y", 1}});
    // joint law including proxies: extend the full law via the consistency map
    std::vector<LawVar> vars = full.vars();
    vars.push_back({"A", 3, true});
    vars.push_back({"Y", 3, true});
    size_t n = full.table().size() * 9;
    std::vector<double> table(n, 0.0);
    TabularLaw joint(vars, table);
    full.iterate([&](const std::vector<int>& a, double p) {
        std::vector<int> row = a;
        int av = a[static_cast<size_t>(full.require("A[1]"))];
        int yv = a[static_cast<size_t>(full.require("Y[1]"))];
        int ra = a[static_cast<size_t>(full.require("R_A"))];
        int ry = a[static_cast<size_t>(full.require("R_Y"))];
        row.push_back(ra ? av : 2);
        row.push_back(ry ? yv : 2);
        joint.table()[joint.flat(row)] += p;
    });
    Ast proxy_form = make_factor({"A", "Y"}, {}, {"C1"}, {{"R_A", 1}, {"R_Y", 1}});
    Evaluator ev(joint);
    for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y)
            for (int c = 0; c < 2; ++c) {
                double lhs = ev.at(ctf_form, {{"A[1]", a}, {"Y[1]", y}, {"C1", c}});
                double rhs = ev.at(proxy_form, {{"A", a}, {"Y", y}, {"C1", c}});
                CHECK(lhs == Catch::Approx(rhs).margin(1e-10));
            }
}

TEST_CASE("single-world functionals evaluate exactly under MCAR and MAR") {
    // MCAR: the shipped three-unit network; MAR variant adds O -> R edges
    for (bool mar : {false, true}) {
        std::string text = read_fixture("singleworld_3unit.mdg");
        if (mar)
            text += "O.O1 -> R_Z1\nO.O2 -> R_Z1\nO.O1 -> R_Z2\nO.O2 -> R_Z2\nO.O3 -> R_Z3\n";
        auto pr = parse(text);
        REQUIRE(pr.ok());
        auto br = build_and_validate(*pr.spec, Mode::Interference);
        REQUIRE(br.ok());
        const Graph& g = *br.graph;
        FunctionalStore store;
        auto verdict = check_single_world_query(g, br.queries[0], store);
        REQUIRE(verdict.decision == Decision::Identified);
        CHECK(verdict.theorem == (mar ? "3 (MAR)" : "3 (MCAR)"));
        Ast ast = store.get(*verdict.functional_id);

        std::mt19937 rng(mar ? 41 : 43);
        TabularLaw full = full_law_from_cpts(g, random_cpts(g, rng));
        TabularLaw obs = observed_margin(g, full);
        Evaluator ev(obs);
        const auto& q = br.queries[0];
        double worst = 0;
        for (int m = 0; m < (1 << q.ctfs.size()); ++m) {
            Assignment assign;
            std::map<int, int> event;
            for (size_t i = 0; i < q.ctfs.size(); ++i) {
                assign[g.id_of(g.vertex(q.ctfs[i]).proxy)] = (m >> i) & 1;
                event[full.require(g.id_of(q.ctfs[i]))] = (m >> i) & 1;
            }
            worst = std::max(worst, std::abs(ev.at(ast, assign) - full.event(event)));
        }
        REQUIRE(worst < 1e-9);
    }
}

TEST_CASE("uniform law marginalizes to uniform factors") {
    TabularLaw law({{"A", 2, false}, {"B", 2, false}}, {0.25, 0.25, 0.25, 0.25});
    Evaluator ev(law);
    Ast f = make_factor({"A"}, {}, {}, {});
    CHECK(ev.at(f, {{"A", 0}}) == Catch::Approx(0.5));
}

TEST_CASE("scope mismatches and positivity violations raise typed errors") {
    TabularLaw law({{"A", 2, false}}, {1.0, 0.0});
    Evaluator ev(law);
    Ast f = make_factor({"Qx"}, {}, {}, {});
    CHECK_THROWS_AS(ev.at(f, {{"Qx", 0}}), Error);
    Ast cond = make_factor({"A"}, {}, {}, {{"A", 1}});
    // conditioning on the null event A=1 with positive numerator demand
    Ast ratio = make_ratio(make_constant(1.0), make_constant(0.0));
    CHECK_THROWS_AS(ev.at(ratio, {}), Error);
}

TEST_CASE("functional store interns structurally identical trees") {
    FunctionalStore store;
    int a = store.intern(make_factor({"A"}, {}, {"B"}, {}));
    int b = store.intern(make_factor({"A"}, {}, {"B"}, {}));
    CHECK(a == b);
    CHECK(store.size() == 1);
}

TEST_CASE("the g-formula refuses graphs that are not plain DAGs") {
    Graph admg = must_build("fig1b.mdg", Mode::Classic);
    CHECK_THROWS_AS(Emitter(admg).g_formula({}), Error);
    Graph mdg = must_build("fig2d.mdg", Mode::Classic);
    CHECK_THROWS_AS(Emitter(mdg).g_formula({}), Error);
}

TEST_CASE("fig 9 mechanism reduces to the worked factor shapes") {
    Graph g = must_build("fig9.mdg", Mode::Interference);
    FunctionalStore store;
    auto verdict = check_full_observability_id(g, store);
    REQUIRE(verdict.decision == Decision::Identified);
    std::string text = render(store.get(*verdict.functional_id));
    CHECK(text.find("p(R_Z1 | C1, C2, Z3, R_Z3=1)") != std::string::npos);
    CHECK(text.find("p(R_Z2 | C1, C2, Z3, R_Z3=1)") != std::string::npos);
    CHECK(text.find("p(R_Z3 | C3)") != std::string::npos);
}

TEST_CASE("an MCAR interference graph collapses to marginal indicator factors") {
    Graph g = must_build("fig5.mdg", Mode::Interference);
    FunctionalStore store;
    auto verdict = check_full_observability_id(g, store);
    REQUIRE(verdict.decision == Decision::Identified);
    std::string text = render(store.get(*verdict.functional_id));
    CHECK(text.find("p(R_Z1)") != std::string::npos);
    CHECK(text.find("p(R_Z2)") != std::string::npos);
    CHECK(text.find("p(R_Z3)") != std::string::npos);
    CHECK(text.find("OR(") == std::string::npos);
}
