#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string tmp_dir() {
    static int counter = 0;
    std::string d = "cli_tmp_" + std::to_string(counter++);
    return d;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunResult run(const std::string& args) {
    static int n = 0;
    std::string out = "cli_out_" + std::to_string(n) + ".txt";
    std::string err = "cli_err_" + std::to_string(n) + ".txt";
    ++n;
    std::string cmd = std::string(EMID_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    int rc = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = slurp(out);
    res.err = slurp(err);
    std::remove(out.c_str());
    std::remove(err.c_str());
    return res;
}

std::string fx(const std::string& name) { return std::string(EMID_FIXTURES) + "/" + name; }

// minimal structural validation against the shipped schemas: required keys
// exist and primitive types agree
bool conforms(const json& value, const json& schema);

bool type_ok(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "number") return v.is_number();
    if (t == "boolean") return v.is_boolean();
    return true;
}

bool conforms(const json& value, const json& schema) {
    if (schema.contains("type") && !type_ok(value, schema["type"].get<std::string>())) return false;
    if (schema.contains("enum")) {
        bool any = false;
        for (const auto& e : schema["enum"]) any |= e == value;
        if (!any) return false;
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& k : schema["required"])
                if (!value.contains(k.get<std::string>())) return false;
        if (schema.contains("properties"))
            for (auto& [k, sub] : schema["properties"].items())
                if (value.contains(k) && !conforms(value[k], sub)) return false;
    }
    if (value.is_array() && schema.contains("items"))
        for (const auto& item : value)
            if (!conforms(item, schema["items"])) return false;
    return true;
}

json load_schema(const std::string& name) {
    return json::parse(slurp(std::string(EMID_SCHEMAS) + "/" + name));
}

}  // namespace

TEST_CASE("validate succeeds on every shipped fixture") {
    for (const char* name :
         {"fig1a.mdg", "fig1b.mdg", "fig1c.mdg", "fig2d.mdg", "fig3a.mdg", "fig3b.mdg",
          "fig3c.mdg", "fig4a_mar.mdg", "fig4a_selfcensor.mdg", "fig4_colluding.mdg", "fig5.mdg",
          "fig6a.mdg", "fig6b.mdg", "fig8a.mdg", "fig8d.mdg", "fig9.mdg",
          "singleworld_3unit.mdg"}) {
        INFO(name);
        CHECK(run("validate " + fx(name)).exit_code == 0);
    }
    CHECK(run("validate " + fx("fig7a.mdg") + " --mode relaxed").exit_code == 0);
}

TEST_CASE("validate reports an empty file as zero vertices") {
    std::ofstream("cli_empty.mdg");
    RunResult r = run("validate cli_empty.mdg");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("0 vertices") != std::string::npos);
    std::remove("cli_empty.mdg");
}

TEST_CASE("input errors exit with code 2") {
    CHECK(run("validate no_such_file.mdg").exit_code == 2);
    std::ofstream("cli_bad.mdg") << "edge A -> ;\n";
    CHECK(run("validate cli_bad.mdg").exit_code == 2);
    std::remove("cli_bad.mdg");
    CHECK(run("frobnicate x").exit_code == 2);
}

TEST_CASE("check-id json output matches the fig 6(b) verdict") {
    RunResult r = run("check-id " + fx("fig6b.mdg") + " --json");
    REQUIRE(r.exit_code == 0);
    json v = json::parse(r.out);
    CHECK(v["decision"] == "NotIdentified");
    CHECK(v["witnesses"] == json::parse(R"([[ "Z2[1; r1=1]", "R_Z3", "R_Z1" ]])"));
    CHECK(conforms(v, load_schema("verdict.schema.json")));
    CHECK(run("check-id " + fx("fig6b.mdg") + " --fail-on-nonid").exit_code == 1);
}

TEST_CASE("check-id verdict suite over the figure fixtures") {
    auto decision = [&](const std::string& name) {
        json v = json::parse(run("check-id " + fx(name) + " --json").out);
        return v["decision"].get<std::string>();
    };
    CHECK(decision("fig2d.mdg") == "Identified");
    CHECK(decision("fig4a_selfcensor.mdg") == "NotIdentified");
    CHECK(decision("fig4_colluding.mdg") == "NotIdentified");
    CHECK(decision("fig6a.mdg") == "Identified");
    CHECK(decision("fig9.mdg") == "Identified");
}

TEST_CASE("check-id --theorem 3 consumes the spec's query") {
    RunResult r = run("check-id " + fx("singleworld_3unit.mdg") + " --theorem 3 --json");
    REQUIRE(r.exit_code == 0);
    json v = json::parse(r.out);
    CHECK(v["decision"] == "Identified");
    CHECK(v["theorem"] == "3 (MCAR)");
}

TEST_CASE("mobius-count reproduces the appendix numbers") {
    CHECK(run("mobius-count " + fx("fig8a.mdg") + " --law full-obs").out == "5\n");
    CHECK(run("mobius-count " + fx("fig8a.mdg") + " --law observed").out == "4\n");
    CHECK(run("mobius-count " + fx("fig8d.mdg") + " --law full-obs").out == "9\n");
    CHECK(run("mobius-count " + fx("fig8d.mdg") + " --law observed").out == "8\n");
    json breakdown = json::parse(run("mobius-count " + fx("fig8a.mdg") + " --json").out);
    CHECK(conforms(breakdown, load_schema("mobius.schema.json")));
}

TEST_CASE("validate --json emits the canonical graph") {
    RunResult r = run("validate " + fx("fig9.mdg") + " --json");
    REQUIRE(r.exit_code == 0);
    json g = json::parse(r.out);
    CHECK(conforms(g, load_schema("graph.schema.json")));
    CHECK(g["vertices"].size() == 14);
    // canonical: vertex ids sorted
    std::string prev;
    for (const auto& v : g["vertices"]) {
        std::string id = v["id"].get<std::string>();
        CHECK(prev < id);
        prev = id;
    }
}

TEST_CASE("intrinsic lists the fig 1(b) sets") {
    RunResult r = run("intrinsic " + fx("fig1b.mdg") + " --law asis");
    CHECK(r.out.find("{A}") != std::string::npos);
    CHECK(r.out.find("{A, Y}") != std::string::npos);
}

TEST_CASE("emit-functional renders the worked functionals") {
    RunResult g = run("emit-functional " + fx("fig1a.mdg") + " --target gformula:A=1");
    CHECK(g.out == "p(C) * p(Y | A, C) |_{A=1}\n");
    RunResult fl = run("emit-functional " + fx("fig2d.mdg") + " --target full-law");
    CHECK(fl.out.find("p(R_A | C1, C2)") != std::string::npos);
    RunResult fo = run("emit-functional " + fx("fig6a.mdg") + " --target full-obs");
    CHECK(fo.out.find("OR(R_Z2, R_Z1 | R_Z3=1, Z3)") != std::string::npos);
    RunResult sw = run("emit-functional " + fx("singleworld_3unit.mdg") + " --target singleworld:0");
    CHECK(sw.out.find("R_Z2=0") != std::string::npos);
    CHECK(run("emit-functional " + fx("fig6b.mdg") + " --target full-obs").exit_code == 2);
}

TEST_CASE("cli output is deterministic") {
    std::string cmd = "check-id " + fx("fig6b.mdg") + " --json";
    CHECK(run(cmd).out == run(cmd).out);
}

TEST_CASE("simulate, estimate and bench-bias run end to end") {
    std::string scn = fx("fig9_default.scenario.json");
    RunResult sim = run("simulate " + scn + " -n 3000 --seed 5 -o cli_data.csv");
    REQUIRE(sim.exit_code == 0);
    {
        std::ifstream f("cli_data.csv");
        REQUIRE(f.good());
        std::string header;
        std::getline(f, header);
        CHECK(header.find("unit1.C1") != std::string::npos);
        CHECK(header.find("R_1") != std::string::npos);
    }
    CHECK(std::ifstream("cli_data.oracle.csv").good());
    // determinism at the file level
    run("simulate " + scn + " -n 3000 --seed 5 -o cli_data2.csv");
    CHECK(slurp("cli_data.csv") == slurp("cli_data2.csv"));

    RunResult est = run("estimate " + fx("fig9.mdg") +
                        " cli_data.csv --target \"Z1[1; r2=1]\" --bootstrap 8 --seed 3 --json");
    REQUIRE(est.exit_code == 0);
    json rep = json::parse(est.out);
    CHECK(conforms(rep, load_schema("estimate.schema.json")));
    CHECK(rep["q05"].get<double>() <= rep["boot_mean"].get<double>());
    CHECK(rep["boot_mean"].get<double>() <= rep["q95"].get<double>());

    RunResult bb = run("bench-bias " + scn +
                       " --mechanisms mnar -n 1500 --seed 9 --bootstrap 5 -o cli_bias.csv");
    REQUIRE(bb.exit_code == 0);
    std::string table = slurp("cli_bias.csv");
    CHECK(table.find("target,mechanism,adjusted_bias,unadjusted_bias,q05,q95") == 0);
    int lines = 0;
    for (char c : table) lines += c == '\n';
    CHECK(lines == 5);  // header + four interference targets

    std::remove("cli_data.csv");
    std::remove("cli_data.oracle.csv");
    std::remove("cli_data2.csv");
    std::remove("cli_data2.oracle.csv");
    std::remove("cli_bias.csv");
}
