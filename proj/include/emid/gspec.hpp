#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace emid {

struct Span {
    int line = 1;
    int col = 1;
    int len = 0;
};

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    Span span;
    std::string hint;  // optional fix hint
};

enum class DeclKind { Covariate, Missing, Hidden };

struct Decl {
    DeclKind kind = DeclKind::Covariate;
    std::string name;
    Span span;
};

struct UnitBlock {
    std::string unit;
    std::vector<Decl> decls;
    Span span;
};

enum class TermKind { Bare, Proxy, Hidden, Indicator, Covariate, Ctf, CtfFamily };

// A reference to a vertex as written in the source. Bare names are resolved
// against the declaration table (proxy vs hidden) after parsing.
struct TermRef {
    TermKind kind = TermKind::Bare;
    std::string name;                                    // base variable / hidden label
    std::vector<std::pair<std::string, int>> pattern;    // ctf only: (indicator ref, value)
    Span span;
};

struct EdgeStmt {
    TermRef a, b;
    bool bidirected = false;
    Span span;
};

struct QueryStmt {
    std::vector<TermRef> ctfs;
    std::vector<std::pair<std::string, int>> world;  // (indicator ref, value)
    Span span;
};

struct ScenarioStmt {
    std::string id;
    std::vector<std::pair<std::string, std::string>> kv;
    Span span;
};

struct GraphSpec {
    std::vector<UnitBlock> units;
    std::vector<EdgeStmt> edges;
    std::vector<QueryStmt> queries;
    std::vector<ScenarioStmt> scenarios;
};

enum class SerializeStyle { Expanded, Condensed };

// --- structural equality, order-insensitive ---------------------------------

inline bool same_term(const TermRef& x, const TermRef& y) {
    auto px = x.pattern, py = y.pattern;
    std::sort(px.begin(), px.end());
    std::sort(py.begin(), py.end());
    // Bare terms compare equal to their resolved form by name.
    auto k = [](TermKind t) { return t == TermKind::Bare ? TermKind::Proxy : t; };
    return k(x.kind) == k(y.kind) && x.name == y.name && px == py;
}

inline bool structurally_equal(const GraphSpec& a, const GraphSpec& b) {
    auto unit_key = [](const UnitBlock& u) {
        std::vector<std::pair<int, std::string>> ds;
        for (const auto& d : u.decls) ds.emplace_back(static_cast<int>(d.kind), d.name);
        std::sort(ds.begin(), ds.end());
        std::string k = u.unit + "{";
        for (auto& [kk, n] : ds) k += std::to_string(kk) + ":" + n + ";";
        return k + "}";
    };
    auto term_key = [](const TermRef& t) {
        auto p = t.pattern;
        std::sort(p.begin(), p.end());
        std::string k = (t.kind == TermKind::Ctf || t.kind == TermKind::CtfFamily)
                            ? "c:" : (t.kind == TermKind::Indicator ? "i:"
                                      : (t.kind == TermKind::Covariate ? "o:" : "b:"));
        k += t.name;
        for (auto& [r, v] : p) k += "," + r + "=" + std::to_string(v);
        return k;
    };
    auto collect = [&](const GraphSpec& s) {
        std::vector<std::string> keys;
        for (const auto& u : s.units) keys.push_back("U" + unit_key(u));
        for (const auto& e : s.edges) {
            std::string ka = term_key(e.a), kb = term_key(e.b);
            if (e.bidirected && kb < ka) std::swap(ka, kb);
            keys.push_back("E" + ka + (e.bidirected ? "<->" : "->") + kb);
        }
        for (const auto& q : s.queries) {
            std::vector<std::string> cs;
            for (const auto& c : q.ctfs) cs.push_back(term_key(c));
            std::sort(cs.begin(), cs.end());
            auto w = q.world;
            std::sort(w.begin(), w.end());
            std::string k = "Q";
            for (auto& c : cs) k += c + "|";
            for (auto& [r, v] : w) k += r + "=" + std::to_string(v) + ";";
            keys.push_back(k);
        }
        for (const auto& sc : s.scenarios) {
            auto kv = sc.kv;
            std::sort(kv.begin(), kv.end());
            std::string k = "S" + sc.id + "{";
            for (auto& [a2, b2] : kv) k += a2 + "=" + b2 + ";";
            keys.push_back(k + "}");
        }
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    return collect(a) == collect(b);
}

}  // namespace emid
