#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emid/gspec.hpp"

namespace emid {

struct SerializeResult {
    std::string text;
    std::vector<Diagnostic> warnings;
};

namespace detail {

// Canonicalizes a pattern reference: the unit id when that unit has exactly
// one missing variable, otherwise the variable name.
class RefTable {
public:
    explicit RefTable(const GraphSpec& s) {
        for (const auto& u : s.units)
            for (const auto& d : u.decls)
                if (d.kind == DeclKind::Missing) {
                    unit_of_[d.name] = u.unit;
                    vars_of_[u.unit].push_back(d.name);
                }
    }

    std::string canonical(const std::string& ref) const {
        auto uv = vars_of_.find(ref);
        if (uv != vars_of_.end() && uv->second.size() == 1) return ref;  // unit id form
        auto vu = unit_of_.find(ref);
        if (vu != unit_of_.end()) {
            auto& vars = vars_of_.at(vu->second);
            return vars.size() == 1 ? vu->second : ref;  // prefer the unit id
        }
        return ref;  // unresolvable, keep verbatim
    }

    // ref -> missing variable name, empty when unknown
    std::string variable(const std::string& ref) const {
        auto uv = vars_of_.find(ref);
        if (uv != vars_of_.end() && uv->second.size() == 1) return uv->second.front();
        if (unit_of_.count(ref)) return ref;
        return "";
    }

private:
    std::map<std::string, std::string> unit_of_;
    std::map<std::string, std::vector<std::string>> vars_of_;
};

inline std::string term_text(const TermRef& t, const RefTable& refs) {
    switch (t.kind) {
        case TermKind::Covariate: return "O." + t.name;
        case TermKind::Indicator: return "R_" + t.name;
        case TermKind::CtfFamily: return t.name + "[*]";
        case TermKind::Ctf: {
            std::vector<std::pair<std::string, int>> pat;
            for (const auto& [r, v] : t.pattern) pat.emplace_back(refs.canonical(r), v);
            std::sort(pat.begin(), pat.end());
            std::string s = t.name + "[1";
            for (size_t i = 0; i < pat.size(); ++i)
                s += (i == 0 ? "; r" : ", r") + pat[i].first + "=" + std::to_string(pat[i].second);
            return s + "]";
        }
        default: return t.name;  // proxy / hidden / bare
    }
}

}  // namespace detail

inline SerializeResult serialize(const GraphSpec& spec, SerializeStyle style = SerializeStyle::Expanded) {
    detail::RefTable refs(spec);
    SerializeResult out;
    std::ostringstream os;

    auto decl_kw = [](DeclKind k) {
        switch (k) {
            case DeclKind::Covariate: return "covariate";
            case DeclKind::Missing: return "missing";
            case DeclKind::Hidden: return "hidden";
        }
        return "";
    };

    std::vector<UnitBlock> units = spec.units;
    std::sort(units.begin(), units.end(),
              [](const UnitBlock& a, const UnitBlock& b) { return a.unit < b.unit; });

    // Edge lines as canonical text, bidirected endpoints ordered.
    struct Line { std::string a, arrow, b; };
    std::vector<Line> lines;
    for (const auto& e : spec.edges) {
        Line l{detail::term_text(e.a, refs), e.bidirected ? "<->" : "->", detail::term_text(e.b, refs)};
        if (e.bidirected && l.b < l.a) std::swap(l.a, l.b);
        lines.push_back(std::move(l));
    }

    std::vector<std::string> family_lines;
    if (style == SerializeStyle::Condensed) {
        // A family of variable X is condensable when the spec mentions the
        // full 2^k member set with a complete bidirected clique and all
        // members share identical external edges.
        std::map<std::string, std::set<std::string>> member_pat;      // var -> pattern suffix set
        std::map<std::string, std::set<std::string>> key_refs;        // var -> canonical refs
        for (const auto& e : spec.edges)
            for (const TermRef* t : {&e.a, &e.b})
                if (t->kind == TermKind::Ctf) {
                    std::string txt = detail::term_text(*t, refs);
                    member_pat[t->name].insert(txt);
                    for (const auto& [r, v] : t->pattern) key_refs[t->name].insert(refs.canonical(r));
                }
        for (const auto& [var, members] : member_pat) {
            const auto& keys = key_refs[var];
            size_t expect = size_t{1} << keys.size();
            bool ok = members.size() == expect && !keys.empty();
            std::set<std::string> member_set = members;
            // external edge signature per member, and clique completeness
            std::map<std::string, std::multiset<std::string>> sig;
            std::set<std::pair<std::string, std::string>> clique;
            if (ok) {
                for (const auto& l : lines) {
                    bool am = member_set.count(l.a), bm = member_set.count(l.b);
                    if (am && bm && l.arrow == "<->") clique.insert({l.a, l.b});
                    else if (am) sig[l.a].insert(">>" + l.arrow + l.b);
                    else if (bm) sig[l.b].insert("<<" + l.arrow + l.a);
                }
                size_t want_clique = expect * (expect - 1) / 2;
                if (clique.size() != want_clique) ok = false;
                const std::multiset<std::string>* first = nullptr;
                for (const auto& m : member_set) {
                    const auto& s = sig[m];
                    if (!first) first = &s;
                    else if (*first != s) ok = false;
                }
            }
            if (!ok) {
                out.warnings.push_back({Severity::Warning,
                                        "CondensedUnrepresentable: counterfactual family of '" + var +
                                            "' has non-uniform members; emitting expanded form",
                                        Span{}, ""});
                continue;
            }
            std::string fam = "ctf_family " + var + " aff(";
            bool firstk = true;
            for (const auto& k : keys) {
                fam += (firstk ? "r" : ", r") + k;
                firstk = false;
            }
            fam += ")";
            family_lines.push_back(fam);
            // rewrite: drop clique lines, collapse member lines onto the token
            std::string token = var + "[*]";
            std::vector<Line> next;
            std::set<std::string> seen;
            for (auto& l : lines) {
                bool am = member_set.count(l.a), bm = member_set.count(l.b);
                if (am && bm) continue;  // clique edge
                Line nl = l;
                if (am) nl.a = token;
                if (bm) nl.b = token;
                if (nl.arrow == "<->" && nl.b < nl.a) std::swap(nl.a, nl.b);
                std::string key = nl.a + nl.arrow + nl.b;
                if ((am || bm) && !seen.insert(key).second) continue;
                next.push_back(std::move(nl));
            }
            lines = std::move(next);
        }
    }

    for (const auto& u : units) {
        os << "unit " << u.unit << " {\n";
        std::vector<Decl> ds = u.decls;
        std::sort(ds.begin(), ds.end(), [](const Decl& a, const Decl& b) {
            return std::make_pair(static_cast<int>(a.kind), a.name) <
                   std::make_pair(static_cast<int>(b.kind), b.name);
        });
        for (const auto& d : ds) os << "  " << decl_kw(d.kind) << " " << d.name << "\n";
        os << "}\n";
    }
    if (!units.empty() && (!family_lines.empty() || !lines.empty())) os << "\n";

    std::sort(family_lines.begin(), family_lines.end());
    for (const auto& f : family_lines) os << f << "\n";

    std::vector<std::string> edge_lines;
    for (const auto& l : lines) edge_lines.push_back(l.a + " " + l.arrow + " " + l.b);
    std::sort(edge_lines.begin(), edge_lines.end());
    edge_lines.erase(std::unique(edge_lines.begin(), edge_lines.end()), edge_lines.end());
    for (const auto& l : edge_lines) os << l << "\n";

    std::vector<std::string> query_lines;
    for (const auto& q : spec.queries) {
        std::vector<std::string> cs;
        for (const auto& c : q.ctfs) cs.push_back(detail::term_text(c, refs));
        std::sort(cs.begin(), cs.end());
        std::vector<std::pair<std::string, int>> w;
        for (const auto& [r, v] : q.world) w.emplace_back(refs.canonical(r), v);
        std::sort(w.begin(), w.end());
        std::string line = "query singleworld (";
        for (size_t i = 0; i < cs.size(); ++i) line += (i ? ", " : "") + cs[i];
        line += ") given ";
        for (size_t i = 0; i < w.size(); ++i)
            line += (i ? ", r" : "r") + w[i].first + "=" + std::to_string(w[i].second);
        query_lines.push_back(std::move(line));
    }
    std::sort(query_lines.begin(), query_lines.end());
    if (!query_lines.empty()) os << "\n";
    for (const auto& l : query_lines) os << l << "\n";

    std::vector<ScenarioStmt> scs = spec.scenarios;
    std::sort(scs.begin(), scs.end(),
              [](const ScenarioStmt& a, const ScenarioStmt& b) { return a.id < b.id; });
    if (!scs.empty()) os << "\n";
    for (const auto& s : scs) {
        os << "scenario " << s.id << " {\n";
        auto kv = s.kv;
        std::sort(kv.begin(), kv.end());
        for (const auto& [k, v] : kv) os << "  " << k << " = \"" << v << "\"\n";
        os << "}\n";
    }

    out.text = os.str();
    return out;
}

}  // namespace emid
