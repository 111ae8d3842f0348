#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emid/gspec.hpp"

namespace emid {

struct ParseResult {
    std::optional<GraphSpec> spec;  // present iff no error-severity diagnostic
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return spec.has_value(); }
};

namespace detail {

enum class Tok { Word, Str, Arrow, BiArrow, LBrace, RBrace, LBracket, RBracket,
                 LParen, RParen, Semi, Comma, Eq, End, Bad };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    Span span;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            Token t = next();
            out.push_back(t);
            if (t.kind == Tok::End) break;
        }
        return out;
    }

private:
    bool word_char(unsigned char c) const {
        if (std::isalnum(c) || c == '_' || c == '.' || c == '*' || c == '-' || c == '+') return true;
        return c >= 0x80;  // keep UTF-8 bytes inside words, never crash on them
    }

    Token next() {
        while (pos_ < src_.size()) {
            unsigned char c = static_cast<unsigned char>(src_[pos_]);
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
                continue;
            }
            if (c == '\n') { ++pos_; ++line_; col_ = 1; continue; }
            if (std::isspace(c)) { ++pos_; ++col_; continue; }
            break;
        }
        if (pos_ >= src_.size()) return {Tok::End, "", {line_, col_, 0}};

        Span at{line_, col_, 1};
        char c = src_[pos_];
        auto sym = [&](Tok k, int n, const char* txt) {
            pos_ += static_cast<size_t>(n);
            col_ += n;
            at.len = n;
            return Token{k, txt, at};
        };
        if (c == '<' && src_.compare(pos_, 3, "<->") == 0) return sym(Tok::BiArrow, 3, "<->");
        // '-' may start "->"; a lone '-' inside numbers is a word char, so
        // check the arrow before word scanning.
        if (c == '-' && src_.compare(pos_, 2, "->") == 0) return sym(Tok::Arrow, 2, "->");
        switch (c) {
            case '{': return sym(Tok::LBrace, 1, "{");
            case '}': return sym(Tok::RBrace, 1, "}");
            case '[': return sym(Tok::LBracket, 1, "[");
            case ']': return sym(Tok::RBracket, 1, "]");
            case '(': return sym(Tok::LParen, 1, "(");
            case ')': return sym(Tok::RParen, 1, ")");
            case ';': return sym(Tok::Semi, 1, ";");
            case ',': return sym(Tok::Comma, 1, ",");
            case '=': return sym(Tok::Eq, 1, "=");
            default: break;
        }
        if (c == '"') {
            size_t start = pos_++;
            ++col_;
            std::string text;
            while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
                if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) { ++pos_; ++col_; }
                text += src_[pos_++];
                ++col_;
            }
            if (pos_ < src_.size() && src_[pos_] == '"') { ++pos_; ++col_; }
            at.len = static_cast<int>(pos_ - start);
            return {Tok::Str, text, at};
        }
        if (word_char(static_cast<unsigned char>(c))) {
            size_t start = pos_;
            while (pos_ < src_.size() && word_char(static_cast<unsigned char>(src_[pos_]))) {
                // stop a word before an arrow so "A->B" lexes as three tokens
                if (src_[pos_] == '-' && src_.compare(pos_, 2, "->") == 0) break;
                ++pos_;
                ++col_;
            }
            at.len = static_cast<int>(pos_ - start);
            return {Tok::Word, src_.substr(start, pos_ - start), at};
        }
        ++pos_;
        ++col_;
        return {Tok::Bad, std::string(1, c), at};
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

struct FamilyDecl {
    std::string var;
    std::vector<std::string> refs;
    Span span;
};

class Parser {
public:
    explicit Parser(const std::string& src) : toks_(Lexer(src).run()) {}

    ParseResult run() {
        GraphSpec spec;
        std::vector<FamilyDecl> families;
        while (!at(Tok::End)) {
            if (diags_.size() > 100) break;
            if (at(Tok::Word) && cur().text == "unit") parse_unit(spec);
            else if (at(Tok::Word) && cur().text == "query") parse_query(spec);
            else if (at(Tok::Word) && cur().text == "scenario") parse_scenario(spec);
            else if (at(Tok::Word) && cur().text == "ctf_family") parse_family(families);
            else if (at(Tok::Word) || at(Tok::Str)) parse_edge(spec);
            else {
                error(cur().span, "unexpected token '" + cur().text + "'");
                advance();
            }
        }
        resolve(spec);
        expand_families(spec, families);
        ParseResult res;
        res.diagnostics = diags_;
        bool any_error = false;
        for (const auto& d : diags_)
            if (d.severity == Severity::Error) any_error = true;
        if (!any_error) res.spec = std::move(spec);
        return res;
    }

private:
    const Token& cur() const { return toks_[i_]; }
    bool at(Tok k) const { return cur().kind == k; }
    void advance() { if (i_ + 1 < toks_.size()) ++i_; }
    bool accept(Tok k) { if (at(k)) { advance(); return true; } return false; }

    bool expect(Tok k, const std::string& what) {
        if (accept(k)) return true;
        error(cur().span, "expected " + what + ", found '" + cur().text + "'");
        return false;
    }

    void error(Span s, const std::string& msg, const std::string& hint = "") {
        diags_.push_back({Severity::Error, msg, s, hint});
    }
    void warn(Span s, const std::string& msg) { diags_.push_back({Severity::Warning, msg, s, ""}); }

    // skip to a token that can start a new statement
    void synchronize() {
        while (!at(Tok::End)) {
            if (at(Tok::Word)) {
                const std::string& w = cur().text;
                if (w == "unit" || w == "query" || w == "scenario" || w == "ctf_family" || w == "edge")
                    return;
            }
            if (at(Tok::RBrace)) { advance(); return; }
            advance();
        }
    }

    void parse_unit(GraphSpec& spec) {
        UnitBlock u;
        u.span = cur().span;
        advance();  // unit
        if (!at(Tok::Word)) { error(cur().span, "expected unit id"); synchronize(); return; }
        u.unit = cur().text;
        advance();
        if (!expect(Tok::LBrace, "'{'")) { synchronize(); return; }
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (!at(Tok::Word)) { error(cur().span, "expected declaration"); synchronize(); return; }
            Decl d;
            d.span = cur().span;
            const std::string& kw = cur().text;
            if (kw == "covariate") d.kind = DeclKind::Covariate;
            else if (kw == "missing") d.kind = DeclKind::Missing;
            else if (kw == "hidden") d.kind = DeclKind::Hidden;
            else {
                error(d.span, "unknown declaration keyword '" + kw + "'",
                      "expected covariate, missing, or hidden");
                synchronize();
                return;
            }
            advance();
            if (!at(Tok::Word)) { error(cur().span, "expected a name after '" + kw + "'"); synchronize(); return; }
            d.name = cur().text;
            advance();
            u.decls.push_back(std::move(d));
        }
        expect(Tok::RBrace, "'}'");
        spec.units.push_back(std::move(u));
    }

    std::optional<TermRef> parse_term() {
        if (!at(Tok::Word)) {
            error(cur().span, "expected a vertex term, found '" + cur().text + "'");
            return std::nullopt;
        }
        TermRef t;
        t.span = cur().span;
        std::string w = cur().text;
        advance();
        if (w.rfind("O.", 0) == 0) {
            t.kind = TermKind::Covariate;
            t.name = w.substr(2);
            if (t.name.empty()) { error(t.span, "empty covariate name"); return std::nullopt; }
            return t;
        }
        if (w.rfind("R_", 0) == 0) {
            t.kind = TermKind::Indicator;
            t.name = w.substr(2);
            if (t.name.empty()) { error(t.span, "empty indicator name"); return std::nullopt; }
            return t;
        }
        t.name = w;
        if (!at(Tok::LBracket)) {
            t.kind = TermKind::Bare;
            return t;
        }
        advance();  // [
        if (at(Tok::Word) && cur().text == "*") {
            advance();
            if (!expect(Tok::RBracket, "']'")) return std::nullopt;
            t.kind = TermKind::CtfFamily;
            return t;
        }
        if (!(at(Tok::Word) && cur().text == "1")) {
            error(cur().span, "counterfactual index must start with the own-indicator slot '1'");
            return std::nullopt;
        }
        advance();
        t.kind = TermKind::Ctf;
        if (accept(Tok::Semi)) {
            while (true) {
                if (!at(Tok::Word) || cur().text.size() < 2 || cur().text[0] != 'r') {
                    error(cur().span, "expected pattern entry r<id>=0|1");
                    return std::nullopt;
                }
                std::string ref = cur().text.substr(1);
                advance();
                if (!expect(Tok::Eq, "'='")) return std::nullopt;
                if (!at(Tok::Word) || (cur().text != "0" && cur().text != "1")) {
                    error(cur().span, "pattern value must be 0 or 1");
                    return std::nullopt;
                }
                t.pattern.emplace_back(ref, cur().text == "1" ? 1 : 0);
                advance();
                if (!accept(Tok::Comma)) break;
            }
        }
        if (!expect(Tok::RBracket, "']'")) return std::nullopt;
        return t;
    }

    void parse_edge(GraphSpec& spec) {
        if (at(Tok::Word) && cur().text == "edge") advance();  // optional keyword
        EdgeStmt e;
        e.span = cur().span;
        auto a = parse_term();
        if (!a) { synchronize(); return; }
        e.a = *a;
        if (at(Tok::Arrow)) e.bidirected = false;
        else if (at(Tok::BiArrow)) e.bidirected = true;
        else {
            error(cur().span, "expected '->' or '<->'");
            synchronize();
            return;
        }
        advance();
        auto b = parse_term();
        if (!b) { synchronize(); return; }
        e.b = *b;
        spec.edges.push_back(std::move(e));
    }

    void parse_query(GraphSpec& spec) {
        QueryStmt q;
        q.span = cur().span;
        advance();  // query
        if (!(at(Tok::Word) && cur().text == "singleworld")) {
            error(cur().span, "expected 'singleworld'");
            synchronize();
            return;
        }
        advance();
        if (!expect(Tok::LParen, "'('")) { synchronize(); return; }
        while (!at(Tok::RParen) && !at(Tok::End)) {
            auto c = parse_term();
            if (!c) { synchronize(); return; }
            if (c->kind != TermKind::Ctf) {
                error(c->span, "single-world queries take counterfactual terms");
                synchronize();
                return;
            }
            q.ctfs.push_back(*c);
            if (!accept(Tok::Comma)) break;
        }
        if (!expect(Tok::RParen, "')'")) { synchronize(); return; }
        if (!(at(Tok::Word) && cur().text == "given")) {
            error(cur().span, "expected 'given'");
            synchronize();
            return;
        }
        advance();
        while (true) {
            if (!at(Tok::Word) || cur().text.size() < 2 || cur().text[0] != 'r') {
                error(cur().span, "expected world assignment r<id>=0|1");
                synchronize();
                return;
            }
            std::string ref = cur().text.substr(1);
            advance();
            if (!expect(Tok::Eq, "'='")) { synchronize(); return; }
            if (!at(Tok::Word) || (cur().text != "0" && cur().text != "1")) {
                error(cur().span, "world value must be 0 or 1");
                synchronize();
                return;
            }
            q.world.emplace_back(ref, cur().text == "1" ? 1 : 0);
            advance();
            if (!accept(Tok::Comma)) break;
        }
        spec.queries.push_back(std::move(q));
    }

    void parse_scenario(GraphSpec& spec) {
        ScenarioStmt s;
        s.span = cur().span;
        advance();  // scenario
        if (!at(Tok::Word)) { error(cur().span, "expected scenario id"); synchronize(); return; }
        s.id = cur().text;
        advance();
        if (!expect(Tok::LBrace, "'{'")) { synchronize(); return; }
        while (!at(Tok::RBrace) && !at(Tok::End)) {
            if (!at(Tok::Word)) { error(cur().span, "expected key"); synchronize(); return; }
            std::string key = cur().text;
            advance();
            if (!expect(Tok::Eq, "'='")) { synchronize(); return; }
            if (!at(Tok::Word) && !at(Tok::Str)) { error(cur().span, "expected value"); synchronize(); return; }
            s.kv.emplace_back(key, cur().text);
            advance();
        }
        expect(Tok::RBrace, "'}'");
        spec.scenarios.push_back(std::move(s));
    }

    void parse_family(std::vector<FamilyDecl>& fams) {
        FamilyDecl f;
        f.span = cur().span;
        advance();  // ctf_family
        if (!at(Tok::Word)) { error(cur().span, "expected variable name"); synchronize(); return; }
        f.var = cur().text;
        advance();
        if (at(Tok::Word) && cur().text == "aff") {
            advance();
            if (!expect(Tok::LParen, "'('")) { synchronize(); return; }
            while (!at(Tok::RParen) && !at(Tok::End)) {
                if (!at(Tok::Word) || cur().text.size() < 2 || cur().text[0] != 'r') {
                    error(cur().span, "expected affector reference r<id>");
                    synchronize();
                    return;
                }
                f.refs.push_back(cur().text.substr(1));
                advance();
                if (!accept(Tok::Comma)) break;
            }
            expect(Tok::RParen, "')'");
        }
        fams.push_back(std::move(f));
    }

    // Resolve bare terms against the declaration table and report duplicate
    // or undeclared names.
    void resolve(GraphSpec& spec) {
        std::set<std::string> missing, covariate, hiddenv;
        std::set<std::string> all_names;
        for (const auto& u : spec.units) {
            for (const auto& d : u.decls) {
                if (!all_names.insert(d.name).second)
                    error(d.span, "duplicate vertex '" + d.name + "'");
                switch (d.kind) {
                    case DeclKind::Covariate: covariate.insert(d.name); break;
                    case DeclKind::Missing: missing.insert(d.name); break;
                    case DeclKind::Hidden: hiddenv.insert(d.name); break;
                }
            }
        }
        auto fix_term = [&](TermRef& t) {
            switch (t.kind) {
                case TermKind::Bare:
                    if (missing.count(t.name)) t.kind = TermKind::Proxy;
                    else if (hiddenv.count(t.name)) t.kind = TermKind::Hidden;
                    else error(t.span, "undeclared reference '" + t.name + "'",
                               "declare it in a unit block");
                    break;
                case TermKind::Indicator:
                case TermKind::Ctf:
                case TermKind::CtfFamily:
                    if (!missing.count(t.name))
                        error(t.span, "'" + t.name + "' is not a declared missing variable");
                    break;
                case TermKind::Covariate:
                    if (!covariate.count(t.name))
                        error(t.span, "undeclared covariate '" + t.name + "'");
                    break;
                default: break;
            }
        };
        for (auto& e : spec.edges) { fix_term(e.a); fix_term(e.b); }
        for (auto& q : spec.queries)
            for (auto& c : q.ctfs) fix_term(c);
    }

    // Expand ctf_family declarations and Z[*] terms into explicit members.
    void expand_families(GraphSpec& spec, const std::vector<FamilyDecl>& fams) {
        for (const auto& f : fams) {
            int k = static_cast<int>(f.refs.size());
            if (k > 16) { error(f.span, "family key set too large"); continue; }
            std::vector<std::vector<std::pair<std::string, int>>> members;
            for (int m = 0; m < (1 << k); ++m) {
                std::vector<std::pair<std::string, int>> pat;
                for (int j = 0; j < k; ++j) pat.emplace_back(f.refs[static_cast<size_t>(j)], (m >> j) & 1);
                members.push_back(std::move(pat));
            }
            // bidirected clique among members
            for (size_t x = 0; x < members.size(); ++x)
                for (size_t y = x + 1; y < members.size(); ++y) {
                    EdgeStmt e;
                    e.bidirected = true;
                    e.a = TermRef{TermKind::Ctf, f.var, members[x], f.span};
                    e.b = TermRef{TermKind::Ctf, f.var, members[y], f.span};
                    spec.edges.push_back(std::move(e));
                }
            // replicate edges written against the family token
            std::vector<EdgeStmt> extra;
            for (auto& e : spec.edges) {
                auto expand_side = [&](EdgeStmt base, bool first) {
                    for (const auto& pat : members) {
                        EdgeStmt ne = base;
                        (first ? ne.a : ne.b) = TermRef{TermKind::Ctf, f.var, pat, base.span};
                        extra.push_back(ne);
                    }
                };
                bool fa = e.a.kind == TermKind::CtfFamily && e.a.name == f.var;
                bool fb = e.b.kind == TermKind::CtfFamily && e.b.name == f.var;
                if (fa && !fb) expand_side(e, true);
                else if (fb && !fa) expand_side(e, false);
                else if (fa && fb)
                    error(e.span, "edges between two family tokens are not supported");
            }
            std::erase_if(spec.edges, [&](const EdgeStmt& e) {
                return (e.a.kind == TermKind::CtfFamily && e.a.name == f.var) ||
                       (e.b.kind == TermKind::CtfFamily && e.b.name == f.var);
            });
            for (auto& e : extra) spec.edges.push_back(std::move(e));
        }
        // leftover family tokens (no matching ctf_family declaration)
        for (const auto& e : spec.edges)
            if (e.a.kind == TermKind::CtfFamily || e.b.kind == TermKind::CtfFamily)
                error(e.span, "family token without a ctf_family declaration");
    }

    std::vector<Token> toks_;
    size_t i_ = 0;
    std::vector<Diagnostic> diags_;
};

}  // namespace detail

inline ParseResult parse(const std::string& text) { return detail::Parser(text).run(); }

}  // namespace emid
