#pragma once

#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emid/mdg.hpp"
#include "emid/separation.hpp"
#include "emid/tabular.hpp"

namespace emid {

// --- symbolic identifying functionals ----------------------------------------

struct AstNode;
using Ast = std::shared_ptr<const AstNode>;

using Pins = std::vector<std::pair<std::string, int>>;

struct AstNode {
    enum class Kind { Constant, Product, Ratio, Sum, Factor, OddsRatio, Mechanism, At };
    Kind kind = Kind::Constant;

    double constant = 1.0;
    std::vector<Ast> kids;           // Product: n, Ratio: {num, den}, Sum/At: 1, Mechanism: pieces
    std::vector<std::string> over;   // Sum: summed variables
    Pins at;                         // At: pinned assignment

    // Factor: p(child = a(child), child_pins | given = a(given), given_pins)
    std::vector<std::string> child;
    Pins child_pins;
    std::vector<std::string> given;
    Pins given_pins;

    // OddsRatio: OR(k, prec | pins) built over kids[0], a Factor for
    // p(k | prec, given_pins, ctx); reference level is k = 1, prec = 1.
    std::string or_k;
    std::vector<std::string> or_prec;

    // Mechanism: joint p(R | ctx) = (1/sigma) * prod kids; r_vars lists R in
    // the product order.
    std::vector<std::string> r_vars;
};

inline Ast make_constant(double v) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::Constant;
    n->constant = v;
    return n;
}
inline Ast make_product(std::vector<Ast> kids) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::Product;
    n->kids = std::move(kids);
    return n;
}
inline Ast make_ratio(Ast num, Ast den) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::Ratio;
    n->kids = {std::move(num), std::move(den)};
    return n;
}
inline Ast make_sum(std::vector<std::string> over, Ast kid) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::Sum;
    n->over = std::move(over);
    n->kids = {std::move(kid)};
    return n;
}
inline Ast make_at(Pins at, Ast kid) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::At;
    n->at = std::move(at);
    n->kids = {std::move(kid)};
    return n;
}
inline Ast make_factor(std::vector<std::string> child, Pins child_pins,
                       std::vector<std::string> given, Pins given_pins) {
    auto n = std::make_shared<AstNode>();
    n->kind = AstNode::Kind::Factor;
    n->child = std::move(child);
    n->child_pins = std::move(child_pins);
    n->given = std::move(given);
    n->given_pins = std::move(given_pins);
    return n;
}

inline std::string render(const Ast& a) {
    std::ostringstream os;
    auto pins_text = [](const Pins& p, bool lead_comma) {
        std::string s;
        for (size_t i = 0; i < p.size(); ++i)
            s += std::string(lead_comma || i ? ", " : "") + p[i].first + "=" + std::to_string(p[i].second);
        return s;
    };
    std::function<void(const Ast&)> rec = [&](const Ast& n) {
        using K = AstNode::Kind;
        switch (n->kind) {
            case K::Constant: os << n->constant; break;
            case K::Product:
                for (size_t i = 0; i < n->kids.size(); ++i) {
                    if (i) os << " * ";
                    rec(n->kids[i]);
                }
                break;
            case K::Ratio:
                os << "[ ";
                rec(n->kids[0]);
                os << " / ";
                rec(n->kids[1]);
                os << " ]";
                break;
            case K::Sum: {
                os << "\\sum_{";
                for (size_t i = 0; i < n->over.size(); ++i) os << (i ? "," : "") << n->over[i];
                os << "} ";
                rec(n->kids[0]);
                break;
            }
            case K::At:
                rec(n->kids[0]);
                os << " |_{" << pins_text(n->at, false) << "}";
                break;
            case K::Factor: {
                os << "p(";
                for (size_t i = 0; i < n->child.size(); ++i) os << (i ? ", " : "") << n->child[i];
                os << pins_text(n->child_pins, !n->child.empty());
                if (!n->given.empty() || !n->given_pins.empty()) {
                    os << " | ";
                    for (size_t i = 0; i < n->given.size(); ++i) os << (i ? ", " : "") << n->given[i];
                    os << pins_text(n->given_pins, !n->given.empty());
                }
                os << ")";
                break;
            }
            case K::OddsRatio: {
                os << "OR(" << n->or_k;
                for (const auto& p : n->or_prec) os << ", " << p;
                const Ast& f = n->kids[0];
                std::vector<std::string> parts;
                for (const auto& [v, x] : f->given_pins) parts.push_back(v + "=" + std::to_string(x));
                for (const auto& gv : f->given) {
                    bool flipped = gv == f->child.front() ||
                                   std::find(n->or_prec.begin(), n->or_prec.end(), gv) != n->or_prec.end();
                    if (!flipped && gv != n->or_k) parts.push_back(gv);
                }
                if (!parts.empty()) {
                    os << " | ";
                    for (size_t i = 0; i < parts.size(); ++i) os << (i ? ", " : "") << parts[i];
                }
                os << ")";
                break;
            }
            case K::Mechanism: {
                os << "(1/\\sigma) [";
                for (size_t i = 0; i < n->kids.size(); ++i) {
                    if (i) os << " * ";
                    rec(n->kids[i]);
                }
                os << "]";
                break;
            }
        }
    };
    rec(a);
    return os.str();
}

// Append-only interning store; the verdicts' functional handles index it.
class FunctionalStore {
public:
    int intern(Ast a) {
        std::string key = render(a);
        auto it = by_text_.find(key);
        if (it != by_text_.end()) return it->second;
        int id = static_cast<int>(items_.size());
        items_.push_back(std::move(a));
        by_text_.emplace(std::move(key), id);
        return id;
    }
    const Ast& get(int id) const { return items_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(items_.size()); }

private:
    std::vector<Ast> items_;
    std::map<std::string, int> by_text_;
};

// --- evaluation ---------------------------------------------------------------

using Assignment = std::map<std::string, int>;

class Evaluator {
public:
    explicit Evaluator(const TabularLaw& law) : law_(law) {}

    double at(const Ast& a, const Assignment& assign) {
        Assignment scratch = assign;
        return eval(a, scratch);
    }

    // free variables: everything read from the assignment
    static void free_vars(const Ast& a, std::set<std::string>& out) {
        using K = AstNode::Kind;
        switch (a->kind) {
            case K::Factor:
                for (const auto& v : a->child) out.insert(v);
                for (const auto& v : a->given) out.insert(v);
                return;
            case K::OddsRatio: {
                std::set<std::string> inner;
                free_vars(a->kids[0], inner);
                inner.insert(a->or_k);
                out.insert(inner.begin(), inner.end());
                return;
            }
            case K::Sum: {
                std::set<std::string> inner;
                free_vars(a->kids[0], inner);
                for (const auto& v : a->over) inner.erase(v);
                out.insert(inner.begin(), inner.end());
                return;
            }
            case K::At: {
                std::set<std::string> inner;
                free_vars(a->kids[0], inner);
                for (const auto& [v, x] : a->at) inner.erase(v);
                out.insert(inner.begin(), inner.end());
                return;
            }
            default:
                for (const auto& k : a->kids) free_vars(k, out);
                return;
        }
    }

private:
    double eval(const Ast& a, Assignment& assign) {
        using K = AstNode::Kind;
        switch (a->kind) {
            case K::Constant: return a->constant;
            case K::Product: {
                double p = 1;
                for (const auto& k : a->kids) p *= eval(k, assign);
                return p;
            }
            case K::Ratio: {
                double num = eval(a->kids[0], assign);
                double den = eval(a->kids[1], assign);
                if (std::abs(den) < 1e-14) {
                    if (std::abs(num) < 1e-14) return 0;
                    fail(Errc::PositivityViolation, "functional divides by zero");
                }
                return num / den;
            }
            case K::Sum: {
                double s = 0;
                std::vector<int> cards;
                for (const auto& v : a->over) cards.push_back(law_.card(v));
                std::vector<int> cur(a->over.size(), 0);
                while (true) {
                    for (size_t i = 0; i < a->over.size(); ++i) assign[a->over[i]] = cur[i];
                    s += eval(a->kids[0], assign);
                    int j = static_cast<int>(cur.size()) - 1;
                    for (; j >= 0; --j) {
                        if (++cur[static_cast<size_t>(j)] < cards[static_cast<size_t>(j)]) break;
                        cur[static_cast<size_t>(j)] = 0;
                    }
                    if (j < 0) break;
                }
                for (const auto& v : a->over) assign.erase(v);
                return s;
            }
            case K::At: {
                Assignment saved;
                for (const auto& [v, x] : a->at) {
                    auto it = assign.find(v);
                    if (it != assign.end()) saved[v] = it->second;
                    assign[v] = x;
                }
                double r = eval(a->kids[0], assign);
                for (const auto& [v, x] : a->at) {
                    auto it = saved.find(v);
                    if (it != saved.end()) assign[v] = it->second;
                    else assign.erase(v);
                }
                return r;
            }
            case K::Factor: return factor_value(a, assign);
            case K::OddsRatio: {
                const Ast& f = a->kids[0];
                int rk = value_of(a->or_k, assign);
                Assignment inner = assign;
                inner[a->or_k] = rk;
                double n1 = factor_value(f, inner);
                inner[a->or_k] = 1;
                double d1 = factor_value(f, inner);
                for (const auto& p : a->or_prec) inner[p] = 1;
                inner[a->or_k] = 1;
                double n2 = factor_value(f, inner);
                inner[a->or_k] = rk;
                double d2 = factor_value(f, inner);
                if (d1 < 1e-14 || d2 < 1e-14)
                    fail(Errc::PositivityViolation, "odds ratio hits a zero conditional");
                return (n1 / d1) * (n2 / d2);
            }
            case K::Mechanism: {
                double prod = 1;
                for (const auto& k : a->kids) prod *= eval(k, assign);
                return prod / sigma(a, assign);
            }
        }
        return 0;
    }

    int value_of(const std::string& v, const Assignment& assign) const {
        auto it = assign.find(v);
        if (it == assign.end()) fail(Errc::ScopeMismatch, "assignment misses '" + v + "'");
        return it->second;
    }

    // sigma depends only on the context (non-R) variables of the mechanism
    double sigma(const Ast& mech, Assignment& assign) {
        std::set<std::string> fv;
        free_vars(mech, fv);
        std::string key;
        for (const auto& v : fv) {
            bool is_r = std::find(mech->r_vars.begin(), mech->r_vars.end(), v) != mech->r_vars.end();
            if (!is_r) key += v + "=" + std::to_string(value_of(v, assign)) + ";";
        }
        auto& cache = sigma_cache_[mech.get()];
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;

        Assignment inner = assign;
        double s = 0;
        int K = static_cast<int>(mech->r_vars.size());
        for (int m = 0; m < (1 << K); ++m) {
            for (int i = 0; i < K; ++i)
                inner[mech->r_vars[static_cast<size_t>(i)]] = (m >> i) & 1;
            double prod = 1;
            for (const auto& k : mech->kids) prod *= eval(k, inner);
            s += prod;
        }
        if (s < 1e-14) fail(Errc::PositivityViolation, "mechanism normalizer is zero");
        cache[key] = s;
        return s;
    }

    // conditional probability from the law, with caching per factor node
    double factor_value(const Ast& f, const Assignment& assign) {
        auto& cache = factor_cache_[f.get()];
        if (cache.joint.empty()) build_factor_cache(f, cache);
        size_t idx = 0;
        for (const auto& v : cache.dyn_vars)
            idx = idx * static_cast<size_t>(law_.card(v)) + static_cast<size_t>(value_of(v, assign));
        double num = cache.joint[idx];
        size_t gidx = 0;
        for (const auto& v : cache.dyn_given)
            gidx = gidx * static_cast<size_t>(law_.card(v)) + static_cast<size_t>(value_of(v, assign));
        double den = cache.margin[gidx];
        if (den < 1e-14) {
            if (num < 1e-14) return 0;
            fail(Errc::PositivityViolation, "conditional factor conditions on a null event");
        }
        return num / den;
    }

    struct FactorCache {
        std::vector<std::string> dyn_vars;   // child then given, evaluation order
        std::vector<std::string> dyn_given;  // given only
        std::vector<double> joint;           // P(child, pins, given)
        std::vector<double> margin;          // P(given, pins)
    };

    void build_factor_cache(const Ast& f, FactorCache& c) {
        // joint index layout: child block (slow) then given block (fast), so
        // the given index is the joint index modulo the given block size
        c.dyn_vars = f->child;
        c.dyn_vars.insert(c.dyn_vars.end(), f->given.begin(), f->given.end());
        c.dyn_given = f->given;
        size_t nj = 1, ng = 1;
        for (const auto& v : c.dyn_vars) nj *= static_cast<size_t>(law_.card(v));
        for (const auto& v : c.dyn_given) ng *= static_cast<size_t>(law_.card(v));
        c.joint.assign(nj, 0.0);
        c.margin.assign(ng, 0.0);

        std::vector<int> var_pos;
        for (const auto& v : c.dyn_vars) var_pos.push_back(law_.require(v));
        std::vector<std::pair<int, int>> num_pins, den_pins;
        for (const auto& [v, x] : f->child_pins) num_pins.emplace_back(law_.require(v), x);
        for (const auto& [v, x] : f->given_pins) {
            num_pins.emplace_back(law_.require(v), x);
            den_pins.emplace_back(law_.require(v), x);
        }

        law_.iterate([&](const std::vector<int>& a, double p) {
            if (p == 0) return;
            bool num_ok = true, den_ok = true;
            for (const auto& [pos, val] : num_pins)
                if (a[static_cast<size_t>(pos)] != val) { num_ok = false; break; }
            for (const auto& [pos, val] : den_pins)
                if (a[static_cast<size_t>(pos)] != val) { den_ok = false; break; }
            if (!num_ok && !den_ok) return;
            size_t idx = 0;
            for (size_t i = 0; i < c.dyn_vars.size(); ++i)
                idx = idx * static_cast<size_t>(law_.card(c.dyn_vars[i])) +
                      static_cast<size_t>(a[static_cast<size_t>(var_pos[i])]);
            if (num_ok) c.joint[idx] += p;
            if (den_ok) c.margin[idx % ng] += p;
        });
    }

    const TabularLaw& law_;
    std::map<const AstNode*, FactorCache> factor_cache_;
    std::map<const AstNode*, std::map<std::string, double>> sigma_cache_;
};

}  // namespace emid
