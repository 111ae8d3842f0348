#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "emid/functional.hpp"
#include "emid/mdg.hpp"
#include "emid/separation.hpp"

namespace emid {

// Emits identifying functionals against a missing data graph. Every factor
// it produces references observed-law variables only: counterfactuals are
// substituted by their proxies under recorded complete-case restrictions, so
// the results evaluate directly against p(O, Z, R). Free proxy variables
// stand for the counterfactual coordinates of the law being identified.
class Emitter {
public:
    explicit Emitter(const Graph& g) : g_(g) {
        Graph nohid = latent_project(g, g.hidden());
        sep_ = nohid.induced(nohid.all() & ~nohid.proxies());
        to_sep_.assign(static_cast<size_t>(g.size()), -1);
        for (int v = 0; v < g.size(); ++v)
            to_sep_[static_cast<size_t>(v)] = sep_.find(g.id_of(v));
    }

    const Graph& graph() const { return g_; }
    const Graph& separation_graph() const { return sep_; }

    // The g-formula: product of p(Y | pa(Y)) over Y outside A, evaluated at A = a.
    Ast g_formula(const std::map<int, int>& intervention) const {
        if (!g_.bidirected_edges().empty() || g_.hidden() || g_.proxies())
            fail(Errc::NotADag, "the g-formula needs a DAG over fully observed vertices");
        VSet avoid = 0;
        for (const auto& [v, x] : intervention) avoid |= bit(v);
        std::vector<Ast> kids;
        for (int v = 0; v < g_.size(); ++v) {
            if (has(avoid, v)) continue;
            std::vector<std::string> given;
            for_each_bit(g_.parents(v), [&](int p) { given.push_back(g_.id_of(p)); });
            kids.push_back(make_factor({g_.id_of(v)}, {}, std::move(given), {}));
        }
        Pins pins;
        for (const auto& [v, x] : intervention) pins.emplace_back(g_.id_of(v), x);
        return make_at(std::move(pins), make_product(std::move(kids)));
    }

    // Odds-ratio parameterization of p(R | ctx): the product of conditional
    // pieces p(R_k | R_-k = 1, ctx), OR factors with R_succ pinned to 1, and
    // the sigma normalizer. Each piece is reduced by m-separation and carries
    // the complete-case restriction that makes it a function of observed data.
    Ast or_mechanism(const std::vector<int>& r_order, VSet ctx) const {
        std::vector<Ast> kids;
        VSet rs = from_vector(r_order);
        for (int rk : r_order) kids.push_back(reduce_conditional(rk, rs & ~bit(rk), 0, ctx));
        for (size_t k = 1; k < r_order.size(); ++k) {
            int rk = r_order[k];
            VSet prec = 0, succ = 0;
            for (size_t j = 0; j < k; ++j) prec |= bit(r_order[j]);
            for (size_t j = k + 1; j < r_order.size(); ++j) succ |= bit(r_order[j]);
            kids.push_back(or_factor(rk, prec, succ, ctx));
        }
        auto mech = std::make_shared<AstNode>();
        mech->kind = AstNode::Kind::Mechanism;
        mech->kids = std::move(kids);
        for (int r : r_order) mech->r_vars.push_back(g_.id_of(r));
        return mech;
    }

    // The IPW identification shape shared by the full law and the
    // full-observability law: p(law) = [ p(observed, R=1) / mech|_{R=1} ] * mech.
    // `ctx_ctfs` is the counterfactual context of the mechanism: the classic
    // single-world counterfactuals for the full law, the all-ones family for
    // the full-observability law.
    Ast ipw_form(VSet ctx_ctfs) const {
        std::vector<int> r_order = sorted(g_.indicators());
        Ast mech = or_mechanism(r_order, ctx_ctfs | g_.covariates());

        std::vector<std::string> child;
        for (int v : sorted(g_.covariates())) child.push_back(g_.id_of(v));
        for (int v : sorted(g_.proxies())) child.push_back(g_.id_of(v));
        Pins all_ones;
        for (int r : r_order) all_ones.emplace_back(g_.id_of(r), 1);
        Ast numerator = make_factor(std::move(child), all_ones, {}, {});
        Ast mech_at_one = make_at(all_ones, mech);
        return make_product({make_ratio(numerator, mech_at_one), mech});
    }

    // Single-world query functional: MCAR p(Z') = p(Z | R' = r');
    // MAR p(Z') = sum_O p(Z | O, R' = r') p(O).
    Ast single_world(const SingleWorldQuery& q, bool mar) const {
        Pins pins;
        VSet needed = 0;
        for (int c : q.ctfs) {
            const Vertex& vx = g_.vertex(c);
            needed |= bit(vx.own_indicator);
            for (const auto& pe : vx.pattern) needed |= bit(pe.indicator);
        }
        for (int r : sorted(needed)) pins.emplace_back(g_.id_of(r), q.world.at(r));
        std::vector<std::string> child;
        for (int c : sorted(from_vector(q.ctfs))) child.push_back(g_.id_of(g_.vertex(c).proxy));
        if (!mar) return make_factor(std::move(child), {}, {}, pins);
        std::vector<std::string> ovars;
        for (int v : sorted(g_.covariates())) ovars.push_back(g_.id_of(v));
        Ast inner = make_factor(std::move(child), {}, ovars, pins);
        Ast po = make_factor(ovars, {}, {}, {});
        return make_sum(ovars, make_product({inner, po}));
    }

    // The conditional piece p(R_k | pinned R = 1, free R, ctx) reduced by
    // m-separation, with retained counterfactuals replaced by proxies under
    // the complete-case pins that make the replacement an identity.
    Ast reduce_conditional(int rk, VSet pinned, VSet free_r, VSet ctx) const {
        VSet cond = pinned | free_r | ctx;
        VSet dropped_r = 0;
        auto droppable = [&](int v) {
            return m_separated(sep_, sbit(rk), sbit(v), smask(cond & ~bit(v)));
        };
        for (int z : sorted(ctx & g_.counterfactuals()))
            if (droppable(z)) { cond &= ~bit(z); ctx &= ~bit(z); }
        for (int o : sorted(ctx & g_.covariates()))
            if (droppable(o)) { cond &= ~bit(o); ctx &= ~bit(o); }
        for (int r : sorted(free_r))
            if (droppable(r)) { cond &= ~bit(r); free_r &= ~bit(r); dropped_r |= bit(r); }
        for (int r : sorted(pinned))
            if (droppable(r)) { cond &= ~bit(r); pinned &= ~bit(r); dropped_r |= bit(r); }

        // substitution pins for the retained counterfactuals; an indicator may
        // be (re)inserted into the conditioning set at value 1 only when
        // m-separation proves the piece does not depend on it
        VSet pin_at_one = pinned;
        for (int z : sorted(ctx & g_.counterfactuals())) {
            const Vertex& vx = g_.vertex(z);
            std::vector<std::pair<int, int>> need{{vx.own_indicator, 1}};
            for (const auto& pe : vx.pattern) need.emplace_back(pe.indicator, pe.value);
            for (auto [r, val] : need) {
                if (val != 1)
                    fail(Errc::CriterionNotEstablished,
                         "cannot observe " + vx.id + " under a zero pattern in this context");
                if (has(pin_at_one, r)) continue;
                if (r == rk || has(free_r, r))
                    fail(Errc::CriterionNotEstablished,
                         "substituting " + vx.id + " needs " + g_.id_of(r) +
                             " = 1, which is free in this piece");
                if (!m_separated(sep_, sbit(rk), sbit(r), smask(cond)))
                    fail(Errc::CriterionNotEstablished,
                         "inserting " + g_.id_of(r) + " = 1 is not licensed by m-separation");
                pin_at_one |= bit(r);
                dropped_r &= ~bit(r);
                cond |= bit(r);
            }
        }

        std::vector<std::string> given;
        Pins given_pins;
        for (int r : sorted(free_r)) given.push_back(g_.id_of(r));
        for (int z : sorted(ctx)) {
            const Vertex& vx = g_.vertex(z);
            given.push_back(vx.role == Role::Counterfactual ? g_.id_of(vx.proxy) : vx.id);
        }
        for (int r : sorted(pin_at_one)) given_pins.emplace_back(g_.id_of(r), 1);
        return make_factor({g_.id_of(rk)}, {}, std::move(given), std::move(given_pins));
    }

private:
    // OR(R_k, R_prec | R_succ = 1, ctx), emitted as the telescoped product of
    // pairwise odds ratios: OR(R_k, r_prec) = prod_j OR(R_k, r_j | r_before_j,
    // R_between=1, R_succ=1). Each pairwise cross-ratio is symmetric, so it
    // may be evaluated through whichever of its two conditionals reduces to
    // observed data.
    Ast or_factor(int rk, VSet prec, VSet succ, VSet ctx) const {
        if (m_separated(sep_, sbit(rk), smask(prec), smask(succ | ctx)))
            return make_constant(1.0);
        std::vector<Ast> kids;
        std::vector<int> order = to_vector(prec);  // the caller's product order
        for (size_t j = 0; j < order.size(); ++j) {
            int rj = order[j];
            VSet before = 0, after = 0;
            for (size_t i = 0; i < j; ++i) before |= bit(order[i]);
            for (size_t i = j + 1; i < order.size(); ++i) after |= bit(order[i]);
            Ast p = pairwise_or(rk, rj, succ | after, before, ctx);
            if (p->kind != AstNode::Kind::Constant) kids.push_back(std::move(p));
        }
        if (kids.empty()) return make_constant(1.0);
        if (kids.size() == 1) return kids.front();
        return make_product(std::move(kids));
    }

    // Pairwise OR(R_k, R_j | pinned = 1, free, ctx). A free indicator whose
    // conditional carries no (R_k, R_j) interaction cancels from the
    // cross-ratio and may be pinned to 1.
    Ast pairwise_or(int rk, int rj, VSet pinned, VSet free_r, VSet ctx) const {
        if (m_separated(sep_, sbit(rk), sbit(rj), smask(pinned | free_r | ctx)))
            return make_constant(1.0);
        for (int rm : sorted(free_r)) {
            VSet other = pinned | (free_r & ~bit(rm)) | ctx;
            bool no_k = m_separated(sep_, sbit(rm), sbit(rk), smask(other | bit(rj)));
            bool no_j = m_separated(sep_, sbit(rm), sbit(rj), smask(other | bit(rk)));
            if (no_k || no_j) {
                free_r &= ~bit(rm);
                pinned |= bit(rm);
            }
        }
        auto build = [&](int child, int other) -> Ast {
            Ast base = reduce_conditional(child, pinned, free_r | bit(other), ctx);
            std::string other_id = g_.id_of(other);
            if (std::find(base->given.begin(), base->given.end(), other_id) == base->given.end())
                return make_constant(1.0);  // the pair decoupled after reduction
            auto node = std::make_shared<AstNode>();
            node->kind = AstNode::Kind::OddsRatio;
            node->or_k = g_.id_of(child);
            node->or_prec = {other_id};
            node->kids = {base};
            return node;
        };
        try {
            return build(rk, rj);
        } catch (const Error& e) {
            if (e.code() != Errc::CriterionNotEstablished) throw;
            return build(rj, rk);  // the cross-ratio is symmetric in its pair
        }
    }

    std::vector<int> sorted(VSet s) const {
        std::vector<int> out = to_vector(s);
        std::sort(out.begin(), out.end(), [&](int a, int b) { return g_.id_of(a) < g_.id_of(b); });
        return out;
    }
    VSet sbit(int v) const {
        int s = to_sep_[static_cast<size_t>(v)];
        if (s < 0) fail(Errc::VertexNotInGraph, g_.id_of(v) + " not in separation view");
        return bit(s);
    }
    VSet smask(VSet orig) const {
        VSet out = 0;
        for_each_bit(orig, [&](int v) { out |= sbit(v); });
        return out;
    }

    Graph g_;
    Graph sep_;
    std::vector<int> to_sep_;
};

// Counterfactual context sets used by the two main laws.
inline VSet classic_ctf_context(const Graph& g) { return g.counterfactuals(); }

inline VSet full_observability_ctfs(const Graph& g) {
    VSet out = 0;
    for_each_bit(g.counterfactuals(), [&](int v) {
        for (const auto& pe : g.vertex(v).pattern)
            if (pe.value == 0) return;
        out |= bit(v);
    });
    return out;
}

}  // namespace emid
