#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "emid/bits.hpp"
#include "emid/errors.hpp"

namespace emid {

inline constexpr double kKernelTol = 1e-10;

// Dense tabular kernel q(V | W) over discrete variables identified by graph
// vertex indices. For every context assignment the table sums to one. The
// axis order is: random variables (ascending index) then context variables
// (ascending index), last axis fastest.
class Kernel {
public:
    Kernel() = default;

    static Kernel joint(std::vector<int> vars, std::vector<int> cards, std::vector<double> table,
                        bool validate = true) {
        Kernel k;
        k.vars_ = std::move(vars);
        k.var_cards_ = std::move(cards);
        k.table_ = std::move(table);
        if (k.table_.size() != k.var_size() * k.ctx_size())
            fail(Errc::ScopeMismatch, "kernel table size mismatch");
        if (validate) k.check_normalized();
        return k;
    }

    const std::vector<int>& vars() const { return vars_; }
    const std::vector<int>& context() const { return ctx_; }
    VSet var_mask() const { return from_vector(vars_); }
    VSet ctx_mask() const { return from_vector(ctx_); }

    int card_of(int vertex) const {
        for (size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == vertex) return var_cards_[i];
        for (size_t i = 0; i < ctx_.size(); ++i)
            if (ctx_[i] == vertex) return ctx_cards_[i];
        fail(Errc::ScopeMismatch, "vertex not in kernel scope");
    }

    size_t var_size() const {
        size_t n = 1;
        for (int c : var_cards_) n *= static_cast<size_t>(c);
        return n;
    }
    size_t ctx_size() const {
        size_t n = 1;
        for (int c : ctx_cards_) n *= static_cast<size_t>(c);
        return n;
    }

    // value at a full assignment (vertex -> value) covering vars and context
    double value(const std::map<int, int>& assign) const {
        return table_[flat_index(assign)];
    }

    void check_normalized() const {
        size_t vs = var_size(), cs = ctx_size();
        for (size_t c = 0; c < cs; ++c) {
            double s = 0;
            for (size_t v = 0; v < vs; ++v) s += table_[v * cs + c];
            if (std::abs(s - 1.0) > 1e-8)
                fail(Errc::ScopeMismatch, "kernel is not normalized per context");
        }
        for (double x : table_)
            if (x < -kKernelTol) fail(Errc::ScopeMismatch, "kernel has a negative entry");
    }

    // sum out `drop` (a subset of the random variables)
    Kernel marginalize(VSet drop) const {
        Kernel out = shell(var_mask() & ~drop);
        iterate([&](const std::vector<int>& a, double p) {
            out.table_[out.flat_from(a, *this)] += p;
        });
        return out;
    }

    // move `on` from random to context by conditioning
    Kernel condition(VSet on) const {
        Kernel marg = marginalize(var_mask() & ~on);  // q(on | W)
        Kernel out = shell(var_mask() & ~on, ctx_mask() | on);
        iterate([&](const std::vector<int>& a, double p) {
            double denom = marg.table_[marg.flat_from(a, *this)];
            size_t idx = out.flat_from(a, *this);
            if (denom <= kKernelTol) {
                if (p > kKernelTol)
                    fail(Errc::DivisionByZeroRegion, "conditioning on a null event");
                out.table_[idx] = 0;
            } else {
                out.table_[idx] = p / denom;
            }
        });
        return out;
    }

    // divide by q(v | mb) and move v into the context; the caller supplies
    // the Markov blanket dictated by the graph-side fixing operator
    Kernel fix(int v, VSet mb) const {
        VSet mbv = mb & var_mask();  // context coordinates condition implicitly
        Kernel num = marginalize(var_mask() & ~(mbv | bit(v)));  // q(v, mb | W)
        Kernel den = marginalize(var_mask() & ~mbv);             // q(mb | W)
        Kernel out = shell(var_mask() & ~bit(v), ctx_mask() | bit(v));
        iterate([&](const std::vector<int>& a, double p) {
            double n = num.table_[num.flat_from(a, *this)];
            double d = den.table_[den.flat_from(a, *this)];
            size_t idx = out.flat_from(a, *this);
            double q;
            if (d <= kKernelTol || n <= kKernelTol) {
                if (p > kKernelTol)
                    fail(Errc::DivisionByZeroRegion,
                         "fixing divides by a zero conditional (positivity violated)");
                q = 0;
            } else {
                q = p / (n / d);
            }
            out.table_[idx] += q;
        });
        out.renormalize();
        return out;
    }

    void renormalize() {
        size_t vs = var_size(), cs = ctx_size();
        for (size_t c = 0; c < cs; ++c) {
            double s = 0;
            for (size_t v = 0; v < vs; ++v) s += table_[v * cs + c];
            if (s > kKernelTol)
                for (size_t v = 0; v < vs; ++v) table_[v * cs + c] /= s;
        }
    }

    double max_abs_diff(const Kernel& other) const {
        if (vars_ != other.vars_ || ctx_ != other.ctx_)
            fail(Errc::ScopeMismatch, "kernels have different scopes");
        double m = 0;
        for (size_t i = 0; i < table_.size(); ++i)
            m = std::max(m, std::abs(table_[i] - other.table_[i]));
        return m;
    }

    // iterate all cells as (assignment aligned to vars+ctx order, value)
    template <typename F>
    void iterate(F&& f) const {
        std::vector<int> dims = var_cards_;
        dims.insert(dims.end(), ctx_cards_.begin(), ctx_cards_.end());
        std::vector<int> a(dims.size(), 0);
        size_t total = table_.size();
        for (size_t idx = 0; idx < total; ++idx) {
            f(a, table_[idx]);
            for (int j = static_cast<int>(dims.size()) - 1; j >= 0; --j) {
                if (++a[static_cast<size_t>(j)] < dims[static_cast<size_t>(j)]) break;
                a[static_cast<size_t>(j)] = 0;
            }
        }
    }

    const std::vector<double>& table() const { return table_; }

    std::vector<int> scope() const {  // vars then ctx
        std::vector<int> s = vars_;
        s.insert(s.end(), ctx_.begin(), ctx_.end());
        return s;
    }

private:
    // empty table with the given var/ctx masks, cardinalities inherited
    Kernel shell(VSet vmask) const { return shell(vmask, ctx_mask()); }
    Kernel shell(VSet vmask, VSet cmask) const {
        Kernel out;
        auto find_card = [&](int vertex) { return card_of(vertex); };
        for_each_bit(vmask, [&](int v) {
            out.vars_.push_back(v);
            out.var_cards_.push_back(find_card(v));
        });
        for_each_bit(cmask, [&](int v) {
            out.ctx_.push_back(v);
            out.ctx_cards_.push_back(find_card(v));
        });
        out.table_.assign(out.var_size() * out.ctx_size(), 0.0);
        return out;
    }

    // flat index into *this* given an assignment aligned to `src`'s scope
    size_t flat_from(const std::vector<int>& a, const Kernel& src) const {
        size_t idx = 0;
        auto pos_in_src = [&](int vertex) -> size_t {
            const auto& sv = src.vars_;
            for (size_t i = 0; i < sv.size(); ++i)
                if (sv[i] == vertex) return i;
            for (size_t i = 0; i < src.ctx_.size(); ++i)
                if (src.ctx_[i] == vertex) return sv.size() + i;
            fail(Errc::ScopeMismatch, "assignment misses a kernel variable");
        };
        for (size_t i = 0; i < vars_.size(); ++i)
            idx = idx * static_cast<size_t>(var_cards_[i]) + static_cast<size_t>(a[pos_in_src(vars_[i])]);
        for (size_t i = 0; i < ctx_.size(); ++i)
            idx = idx * static_cast<size_t>(ctx_cards_[i]) + static_cast<size_t>(a[pos_in_src(ctx_[i])]);
        return idx;
    }

    size_t flat_index(const std::map<int, int>& assign) const {
        size_t idx = 0;
        for (size_t i = 0; i < vars_.size(); ++i)
            idx = idx * static_cast<size_t>(var_cards_[i]) + static_cast<size_t>(assign.at(vars_[i]));
        for (size_t i = 0; i < ctx_.size(); ++i)
            idx = idx * static_cast<size_t>(ctx_cards_[i]) + static_cast<size_t>(assign.at(ctx_[i]));
        return idx;
    }

    std::vector<int> vars_, ctx_;
    std::vector<int> var_cards_, ctx_cards_;
    std::vector<double> table_;
};

}  // namespace emid
