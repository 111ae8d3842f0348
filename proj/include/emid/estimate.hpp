#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "emid/emit.hpp"
#include "emid/id.hpp"
#include "emid/simulate.hpp"

namespace emid {

// --- logistic regression by damped Newton -------------------------------------

struct LogisticFit {
    std::vector<double> beta;  // intercept first
    bool converged = false;
    double grad_norm = 0;
    int iterations = 0;
    std::vector<std::vector<double>> hessian;  // observed information at the optimum

    // Wald standard error of coefficient j via the inverse information.
    double standard_error(size_t j) const {
        size_t p = beta.size();
        std::vector<std::vector<double>> a = hessian;
        std::vector<double> e(p, 0.0);
        e[j] = 1.0;
        // one column of the inverse by Gaussian elimination
        for (size_t i = 0; i < p; ++i) {
            size_t piv = i;
            for (size_t r = i + 1; r < p; ++r)
                if (std::abs(a[r][i]) > std::abs(a[piv][i])) piv = r;
            std::swap(a[i], a[piv]);
            std::swap(e[i], e[piv]);
            for (size_t r = i + 1; r < p; ++r) {
                double f = a[r][i] / a[i][i];
                for (size_t c = i; c < p; ++c) a[r][c] -= f * a[i][c];
                e[r] -= f * e[i];
            }
        }
        std::vector<double> x(p);
        for (size_t i = p; i-- > 0;) {
            double s = e[i];
            for (size_t c = i + 1; c < p; ++c) s -= a[i][c] * x[c];
            x[i] = s / a[i][i];
        }
        return std::sqrt(std::max(x[j], 0.0));
    }
};

namespace detail {

// Solves a small SPD system in place; the Hessian here is p x p with p <= 8.
inline std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    size_t n = b.size();
    for (size_t i = 0; i < n; ++i) {
        size_t piv = i;
        for (size_t r = i + 1; r < n; ++r)
            if (std::abs(a[r][i]) > std::abs(a[piv][i])) piv = r;
        std::swap(a[i], a[piv]);
        std::swap(b[i], b[piv]);
        if (std::abs(a[i][i]) < 1e-12) fail(Errc::SeparationInLogistic, "singular hessian");
        for (size_t r = i + 1; r < n; ++r) {
            double f = a[r][i] / a[i][i];
            for (size_t c = i; c < n; ++c) a[r][c] -= f * a[i][c];
            b[r] -= f * b[i];
        }
    }
    std::vector<double> x(n);
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

}  // namespace detail

// rows: outcome plus feature columns (no intercept column; added here)
inline LogisticFit fit_logistic(const std::vector<int>& y,
                                const std::vector<std::vector<double>>& features,
                                const std::vector<size_t>& rows, double tol = 1e-8,
                                int max_iter = 100) {
    if (rows.empty()) fail(Errc::RestrictedSampleEmpty, "no rows satisfy the fitting restriction");
    size_t p = features.size() + 1;
    LogisticFit fit;
    fit.beta.assign(p, 0.0);
    auto eta_of = [&](size_t row) {
        double e = fit.beta[0];
        for (size_t j = 0; j < features.size(); ++j) e += fit.beta[j + 1] * features[j][row];
        return e;
    };
    auto loglik = [&]() {
        double ll = 0;
        for (size_t r : rows) {
            double e = eta_of(r);
            ll += y[r] ? e : 0;
            ll -= std::log1p(std::exp(e));
        }
        return ll;
    };
    double ll = loglik();
    for (int it = 0; it < max_iter; ++it) {
        fit.iterations = it + 1;
        std::vector<double> grad(p, 0.0);
        std::vector<std::vector<double>> hess(p, std::vector<double>(p, 0.0));
        for (size_t r : rows) {
            double mu = 1.0 / (1.0 + std::exp(-eta_of(r)));
            double w = mu * (1 - mu);
            double res = y[r] - mu;
            std::vector<double> x(p, 1.0);
            for (size_t j = 1; j < p; ++j) x[j] = features[j - 1][r];
            for (size_t a = 0; a < p; ++a) {
                grad[a] += res * x[a];
                for (size_t b2 = 0; b2 <= a; ++b2) hess[a][b2] += w * x[a] * x[b2];
            }
        }
        for (size_t a = 0; a < p; ++a)
            for (size_t b2 = a + 1; b2 < p; ++b2) hess[a][b2] = hess[b2][a];
        fit.grad_norm = 0;
        for (double gv : grad)
            fit.grad_norm = std::max(fit.grad_norm, std::abs(gv) / static_cast<double>(rows.size()));
        if (fit.grad_norm < tol) {
            fit.converged = true;
            fit.hessian = hess;
            return fit;
        }
        fit.hessian = hess;
        std::vector<double> step = detail::solve(hess, grad);
        // damping: halve until the log-likelihood improves; the slack is
        // relative, since near the optimum improvements drop below one ulp
        double scale = 1.0;
        std::vector<double> base = fit.beta;
        double slack = 1e-12 * (1.0 + std::abs(ll));
        for (int h = 0; h < 30; ++h) {
            for (size_t a = 0; a < p; ++a) fit.beta[a] = base[a] + scale * step[a];
            double ll2 = loglik();
            if (ll2 >= ll - slack) {
                ll = ll2;
                break;
            }
            scale /= 2;
        }
        double norm = 0;
        for (double bx : fit.beta) norm = std::max(norm, std::abs(bx));
        if (norm > 1e3)
            fail(Errc::SeparationInLogistic, "coefficients diverge (perfect separation?)");
    }
    return fit;  // converged stays false; callers must treat this as flagged
}

// --- propensity model ----------------------------------------------------------

struct PropensityFactor {
    int r_vertex = -1;
    int r_slot = -1;
    std::vector<int> cov_slots;
    std::vector<int> proxy_slots;
    std::vector<int> restriction_slots;  // dataset R columns pinned to 1 while fitting
    LogisticFit fit;
    bool intercept_only = false;

    double probability(const Dataset& ds, size_t row) const {
        double e = fit.beta[0];
        size_t j = 1;
        for (int s : cov_slots) e += fit.beta[j++] * ds.cov[static_cast<size_t>(s)][row];
        for (int s : proxy_slots) {
            double v = ds.proxy[static_cast<size_t>(s)][row];
            if (std::isnan(v))
                fail(Errc::PositivityViolation, "propensity feature unobserved on this row");
            e += fit.beta[j++] * v;
        }
        return 1.0 / (1.0 + std::exp(-e));
    }
};

struct PropensityModel {
    MechanismClass mechanism = MechanismClass::MCAR;
    std::vector<PropensityFactor> factors;  // one per indicator, dataset order

    const PropensityFactor& factor_for(int r_vertex) const {
        for (const auto& f : factors)
            if (f.r_vertex == r_vertex) return f;
        fail(Errc::VertexNotInGraph, "no propensity factor for this indicator");
    }
};

namespace detail {

inline int slot_of(const std::vector<int>& vertices, int v) {
    for (size_t i = 0; i < vertices.size(); ++i)
        if (vertices[i] == v) return static_cast<int>(i);
    return -1;
}

}  // namespace detail

// Fits one logistic per indicator, with features and complete-case
// restrictions read off the emitted odds-ratio mechanism of the graph. The
// MCAR and MAR classes trim the factor to an intercept / covariates-only
// model. Mechanisms whose OR factors do not vanish need joint fitting, which
// this estimator does not attempt.
inline PropensityModel fit_propensities(const Dataset& ds, const Graph& g, MechanismClass mech) {
    Emitter em(g);
    std::vector<int> r_order = ds.r_vertex;
    Ast mechanism = em.or_mechanism(r_order, full_observability_ctfs(g) | g.covariates());
    PropensityModel pm;
    pm.mechanism = mech;
    for (const Ast& kid : mechanism->kids) {
        if (kid->kind == AstNode::Kind::Constant) continue;
        if (kid->kind != AstNode::Kind::Factor)
            fail(Errc::CriterionNotEstablished,
                 "mechanism has coupled indicators; joint OR fitting is not supported");
        PropensityFactor f;
        f.r_vertex = g.index_of(kid->child.front());
        f.r_slot = detail::slot_of(ds.r_vertex, f.r_vertex);
        if (f.r_slot < 0) fail(Errc::IoError, "dataset lacks an indicator column");
        if (mech != MechanismClass::MCAR) {
            for (const auto& name : kid->given) {
                int v = g.index_of(name);
                if (g.vertex(v).role == Role::Covariate)
                    f.cov_slots.push_back(detail::slot_of(ds.cov_vertex, v));
                else if (g.vertex(v).role == Role::Proxy && mech == MechanismClass::MNAR)
                    f.proxy_slots.push_back(detail::slot_of(ds.proxy_vertex, v));
            }
            if (mech == MechanismClass::MNAR)
                for (const auto& [name, val] : kid->given_pins) {
                    int v = g.index_of(name);
                    if (g.vertex(v).role == Role::Indicator && val == 1 && v != f.r_vertex)
                        f.restriction_slots.push_back(detail::slot_of(ds.r_vertex, v));
                }
        }
        f.intercept_only = f.cov_slots.empty() && f.proxy_slots.empty();
        for (int s : f.cov_slots)
            if (s < 0) fail(Errc::IoError, "dataset lacks a covariate column the mechanism needs");
        for (int s : f.proxy_slots)
            if (s < 0) fail(Errc::IoError, "dataset lacks a proxy column the mechanism needs");

        std::vector<size_t> rows;
        for (size_t b = 0; b < ds.rows(); ++b) {
            bool ok = true;
            for (int s : f.restriction_slots) ok &= ds.r[static_cast<size_t>(s)][b] == 1;
            if (ok) rows.push_back(b);
        }
        std::vector<std::vector<double>> feats;
        for (int s : f.cov_slots) feats.push_back(ds.cov[static_cast<size_t>(s)]);
        for (int s : f.proxy_slots) feats.push_back(ds.proxy[static_cast<size_t>(s)]);
        f.fit = fit_logistic(ds.r[static_cast<size_t>(f.r_slot)], feats, rows);
        pm.factors.push_back(std::move(f));
    }
    return pm;
}

// --- estimators ----------------------------------------------------------------

struct IpwOptions {
    double weight_cap = 100.0;
};

// The pattern of indicator values a target demands: its own indicator and the
// pattern assignments, closed under the restrictions of every propensity
// factor involved (the weight must be computable on counted rows).
inline std::map<int, int> required_pattern(const Graph& g, const PropensityModel& pm,
                                           int target_ctf) {
    const Vertex& vx = g.vertex(target_ctf);
    std::map<int, int> req{{vx.own_indicator, 1}};
    for (const auto& pe : vx.pattern) req[pe.indicator] = pe.value;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<int> current;
        for (const auto& [rv, val] : req) current.push_back(rv);
        for (int rv : current) {
            for (int slot : pm.factor_for(rv).restriction_slots) {
                int rvert = -1;
                for (const auto& f : pm.factors)
                    if (f.r_slot == slot) rvert = f.r_vertex;
                if (rvert < 0) continue;
                auto it = req.find(rvert);
                if (it == req.end()) {
                    req[rvert] = 1;
                    changed = true;
                } else if (it->second != 1) {
                    fail(Errc::CriterionNotEstablished,
                         "required pattern conflicts with a fitting restriction");
                }
            }
        }
    }
    return req;
}

struct IpwResult {
    double estimate = 0;
    double mean_inverse_weight = 0;  // self-normalization diagnostic
    double max_weight = 0;
    long used_rows = 0;
};

// (1/N) sum 1{R = required} h(proxy) / pi(required | features).
inline IpwResult ipw_estimate(const Dataset& ds, const Graph& g, const PropensityModel& pm,
                              int target_ctf, const IpwOptions& opt = {}) {
    const Vertex& vx = g.vertex(target_ctf);
    int proxy_slot = detail::slot_of(ds.proxy_vertex, g.index_of(vx.name));
    if (proxy_slot < 0) fail(Errc::IoError, "dataset lacks the target's proxy column");
    std::map<int, int> req = required_pattern(g, pm, target_ctf);

    std::vector<std::pair<const PropensityFactor*, int>> pieces;
    for (const auto& [rv, val] : req) pieces.emplace_back(&pm.factor_for(rv), val);

    IpwResult out;
    double acc = 0, winv = 0;
    long n = static_cast<long>(ds.rows());
    for (long b = 0; b < n; ++b) {
        bool match = true;
        for (const auto& [pf, val] : pieces)
            match &= ds.r[static_cast<size_t>(pf->r_slot)][static_cast<size_t>(b)] == val;
        if (!match) continue;
        double w = 1;
        for (const auto& [pf, val] : pieces) {
            double p = pf->probability(ds, static_cast<size_t>(b));
            w *= val ? p : 1 - p;
        }
        if (w < 1.0 / opt.weight_cap)
            fail(Errc::DegenerateWeights,
                 "inverse weight exceeds the cap (" + std::to_string(1 / w) + ")");
        out.max_weight = std::max(out.max_weight, 1 / w);
        acc += ds.proxy[static_cast<size_t>(proxy_slot)][static_cast<size_t>(b)] / w;
        winv += 1 / w;
        ++out.used_rows;
    }
    if (n == 0) fail(Errc::EmptyPattern, "empty dataset");
    out.estimate = acc / static_cast<double>(n);
    out.mean_inverse_weight = winv / static_cast<double>(n);
    return out;
}

// The deliberately naive i.i.d. MAR baseline: unit-local covariates only,
// augmented IPW with an OLS outcome model.
inline double aipw_iid_mar(const Dataset& ds, const Graph& g, const std::string& unit) {
    std::vector<int> covs;
    int proxy_slot = -1, r_slot = -1;
    for (size_t i = 0; i < ds.cov_vertex.size(); ++i)
        if (g.vertex(ds.cov_vertex[i]).unit == unit) covs.push_back(static_cast<int>(i));
    for (size_t i = 0; i < ds.proxy_vertex.size(); ++i)
        if (g.vertex(ds.proxy_vertex[i]).unit == unit) proxy_slot = static_cast<int>(i);
    for (size_t i = 0; i < ds.r_vertex.size(); ++i)
        if (g.vertex(ds.r_vertex[i]).unit == unit) r_slot = static_cast<int>(i);
    if (proxy_slot < 0 || r_slot < 0) fail(Errc::VertexNotInGraph, "unit has no missing variable");

    size_t n = ds.rows();
    std::vector<size_t> all(n);
    for (size_t i = 0; i < n; ++i) all[i] = i;
    std::vector<std::vector<double>> feats;
    for (int c : covs) feats.push_back(ds.cov[static_cast<size_t>(c)]);
    LogisticFit prop = fit_logistic(ds.r[static_cast<size_t>(r_slot)], feats, all);

    // OLS of the observed proxy on the unit's covariates
    size_t p = covs.size() + 1;
    std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
    std::vector<double> xty(p, 0.0);
    for (size_t b = 0; b < n; ++b) {
        if (ds.r[static_cast<size_t>(r_slot)][b] != 1) continue;
        std::vector<double> x(p, 1.0);
        for (size_t j = 1; j < p; ++j) x[j] = ds.cov[static_cast<size_t>(covs[j - 1])][b];
        double yv = ds.proxy[static_cast<size_t>(proxy_slot)][b];
        for (size_t a = 0; a < p; ++a) {
            xty[a] += x[a] * yv;
            for (size_t b2 = 0; b2 < p; ++b2) xtx[a][b2] += x[a] * x[b2];
        }
    }
    std::vector<double> ols = detail::solve(xtx, xty);

    double acc = 0;
    for (size_t b = 0; b < n; ++b) {
        double e = prop.beta[0];
        std::vector<double> x(p, 1.0);
        for (size_t j = 1; j < p; ++j) {
            x[j] = ds.cov[static_cast<size_t>(covs[j - 1])][b];
            e += prop.beta[j] * x[j];
        }
        double pr = 1.0 / (1.0 + std::exp(-e));
        double mhat = 0;
        for (size_t a = 0; a < p; ++a) mhat += ols[a] * x[a];
        int rv = ds.r[static_cast<size_t>(r_slot)][b];
        double zv = rv ? ds.proxy[static_cast<size_t>(proxy_slot)][b] : 0.0;
        acc += rv * zv / pr - (rv - pr) / pr * mhat;
    }
    return acc / static_cast<double>(n);
}

// Mean of the observed proxy among rows matching the target's missingness
// pattern; biased whenever the pattern is informative.
inline double unadjusted_mean(const Dataset& ds, const Graph& g, int target_ctf) {
    const Vertex& vx = g.vertex(target_ctf);
    int proxy_slot = detail::slot_of(ds.proxy_vertex, g.index_of(vx.name));
    std::map<int, int> req{{vx.own_indicator, 1}};
    for (const auto& pe : vx.pattern) req[pe.indicator] = pe.value;
    double acc = 0;
    long cnt = 0;
    for (size_t b = 0; b < ds.rows(); ++b) {
        bool match = true;
        for (const auto& [rv, val] : req)
            match &= ds.r[static_cast<size_t>(detail::slot_of(ds.r_vertex, rv))][b] == val;
        if (!match) continue;
        acc += ds.proxy[static_cast<size_t>(proxy_slot)][b];
        ++cnt;
    }
    if (cnt == 0) fail(Errc::EmptyPattern, "no rows match the target pattern");
    return acc / static_cast<double>(cnt);
}

// --- bootstrap ------------------------------------------------------------------

struct EstimateReport {
    double estimate = 0;
    double boot_mean = 0;
    double q05 = 0, q95 = 0;
    int replicates = 0;
    std::uint64_t seed = 0;
    double bias = std::nan("");  // against an oracle, when one is supplied
};

inline Dataset resample_blocks(const Dataset& ds, std::uint64_t seed, std::uint64_t replicate) {
    size_t n = ds.rows();
    SplitMix rng = SplitMix::for_block(seed, replicate + 0x7fffffffULL);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<size_t>(rng.next() % n);
    Dataset out = ds;
    auto take_d = [&](std::vector<std::vector<double>>& cols, const std::vector<std::vector<double>>& src) {
        for (size_t c = 0; c < cols.size(); ++c)
            for (size_t i = 0; i < n; ++i) cols[c][i] = src[c][idx[i]];
    };
    take_d(out.cov, ds.cov);
    take_d(out.proxy, ds.proxy);
    take_d(out.oracle, ds.oracle);
    for (size_t c = 0; c < out.r.size(); ++c)
        for (size_t i = 0; i < n; ++i) out.r[c][i] = ds.r[c][idx[i]];
    return out;
}

inline int configured_threads() {
    const char* env = std::getenv("ENTANGLED_ID_THREADS");
    if (!env) return 1;
    int t = std::atoi(env);
    return t < 1 ? 1 : t;
}

// Block-level bootstrap: blocks are the i.i.d. unit under partial
// interference, so rows (one block each) are resampled whole.
inline EstimateReport bootstrap(const Dataset& ds,
                                const std::function<double(const Dataset&)>& estimator, int B,
                                std::uint64_t seed) {
    if (B < 1) fail(Errc::InvalidScenario, "bootstrap needs B >= 1");
    EstimateReport rep;
    rep.replicates = B;
    rep.seed = seed;
    rep.estimate = estimator(ds);
    std::vector<double> values(static_cast<size_t>(B));
    int threads = std::min(configured_threads(), B);
    auto work = [&](int t) {
        for (int b = t; b < B; b += threads)
            values[static_cast<size_t>(b)] =
                estimator(resample_blocks(ds, seed, static_cast<std::uint64_t>(b)));
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    std::sort(values.begin(), values.end());
    double mean = 0;
    for (double v : values) mean += v;
    rep.boot_mean = mean / B;
    auto quantile = [&](double p) {
        double pos = p * (B - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, static_cast<size_t>(B - 1));
        double frac = pos - static_cast<double>(lo);
        return values[lo] * (1 - frac) + values[hi] * frac;
    };
    rep.q05 = quantile(0.05);
    rep.q95 = quantile(0.95);
    return rep;
}

}  // namespace emid
