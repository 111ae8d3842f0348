#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emid/gspec_parse.hpp"
#include "emid/id.hpp"
#include "emid/mdg.hpp"

namespace emid {

// --- deterministic counter-based RNG -----------------------------------------
// Per-block streams are seeded from (seed, block index), so generation order
// and parallel merges cannot change the data.

struct SplitMix {
    std::uint64_t state;

    explicit SplitMix(std::uint64_t s) : state(s) {}
    static SplitMix for_block(std::uint64_t seed, std::uint64_t block) {
        SplitMix s(seed ^ (0x9e3779b97f4a7c15ULL + block * 0xbf58476d1ce4e5b9ULL));
        s.next();
        s.next();
        return s;
    }
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    // Box-Muller, fully specified so streams are identical across platforms
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    bool have_spare_ = false;
    double spare_ = 0;
};

// --- scenario ----------------------------------------------------------------

struct CovariateSpec {
    std::string id;
    double mean = 0, sd = 1;
};

struct LinearSpec {
    double intercept = 0;
    std::map<std::string, double> coef;  // covariate id -> weight
};

struct LogisticSpec {
    bool constant = false;   // MCAR: plain probability
    double probability = 0.5;
    double intercept = 0;
    std::map<std::string, double> coef;  // covariate or counterfactual id -> weight
};

struct BlockScenario {
    Graph graph;
    std::string graph_path;
    MechanismClass mechanism = MechanismClass::MCAR;
    std::vector<CovariateSpec> covariates;            // ascending by id
    std::vector<std::string> ctf_order;               // canonical counterfactual ids
    std::vector<LinearSpec> ctf_mean;                 // aligned with ctf_order
    std::vector<std::vector<double>> ctf_cov;         // SPD covariance
    std::map<std::string, LogisticSpec> missingness;  // indicator id -> active spec
    double positivity_margin = 0.02;
    double positivity_tail = 1e-4;

    int ctf_index(const std::string& id) const {
        for (size_t i = 0; i < ctf_order.size(); ++i)
            if (ctf_order[i] == id) return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

inline std::vector<std::vector<double>> cholesky(const std::vector<std::vector<double>>& a) {
    size_t n = a.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (s <= 0) fail(Errc::CovarianceNotPD, "covariance is not positive definite");
                l[i][j] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    return l;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace detail

// Parses the scenario JSON next to its graph and validates every block
// against the graph: coefficients may only reference actual parents, the
// covariance must be SPD, and the logistic predictors must respect the
// positivity margin up to the configured tail probability.
inline BlockScenario load_scenario(const std::string& path,
                                   const std::string& mechanism_override = "") {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open scenario " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(Errc::InvalidScenario, std::string("scenario JSON: ") + e.what());
    }
    BlockScenario scn;
    std::string dir = path.substr(0, path.find_last_of('/') + 1);
    scn.graph_path = dir + j.at("graph").get<std::string>();
    {
        std::ifstream gin(scn.graph_path);
        if (!gin) fail(Errc::IoError, "cannot open graph " + scn.graph_path);
        std::ostringstream os;
        os << gin.rdbuf();
        auto pr = parse(os.str());
        if (!pr.ok()) fail(Errc::InvalidScenario, "scenario graph does not parse");
        Mode mode = j.value("mode", "interference") == std::string("classic")
                        ? Mode::Classic
                        : Mode::Interference;
        auto br = build_and_validate(*pr.spec, mode);
        if (!br.ok()) fail(Errc::InvalidScenario, "scenario graph is invalid");
        scn.graph = *br.graph;
    }
    const Graph& g = scn.graph;

    std::string mech = mechanism_override.empty() ? j.at("mechanism").get<std::string>()
                                                  : mechanism_override;
    if (mech == "mcar") scn.mechanism = MechanismClass::MCAR;
    else if (mech == "mar") scn.mechanism = MechanismClass::MAR;
    else if (mech == "mnar") scn.mechanism = MechanismClass::MNAR;
    else fail(Errc::InvalidScenario, "mechanism must be mcar, mar or mnar");

    for (const auto& [id, spec] : j.at("covariates").items()) {
        int v = g.find(id);
        if (v < 0 || g.vertex(v).role != Role::Covariate)
            fail(Errc::InvalidScenario, "unknown covariate " + id);
        scn.covariates.push_back({id, spec.at("mean").get<double>(), spec.at("sd").get<double>()});
    }
    std::sort(scn.covariates.begin(), scn.covariates.end(),
              [](const CovariateSpec& a, const CovariateSpec& b) { return a.id < b.id; });

    const auto& ctfs = j.at("counterfactuals");
    for (const auto& id : ctfs.at("order")) {
        std::string s = id.get<std::string>();
        int v = g.find(s);
        if (v < 0 || g.vertex(v).role != Role::Counterfactual)
            fail(Errc::InvalidScenario, "unknown counterfactual " + s);
        scn.ctf_order.push_back(s);
    }
    if (popcount(g.counterfactuals()) != static_cast<int>(scn.ctf_order.size()))
        fail(Errc::InvalidScenario, "counterfactual order must cover the family exactly");
    for (const auto& id : scn.ctf_order) {
        const auto& m = ctfs.at("means").at(id);
        LinearSpec ls;
        ls.intercept = m.at("intercept").get<double>();
        int v = g.index_of(id);
        if (m.contains("coefficients"))
            for (const auto& [cid, w] : m.at("coefficients").items()) {
                int cv = g.find(cid);
                if (cv < 0 || !has(g.parents(v), cv))
                    fail(Errc::InvalidScenario, cid + " is not a parent of " + id);
                ls.coef[cid] = w.get<double>();
            }
        scn.ctf_mean.push_back(std::move(ls));
    }
    for (const auto& row : ctfs.at("covariance")) {
        std::vector<double> r;
        for (const auto& x : row) r.push_back(x.get<double>());
        scn.ctf_cov.push_back(std::move(r));
    }
    if (scn.ctf_cov.size() != scn.ctf_order.size())
        fail(Errc::InvalidScenario, "covariance dimension mismatch");
    for (size_t i = 0; i < scn.ctf_cov.size(); ++i) {
        if (scn.ctf_cov[i].size() != scn.ctf_order.size())
            fail(Errc::InvalidScenario, "covariance dimension mismatch");
        for (size_t k = 0; k < scn.ctf_cov.size(); ++k)
            if (std::abs(scn.ctf_cov[i][k] - scn.ctf_cov[k][i]) > 1e-12)
                fail(Errc::CovarianceNotPD, "covariance is not symmetric");
    }
    detail::cholesky(scn.ctf_cov);  // SPD or throw

    const auto& mblock = j.at("missingness").at(mech);
    for_each_bit(g.indicators(), [&](int r) {
        const std::string id = g.id_of(r);
        if (!mblock.contains(id)) fail(Errc::InvalidScenario, "missingness lacks " + id);
        const auto& spec = mblock.at(id);
        LogisticSpec ls;
        if (spec.contains("probability")) {
            ls.constant = true;
            ls.probability = spec.at("probability").get<double>();
            if (scn.mechanism != MechanismClass::MCAR)
                fail(Errc::InvalidScenario, "constant probabilities are MCAR-only");
            if (spec.contains("coefficients") && !spec.at("coefficients").empty())
                fail(Errc::InvalidScenario, "MCAR block must not carry coefficients");
        } else {
            ls.intercept = spec.at("intercept").get<double>();
            for (const auto& [cid, w] : spec.at("coefficients").items()) {
                int cv = g.find(cid);
                if (cv < 0 || !has(g.parents(r), cv))
                    fail(Errc::InvalidScenario, cid + " is not a parent of " + id);
                bool is_ctf = g.vertex(cv).role == Role::Counterfactual;
                if (is_ctf && scn.mechanism != MechanismClass::MNAR)
                    fail(Errc::InvalidScenario,
                         "counterfactual coefficients require the MNAR toggle");
                ls.coef[cid] = w.get<double>();
            }
        }
        scn.missingness[id] = std::move(ls);
    });
    if (j.contains("positivity")) {
        scn.positivity_margin = j.at("positivity").value("margin", 0.02);
        scn.positivity_tail = j.at("positivity").value("tail_probability", 1e-4);
    }

    // positivity: each logistic predictor is Gaussian; the chance of leaving
    // (margin, 1 - margin) must stay below the configured tail probability
    for (const auto& [id, ls] : scn.missingness) {
        if (ls.constant) {
            if (ls.probability < scn.positivity_margin ||
                ls.probability > 1 - scn.positivity_margin)
                fail(Errc::PositivityMarginViolated, id + " probability breaches the margin");
            continue;
        }
        double mu = ls.intercept;
        // predictor = b0 + sum_c w_c C_c + sum_k w_k Z_k, with Z = m(C) + eps
        std::map<std::string, double> cov_weight;
        std::vector<double> ctf_weight(scn.ctf_order.size(), 0.0);
        for (const auto& [cid, w] : ls.coef) {
            int idx = scn.ctf_index(cid);
            if (idx < 0) cov_weight[cid] += w;
            else {
                ctf_weight[static_cast<size_t>(idx)] = w;
                mu += w * scn.ctf_mean[static_cast<size_t>(idx)].intercept;
                for (const auto& [ccid, cw] : scn.ctf_mean[static_cast<size_t>(idx)].coef)
                    cov_weight[ccid] += w * cw;
            }
        }
        double var = 0;
        for (const auto& c : scn.covariates) {
            auto it = cov_weight.find(c.id);
            if (it != cov_weight.end()) {
                mu += it->second * c.mean;
                var += it->second * it->second * c.sd * c.sd;
            }
        }
        for (size_t i = 0; i < ctf_weight.size(); ++i)
            for (size_t k = 0; k < ctf_weight.size(); ++k)
                var += ctf_weight[i] * ctf_weight[k] * scn.ctf_cov[i][k];
        double sd = std::sqrt(std::max(var, 1e-300));
        double lo = std::log(scn.positivity_margin / (1 - scn.positivity_margin));
        double hi = -lo;
        double tail = detail::normal_cdf((lo - mu) / sd) + 1 - detail::normal_cdf((hi - mu) / sd);
        if (var > 0 && tail > scn.positivity_tail)
            fail(Errc::PositivityMarginViolated,
                 id + " leaves the positivity margin with probability " + std::to_string(tail));
    }
    return scn;
}

// --- dataset ------------------------------------------------------------------

struct Dataset {
    std::vector<std::string> cov_cols, proxy_cols, r_cols;  // CSV headers
    std::vector<int> cov_vertex, proxy_vertex, r_vertex;    // graph vertices
    std::vector<std::vector<double>> cov, proxy;  // proxy entries are NaN when missing
    std::vector<std::vector<int>> r;
    std::vector<std::string> oracle_cols;  // counterfactual ids
    std::vector<std::vector<double>> oracle;

    size_t rows() const { return r.empty() ? (cov.empty() ? 0 : cov[0].size()) : r[0].size(); }
};

inline std::string unit_column(const Graph& g, int v) {
    return "unit" + g.vertex(v).unit + "." + g.vertex(v).name;
}
inline std::string indicator_column(const Graph& g, int v) {
    // one missing variable per unit keeps the short form R_<unit>
    int per_unit = 0;
    for (int u = 0; u < g.size(); ++u)
        if (g.vertex(u).role == Role::Indicator && g.vertex(u).unit == g.vertex(v).unit)
            ++per_unit;
    if (per_unit == 1) return "R_" + g.vertex(v).unit;
    return "R_" + g.vertex(v).unit + "." + g.vertex(v).name;
}

inline Dataset simulate(const BlockScenario& scn, long n, std::uint64_t seed) {
    const Graph& g = scn.graph;
    if (n < 0) fail(Errc::InvalidScenario, "n must be nonnegative");
    Dataset ds;
    auto sorted_ids = [&](VSet s) {
        std::vector<int> out = to_vector(s);
        std::sort(out.begin(), out.end(), [&](int a, int b) { return g.id_of(a) < g.id_of(b); });
        return out;
    };
    for (int v : sorted_ids(g.covariates())) {
        ds.cov_cols.push_back(unit_column(g, v));
        ds.cov_vertex.push_back(v);
    }
    for (int v : sorted_ids(g.proxies())) {
        ds.proxy_cols.push_back(unit_column(g, v));
        ds.proxy_vertex.push_back(v);
    }
    for (int v : sorted_ids(g.indicators())) {
        ds.r_cols.push_back(indicator_column(g, v));
        ds.r_vertex.push_back(v);
    }
    ds.oracle_cols = scn.ctf_order;
    ds.cov.assign(ds.cov_cols.size(), std::vector<double>(static_cast<size_t>(n)));
    ds.proxy.assign(ds.proxy_cols.size(), std::vector<double>(static_cast<size_t>(n)));
    ds.r.assign(ds.r_cols.size(), std::vector<int>(static_cast<size_t>(n)));
    ds.oracle.assign(ds.oracle_cols.size(), std::vector<double>(static_cast<size_t>(n)));

    auto chol = detail::cholesky(scn.ctf_cov);
    size_t m = scn.ctf_order.size();

    // per-column scenario lookups
    std::vector<const CovariateSpec*> cov_spec;
    for (size_t i = 0; i < ds.cov_cols.size(); ++i) {
        const CovariateSpec* found = nullptr;
        for (const auto& c : scn.covariates)
            if (c.id == g.id_of(ds.cov_vertex[i])) found = &c;
        if (!found) fail(Errc::InvalidScenario, "covariate without a spec");
        cov_spec.push_back(found);
    }

    for (long b = 0; b < n; ++b) {
        SplitMix rng = SplitMix::for_block(seed, static_cast<std::uint64_t>(b));
        std::map<std::string, double> value;
        for (size_t i = 0; i < ds.cov_cols.size(); ++i) {
            double x = cov_spec[i]->mean + cov_spec[i]->sd * rng.normal();
            ds.cov[i][static_cast<size_t>(b)] = x;
            value[g.id_of(ds.cov_vertex[i])] = x;
        }
        // counterfactual block: mean(C) + L z
        std::vector<double> z(m);
        for (auto& x : z) x = rng.normal();
        for (size_t i = 0; i < m; ++i) {
            double mu = scn.ctf_mean[i].intercept;
            for (const auto& [cid, w] : scn.ctf_mean[i].coef) mu += w * value[cid];
            double dev = 0;
            for (size_t k = 0; k <= i; ++k) dev += chol[i][k] * z[k];
            double x = mu + dev;
            ds.oracle[i][static_cast<size_t>(b)] = x;
            value[scn.ctf_order[i]] = x;
        }
        // indicators
        std::map<int, int> rv;
        for (size_t i = 0; i < ds.r_vertex.size(); ++i) {
            const LogisticSpec& ls = scn.missingness.at(g.id_of(ds.r_vertex[i]));
            double p;
            if (ls.constant) {
                p = ls.probability;
            } else {
                double eta = ls.intercept;
                for (const auto& [cid, w] : ls.coef) eta += w * value[cid];
                p = 1.0 / (1.0 + std::exp(-eta));
            }
            int draw = rng.uniform() < p ? 1 : 0;
            ds.r[i][static_cast<size_t>(b)] = draw;
            rv[ds.r_vertex[i]] = draw;
        }
        // proxies by consistency: the member matching the realized pattern
        for (size_t i = 0; i < ds.proxy_vertex.size(); ++i) {
            const Vertex& px = g.vertex(ds.proxy_vertex[i]);
            if (rv.at(px.own_indicator) == 0) {
                ds.proxy[i][static_cast<size_t>(b)] = std::nan("");
                continue;
            }
            int chosen = -1;
            for_each_bit(g.counterfactuals(), [&](int c) {
                const Vertex& cx = g.vertex(c);
                if (cx.name != px.name || cx.unit != px.unit) return;
                for (const auto& pe : cx.pattern)
                    if (rv.at(pe.indicator) != pe.value) return;
                chosen = c;
            });
            ds.proxy[i][static_cast<size_t>(b)] = value.at(g.id_of(chosen));
        }
    }
    return ds;
}

// Analytic counterfactual mean: the expectation of the linear map under the
// covariate means (the linear-Gaussian closed form).
inline double ground_truth(const BlockScenario& scn, const std::string& ctf_id) {
    int idx = scn.ctf_index(ctf_id);
    if (idx < 0) fail(Errc::UnknownCounterfactual, ctf_id);
    double mu = scn.ctf_mean[static_cast<size_t>(idx)].intercept;
    for (const auto& [cid, w] : scn.ctf_mean[static_cast<size_t>(idx)].coef)
        for (const auto& c : scn.covariates)
            if (c.id == cid) mu += w * c.mean;
    return mu;
}

// Monte-Carlo oracle from the counterfactual draws, with a standard error.
inline std::pair<double, double> ground_truth_mc(const BlockScenario& scn,
                                                 const std::string& ctf_id, long n,
                                                 std::uint64_t seed) {
    Dataset ds = simulate(scn, n, seed);
    int col = -1;
    for (size_t i = 0; i < ds.oracle_cols.size(); ++i)
        if (ds.oracle_cols[i] == ctf_id) col = static_cast<int>(i);
    if (col < 0) fail(Errc::UnknownCounterfactual, ctf_id);
    double s = 0, s2 = 0;
    for (double x : ds.oracle[static_cast<size_t>(col)]) {
        s += x;
        s2 += x * x;
    }
    double mean = s / static_cast<double>(n);
    double var = s2 / static_cast<double>(n) - mean * mean;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

// --- CSV ----------------------------------------------------------------------

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string format_number(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace detail

// Data CSV: one row per block; "?" is the missing marker. The counterfactual
// oracle goes to a side file next to the data.
inline void write_csv(const Dataset& ds, const std::string& path, bool with_oracle = true) {
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path);
    std::vector<std::string> header;
    for (const auto& c : ds.cov_cols) header.push_back(c);
    for (const auto& c : ds.proxy_cols) header.push_back(c);
    for (const auto& c : ds.r_cols) header.push_back(c);
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << detail::csv_quote(header[i]);
    out << "\n";
    for (size_t b = 0; b < ds.rows(); ++b) {
        std::vector<std::string> row;
        for (const auto& col : ds.cov) row.push_back(detail::format_number(col[b]));
        for (const auto& col : ds.proxy)
            row.push_back(std::isnan(col[b]) ? "?" : detail::format_number(col[b]));
        for (const auto& col : ds.r) row.push_back(std::to_string(col[b]));
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    if (!with_oracle) return;
    std::string opath = path;
    auto dot = opath.rfind(".csv");
    opath = (dot == std::string::npos ? opath : opath.substr(0, dot)) + ".oracle.csv";
    std::ofstream orc(opath);
    for (size_t i = 0; i < ds.oracle_cols.size(); ++i)
        orc << (i ? "," : "") << detail::csv_quote(ds.oracle_cols[i]);
    orc << "\n";
    for (size_t b = 0; b < ds.rows(); ++b) {
        for (size_t i = 0; i < ds.oracle.size(); ++i)
            orc << (i ? "," : "") << detail::format_number(ds.oracle[i][b]);
        orc << "\n";
    }
}

// Reads a data CSV against the graph; columns are matched by header name.
inline Dataset read_csv(const Graph& g, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) fail(Errc::IoError, "empty csv " + path);
    auto header = detail::csv_split(line);

    Dataset ds;
    std::vector<int> kinds(header.size(), -1);  // 0 cov, 1 proxy, 2 r
    std::vector<size_t> slots(header.size(), 0);
    for (size_t i = 0; i < header.size(); ++i) {
        bool found = false;
        for (int v = 0; v < g.size() && !found; ++v) {
            const Vertex& vx = g.vertex(v);
            if (vx.role == Role::Covariate && unit_column(g, v) == header[i]) {
                kinds[i] = 0;
                slots[i] = ds.cov_cols.size();
                ds.cov_cols.push_back(header[i]);
                ds.cov_vertex.push_back(v);
                found = true;
            } else if (vx.role == Role::Proxy && unit_column(g, v) == header[i]) {
                kinds[i] = 1;
                slots[i] = ds.proxy_cols.size();
                ds.proxy_cols.push_back(header[i]);
                ds.proxy_vertex.push_back(v);
                found = true;
            } else if (vx.role == Role::Indicator && indicator_column(g, v) == header[i]) {
                kinds[i] = 2;
                slots[i] = ds.r_cols.size();
                ds.r_cols.push_back(header[i]);
                ds.r_vertex.push_back(v);
                found = true;
            }
        }
        if (!found) fail(Errc::IoError, "column '" + header[i] + "' matches no graph vertex");
    }
    ds.cov.assign(ds.cov_cols.size(), {});
    ds.proxy.assign(ds.proxy_cols.size(), {});
    ds.r.assign(ds.r_cols.size(), {});
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = detail::csv_split(line);
        if (cells.size() != header.size()) fail(Errc::IoError, "ragged csv row");
        for (size_t i = 0; i < cells.size(); ++i) {
            switch (kinds[i]) {
                case 0: ds.cov[slots[i]].push_back(std::stod(cells[i])); break;
                case 1:
                    ds.proxy[slots[i]].push_back(cells[i] == "?" ? std::nan("")
                                                                 : std::stod(cells[i]));
                    break;
                case 2: ds.r[slots[i]].push_back(cells[i] == "1" ? 1 : 0); break;
                default: break;
            }
        }
    }
    return ds;
}

}  // namespace emid
