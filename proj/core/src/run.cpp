#include "heatrace/run.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "heatrace/bogolyubov.hpp"
#include "heatrace/coeff_engine.hpp"
#include "heatrace/errors.hpp"
#include "heatrace/fit_harness.hpp"
#include "heatrace/laplace_asym.hpp"
#include "heatrace/parallel.hpp"
#include "heatrace/spectral_engine.hpp"
#include "heatrace/synge_lab.hpp"

namespace heatrace {

using ojson = nlohmann::ordered_json;

namespace {

struct Spectra {
    OperatorPair f;
    SpectralDecomposition p, m;
    Overlap o;
};

Spectra spectra(const OperatorPair& f, double tail_tol)
{
    Spectra s;
    s.f = f;
    SpectralOptions opt;
    opt.tail_tolerance = tail_tol;
    s.p = f.dirac ? decompose_dirac(f.manifold, f.plus, opt) : decompose_laplace(f.manifold, f.plus, opt);
    s.m = f.dirac ? decompose_dirac(f.manifold, f.minus, opt) : decompose_laplace(f.manifold, f.minus, opt);
    s.o = overlap(s.p, s.m);
    return s;
}

Spectra spectra(const RunConfig& c) { return spectra(build_pair(c), c.tail_tolerance); }

std::vector<double> eps_values(const RunConfig& c, const Spectra& sp, double t, double s)
{
    switch (c.eps.mode) {
    case EpsSpec::none:
        return {1.0};
    case EpsSpec::range:
        return log_grid(c.eps.lo, c.eps.hi, c.eps.count);
    default: {
        const auto w = safe_epsilon_window(sp.p, sp.m, t, s, c.tail_tolerance);
        return log_grid(w.first, w.second, c.eps.count);
    }
    }
}

CoeffOptions coeff_options(const RunConfig& c)
{
    CoeffOptions o;
    o.w_block = c.w_block == "as_printed" ? WBlockConvention::AsPrinted : WBlockConvention::Corrected;
    o.tolerance = c.consistency_tolerance;
    return o;
}

void add_meta(CsvTable& t, const Spectra& sp)
{
    t.meta.emplace_back("fixture", sp.f.name);
    t.meta.emplace_back("dim", std::to_string(sp.f.manifold.dim));
    t.meta.emplace_back("dirac", sp.f.dirac ? "1" : "0");
}

std::string terms_cell(const std::vector<SubTerm>& terms)
{
    std::string out;
    for (const auto& s : terms) out += (out.empty() ? "" : ";") + s.name + "=" + format_double(s.value);
    return out;
}

ojson number(double v)
{
    if (std::isfinite(v)) return v;
    return format_double(v);
}

} // namespace

// ---------------------------------------------------------------- traces

CsvTable traces_table(const RunConfig& c)
{
    const Spectra sp = spectra(c);
    struct Row {
        double t0, s0, eps;
    };
    std::vector<Row> plan;
    for (const auto& [t, s] : c.all_directions())
        for (double e : eps_values(c, sp, t, s)) plan.push_back({t, s, e});

    const bool dirac = sp.f.dirac;
    const double nan = std::nan("");
    std::vector<std::vector<std::string>> rows(plan.size());
    parallel_for(static_cast<int>(plan.size()), [&](int i) {
        const Row& r = plan[i];
        const double t = r.eps * r.t0, s = r.eps * r.s0;
        const auto thp = theta(sp.p, t + s), thm = theta(sp.m, t + s);
        const auto X = combined_X(sp.p, sp.m, sp.o, t, s);
        const auto psi = relative_psi(sp.p, sp.m, sp.o, t, s);
        double tail = std::max({thp.tail, thm.tail, X.tail, psi.tail});
        double Y = nan, phi = nan;
        if (dirac) {
            const auto y = combined_Y(sp.p, sp.m, sp.o, t, s);
            const auto f = relative_phi(sp.p, sp.m, sp.o, t, s);
            Y = y.value;
            phi = f.value;
            tail = std::max({tail, y.tail, f.tail});
        }
        rows[i] = {format_double(t),       format_double(s),     format_double(thp.value), format_double(thm.value),
                   format_double(X.value), format_double(Y),     format_double(psi.value), format_double(phi),
                   format_double(tail),    format_double(r.t0),  format_double(r.s0),      format_double(r.eps)};
    });
    CsvTable out = make_table("traces/1", c.hash,
                              {"t", "s", "theta_plus", "theta_minus", "X", "Y", "Psi", "Phi", "tailbound", "t0", "s0", "eps"});
    add_meta(out, sp);
    for (auto& r : rows) out.add_row(std::move(r));
    return out;
}

// ---------------------------------------------------------------- coeffs

CsvTable coeffs_table(const RunConfig& c)
{
    const OperatorPair f = build_pair(c);
    const CoeffOptions opt = coeff_options(c);
    const auto dirs = c.all_directions();
    std::vector<std::vector<CoefficientReport>> per(dirs.size());
    parallel_for(static_cast<int>(dirs.size()), [&](int i) {
        const auto [t, s] = dirs[i];
        auto& out = per[i];
        auto push = [&](const CoeffPair& p) {
            out.push_back(p.k0);
            if (c.k_max >= 1) out.push_back(p.k1);
        };
        push(f.dirac ? c_coeffs(f.manifold, f.plus, f.minus, t, s, opt) : b_coeffs(f.manifold, f.plus, f.minus, t, s, opt));
        push(psi_coeffs(f.manifold, f.plus, f.minus, t, s, opt));
        if (f.dirac) push(phi_coeffs(f.manifold, f.plus, f.minus, t, s, opt));
    });

    CsvTable out = make_table("coeffs/1", c.hash, {"t", "s", "label", "value", "method", "imag_residual", "terms"});
    out.meta.emplace_back("fixture", f.name);
    out.meta.emplace_back("w_block", c.w_block);
    for (std::size_t i = 0; i < dirs.size(); ++i)
        for (const auto& r : per[i])
            out.add_row({format_double(dirs[i].first), format_double(dirs[i].second), r.label, format_double(r.value),
                         r.method, format_double(r.imag_residual), terms_cell(r.terms)});

    // (t, s)-independent heat trace coefficients of each operator
    const double nan = std::nan("");
    auto classical = [&](const std::string& side, const OperatorGeometry& g) {
        const auto a = classical_A(f.manifold, g);
        out.add_row({format_double(nan), format_double(nan), "A0" + side, format_double(a.A0), "classical", "0", ""});
        if (c.k_max >= 1)
            out.add_row({format_double(nan), format_double(nan), "A1" + side, format_double(a.A1), "classical", "0", ""});
        if (f.dirac) {
            const auto h = dirac_H(f.manifold, g);
            out.add_row({format_double(nan), format_double(nan), "H0" + side, format_double(h.H0), "classical", "0", ""});
            if (c.k_max >= 1)
                out.add_row({format_double(nan), format_double(nan), "H1" + side, format_double(h.H1), "classical", "0", ""});
        }
    };
    classical("+", f.plus);
    classical("-", f.minus);
    return out;
}

// ---------------------------------------------------------------- fit

FitOutcome fit_report(const RunConfig& c, const CsvTable& tr)
{
    for (const char* col : {"t0", "s0", "eps", "X", "Y", "Psi", "Phi"})
        if (!tr.has(col)) throw PreconditionError(std::string("fit: trace file has no column '") + col + "'");
    const int n = std::stoi(tr.meta_value("dim", "1"));
    const bool dirac = tr.meta_value("dirac", "0") == "1";

    // rows grouped by direction, in order of first appearance
    std::vector<std::pair<double, double>> dirs;
    std::map<std::pair<double, double>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < tr.rows.size(); ++r) {
        const auto key = std::make_pair(tr.number(r, "t0"), tr.number(r, "s0"));
        if (!groups.count(key)) dirs.push_back(key);
        groups[key].push_back(r);
    }
    if (dirs.empty()) throw PreconditionError("fit: trace file has no rows");

    const OperatorPair f = build_pair(c);
    if (f.dirac != dirac) throw PreconditionError("fit: trace file and config disagree on the operator type");
    const CoeffOptions copt = coeff_options(c);
    FitOptions fopt;
    fopt.k_max = c.k_max;
    const double tol = c.fit_tolerance;

    struct Series {
        std::string column, label;
        FitKind kind;
    };
    std::vector<Series> series = {{dirac ? "Y" : "X", dirac ? "C" : "B", dirac ? FitKind::Y : FitKind::X},
                                  {"Psi", "Psi", FitKind::X}};
    if (dirac) series.push_back({"Phi", "Phi", FitKind::Y});

    std::vector<ojson> entries(dirs.size());
    std::vector<int> agree(dirs.size(), 1);
    parallel_for(static_cast<int>(dirs.size()), [&](int d) {
        const auto [t0, s0] = dirs[d];
        std::vector<std::size_t> rows = groups.at(dirs[d]);
        std::sort(rows.begin(), rows.end(), [&](auto a, auto b) { return tr.number(a, "eps") < tr.number(b, "eps"); });
        std::vector<double> eps;
        for (auto r : rows) eps.push_back(tr.number(r, "eps"));
        if (eps.size() < static_cast<std::size_t>(c.k_max + 1 + fopt.extra_terms))
            throw PreconditionError("fit: direction (" + format_double(t0) + ", " + format_double(s0) + ") has " +
                                    std::to_string(eps.size()) + " eps points, need " +
                                    std::to_string(c.k_max + 1 + fopt.extra_terms));
        ojson e;
        e["t"] = t0;
        e["s"] = s0;
        e["eps_lo"] = eps.front();
        e["eps_hi"] = eps.back();
        e["points"] = eps.size();
        ojson fits = ojson::array();
        for (const auto& sr : series) {
            std::vector<double> v;
            for (auto r : rows) v.push_back(tr.number(r, sr.column));
            const AsymFit fit = epsilon_fit(eps, v, n, sr.kind, fopt);
            CoeffPair geo;
            if (sr.column == "Psi") geo = psi_coeffs(f.manifold, f.plus, f.minus, t0, s0, copt);
            else if (sr.column == "Phi") geo = phi_coeffs(f.manifold, f.plus, f.minus, t0, s0, copt);
            else geo = dirac ? c_coeffs(f.manifold, f.plus, f.minus, t0, s0, copt)
                             : b_coeffs(f.manifold, f.plus, f.minus, t0, s0, copt);
            ojson fe;
            fe["trace"] = sr.column;
            fe["condition"] = fit.condition;
            fe["residual_norm"] = fit.residual_norm;
            fe["warnings"] = fit.warnings;
            ojson cs = ojson::array();
            for (int k = 0; k <= c.k_max; ++k) {
                const double g = k == 0 ? geo.k0.value : geo.k1.value;
                // absolute floor: coefficients that vanish identically are compared on the scale of the leading one
                const double floor = tol * std::max(1.0, std::abs(geo.k0.value));
                const RelationCheck chk = compare(sr.label + std::to_string(k), fit.coeffs[k], g, tol, floor);
                ojson ce;
                ce["label"] = chk.name;
                ce["fit"] = fit.coeffs[k];
                ce["sigma"] = fit.sigma(k);
                ce["geometric"] = g;
                ce["error"] = chk.error;
                ce["pass"] = chk.pass;
                if (!chk.pass) agree[d] = 0;
                cs.push_back(ce);
            }
            fe["coefficients"] = cs;
            fits.push_back(fe);
        }
        e["fits"] = fits;
        entries[d] = e;
    });

    ojson j;
    j["heatrace"] = kVersion;
    j["schema"] = "fit/1";
    j["config_hash"] = c.hash;
    j["input_config_hash"] = tr.meta_value("config_hash");
    j["hash_match"] = tr.meta_value("config_hash") == c.hash;
    j["fixture"] = f.name;
    j["dim"] = n;
    j["dirac"] = dirac;
    j["tolerance"] = tol;
    j["directions"] = entries;
    const bool all = std::all_of(agree.begin(), agree.end(), [](int a) { return a != 0; });
    j["all_agree"] = all;
    return {j.dump(2) + "\n", all};
}

// ---------------------------------------------------------------- bogolyubov

namespace {

TraceGrid lattice_from_table(const CsvTable& tr, const std::string& column)
{
    if (!tr.has(column)) throw PreconditionError("bogolyubov: trace file has no column '" + column + "'");
    std::vector<double> ts;
    for (std::size_t r = 0; r < tr.rows.size(); ++r) ts.push_back(tr.number(r, "t"));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    const int N = static_cast<int>(ts.size());
    if (N < 2) throw PreconditionError("bogolyubov: trace lattice needs at least two times");
    TraceGrid g;
    g.times = Eigen::Map<const Eigen::VectorXd>(ts.data(), N);
    g.values = Eigen::MatrixXd::Constant(N, N, std::nan(""));
    auto index = [&](double v, std::size_t r) {
        const auto it = std::lower_bound(ts.begin(), ts.end(), v);
        if (it == ts.end() || *it != v)
            throw PreconditionError("bogolyubov: row " + std::to_string(r + 1) + " is off the t lattice (s = " +
                                    format_double(v) + ")");
        return static_cast<int>(it - ts.begin());
    };
    for (std::size_t r = 0; r < tr.rows.size(); ++r)
        g.values(index(tr.number(r, "t"), r), index(tr.number(r, "s"), r)) = tr.number(r, column);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            if (std::isnan(g.values(i, j)))
                throw PreconditionError("bogolyubov: lattice point (" + format_double(ts[i]) + ", " +
                                        format_double(ts[j]) + ") missing from the trace file");
    return g;
}

} // namespace

CsvTable bogolyubov_table(const RunConfig& c, const CsvTable* lattice)
{
    const BogolyubovKind kind = c.bogolyubov_kind == "fermion" ? BogolyubovKind::fermion : BogolyubovKind::boson;
    const std::string column = kind == BogolyubovKind::boson ? "Psi" : "Phi";
    BogolyubovOptions opt;
    opt.step = c.bogolyubov_step;
    opt.tail_tol = c.bogolyubov_tail;
    const std::vector<double> betas = c.beta.empty() ? std::vector<double>{0.5, 1.0, 2.0} : c.beta;

    std::vector<BogolyubovValue> vals;
    std::string source;
    if (lattice) {
        vals = bogolyubov_scan(kind, surface_from_grid(lattice_from_table(*lattice, column), column), betas, opt);
        source = "lattice";
    } else {
        const Spectra sp = spectra(c);
        if (kind == BogolyubovKind::fermion && !sp.f.dirac)
            throw PreconditionError("bogolyubov: the fermionic invariant needs a Dirac pair");
        const auto surf = kind == BogolyubovKind::boson ? spectral_psi_surface(sp.p, sp.m, sp.o)
                                                        : spectral_phi_surface(sp.p, sp.m, sp.o);
        vals = bogolyubov_scan(kind, surf, betas, opt);
        source = "spectral";
    }
    CsvTable out = make_table("bogolyubov/1", c.hash,
                              {"beta", "B", "error", "quad_error", "tail", "interp_error", "t_lo", "t_hi", "nodes"});
    out.meta.emplace_back("kind", to_string(kind));
    out.meta.emplace_back("surface", source);
    for (const auto& v : vals)
        out.add_row({format_double(v.beta), format_double(v.value), format_double(v.error), format_double(v.quad_error),
                     format_double(v.tail), format_double(v.interp_error), format_double(v.t_lo),
                     format_double(v.t_hi), std::to_string(v.nodes)});
    return out;
}

// ---------------------------------------------------------------- synge

namespace {

MetricPatch make_patch(const std::string& name, double radius)
{
    const Eigen::Vector2d centre(0.0, 0.0);
    if (name == "flat") return MetricPatch::flat(2, radius);
    if (name == "sphere") return MetricPatch::sphere(centre, radius);
    return MetricPatch::wavy(centre, radius);
}

ojson report_json(const SyngeReport& r)
{
    ojson j;
    j["metric"] = r.metric;
    j["base"] = std::vector<double>(r.base.data(), r.base.data() + r.base.size());
    j["h"] = r.fd.h;
    ojson checks = ojson::array();
    for (const auto& c : r.checks) {
        ojson e;
        e["name"] = c.name;
        ojson m = ojson::array(), x = ojson::array();
        for (double v : c.measured) m.push_back(number(v));
        for (double v : c.expected) x.push_back(number(v));
        e["measured"] = m;
        e["expected"] = x;
        e["error"] = c.error;
        e["tolerance"] = c.tolerance;
        e["order"] = c.order;
        e["order_ok"] = c.order_ok;
        e["pass"] = c.pass;
        checks.push_back(e);
    }
    j["checks"] = checks;
    j["flags"] = r.flags;
    j["pass"] = r.pass();
    return j;
}

// fixed connections for the transport limits: non-abelian on fiber 2
std::vector<Eigen::MatrixXcd> pauli_connection(const Eigen::VectorXd& x, bool second)
{
    const std::complex<double> i(0.0, 1.0);
    if (!second) return {i * 0.3 * x[1] * pauli(1), i * (0.2 * pauli(2) + 0.1 * x[0] * pauli(3))};
    return {i * 0.25 * pauli(3), i * 0.15 * x[0] * x[1] * pauli(1)};
}

} // namespace

SyngeOutcome synge_report(const RunConfig& c)
{
    const SyngeSpec& sp = c.synge;
    const Eigen::Vector2d base(sp.base[0], sp.base[1]);
    if (base.norm() > 0.5 * sp.radius) throw ConfigError("/synge/base", "must lie within half the patch radius");
    FdOptions fd;
    fd.h = sp.h;
    fd.tol = sp.tolerance;
    const MetricPatch g = make_patch(sp.metric, sp.radius), h = make_patch(sp.second_metric, sp.radius);

    std::vector<SyngeReport> reports(3);
    std::vector<std::string> names = {"coincidence", "two_metric", "transport"};
    parallel_for(sp.transport ? 3 : 2, [&](int i) {
        if (i == 0) reports[0] = coincidence_suite(g, base, fd);
        if (i == 1) reports[1] = two_metric_tensors(g, h, base, fd).report;
        if (i == 2)
            reports[2] = transport_suite(
                g, [](const Eigen::VectorXd& x) { return pauli_connection(x, false); }, h,
                [](const Eigen::VectorXd& x) { return pauli_connection(x, true); }, base, fd);
    });
    if (!sp.transport) {
        reports.pop_back();
        names.pop_back();
    }

    ojson j;
    j["heatrace"] = kVersion;
    j["schema"] = "synge/1";
    j["config_hash"] = c.hash;
    bool pass = true;
    ojson suites;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        suites[names[i]] = report_json(reports[i]);
        pass = pass && reports[i].pass();
    }
    j["suites"] = suites;

    const Eigen::Vector2d x = base + 0.1 * sp.radius * Eigen::Vector2d(0.6, 0.8);
    const RecoveryResult rec = metric_recovery(g, x, base);
    ojson r;
    r["x"] = {x[0], x[1]};
    r["error"] = rec.error;
    r["series_ratio"] = rec.series_ratio;
    r["series_terms"] = rec.series_terms;
    r["gamma_condition"] = rec.gamma_condition;
    r["tolerance"] = sp.tolerance;
    r["pass"] = rec.error < sp.tolerance;
    pass = pass && rec.error < sp.tolerance;
    j["metric_recovery"] = r;
    j["pass"] = pass;
    return {j.dump(2) + "\n", pass};
}

// ---------------------------------------------------------------- verify

namespace {

void push(std::vector<VerifyLine>& out, const std::string& suite, const std::string& name, double err, double tol)
{
    out.push_back({suite, name, err <= tol, err, tol});
}

void verify_laplace(std::vector<VerifyLine>& out)
{
    std::vector<double> eps;
    for (int i = 0; i < 7; ++i) eps.push_back(1e-3 * std::pow(10.0, i / 3.0));
    for (const auto& f : laplace_fixtures()) {
        const auto r = oracle_convergence(f, eps);
        // slope of |F - F0 - eps F1 - eps^2 F2| against eps is at least 2.7
        out.push_back({"laplace", f.name + " quadrature residual slope", r.pass, r.slope, 2.7});
        const auto a = morse_expansion(f.data, 2), w = morse_expansion_wick(f.data, 2);
        push(out, "laplace", f.name + " closed form vs Wick", std::abs(*a.F2 - *w.F2) / std::max(1.0, std::abs(*w.F2)),
             1e-12);
    }
    Eigen::MatrixXd G(2, 2);
    G << 1.3, 0.4, 0.4, 0.9;
    const GaussianModel m(G);
    for (int k = 1; k <= 3; ++k)
        push(out, "laplace", "Hermite orthogonality k=" + std::to_string(k),
             (hermite_orthogonality(m, k) - hermite_orthogonality_expected(m, k)).cwiseAbs().maxCoeff(), 1e-12);
}

void verify_synge(std::vector<VerifyLine>& out)
{
    const Eigen::Vector2d base(0.2, 0.15);
    for (const std::string name : {"flat", "sphere", "wavy"}) {
        const auto r = coincidence_suite(make_patch(name, 0.8), base);
        for (const auto& c : r.checks) out.push_back({"synge", name + " " + c.name, c.pass, c.error, c.tolerance});
    }
    const auto tm = two_metric_tensors(make_patch("sphere", 0.8), make_patch("wavy", 0.8), base);
    for (const auto& c : tm.report.checks) out.push_back({"synge", "sphere/wavy " + c.name, c.pass, c.error, c.tolerance});
    const auto rec = metric_recovery(make_patch("wavy", 0.8), base + Eigen::Vector2d(0.048, 0.064), base);
    push(out, "synge", "wavy metric recovery", rec.error, 1e-6);
}

void verify_spectral(std::vector<VerifyLine>& out, const RunConfig& c)
{
    const double tol = c.fit_tolerance;
    for (const std::string name : {"equal_laplace", "equal_dirac"}) {
        const Spectra sp = spectra(make_fixture(name), 1e-8);
        double worst = 0.0;
        for (double t : {0.05, 0.3, 1.0})
            for (double s : {0.05, 0.3, 1.0}) {
                worst = std::max(worst, std::abs(relative_psi(sp.p, sp.m, sp.o, t, s).value));
                if (sp.f.dirac) worst = std::max(worst, std::abs(relative_phi(sp.p, sp.m, sp.o, t, s).value));
            }
        push(out, "spectral", name + " relative invariants vanish", worst, 1e-10);
    }
    {
        const Spectra sp = spectra(make_fixture("shifted_laplace"), 1e-8);
        double worst = 0.0;
        for (double t : {0.1, 0.5, 1.0})
            for (double s : {0.1, 0.5, 1.0}) {
                const double x = combined_X(sp.p, sp.m, sp.o, t, s).value;
                const double e = std::exp(-t * kShiftMass * kShiftMass) * theta(sp.m, t + s).value;
                worst = std::max(worst, std::abs(x - e) / std::abs(e));
            }
        push(out, "spectral", "shifted_laplace X = exp(-t m^2) Theta-(t+s)", worst, 1e-10);
    }
    const std::vector<std::string> fits = {"two_scale", "variable_metric", "dirac_twist", "dirac_variable"};
    std::vector<std::vector<VerifyLine>> per(fits.size());
    parallel_for(static_cast<int>(fits.size()), [&](int i) {
        const Spectra sp = spectra(make_fixture(fits[i]), 1e-8);
        const auto& f = sp.f;
        const double t = 1.0, s = 1.0;
        const auto w = safe_epsilon_window(sp.p, sp.m, t, s, 1e-8);
        const auto eps = log_grid(w.first, w.second, 12);
        std::vector<double> v;
        for (double e : eps)
            v.push_back(f.dirac ? combined_Y(sp.p, sp.m, sp.o, e * t, e * s).value
                                : combined_X(sp.p, sp.m, sp.o, e * t, e * s).value);
        const auto fit = epsilon_fit(eps, v, 1, f.dirac ? FitKind::Y : FitKind::X);
        const auto geo = f.dirac ? c_coeffs(f.manifold, f.plus, f.minus, t, s) : b_coeffs(f.manifold, f.plus, f.minus, t, s);
        const std::string lab = f.dirac ? "C" : "B";
        push(per[i], "spectral", fits[i] + " fitted " + lab + "0 vs geometric",
             std::abs(fit.coeffs[0] - geo.k0.value) / std::abs(geo.k0.value), tol);
        push(per[i], "spectral", fits[i] + " fitted " + lab + "1 vs geometric",
             std::abs(fit.coeffs[1] - geo.k1.value) / std::abs(geo.k1.value), tol);
    });
    for (auto& p : per) out.insert(out.end(), p.begin(), p.end());

    for (auto tag : {KernelTag::boson, KernelTag::fermion, KernelTag::zero}) {
        double worst = 0.0;
        for (int i = 0; i <= 20; ++i) {
            const double t = 0.05 * std::pow(40.0, i / 20.0);
            const double a = h_kernel_series(tag, t).value, b = h_kernel_pv(tag, t).value;
            worst = std::max(worst, std::abs(a - b) / std::abs(a));
        }
        push(out, "spectral", "h_" + to_string(tag) + " series vs principal value", worst, 1e-8);
    }
}

} // namespace

std::vector<VerifyLine> verify_suite(const std::string& suite, const RunConfig& c)
{
    if (suite != "all" && suite != "laplace" && suite != "synge" && suite != "spectral")
        throw ConfigError("verify", "unknown suite '" + suite + "' (all, laplace, synge, spectral)");
    std::vector<VerifyLine> out;
    if (suite == "all" || suite == "laplace") verify_laplace(out);
    if (suite == "all" || suite == "synge") verify_synge(out);
    if (suite == "all" || suite == "spectral") verify_spectral(out, c);
    return out;
}

// ---------------------------------------------------------------- run

namespace {

std::string join(const std::string& dir, const std::string& file) { return (std::filesystem::path(dir) / file).string(); }

} // namespace

RunResult run(const std::string& task, RunConfig c, const RunOptions& o, std::ostream& log)
{
    const std::string dir = o.out_dir.empty() ? c.out_dir : o.out_dir;
    set_default_threads(resolve_threads(o.threads ? o.threads : c.threads));
    const bool gnuplot = o.emit_gnuplot || c.emit_gnuplot;
    RunResult res;
    auto emit = [&](const std::string& file, const std::string& text) {
        const std::string p = join(dir, file);
        write_text(p, text);
        res.artifacts.push_back(p);
        log << "wrote " << p << '\n';
    };

    if (task == "traces") {
        if (o.tolerance) c.tail_tolerance = *o.tolerance;
        const CsvTable t = traces_table(c);
        emit("traces.csv", to_csv(t));
        if (gnuplot) emit("traces.gp", gnuplot_script("traces.csv", t, "eps", {"X", "Y", "Psi", "Phi"}, true));
    } else if (task == "coeffs") {
        if (o.tolerance) c.consistency_tolerance = *o.tolerance;
        const CsvTable t = coeffs_table(c);
        emit("coeffs.csv", to_csv(t));
        if (gnuplot) emit("coeffs.gp", gnuplot_script("coeffs.csv", t, "t", {"value"}));
    } else if (task == "fit") {
        if (o.tolerance) c.fit_tolerance = *o.tolerance;
        const std::string in = !o.input.empty() ? o.input : !c.fit_input.empty() ? c.fit_input : join(dir, "traces.csv");
        const FitOutcome f = fit_report(c, read_csv(in));
        emit("fit.json", f.json);
        log << (f.agree ? "fit agrees with the geometric coefficients\n" : "fit DISAGREES with the geometric coefficients\n");
        res.status = f.agree ? 0 : 1;
    } else if (task == "bogolyubov") {
        if (o.tolerance) c.bogolyubov_tail = *o.tolerance;
        const std::string in = !o.input.empty() ? o.input : c.bogolyubov_input;
        CsvTable t;
        if (in.empty()) {
            t = bogolyubov_table(c);
        } else {
            const CsvTable lattice = read_csv(in);
            t = bogolyubov_table(c, &lattice);
        }
        emit("bogolyubov.csv", to_csv(t));
        if (gnuplot) emit("bogolyubov.gp", gnuplot_script("bogolyubov.csv", t, "beta", {"B"}, true));
    } else if (task == "synge") {
        if (o.tolerance) c.synge.tolerance = *o.tolerance;
        const SyngeOutcome s = synge_report(c);
        emit("synge.json", s.json);
        res.status = s.pass ? 0 : 1;
    } else if (task == "verify") {
        if (o.tolerance) c.fit_tolerance = *o.tolerance;
        res.checks = verify_suite(o.suite, c);
        CsvTable t = make_table("verify/1", c.hash, {"suite", "name", "pass", "error", "tolerance"});
        int failed = 0;
        for (const auto& v : res.checks) {
            log << (v.pass ? "PASS " : "FAIL ") << v.suite << ": " << v.name << " (error " << std::setprecision(3)
                << v.error << ", tolerance " << v.tolerance << ")\n";
            failed += !v.pass;
            t.add_row({v.suite, v.name, v.pass ? "1" : "0", format_double(v.error), format_double(v.tolerance)});
        }
        log << res.checks.size() - failed << "/" << res.checks.size() << " checks passed\n";
        emit("verify.csv", to_csv(t));
        res.status = failed ? 1 : 0;
    } else {
        throw ConfigError("task", "unknown task '" + task + "'");
    }
    return res;
}

} // namespace heatrace
