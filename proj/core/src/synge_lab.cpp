#include "heatrace/synge_lab.hpp"

#include <boost/numeric/odeint.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "heatrace/errors.hpp"
#include "heatrace/parallel.hpp"

namespace heatrace {

namespace odeint = boost::numeric::odeint;
using State = std::vector<double>;
using cd = std::complex<double>;

// ---- patches ----

MetricPatch::MetricPatch(int n, Fn f, Eigen::VectorXd center, double radius, std::string name)
    : n_(n), f_(std::move(f)), center_(std::move(center)), radius_(radius), name_(std::move(name))
{
    if (n < 1 || n > 2) throw DomainError("MetricPatch: dimension must be 1 or 2");
    if (center_.size() != n) throw PreconditionError("MetricPatch: center has wrong dimension");
    if (!(radius > 0.0)) throw DomainError("MetricPatch: radius must be positive");
}

MetricJet MetricPatch::jet(const Eigen::VectorXd& x) const
{
    MetricJet j = f_(x);
    Eigen::LLT<Eigen::MatrixXd> llt(j.g);
    if (llt.info() != Eigen::Success) throw GeometryError("MetricPatch " + name_ + ": metric not positive definite");
    return j;
}

bool MetricPatch::contains(const Eigen::VectorXd& x) const { return (x - center_).norm() <= radius_ * (1.0 + 1e-12); }

MetricPatch MetricPatch::flat(int n, double radius)
{
    auto f = [n](const Eigen::VectorXd&) {
        MetricJet j;
        j.g = Eigen::MatrixXd::Identity(n, n);
        j.dg.assign(n, Eigen::MatrixXd::Zero(n, n));
        j.ddg.assign(n, std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n)));
        return j;
    };
    return MetricPatch(n, f, Eigen::VectorXd::Zero(n), radius, "flat");
}

MetricPatch MetricPatch::line(std::function<ScalarJet(double)> c, double center, double radius, std::string name)
{
    auto f = [c](const Eigen::VectorXd& x) {
        const ScalarJet s = c(x[0]);
        MetricJet j;
        j.g = Eigen::MatrixXd::Constant(1, 1, s.f);
        j.dg = {Eigen::MatrixXd::Constant(1, 1, s.d[0])};
        j.ddg = {{Eigen::MatrixXd::Constant(1, 1, s.dd(0, 0))}};
        return j;
    };
    return MetricPatch(1, f, Eigen::VectorXd::Constant(1, center), radius, std::move(name));
}

MetricPatch MetricPatch::conformal(std::function<ScalarJet(const Eigen::VectorXd&)> u, Eigen::VectorXd center,
                                   double radius, std::string name)
{
    auto f = [u](const Eigen::VectorXd& x) {
        const ScalarJet s = u(x);
        const double e = std::exp(2.0 * s.f);
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
        MetricJet j;
        j.g = e * I;
        for (int k = 0; k < 2; ++k) {
            j.dg.push_back(2.0 * s.d[k] * e * I);
            std::vector<Eigen::MatrixXd> row;
            for (int l = 0; l < 2; ++l) row.push_back((4.0 * s.d[k] * s.d[l] + 2.0 * s.dd(k, l)) * e * I);
            j.ddg.push_back(row);
        }
        return j;
    };
    return MetricPatch(2, f, std::move(center), radius, std::move(name));
}

MetricPatch MetricPatch::sphere(Eigen::VectorXd center, double radius)
{
    auto u = [](const Eigen::VectorXd& x) {
        const double q = 1.0 + x.squaredNorm();
        ScalarJet s;
        s.f = std::log(2.0 / q);
        s.d = -2.0 * x / q;
        s.dd = -2.0 / q * Eigen::MatrixXd::Identity(2, 2) + 4.0 * x * x.transpose() / (q * q);
        return s;
    };
    return conformal(u, std::move(center), radius, "sphere");
}

MetricPatch MetricPatch::wavy(Eigen::VectorXd center, double radius)
{
    auto u = [](const Eigen::VectorXd& x) {
        const double a = x[0], b = x[1];
        ScalarJet s;
        s.f = 0.1 * std::sin(a) * std::cos(0.7 * b) + 0.05 * a * b;
        s.d.resize(2);
        s.d << 0.1 * std::cos(a) * std::cos(0.7 * b) + 0.05 * b, -0.07 * std::sin(a) * std::sin(0.7 * b) + 0.05 * a;
        s.dd.resize(2, 2);
        const double xy = -0.07 * std::cos(a) * std::sin(0.7 * b) + 0.05;
        s.dd << -0.1 * std::sin(a) * std::cos(0.7 * b), xy, xy, -0.049 * std::sin(a) * std::cos(0.7 * b);
        return s;
    };
    return conformal(u, std::move(center), radius, "wavy");
}

// ---- Christoffel symbols and curvature ----

namespace {

void christoffel_core(const MetricJet& j, int n, Tens& G, Tens* dG)
{
    const Eigen::MatrixXd gi = j.g.inverse();
    G = Tens(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                double acc = 0.0;
                for (int m = 0; m < n; ++m) acc += gi(i, m) * (j.dg[a](m, b) + j.dg[b](m, a) - j.dg[m](a, b));
                G({i, a, b}) = 0.5 * acc;
            }
    if (!dG) return;
    *dG = Tens(n, 4);
    for (int l = 0; l < n; ++l) {
        const Eigen::MatrixXd dgi = -gi * j.dg[l] * gi;
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double acc = 0.0;
                    for (int m = 0; m < n; ++m) {
                        acc += dgi(i, m) * (j.dg[a](m, b) + j.dg[b](m, a) - j.dg[m](a, b));
                        acc += gi(i, m) * (j.ddg[l][a](m, b) + j.ddg[l][b](m, a) - j.ddg[l][m](a, b));
                    }
                    (*dG)({l, i, a, b}) = 0.5 * acc;
                }
    }
}

} // namespace

ChristoffelJet christoffel(const MetricPatch& p, const Eigen::VectorXd& x)
{
    const int n = p.dim();
    ChristoffelJet c;
    christoffel_core(p.jet(x), n, c.G, &c.dG);
    c.ddG = Tens(n, 5);
    const double d = 1e-4;
    for (int m = 0; m < n; ++m) {
        Eigen::VectorXd xp = x, xm = x;
        xp[m] += d;
        xm[m] -= d;
        Tens a, b, da, db;
        christoffel_core(p.jet(xp), n, a, &da);
        christoffel_core(p.jet(xm), n, b, &db);
        for (std::size_t f = 0; f < da.size(); ++f) {
            int idx[4];
            da.unravel(f, idx);
            c.ddG({m, idx[0], idx[1], idx[2], idx[3]}) = (da[f] - db[f]) / (2.0 * d);
        }
    }
    return c;
}

Tens riemann(const MetricPatch& p, const Eigen::VectorXd& x)
{
    const int n = p.dim();
    const ChristoffelJet c = christoffel(p, x);
    Tens R(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double acc = c.dG({k, i, l, j}) - c.dG({l, i, k, j});
                    for (int m = 0; m < n; ++m) acc += c.G({i, k, m}) * c.G({m, l, j}) - c.G({i, l, m}) * c.G({m, k, j});
                    R({i, j, k, l}) = acc;
                }
    return R;
}

Tens ricci(const MetricPatch& p, const Eigen::VectorXd& x)
{
    const int n = p.dim();
    const Tens R = riemann(p, x);
    Tens Ric(n, 2);
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l)
            for (int i = 0; i < n; ++i) Ric({j, l}) += R({i, j, i, l});
    return Ric;
}

// ---- geodesics ----

namespace {

// state: x, u, J (column-major n x n), Jdot
struct GeodesicSystem {
    const MetricPatch& p;
    int n;
    void operator()(const State& s, State& ds, double) const
    {
        Eigen::Map<const Eigen::VectorXd> x(s.data(), n), u(s.data() + n, n);
        Eigen::Map<const Eigen::MatrixXd> J(s.data() + 2 * n, n, n), Jd(s.data() + 2 * n + n * n, n, n);
        Tens G, dG;
        christoffel_core(p.jet(x), n, G, &dG);
        ds.assign(s.size(), 0.0);
        Eigen::Map<Eigen::VectorXd> dx(ds.data(), n), du(ds.data() + n, n);
        Eigen::Map<Eigen::MatrixXd> dJ(ds.data() + 2 * n, n, n), dJd(ds.data() + 2 * n + n * n, n, n);
        dx = u;
        dJ = Jd;
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    du[i] -= G({i, a, b}) * u[a] * u[b];
                    for (int c = 0; c < n; ++c) {
                        for (int l = 0; l < n; ++l) dJd(i, c) -= dG({l, i, a, b}) * J(l, c) * u[a] * u[b];
                        dJd(i, c) -= 2.0 * G({i, a, b}) * u[a] * Jd(b, c);
                    }
                }
    }
};

State shoot(const MetricPatch& p, const Eigen::VectorXd& xp, const Eigen::VectorXd& v, double tol)
{
    const int n = p.dim();
    State s(2 * n + 2 * n * n, 0.0);
    for (int i = 0; i < n; ++i) {
        s[i] = xp[i];
        s[n + i] = v[i];
        s[2 * n + n * n + i * n + i] = 1.0;   // Jdot(0) = I
    }
    if (v.norm() == 0.0) {
        for (int i = 0; i < n; ++i) s[2 * n + i * n + i] = 1.0;
        return s;
    }
    GeodesicSystem sys{p, n};
    auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_fehlberg78<State>());
    odeint::integrate_adaptive(stepper, sys, s, 0.0, 1.0, 0.05);
    return s;
}

} // namespace

GeodesicSolution geodesic_sigma(const MetricPatch& p, const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                                const GeodesicOptions& opt)
{
    const int n = p.dim();
    if (x.size() != n || xp.size() != n) throw PreconditionError("geodesic_sigma: point has wrong dimension");
    if (!p.contains(x) || !p.contains(xp)) throw DomainError("geodesic_sigma: point outside the patch radius");
    GeodesicSolution out;
    Eigen::VectorXd v = x - xp;
    State s;
    for (int it = 0; it <= opt.max_iter; ++it) {
        s = shoot(p, xp, v, opt.tol);
        Eigen::Map<const Eigen::VectorXd> xe(s.data(), n);
        Eigen::Map<const Eigen::MatrixXd> J(s.data() + 2 * n, n, n);
        const Eigen::VectorXd r = xe - x;
        out.history.push_back(r.norm());
        out.iterations = it;
        if (r.norm() <= opt.newton_tol) break;
        if (it == opt.max_iter) {
            std::ostringstream msg;
            msg << "geodesic_sigma: shooting did not converge; residual history";
            for (double h : out.history) msg << ' ' << h;
            throw ConvergenceError(msg.str());
        }
        v -= J.fullPivLu().solve(r);
    }
    const MetricJet jx = p.jet(x), jp = p.jet(xp);
    Eigen::Map<const Eigen::VectorXd> u(s.data() + n, n);
    Eigen::Map<const Eigen::MatrixXd> J(s.data() + 2 * n, n, n);
    out.xi = v;
    out.tangent = u;
    out.sigma = 0.5 * v.dot(jp.g * v);
    out.sigma_x = jx.g * u;
    out.sigma_xp = -jp.g * v;
    out.jacobi = J;
    out.mixed = -(J.transpose().fullPivLu().solve(jp.g));
    const double hj1 = std::abs(out.sigma - 0.5 * out.sigma_x.dot(jx.g.ldlt().solve(out.sigma_x)));
    const double hj2 = std::abs(out.sigma - 0.5 * out.sigma_xp.dot(jp.g.ldlt().solve(out.sigma_xp)));
    out.hj_residual = std::max(hj1, hj2);
    return out;
}

double vvm_zeta(const MetricPatch& p, const GeodesicSolution& s, const Eigen::VectorXd& x, const Eigen::VectorXd& xp)
{
    const double M = (-s.mixed).determinant();
    if (!(M > 0.0)) throw GeometryError("vvm_zeta: Van Vleck-Morette determinant not positive (conjugate point?)");
    return 0.5 * std::log(M / std::sqrt(p.g(x).determinant() * p.g(xp).determinant()));
}

// ---- finite differences ----

namespace {

// central weights for d^a/dx^a on offsets -2..2, all O(h^2)
const double kStencil[4][5] = {{0, 0, 1, 0, 0}, {0, -0.5, 0, 0.5, 0}, {0, 1, -2, 1, 0}, {-0.5, 1, 0, -1, 0.5}};

std::vector<std::vector<int>> all_tuples(int n, int k)
{
    std::vector<std::vector<int>> out;
    std::vector<int> t(k, 0);
    while (true) {
        out.push_back(t);
        int a = k - 1;
        while (a >= 0 && ++t[a] == n) t[a--] = 0;
        if (a < 0) break;
    }
    return out;
}

} // namespace

FdDerivative fd_derivative(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F, const Eigen::VectorXd& x0,
                           int k, const FdOptions& opt)
{
    const int n = static_cast<int>(x0.size());
    if (k < 0 || k > 3) throw DomainError("fd_derivative: order must be 0..3");
    if (!(opt.h > 0.0)) throw DomainError("fd_derivative: step must be positive");
    const double hmin = opt.h / 4.0;
    std::map<std::vector<int>, Eigen::VectorXd> cache;   // offsets in units of h/4
    auto eval = [&](const std::vector<int>& o) -> const Eigen::VectorXd& {
        auto it = cache.find(o);
        if (it != cache.end()) return it->second;
        Eigen::VectorXd x = x0;
        for (int i = 0; i < n; ++i) x[i] += hmin * o[i];
        return cache.emplace(o, F(x)).first->second;
    };
    // distinct multi-indices (sorted tuples)
    std::map<std::vector<int>, std::array<Eigen::VectorXd, 3>> raw;
    for (auto t : all_tuples(n, k)) {
        std::sort(t.begin(), t.end());
        if (raw.count(t)) continue;
        std::vector<int> alpha(n, 0);
        for (int i : t) ++alpha[i];
        std::array<Eigen::VectorXd, 3> levels;
        for (int lev = 0; lev < 3; ++lev) {
            const int unit = 4 >> lev;
            const double h = opt.h / (1 << lev);
            Eigen::VectorXd acc;
            std::vector<int> o(n, -2);
            while (true) {
                double w = 1.0;
                for (int i = 0; i < n; ++i) w *= kStencil[alpha[i]][o[i] + 2];
                if (w != 0.0) {
                    std::vector<int> off(n);
                    for (int i = 0; i < n; ++i) off[i] = o[i] * unit;
                    const Eigen::VectorXd& f = eval(off);
                    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(f.size());
                    acc += w * f;
                }
                int a = n - 1;
                while (a >= 0 && ++o[a] == 3) o[a--] = -2;
                if (a < 0) break;
            }
            levels[lev] = acc / std::pow(h, k);
        }
        raw.emplace(t, levels);
    }
    const int comps = static_cast<int>(raw.begin()->second[0].size());
    FdDerivative out;
    out.value.assign(comps, Tens(n, k));
    double worst_diff = 0.0, next_diff = 0.0;
    for (const auto& [t, L] : raw) {
        const Eigen::VectorXd r1a = (4.0 * L[1] - L[0]) / 3.0, r1b = (4.0 * L[2] - L[1]) / 3.0;
        const Eigen::VectorXd r2 = (16.0 * r1b - r1a) / 15.0;
        out.error = std::max(out.error, (r2 - r1b).cwiseAbs().maxCoeff());
        const Eigen::VectorXd d01 = (L[0] - L[1]).cwiseAbs(), d12 = (L[1] - L[2]).cwiseAbs();
        Eigen::Index c;
        const double m = d01.maxCoeff(&c);
        if (m > worst_diff) {
            worst_diff = m;
            next_diff = d12[c];
        }
        // scatter to every permutation of the tuple
        std::vector<int> perm = t;
        do {
            for (int q = 0; q < comps; ++q) out.value[q].at(perm.data()) = r2[q];
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    if (worst_diff > opt.noise_floor && next_diff > 0.0) {
        out.order = std::log2(worst_diff / next_diff);
        out.order_ok = out.order >= opt.min_order;
    }
    return out;
}

// ---- checks ----

namespace {

std::vector<double> flat_values(const Tens& t) { return t.data(); }

LimitCheck make_check(const std::string& name, const std::vector<double>& measured, const std::vector<double>& expected,
                      double tol, double order = 0.0, bool order_ok = true)
{
    if (measured.size() != expected.size()) throw PreconditionError("make_check: size mismatch for " + name);
    LimitCheck c;
    c.name = name;
    c.measured = measured;
    c.expected = expected;
    double scale = 1.0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
        c.error = std::max(c.error, std::abs(measured[i] - expected[i]));
        scale = std::max(scale, std::abs(expected[i]));
    }
    c.tolerance = tol * scale;
    c.order = order;
    c.order_ok = order_ok;
    c.pass = c.error <= c.tolerance;
    return c;
}

LimitCheck tens_check(const std::string& name, const Tens& m, const Tens& e, double tol, const FdDerivative* fd = nullptr)
{
    return make_check(name, flat_values(m), flat_values(e), tol, fd ? fd->order : 0.0, fd ? fd->order_ok : true);
}

void add(SyngeReport& r, LimitCheck c)
{
    if (!c.order_ok) {
        std::ostringstream msg;
        msg << c.name << ": observed convergence order " << c.order;
        r.flags.push_back(msg.str());
    }
    r.checks.push_back(std::move(c));
}

Tens matrix_tens(const Eigen::MatrixXd& m)
{
    Tens t(static_cast<int>(m.rows()), 2);
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t({i, j}) = m(i, j);
    return t;
}

// component q of a vector-valued derivative as a tensor
Tens comp(const FdDerivative& d, int q) { return d.value.at(q); }

// rank-(r+1) tensor from component block [first, first + n^r) of derivative d, derivative slots appended
Tens block(const FdDerivative& d, int first, int n, int r)
{
    const int k = d.value.empty() ? 0 : d.value[0].rank();
    Tens out(n, r + k);
    std::vector<int> idx(r + k);
    for (std::size_t f = 0; f < out.size(); ++f) {
        out.unravel(f, idx.data());
        int q = 0;
        for (int a = 0; a < r; ++a) q = q * n + idx[a];
        out[f] = d.value[first + q].at(idx.data() + r);
    }
    return out;
}

// ---- covariant derivatives of Taylor jets ----
// d[m] holds the rank (rank + m) array of partial derivatives: tensor slots first, then m symmetric
// derivative slots.
struct FieldJet {
    int n = 1;
    std::vector<bool> upper;
    std::vector<Tens> d;
    int rank() const { return static_cast<int>(upper.size()); }
    int order() const { return static_cast<int>(d.size()) - 1; }
};

FieldJet nabla(const FieldJet& T, const ChristoffelJet& c)
{
    const int n = T.n, r = T.rank();
    if (T.order() < 1) throw PreconditionError("nabla: jet too short");
    FieldJet out;
    out.n = n;
    out.upper = T.upper;
    out.upper.push_back(false);
    std::vector<int> idx, src;
    for (int m = 0; m < T.order(); ++m) {
        Tens R(n, r + 1 + m);
        idx.resize(r + 1 + m);
        for (std::size_t f = 0; f < R.size(); ++f) {
            R.unravel(f, idx.data());
            const int b = idx[r];
            // partial term: T^{(m+1)}[a][b, D]
            double acc = T.d[m + 1].at(idx.data());
            const int* D = idx.data() + r + 1;
            for (int s = 0; s < r; ++s) {
                for (unsigned mask = 0; mask < (1u << m); ++mask) {
                    std::vector<int> S, rest;
                    for (int q = 0; q < m; ++q) ((mask >> q) & 1u ? S : rest).push_back(D[q]);
                    if (S.size() > 2) throw PreconditionError("nabla: needs third derivatives of the connection");
                    src.assign(idx.begin(), idx.begin() + r);
                    src.insert(src.end(), rest.begin(), rest.end());
                    for (int cc = 0; cc < n; ++cc) {
                        // lower slot: -Gamma^c_{b a_s} T[..c..]; upper slot: +Gamma^{a_s}_{b c} T[..c..]
                        const int gi = T.upper[s] ? idx[s] : cc;
                        const int gk = T.upper[s] ? cc : idx[s];
                        double gam;
                        if (S.empty()) gam = c.G({gi, b, gk});
                        else if (S.size() == 1) gam = c.dG({S[0], gi, b, gk});
                        else gam = c.ddG({S[0], S[1], gi, b, gk});
                        src[s] = cc;
                        const double v = T.d[m - S.size()].at(src.data());
                        acc += (T.upper[s] ? 1.0 : -1.0) * gam * v;
                    }
                }
            }
            R[f] = acc;
        }
        out.d.push_back(R);
    }
    return out;
}

// partial jet of a scalar from its value and derivative arrays
FieldJet scalar_jet(int n, const std::vector<Tens>& partials)
{
    FieldJet j;
    j.n = n;
    j.d = partials;
    return j;
}

Tens sym_slots(const Tens& t, std::vector<int> slots) { return symmetrize(t, slots); }

} // namespace

bool SyngeReport::pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const LimitCheck& c) { return c.pass; });
}

SigmaSample sample_sigma(const MetricPatch& p, const Eigen::VectorXd& xp, double r, int count)
{
    const int n = p.dim();
    SigmaSample s;
    s.base = xp;
    for (int k = 0; k < count; ++k) {
        const double rad = r * (0.4 + 0.6 * (k + 1) / count);
        Eigen::VectorXd x = xp;
        if (n == 1) x[0] += (k % 2 ? -rad : rad);
        else {
            const double th = 2.0 * M_PI * k / count + 0.3;
            x[0] += rad * std::cos(th);
            x[1] += rad * std::sin(th);
        }
        s.stencil.push_back(x);
    }
    s.sigma.resize(count);
    s.zeta.resize(count);
    s.mixed.resize(count);
    std::vector<double> asym(count), hj(count), mf(count);
    parallel_for(count, [&](int k) {
        const auto& x = s.stencil[k];
        const GeodesicSolution a = geodesic_sigma(p, x, xp), b = geodesic_sigma(p, xp, x);
        s.sigma[k] = a.sigma;
        s.mixed[k] = a.mixed;
        s.zeta[k] = vvm_zeta(p, a, x, xp);
        asym[k] = std::abs(a.sigma - b.sigma);
        hj[k] = a.hj_residual;
        const Eigen::MatrixXd gam = a.mixed.inverse();   // gamma^{k'i}
        mf[k] = std::abs(a.sigma - 0.5 * a.sigma_xp.dot(gam * a.sigma_x));
    });
    s.max_asymmetry = *std::max_element(asym.begin(), asym.end());
    s.max_hj_residual = *std::max_element(hj.begin(), hj.end());
    s.max_metric_free = *std::max_element(mf.begin(), mf.end());
    s.min_sigma = *std::min_element(s.sigma.begin(), s.sigma.end());
    return s;
}

SyngeReport coincidence_suite(const MetricPatch& p, const Eigen::VectorXd& xp, const FdOptions& opt)
{
    const int n = p.dim();
    SyngeReport rep;
    rep.metric = p.name();
    rep.base = xp;
    rep.fd = opt;

    // x-dependence at fixed x': sigma_i, sigma_i', zeta, mixed
    auto Fx = [&](const Eigen::VectorXd& x) {
        const GeodesicSolution s = geodesic_sigma(p, x, xp);
        Eigen::VectorXd v(2 * n + 1 + n * n);
        v << s.sigma_x, s.sigma_xp, vvm_zeta(p, s, x, xp), Eigen::Map<const Eigen::VectorXd>(s.mixed.data(), n * n);
        return v;
    };
    // x'-dependence at fixed x = base
    auto Fxp = [&](const Eigen::VectorXd& y) {
        const GeodesicSolution s = geodesic_sigma(p, xp, y);
        Eigen::VectorXd v(2 * n + n * n);
        v << s.sigma_x, s.sigma_xp, Eigen::Map<const Eigen::VectorXd>(s.mixed.data(), n * n);
        return v;
    };
    const FdDerivative d1 = fd_derivative(Fx, xp, 1, opt), d2 = fd_derivative(Fx, xp, 2, opt),
                       d3 = fd_derivative(Fx, xp, 3, opt), e1 = fd_derivative(Fxp, xp, 1, opt);

    const MetricJet mj = p.jet(xp);
    const ChristoffelJet cj = christoffel(p, xp);
    const Tens g = matrix_tens(mj.g);
    const int zeta_c = 2 * n, mixed_c = 2 * n + 1;

    // [sigma_ij] = [sigma_i'j'] = -[sigma_ij'] = g
    add(rep, tens_check("sigma_ij", block(d1, 0, n, 1), g, opt.tol, &d1));
    add(rep, tens_check("sigma_i'j'", block(e1, n, n, 1), g, opt.tol, &e1));
    add(rep, tens_check("sigma_ij'", block(e1, 0, n, 1), (-1.0) * g, opt.tol, &e1));

    // [sigma_ijk] = 3 g_m(k Gamma^m_ij) = 3/2 g_(ij,k)
    Tens s3a(n, 3), s3b(n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                s3b({i, j, k}) = 1.5 * mj.dg[k](i, j);
                for (int m = 0; m < n; ++m) s3a({i, j, k}) += 3.0 * mj.g(m, k) * cj.G({m, i, j});
            }
    s3a = symmetrize(s3a);
    s3b = symmetrize(s3b);
    add(rep, tens_check("sigma_ijk", block(d2, 0, n, 1), s3a, opt.tol, &d2));
    add(rep, tens_check("sigma_ijk Christoffel vs metric derivative", s3a, s3b, 1e-12));

    // [sigma_ijkl] and [sigma_i'jkl]
    Tens s4(n, 4), sp4(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double a = 0.0, b = 0.0;
                    for (int m = 0; m < n; ++m) {
                        a += 4.0 * mj.g(m, l) * cj.dG({k, m, i, j});
                        b -= mj.g(m, l) * cj.dG({k, m, i, j});
                        for (int q = 0; q < n; ++q) {
                            a += 4.0 * mj.g(m, l) * cj.G({q, i, j}) * cj.G({m, k, q});
                            a += 3.0 * mj.g(q, m) * cj.G({q, i, j}) * cj.G({m, k, l});
                            b -= mj.g(m, l) * cj.G({q, i, j}) * cj.G({m, k, q});
                        }
                    }
                    s4({i, j, k, l}) = a;
                    sp4({i, j, k, l}) = b;
                }
    add(rep, tens_check("sigma_ijkl", block(d3, 0, n, 1), symmetrize(s4), opt.tol, &d3));
    // the closed form only fixes the totally symmetric part; the full tensor follows from
    // [sigma_{,jkl}]_{,i} = [sigma_{,ijkl}] + [sigma_{,i'jkl}]
    const Tens sp = block(d3, n, n, 1);
    add(rep, tens_check("sigma_(i'jkl)", symmetrize(sp), symmetrize(sp4), opt.tol, &d3));
    Tens ex(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) ex({i, j, k, l}) = 1.5 * mj.ddg[i][l](j, k);
    add(rep, tens_check("sigma_i'jkl", sp, sym_slots(ex, {1, 2, 3}) - symmetrize(s4), opt.tol, &d3));

    // zeta limits
    const Eigen::VectorXd F0 = Fx(xp);
    add(rep, make_check("zeta", {F0[zeta_c]}, {0.0}, opt.tol));
    add(rep, tens_check("zeta_i", comp(d1, zeta_c), Tens(n, 1), opt.tol, &d1));
    Tens hz = comp(d2, zeta_c);
    const Tens dz = comp(d1, zeta_c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) hz({i, j}) -= cj.G({k, i, j}) * dz({k});
    add(rep, tens_check("nabla nabla zeta", hz, (1.0 / 6.0) * ricci(p, xp), opt.tol, &d2));

    // [f]_{,j} = [f_{,j}] + [f_{,j'}] for f = sigma_{,ik'}; the diagonal value is -g
    Tens lhs(n, 3), rhs(n, 3);
    const Tens fx = block(d1, mixed_c, n, 2), fxp = block(e1, 2 * n, n, 2);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j) {
                // mixed is stored column-major: component i + n k holds sigma_{,i k'}
                lhs({i, k, j}) = -mj.dg[j](i, k);
                rhs({i, k, j}) = fx({k, i, j}) + fxp({k, i, j});
            }
    add(rep, tens_check("derivative exchange", rhs, lhs, opt.tol, &e1));

    // sampled invariants
    const SigmaSample smp = sample_sigma(p, xp, 0.5 * p.radius() * 0.5);
    add(rep, make_check("symmetry sigma(x,x') = sigma(x',x)", {smp.max_asymmetry}, {0.0}, 1e-10));
    add(rep, make_check("Hamilton-Jacobi", {smp.max_hj_residual}, {0.0}, 1e-8));
    add(rep, make_check("metric-free identity", {smp.max_metric_free}, {0.0}, 1e-8));
    LimitCheck pos = make_check("sigma >= 0", {smp.min_sigma}, {smp.min_sigma}, 0.0);
    pos.pass = smp.min_sigma >= 0.0;
    add(rep, pos);
    return rep;
}

TwoMetricTables two_metric_tensors(const MetricPatch& pg, const MetricPatch& ph, const Eigen::VectorXd& xp,
                                   const FdOptions& opt)
{
    const int n = pg.dim();
    if (ph.dim() != n) throw PreconditionError("two_metric_tensors: metrics differ in dimension");
    TwoMetricTables out;
    SyngeReport& rep = out.report;
    rep.metric = pg.name() + "/" + ph.name();
    rep.base = xp;
    rep.fd = opt;

    auto Fx = [&](const Eigen::VectorXd& x) {
        const GeodesicSolution s = geodesic_sigma(ph, x, xp);
        Eigen::VectorXd v(2 * n);
        v << s.sigma_x, s.sigma_xp;
        return v;
    };
    const FdDerivative d1 = fd_derivative(Fx, xp, 1, opt), d2 = fd_derivative(Fx, xp, 2, opt),
                       d3 = fd_derivative(Fx, xp, 3, opt);
    const ChristoffelJet cg = christoffel(pg, xp), ch = christoffel(ph, xp);

    // sigma^h partial jet, orders 0..4
    std::vector<Tens> P{Tens(n, 0), Tens(n, 1), block(d1, 0, n, 1), block(d2, 0, n, 1), block(d3, 0, n, 1)};
    FieldJet f = scalar_jet(n, P);
    FieldJet D1 = nabla(f, cg), D2 = nabla(D1, cg), D3 = nabla(D2, cg), D4 = nabla(D3, cg);
    out.S = {symmetrize(D2.d[0]), symmetrize(D3.d[0]), symmetrize(D4.d[0])};
    out.T = {D2.d[0], sym_slots(D3.d[0], {1, 2}), sym_slots(D4.d[0], {1, 2, 3})};
    // V: scalars sigma^h_{,j'}(x)
    Tens V2(n, 2), V3(n, 3), V4(n, 4);
    for (int j = 0; j < n; ++j) {
        std::vector<Tens> Q{Tens(n, 0), comp(d1, n + j), comp(d2, n + j), comp(d3, n + j)};
        FieldJet fj = scalar_jet(n, Q);
        FieldJet E1 = nabla(fj, cg), E2 = nabla(E1, cg), E3 = nabla(E2, cg);
        const Tens a = E1.d[0], b = symmetrize(E2.d[0]), c = symmetrize(E3.d[0]);
        for (int i = 0; i < n; ++i) {
            V2({j, i}) = a({i});
            for (int k = 0; k < n; ++k) {
                V3({j, i, k}) = b({i, k});
                for (int l = 0; l < n; ++l) V4({j, i, k, l}) = c({i, k, l});
            }
        }
    }
    out.V = {V2, V3, V4};

    // ingredients: h, W = Gamma_h - Gamma_g, nabla W, K = nabla h, nabla K
    const MetricJet hj = ph.jet(xp);
    FieldJet hjet;
    hjet.n = n;
    hjet.upper = {false, false};
    {
        Tens h0 = matrix_tens(hj.g), h1(n, 3), h2(n, 4);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    h1({i, j, k}) = hj.dg[k](i, j);
                    for (int l = 0; l < n; ++l) h2({i, j, k, l}) = hj.ddg[k][l](i, j);
                }
        hjet.d = {h0, h1, h2};
    }
    FieldJet Kj = nabla(hjet, cg);   // [j][k][i] = nabla_i h_jk
    FieldJet DKj = nabla(Kj, cg);    // [j][k][i][a] = nabla_a nabla_i h_jk
    FieldJet Wj;
    Wj.n = n;
    Wj.upper = {true, false, false};
    Wj.d = {ch.G - cg.G, Tens(n, 4)};
    for (std::size_t q = 0; q < Wj.d[1].size(); ++q) {
        int idx[4];
        Wj.d[1].unravel(q, idx);   // [m][j][k][l] = d_l W^m_jk
        Wj.d[1][q] = ch.dG({idx[3], idx[0], idx[1], idx[2]}) - cg.dG({idx[3], idx[0], idx[1], idx[2]});
    }
    FieldJet DWj = nabla(Wj, cg);   // [m][j][k][a] = nabla_a W^m_jk

    out.h = hjet.d[0];
    out.W = Wj.d[0];
    out.DW = DWj.d[0];
    // index order: K_ijk = nabla_i h_jk, DK_aijk = nabla_a K_ijk
    out.K = Tens(n, 3);
    out.DK = Tens(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                out.K({i, j, k}) = Kj.d[0]({j, k, i});
                for (int a = 0; a < n; ++a) out.DK({a, i, j, k}) = DKj.d[0]({j, k, i, a});
            }
    const Tens& h = out.h;
    const Tens& W = out.W;
    const Tens& K = out.K;
    auto dW = [&](int a, int m, int j, int k) { return out.DW({m, j, k, a}); };
    const Eigen::MatrixXd hinv = hj.g.inverse();

    Tens s3w(n, 3), s3k(n, 3), v3(n, 3), t4(n, 4), v4(n, 4), s4w(n, 4), s4k(n, 4);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                s3k({i, j, k}) = 1.5 * K({i, j, k});
                for (int m = 0; m < n; ++m) {
                    s3w({i, j, k}) += 3.0 * h({m, i}) * W({m, j, k});
                    v3({i, j, k}) -= h({m, i}) * W({m, k, j});
                }
                for (int l = 0; l < n; ++l) {
                    double t = 0.0, v = 0.0, sw = 0.0, sk = 2.0 * out.DK({i, j, k, l});
                    for (int m = 0; m < n; ++m) {
                        t += 3.0 * h({m, j}) * dW(k, m, l, i) + h({m, i}) * dW(j, m, k, l);
                        v -= h({m, i}) * dW(j, m, k, l);
                        sw += 4.0 * h({m, i}) * dW(j, m, k, l);
                        for (int q = 0; q < n; ++q) {
                            t += 3.0 * h({m, j}) * W({q, k, i}) * W({m, l, q}) + h({m, i}) * W({q, j, k}) * W({m, l, q}) +
                                 3.0 * h({q, m}) * W({q, j, k}) * W({m, l, i});
                            v -= h({m, i}) * W({q, j, k}) * W({m, l, q});
                            sw += 4.0 * h({m, i}) * W({q, j, k}) * W({m, l, q}) +
                                  3.0 * h({q, m}) * W({q, i, j}) * W({m, k, l});
                            sk += hinv(m, q) * (-K({i, j, m}) * K({k, l, q}) + K({q, i, j}) * K({k, l, m}) -
                                                0.25 * K({m, i, j}) * K({q, k, l}));
                        }
                    }
                    t4({i, j, k, l}) = t;
                    v4({i, j, k, l}) = v;
                    s4w({i, j, k, l}) = sw;
                    s4k({i, j, k, l}) = sk;
                }
            }
    out.S3_W = symmetrize(s3w);
    out.S3_K = symmetrize(s3k);
    out.V3 = sym_slots(v3, {1, 2});
    out.T4 = sym_slots(t4, {1, 2, 3});
    out.V4 = sym_slots(v4, {1, 2, 3});
    out.S4_W = symmetrize(s4w);
    out.S4_K = symmetrize(s4k);

    const double tol = opt.tol;
    add(rep, tens_check("S_ij = h", out.S[0], h, tol, &d1));
    add(rep, tens_check("T_ij = h", out.T[0], h, tol, &d1));
    add(rep, tens_check("V_ij = -h", out.V[0], (-1.0) * h, tol, &d1));
    add(rep, tens_check("S_ijk W-form", out.S[1], out.S3_W, tol, &d2));
    add(rep, tens_check("S_ijk K-form", out.S3_W, out.S3_K, 1e-10));
    add(rep, tens_check("T_ijk = S_ijk", out.T[1], out.S3_W, tol, &d2));
    add(rep, tens_check("V_ijk", out.V[1], out.V3, tol, &d2));
    add(rep, tens_check("T_ijkl", out.T[2], out.T4, tol, &d3));
    add(rep, tens_check("V_ijkl", out.V[2], out.V4, tol, &d3));
    add(rep, tens_check("S_ijkl W-form", out.S[2], out.S4_W, tol, &d3));
    add(rep, tens_check("S_ijkl K-form", out.S4_W, out.S4_K, 1e-8));
    return out;
}

// ---- parallel transport ----

namespace {

struct TransportSystem {
    const MetricPatch& p;
    const ConnectionFn& A;
    int n, N;
    void operator()(const State& s, State& ds, double) const
    {
        Eigen::Map<const Eigen::VectorXd> x(s.data(), n), u(s.data() + n, n);
        Tens G;
        christoffel_core(p.jet(x), n, G, nullptr);
        ds.assign(s.size(), 0.0);
        for (int i = 0; i < n; ++i) {
            ds[i] = u[i];
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) ds[n + i] -= G({i, a, b}) * u[a] * u[b];
        }
        const auto Ax = A(x);
        Eigen::MatrixXcd P(N, N), dP = Eigen::MatrixXcd::Zero(N, N);
        const double* pr = s.data() + 2 * n;
        for (int q = 0; q < N * N; ++q) P(q % N, q / N) = cd(pr[2 * q], pr[2 * q + 1]);
        for (int i = 0; i < n; ++i) dP -= u[i] * Ax[i] * P;
        double* dpr = ds.data() + 2 * n;
        for (int q = 0; q < N * N; ++q) {
            dpr[2 * q] = dP(q % N, q / N).real();
            dpr[2 * q + 1] = dP(q % N, q / N).imag();
        }
    }
};

Eigen::VectorXd flatten(const Eigen::MatrixXcd& P)
{
    const int N = static_cast<int>(P.rows());
    Eigen::VectorXd v(2 * N * N);
    for (int q = 0; q < N * N; ++q) {
        v[2 * q] = P(q % N, q / N).real();
        v[2 * q + 1] = P(q % N, q / N).imag();
    }
    return v;
}

// complex N x N from components [first, first + 2N^2) of a vector of tensors at multi-index idx
Eigen::MatrixXcd unflatten(const FdDerivative& d, const std::vector<int>& idx, int N)
{
    Eigen::MatrixXcd P(N, N);
    for (int q = 0; q < N * N; ++q)
        P(q % N, q / N) = cd(d.value[2 * q].at(idx.data()), d.value[2 * q + 1].at(idx.data()));
    return P;
}

std::vector<double> complex_values(const std::vector<Eigen::MatrixXcd>& ms)
{
    std::vector<double> v;
    for (const auto& m : ms)
        for (int q = 0; q < m.size(); ++q) {
            v.push_back(m.data()[q].real());
            v.push_back(m.data()[q].imag());
        }
    return v;
}

// d_k A_i by Richardson-extrapolated central differences, [k][i]
std::vector<std::vector<Eigen::MatrixXcd>> connection_derivative(const ConnectionFn& A, const Eigen::VectorXd& x, int n)
{
    std::vector<std::vector<Eigen::MatrixXcd>> out(n);
    const double h = 1e-3;
    for (int k = 0; k < n; ++k) {
        auto diff = [&](double step) {
            Eigen::VectorXd a = x, b = x;
            a[k] += step;
            b[k] -= step;
            auto Aa = A(a), Ab = A(b);
            std::vector<Eigen::MatrixXcd> d;
            for (int i = 0; i < n; ++i) d.push_back((Aa[i] - Ab[i]) / (2.0 * step));
            return d;
        };
        auto d1 = diff(h), d2 = diff(h / 2.0);
        for (int i = 0; i < n; ++i) out[k].push_back((4.0 * d2[i] - d1[i]) / 3.0);
    }
    return out;
}

} // namespace

Eigen::MatrixXcd parallel_transport(const MetricPatch& p, const ConnectionFn& A, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& xp, const GeodesicOptions& opt)
{
    const int n = p.dim();
    const GeodesicSolution g = geodesic_sigma(p, x, xp, opt);
    const auto A0 = A(xp);
    if (static_cast<int>(A0.size()) != n) throw PreconditionError("parallel_transport: connection has wrong dimension");
    const int N = static_cast<int>(A0[0].rows());
    State s(2 * n + 2 * N * N, 0.0);
    for (int i = 0; i < n; ++i) {
        s[i] = xp[i];
        s[n + i] = g.xi[i];
    }
    for (int a = 0; a < N; ++a) s[2 * n + 2 * (a * N + a)] = 1.0;
    if (g.xi.norm() > 0.0) {
        TransportSystem sys{p, A, n, N};
        auto stepper = odeint::make_controlled(opt.tol, opt.tol, odeint::runge_kutta_fehlberg78<State>());
        odeint::integrate_adaptive(stepper, sys, s, 0.0, 1.0, 0.05);
    }
    Eigen::MatrixXcd P(N, N);
    for (int q = 0; q < N * N; ++q) P(q % N, q / N) = cd(s[2 * n + 2 * q], s[2 * n + 2 * q + 1]);
    return P;
}

SyngeReport transport_suite(const MetricPatch& pg, const ConnectionFn& A, const MetricPatch& ph, const ConnectionFn& B,
                            const Eigen::VectorXd& xp, const FdOptions& opt)
{
    const int n = pg.dim();
    SyngeReport rep;
    rep.metric = pg.name() + "/" + ph.name();
    rep.base = xp;
    rep.fd = opt;
    const auto A0 = A(xp), B0 = B(xp);
    const int N = static_cast<int>(A0[0].rows());
    const auto dA = connection_derivative(A, xp, n), dB = connection_derivative(B, xp, n);
    const ChristoffelJet cg = christoffel(pg, xp);
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(N, N);

    // first and second covariant derivatives at coincidence from partial ones
    auto covariant = [&](const FdDerivative& f1, const FdDerivative& f2, std::vector<Eigen::MatrixXcd>& first,
                         std::vector<std::vector<Eigen::MatrixXcd>>& second) {
        first.assign(n, Eigen::MatrixXcd());
        second.assign(n, std::vector<Eigen::MatrixXcd>(n));
        std::vector<Eigen::MatrixXcd> dP(n);
        for (int i = 0; i < n; ++i) {
            dP[i] = unflatten(f1, {i}, N);
            first[i] = dP[i] + A0[i];
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Eigen::MatrixXcd v = unflatten(f2, {i, j}, N) + dA[i][j] + A0[j] * dP[i] + A0[i] * first[j];
                for (int m = 0; m < n; ++m) v -= cg.G({m, i, j}) * first[m];
                second[i][j] = v;
            }
    };

    {
        auto F = [&](const Eigen::VectorXd& x) { return flatten(parallel_transport(pg, A, x, xp)); };
        const FdDerivative f1 = fd_derivative(F, xp, 1, opt), f2 = fd_derivative(F, xp, 2, opt);
        std::vector<Eigen::MatrixXcd> first;
        std::vector<std::vector<Eigen::MatrixXcd>> second;
        covariant(f1, f2, first, second);
        std::vector<Eigen::MatrixXcd> zero(n, Eigen::MatrixXcd::Zero(N, N)), full, half_curv;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                full.push_back(second[i][j]);
                const Eigen::MatrixXcd R = dA[i][j] - dA[j][i] + A0[i] * A0[j] - A0[j] * A0[i];
                half_curv.push_back(0.5 * R);
            }
        add(rep, make_check("[nabla P] = 0", complex_values(first), complex_values(zero), opt.tol, f1.order,
                            f1.order_ok));
        add(rep, make_check("[nabla nabla P] = R/2", complex_values(full), complex_values(half_curv), opt.tol,
                            f2.order, f2.order_ok));
    }
    {
        // P_{h,B}: transported with B along h-geodesics, differentiated with nabla^{g,A}
        auto F = [&](const Eigen::VectorXd& x) { return flatten(parallel_transport(ph, B, x, xp)); };
        const FdDerivative f1 = fd_derivative(F, xp, 1, opt), f2 = fd_derivative(F, xp, 2, opt);
        std::vector<Eigen::MatrixXcd> first;
        std::vector<std::vector<Eigen::MatrixXcd>> second;
        covariant(f1, f2, first, second);
        std::vector<Eigen::MatrixXcd> C(n), minusC, sym2, expect2;
        for (int i = 0; i < n; ++i) {
            C[i] = B0[i] - A0[i];
            minusC.push_back(-C[i]);
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                sym2.push_back(0.5 * (second[i][j] + second[j][i]));
                // nabla_i C_j = d_i C_j + [A_i, C_j] - Gamma^m_ij C_m
                auto nC = [&](int a, int b) {
                    Eigen::MatrixXcd v = dB[a][b] - dA[a][b] + A0[a] * C[b] - C[b] * A0[a];
                    for (int m = 0; m < n; ++m) v -= cg.G({m, a, b}) * C[m];
                    return v;
                };
                expect2.push_back(-0.5 * (nC(i, j) + nC(j, i)) + 0.5 * (C[i] * C[j] + C[j] * C[i]));
            }
        (void)I;
        add(rep, make_check("[nabla P_hB] = -C", complex_values(first), complex_values(minusC), opt.tol, f1.order,
                            f1.order_ok));
        add(rep, make_check("[nabla_(i nabla_j) P_hB]", complex_values(sym2), complex_values(expect2), opt.tol,
                            f2.order, f2.order_ok));
    }
    return rep;
}

// ---- metric recovery ----

RecoveryResult metric_recovery(const MetricPatch& p, const Eigen::VectorXd& x, const Eigen::VectorXd& xp, double h)
{
    const int n = p.dim();
    const GeodesicSolution s = geodesic_sigma(p, x, xp);
    RecoveryResult r;
    const Eigen::MatrixXd& Mx = s.mixed;   // sigma_{,ik'}
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Mx);
    r.gamma_condition = svd.singularValues()[0] / svd.singularValues()[n - 1];
    if (r.gamma_condition > 1e8)
        throw ConsistencyError("metric_recovery: mixed derivative matrix ill-conditioned; move x closer to x' "
                               "(stencil radius below the conjugate distance)",
                               r.gamma_condition);
    const Eigen::MatrixXd gam = Mx.inverse();   // gamma(k', i)

    // sigma_{,k'l'} and sigma_{,k'l'i} by differencing the analytic sigma_{,k'} and sigma_{,ik'} in x'
    Eigen::MatrixXd Spp(n, n);
    std::vector<Eigen::MatrixXd> Sppx(n, Eigen::MatrixXd(n, n));   // [i](k', l')
    for (int l = 0; l < n; ++l) {
        auto diff = [&](double step, Eigen::VectorXd& dsp, Eigen::MatrixXd& dmix) {
            Eigen::VectorXd a = xp, b = xp;
            a[l] += step;
            b[l] -= step;
            const GeodesicSolution sa = geodesic_sigma(p, x, a), sb = geodesic_sigma(p, x, b);
            dsp = (sa.sigma_xp - sb.sigma_xp) / (2.0 * step);
            dmix = (sa.mixed - sb.mixed) / (2.0 * step);
        };
        Eigen::VectorXd s1, s2;
        Eigen::MatrixXd m1, m2;
        diff(h, s1, m1);
        diff(h / 2.0, s2, m2);
        const Eigen::VectorXd ds = (4.0 * s2 - s1) / 3.0;
        const Eigen::MatrixXd dm = (4.0 * m2 - m1) / 3.0;
        for (int k = 0; k < n; ++k) {
            Spp(k, l) = ds[k];
            for (int i = 0; i < n; ++i) Sppx[i](k, l) = dm(i, k);
        }
    }
    Spp = 0.5 * (Spp + Spp.transpose());
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) V += s.sigma_xp[j] * gam(j, i) * Sppx[i];
    const Eigen::MatrixXd Y = Spp - V;
    const Eigen::MatrixXd X = Y.inverse();
    r.ginv_recovered = gam.transpose() * Y * gam;
    r.g_recovered = Mx * X * Mx.transpose();
    r.g_true = p.g(x);
    r.ginv_true = r.g_true.inverse();
    r.error = std::max((r.ginv_recovered - r.ginv_true).norm() / r.ginv_true.norm(),
                       (r.g_recovered - r.g_true).norm() / r.g_true.norm());

    const Eigen::MatrixXd beta = Spp.inverse();
    const Eigen::MatrixXd bV = beta * V;
    r.series_ratio = bV.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::MatrixXd term = beta, sum = beta;
    r.series_terms = -1;
    for (int k = 1; k < 200; ++k) {
        if ((sum - X).norm() <= 1e-12 * X.norm()) {
            r.series_terms = k;
            break;
        }
        term = bV * term;
        sum += term;
        if (!sum.allFinite()) break;
    }
    return r;
}

} // namespace heatrace
