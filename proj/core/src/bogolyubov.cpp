#include "heatrace/bogolyubov.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "heatrace/errors.hpp"
#include "heatrace/parallel.hpp"

namespace heatrace {

using boost::math::quadrature::gauss_kronrod;

namespace {
constexpr double kZeroMode = 1e-9;   // eigenvalues of L (or D^2) below this count as zero modes
}

std::string to_string(KernelTag k)
{
    switch (k) {
    case KernelTag::boson: return "b";
    case KernelTag::fermion: return "f";
    case KernelTag::zero: return "0";
    }
    return "?";
}

KernelTag kernel_from_string(const std::string& s)
{
    if (s == "b" || s == "boson") return KernelTag::boson;
    if (s == "f" || s == "fermion") return KernelTag::fermion;
    if (s == "0" || s == "zero") return KernelTag::zero;
    throw DomainError("unknown kernel '" + s + "' (expected b, f or 0)");
}

std::string to_string(BogolyubovKind k) { return k == BogolyubovKind::boson ? "boson" : "fermion"; }

// ---- kernels ----

KernelValue h_kernel_series(KernelTag tag, double t, const KernelOptions& opt)
{
    if (!(t > 0.0)) throw DomainError("h kernel needs t > 0");
    const int first = 1, stride = tag == KernelTag::zero ? 2 : 1;
    auto term = [&](int k) {
        const double c = (tag == KernelTag::fermion && k % 2 == 0) ? -k : k;
        return c * std::exp(-double(k) * k / (4.0 * t));
    };
    KernelValue v;
    double sum = 0.0;
    const double peak = std::sqrt(2.0 * t);
    int k = tag == KernelTag::zero ? 1 : first;
    for (;; k += stride) {
        sum += term(k);
        ++v.terms;
        const double next = std::abs(term(k + stride));
        if (k > peak && (next == 0.0 || next < opt.rel_tol * std::abs(sum))) {
            v.error = next;
            break;
        }
        if (v.terms >= opt.max_terms) {
            v.error = std::numeric_limits<double>::infinity();
            break;
        }
    }
    const double pre = 1.0 / (std::sqrt(4.0 * M_PI) * t * std::sqrt(t));
    v.value = pre * sum;
    v.error *= pre;
    return v;
}

KernelValue h_kernel_pv(KernelTag tag, double t, const KernelOptions& opt)
{
    if (!(t > 0.0)) throw DomainError("h kernel needs t > 0");
    auto q = [t](double p) { return p * std::exp(-t * p * p); };
    KernelValue v;
    v.route = KernelRoute::principal_value;
    double sum = 0.0, abs_sum = 0.0, err = 0.0;
    auto integrate = [&](const std::function<double(double)>& f, double a, double b) {
        double e = 0.0;
        const double r = gauss_kronrod<double, 61>::integrate(f, a, b, 10, opt.quad_tol, &e);
        sum += r;
        abs_sum += std::abs(r);
        err += e;
        ++v.terms;
        return r;
    };
    double w = M_PI, c0 = 0.0, dc = 0.0;
    switch (tag) {
    case KernelTag::fermion:
        c0 = M_PI;
        dc = 2.0 * M_PI;
        break;
    case KernelTag::boson:
        integrate([&](double p) { return p * std::cos(p / 2) / std::sin(p / 2) * std::exp(-t * p * p); }, 0.0, M_PI);
        c0 = 2.0 * M_PI;
        dc = 2.0 * M_PI;
        break;
    case KernelTag::zero:
        w = M_PI / 2.0;
        integrate([&](double p) { return p / std::sin(p) * std::exp(-t * p * p); }, 0.0, w);
        c0 = M_PI;
        dc = M_PI;
        break;
    }
    // folded pole intervals: the singular parts cancel between c + u and c - u
    for (int j = 0;; ++j) {
        const double c = c0 + j * dc;
        std::function<double(double)> g;
        if (tag == KernelTag::fermion)
            g = [&, c](double u) { return (q(c - u) - q(c + u)) / std::tan(u / 2); };
        else if (tag == KernelTag::boson)
            g = [&, c](double u) { return (q(c + u) - q(c - u)) / std::tan(u / 2); };
        else {
            const double sgn = (j % 2 == 0) ? -1.0 : 1.0;   // (-1)^{c/pi}
            g = [&, c, sgn](double u) { return sgn * (q(c + u) - q(c - u)) / std::sin(u); };
        }
        const double r = integrate(g, 0.0, w);
        const double gauss = std::exp(-t * (c - w) * (c - w));
        if (gauss * (c + w) < 1e-18 * std::max(std::abs(sum), 1e-300) || (gauss < 1e-300 && r == 0.0)) break;
        if (std::abs(r) < 1e-18 * std::abs(sum) && gauss < 1e-18) break;
        if (v.terms > 100000) throw ConvergenceError("h_kernel_pv: pole sum did not terminate");
    }
    v.value = sum / M_PI;
    v.error = (err + 4.0 * std::numeric_limits<double>::epsilon() * abs_sum) / M_PI;
    return v;
}

KernelValue h_kernel(KernelTag tag, double t, const KernelOptions& opt)
{
    KernelValue v = h_kernel_series(tag, t, opt);
    if (std::isfinite(v.error)) return v;
    KernelValue w = h_kernel_pv(tag, t, opt);
    w.switched = true;
    return w;
}

double occupation(KernelTag tag, double x)
{
    if (!(x > 0.0)) throw DomainError("occupation number needs x > 0 (zero mode?)");
    switch (tag) {
    case KernelTag::fermion: return 1.0 / (std::exp(x) + 1.0);
    case KernelTag::boson: return 1.0 / std::expm1(x);
    case KernelTag::zero: return 0.5 / std::sinh(x);
    }
    return 0.0;
}

// ---- surfaces ----

TraceSurface surface_from_function(std::function<double(double, double)> f, double lo, double hi, std::string name)
{
    TraceSurface s;
    s.name = std::move(name);
    s.lo = lo;
    s.hi = hi;
    s.table = [f](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::MatrixXd F(a.size(), b.size());
        for (int i = 0; i < a.size(); ++i)
            for (int j = 0; j < b.size(); ++j) F(i, j) = f(a[i], b[j]);
        return F;
    };
    return s;
}

namespace {

struct LogLattice {
    Eigen::VectorXd logt;
    Eigen::MatrixXd values;

    // cell index and fraction for one coordinate
    std::pair<int, double> locate(double t) const
    {
        const double u = std::log(t);
        const int n = static_cast<int>(logt.size());
        const double tol = 1e-12 * std::max(1.0, std::abs(logt[n - 1]));
        if (u < logt[0] - tol || u > logt[n - 1] + tol)
            throw DomainError("trace grid: argument " + std::to_string(t) + " outside the lattice");
        int i = static_cast<int>(std::upper_bound(logt.data(), logt.data() + n, u) - logt.data()) - 1;
        i = std::clamp(i, 0, n - 2);
        return {i, std::clamp((u - logt[i]) / (logt[i + 1] - logt[i]), 0.0, 1.0)};
    }

    Eigen::MatrixXd table(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
    {
        std::vector<std::pair<int, double>> la, lb;
        for (int i = 0; i < a.size(); ++i) la.push_back(locate(a[i]));
        for (int j = 0; j < b.size(); ++j) lb.push_back(locate(b[j]));
        Eigen::MatrixXd F(a.size(), b.size());
        for (int i = 0; i < a.size(); ++i)
            for (int j = 0; j < b.size(); ++j) {
                const auto [p, x] = la[i];
                const auto [q, y] = lb[j];
                F(i, j) = (1 - x) * (1 - y) * values(p, q) + x * (1 - y) * values(p + 1, q) +
                          (1 - x) * y * values(p, q + 1) + x * y * values(p + 1, q + 1);
            }
        return F;
    }
};

} // namespace

TraceSurface surface_from_grid(const TraceGrid& g, std::string name)
{
    const int n = static_cast<int>(g.times.size());
    if (n < 3) throw PreconditionError("trace grid needs at least 3 times");
    if (g.values.rows() != n || g.values.cols() != n) throw PreconditionError("trace grid values must be n x n");
    for (int i = 0; i < n; ++i) {
        if (!(g.times[i] > 0.0)) throw DomainError("trace grid times must be positive");
        if (i > 0 && !(g.times[i] > g.times[i - 1])) throw DomainError("trace grid times must be ascending");
    }
    auto fine = std::make_shared<LogLattice>();
    fine->logt = g.times.array().log();
    fine->values = g.values;
    // every other point, keeping the last one
    std::vector<int> keep;
    for (int i = 0; i < n; i += 2) keep.push_back(i);
    if (keep.back() != n - 1) keep.push_back(n - 1);
    auto coarse = std::make_shared<LogLattice>();
    coarse->logt.resize(keep.size());
    coarse->values.resize(keep.size(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        coarse->logt[i] = fine->logt[keep[i]];
        for (std::size_t j = 0; j < keep.size(); ++j) coarse->values(i, j) = g.values(keep[i], keep[j]);
    }
    TraceSurface s;
    s.name = std::move(name);
    s.lo = g.times[0];
    s.hi = g.times[n - 1];
    s.table = [fine](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return fine->table(a, b); };
    s.coarse = [coarse](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return coarse->table(a, b); };
    return s;
}

namespace {

// E(k, a) = w_k exp(-t_a lambda_k)
Eigen::MatrixXd heat_matrix(const Eigen::VectorXd& lambda, const Eigen::VectorXd& t, const Eigen::VectorXd& w)
{
    Eigen::MatrixXd E(lambda.size(), t.size());
    for (int a = 0; a < t.size(); ++a) E.col(a) = w.cwiseProduct((-t[a] * lambda).array().exp().matrix());
    return E;
}

} // namespace

TraceSurface spectral_psi_surface(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o)
{
    TraceSurface s;
    s.name = "Psi";
    const Eigen::VectorXd lp = p.laplace_values(), lm = m.laplace_values();
    const Eigen::MatrixXd P = o.P;   // rows minus modes, columns plus modes
    s.table = [lp, lm, P](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const Eigen::VectorXd op = Eigen::VectorXd::Ones(lp.size()), om = Eigen::VectorXd::Ones(lm.size());
        const Eigen::MatrixXd Ea = heat_matrix(lp, a, op), Eb = heat_matrix(lp, b, op);
        const Eigen::MatrixXd Fa = heat_matrix(lm, a, om), Fb = heat_matrix(lm, b, om);
        // Theta+(a+b) + Theta-(a+b) - X(a,b) - X(b,a), X(t,s) = sum P_jk e^{-t l+_k} e^{-s l-_j}
        return Eigen::MatrixXd(Ea.transpose() * Eb + Fa.transpose() * Fb - Ea.transpose() * P.transpose() * Fb -
                               Fa.transpose() * P * Eb);
    };
    return s;
}

TraceSurface spectral_phi_surface(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o)
{
    if (!p.dirac || !m.dirac) throw PreconditionError("Phi needs Dirac decompositions");
    TraceSurface s;
    s.name = "Phi";
    const Eigen::VectorXd mp = p.values, mm = m.values;
    const Eigen::MatrixXd P = o.P;
    s.table = [mp, mm, P](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const Eigen::VectorXd lp = mp.cwiseAbs2(), lm = mm.cwiseAbs2();
        const Eigen::MatrixXd Ea = heat_matrix(lp, a, mp), Eb = heat_matrix(lp, b, mp);
        const Eigen::MatrixXd Fa = heat_matrix(lm, a, mm), Fb = heat_matrix(lm, b, mm);
        return Eigen::MatrixXd(Ea.transpose() * Eb + Fa.transpose() * Fb - Ea.transpose() * P.transpose() * Fb -
                               Fa.transpose() * P * Eb);
    };
    return s;
}

// ---- invariants ----

namespace {

struct QuadResult {
    double value = 0.0, coarse = 0.0, interp = 0.0, tail = 0.0, abs_mass = 0.0, ratio = 0.0;
    bool decays = true;
    int nodes = 0;
};

QuadResult quadrature(BogolyubovKind kind, const TraceSurface& surf, double beta, double t_lo, double t_hi,
                      double step, const KernelOptions& kopt)
{
    const double span = std::log(t_hi) - std::log(t_lo);
    int N = static_cast<int>(std::ceil(span / (step / 2.0)));
    if (N % 2) ++N;
    const double h = span / N;   // at most step / 2, nodes end exactly at t_hi
    Eigen::VectorXd t(N + 1), w1(N + 1), w2(N + 1);
    const KernelTag k1 = kind == BogolyubovKind::boson ? KernelTag::fermion : KernelTag::zero;
    const KernelTag k2 = kind == BogolyubovKind::boson ? KernelTag::boson : KernelTag::zero;
    for (int a = 0; a <= N; ++a) {
        t[a] = t_lo * std::exp(a * h);
        w1[a] = h_kernel(k1, t[a], kopt).value * t[a];
        w2[a] = k2 == k1 ? w1[a] : h_kernel(k2, t[a], kopt).value * t[a];
    }
    const Eigen::VectorXd args = beta * beta * t;
    const double pref = kind == BogolyubovKind::fermion ? 2.0 * beta * beta : 1.0;

    auto integrate = [&](const Eigen::MatrixXd& F, int stride) {
        double acc = 0.0;
        for (int a = 0; a <= N; a += stride) {
            const double ca = (a == 0 || a == N) ? 0.5 : 1.0;
            double row = 0.0;
            for (int b = 0; b <= N; b += stride) row += ((b == 0 || b == N) ? 0.5 : 1.0) * F(a, b) * w2[b];
            acc += ca * w1[a] * row;
        }
        const double d = h * stride;
        return pref * acc * d * d;
    };

    QuadResult r;
    r.nodes = N + 1;
    const Eigen::MatrixXd F = surf.table(args, args);
    if (!F.allFinite()) throw DomainError("trace surface " + surf.name + " returned non-finite values");
    r.value = integrate(F, 1);
    r.coarse = integrate(F, 2);
    if (surf.coarse) r.interp = std::abs(r.value - integrate(surf.coarse(args, args), 1)) / 3.0;

    // tails past t_hi, from the decay of the last edge lines in both directions
    Eigen::MatrixXd M = pref * w1.asDiagonal() * F.cwiseAbs() * w2.asDiagonal();
    r.abs_mass = M.sum() * h * h;
    const double noise = 1e-14 * r.abs_mass;
    auto edge = [&](const Eigen::VectorXd& last, const Eigen::VectorXd& prev) {
        const double L = last.sum() * h, Lp = prev.sum() * h;
        if (L * h <= noise) return L * h;
        const double q = Lp > 0.0 ? L / Lp : 2.0;
        r.ratio = std::max(r.ratio, q);
        if (q >= 1.0) {
            r.decays = false;
            return std::numeric_limits<double>::infinity();
        }
        return h * L * q / (1.0 - q);
    };
    r.tail = edge(M.row(N).transpose(), M.row(N - 1).transpose()) + edge(M.col(N), M.col(N - 1));
    return r;
}

} // namespace

BogolyubovValue bogolyubov_invariant(BogolyubovKind kind, const TraceSurface& surf, double beta,
                                     const BogolyubovOptions& opt)
{
    if (!(beta > 0.0)) throw DomainError("bogolyubov: beta must be positive");
    if (!(opt.step > 0.0)) throw DomainError("bogolyubov: step must be positive");
    if (!surf.table) throw PreconditionError("bogolyubov: empty trace surface");
    BogolyubovValue out;
    out.beta = beta;
    const double b2 = beta * beta;
    out.t_lo = 1.0 / (4.0 * std::log(1.0 / opt.kernel_cut));
    if (surf.lo > b2 * out.t_lo * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "bogolyubov: trace surface " << surf.name << " starts at " << surf.lo << "; beta = " << beta
            << " needs arguments down to " << b2 * out.t_lo;
        throw PreconditionError(msg.str());
    }
    double t_hi = opt.t_max / b2;
    const bool bounded = std::isfinite(surf.hi);
    if (bounded) t_hi = std::min(t_hi, surf.hi / b2);
    if (!(t_hi > out.t_lo)) throw PreconditionError("bogolyubov: trace surface support below the kernel cutoff");

    for (int ext = 0;; ++ext) {
        const QuadResult q = quadrature(kind, surf, beta, out.t_lo, t_hi, opt.step, {});
        out.value = q.value;
        out.quad_error = std::abs(q.value - q.coarse);
        out.interp_error = q.interp;
        out.tail = q.tail;
        out.t_hi = t_hi;
        out.nodes = q.nodes;
        const double allowed = opt.tail_tol * std::abs(q.value) + 1e-14 * q.abs_mass;
        if (q.tail <= allowed) break;
        if (!q.decays && (!bounded || ext >= opt.max_extend))
            throw DomainError("bogolyubov: integrand does not decay at large times (zero mode in the spectrum?)");
        if (bounded) {
            std::ostringstream msg;
            const double nodes = q.ratio < 1.0 ? std::log(allowed / q.tail) / std::log(q.ratio) : 0.0;
            msg << "bogolyubov: trace surface " << surf.name << " ends at " << surf.hi << "; beta = " << beta
                << " needs arguments up to about " << surf.hi * std::exp(nodes * opt.step / 2.0);
            throw PreconditionError(msg.str());
        }
        if (ext >= opt.max_extend) {
            std::ostringstream msg;
            msg << "bogolyubov: tail " << q.tail << " still above " << allowed << " at t = " << t_hi;
            throw ConvergenceError(msg.str());
        }
        t_hi *= 4.0;
    }
    out.error = out.quad_error + out.tail + out.interp_error;
    return out;
}

std::vector<BogolyubovValue> bogolyubov_scan(BogolyubovKind kind, const TraceSurface& surf,
                                             const std::vector<double>& betas, const BogolyubovOptions& opt)
{
    std::vector<BogolyubovValue> out(betas.size());
    parallel_for(static_cast<int>(betas.size()),
                 [&](int i) { out[i] = bogolyubov_invariant(kind, surf, betas[i], opt); });
    return out;
}

double bogolyubov_direct(BogolyubovKind kind, const SpectralDecomposition& p, const SpectralDecomposition& m,
                         const Overlap& o, double beta)
{
    if (!(beta > 0.0)) throw DomainError("bogolyubov: beta must be positive");
    if (kind == BogolyubovKind::boson) {
        auto occ = [&](const SpectralDecomposition& d, KernelTag tag) {
            const Eigen::VectorXd l = d.laplace_values();
            Eigen::VectorXd v(l.size());
            for (int k = 0; k < l.size(); ++k) {
                if (l[k] < kZeroMode) throw DomainError("bogolyubov: zero mode in the spectrum");
                v[k] = occupation(tag, beta * std::sqrt(l[k]));
            }
            return v;
        };
        const Eigen::VectorXd fp = occ(p, KernelTag::fermion), gp = occ(p, KernelTag::boson);
        const Eigen::VectorXd fm = occ(m, KernelTag::fermion), gm = occ(m, KernelTag::boson);
        return fp.dot(gp) + fm.dot(gm) - gm.dot(o.P * fp) - fm.dot(o.P * gp);
    }
    if (!p.dirac || !m.dirac) throw PreconditionError("fermionic Bogolyubov invariant needs Dirac decompositions");
    auto amp = [&](const SpectralDecomposition& d) {
        Eigen::VectorXd v(d.values.size());
        for (int k = 0; k < v.size(); ++k) {
            const double mu = d.values[k];
            if (mu * mu < kZeroMode) throw DomainError("bogolyubov: zero mode in the spectrum");
            v[k] = mu * occupation(KernelTag::zero, beta * std::abs(mu));
        }
        return v;
    };
    const Eigen::VectorXd ap = amp(p), am = amp(m);
    return 2.0 * beta * beta * (ap.squaredNorm() + am.squaredNorm() - 2.0 * am.dot(o.P * ap));
}

} // namespace heatrace
