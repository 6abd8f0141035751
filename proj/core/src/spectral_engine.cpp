#include "heatrace/spectral_engine.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <random>
#include <sstream>

#include "heatrace/errors.hpp"

namespace heatrace {

namespace {

using cd = std::complex<double>;

// kron(D_axis, I_r) + blockdiag(A)
Eigen::MatrixXcd covariant_matrix(const Eigen::MatrixXcd& D, const EndoField& A, int r)
{
    const int P = static_cast<int>(D.rows());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(P * r, P * r);
    for (int p = 0; p < P; ++p)
        for (int q = 0; q < P; ++q) {
            const cd v = D(p, q);
            if (v == cd(0.0))
                continue;
            for (int a = 0; a < r; ++a) M(p * r + a, q * r + a) = v;
        }
    for (int p = 0; p < P; ++p) M.block(p * r, p * r, r, r) += A[p];
    return M;
}

Eigen::MatrixXcd block_diag(const EndoField& E)
{
    const int P = static_cast<int>(E.size()), r = static_cast<int>(E[0].rows());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(P * r, P * r);
    for (int p = 0; p < P; ++p) M.block(p * r, p * r, r, r) = E[p];
    return M;
}

// scale rows of fiber block p by f[p]
Eigen::VectorXd expand(const Eigen::VectorXd& f, int r)
{
    Eigen::VectorXd out(f.size() * r);
    for (int p = 0; p < f.size(); ++p) out.segment(p * r, r).setConstant(f[p]);
    return out;
}

double symmetrize_hermitian(Eigen::MatrixXcd& H)
{
    double nrm = std::max(H.norm(), 1e-300);
    Eigen::MatrixXcd h = 0.5 * (H + H.adjoint());
    double defect = (H - h).norm() / nrm;
    H = h;
    return defect;
}

double sqrt_det_lower(const Tens& ginv)
{
    const int n = ginv.dim();
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = ginv({i, j});
    return 1.0 / std::sqrt(m.determinant());
}

Eigen::VectorXd sqrt_det_field(const OperatorGeometry& g)
{
    const int P = g.ginv.points();
    Eigen::VectorXd out(P);
    for (int p = 0; p < P; ++p) out[p] = sqrt_det_lower(g.ginv.at(p));
    return out;
}

double weyl_density(int n) { return std::pow(4.0 * M_PI, -0.5 * n) / std::tgamma(0.5 * n); }

} // namespace

Eigen::MatrixXcd assemble_laplace(const ModelManifold& m, const OperatorGeometry& g, double* hermitian_defect)
{
    SpectralDiff sd(m);
    const int n = m.dim, r = g.fiber;
    Eigen::VectorXd sg = sqrt_det_field(g);
    Eigen::VectorXd fw = expand(sg.array().pow(-0.5).matrix(), r);   // g^{-1/4}
    std::vector<Eigen::MatrixXcd> B(n);
    for (int j = 0; j < n; ++j) B[j] = covariant_matrix(sd.matrix(j), g.conn[j], r) * fw.asDiagonal();
    Eigen::MatrixXcd H = block_diag(g.Q);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Eigen::VectorXd w = expand(sg.cwiseProduct(g.ginv.comp[i * n + j]), r);
            H.noalias() += B[i].adjoint() * (w.asDiagonal() * B[j]);
        }
    double defect = symmetrize_hermitian(H);
    if (hermitian_defect) *hermitian_defect = defect;
    if (defect > 1e-10) throw ConsistencyError("Laplace matrix is not Hermitian", defect);
    return H;
}

Eigen::MatrixXcd assemble_dirac(const ModelManifold& m, const OperatorGeometry& g, double* hermitian_defect)
{
    if (!g.dirac) throw PreconditionError("assemble_dirac: geometry has no Dirac data");
    SpectralDiff sd(m);
    const int n = m.dim, r = g.fiber, P = m.points();
    Eigen::VectorXd sg = sqrt_det_field(g);
    Eigen::VectorXd fp = expand(sg.array().sqrt().matrix(), r);      // g^{1/4}
    Eigen::VectorXd fm = expand(sg.array().pow(-0.5).matrix(), r);   // g^{-1/4}
    auto gam = dirac_gammas(g);
    const cd I1(0.0, 1.0);
    Eigen::MatrixXcd H = block_diag(g.dirac->S);
    for (int j = 0; j < n; ++j) {
        EndoField ig(P);
        for (int p = 0; p < P; ++p) ig[p] = I1 * gam[j][p];
        Eigen::MatrixXcd B = covariant_matrix(sd.matrix(j), g.conn[j], r) * fm.asDiagonal();
        H.noalias() += fp.asDiagonal() * (block_diag(ig) * B);
    }
    double defect = symmetrize_hermitian(H);
    if (hermitian_defect) *hermitian_defect = defect;
    if (defect > 1e-6) throw ConsistencyError("Dirac matrix far from Hermitian", defect);
    return H;
}

double dirac_square_residual(const ModelManifold& m, const OperatorGeometry& g)
{
    Eigen::MatrixXcd D = assemble_dirac(m, g);
    Eigen::MatrixXcd L = assemble_laplace(m, g);
    const int N = m.grid, r = g.fiber, P = m.points();
    const int kmax = std::max(2, N / 8);
    std::mt19937 rng(12345);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(P * r);
        for (int a = 0; a < r; ++a)
            for (int k0 = -kmax; k0 <= kmax; ++k0)
                for (int k1 = (m.dim == 2 ? -kmax : 0); k1 <= (m.dim == 2 ? kmax : 0); ++k1) {
                    cd c(nd(rng), nd(rng));
                    c /= 1.0 + k0 * k0 + k1 * k1;
                    for (int p = 0; p < P; ++p) {
                        double ph = 2.0 * M_PI * (k0 * (p % N) + k1 * (p / N)) / N;
                        v[p * r + a] += c * std::exp(cd(0.0, ph));
                    }
                }
        Eigen::VectorXcd a = D * (D * v), b = L * v;
        worst = std::max(worst, (a - b).norm() / std::max(b.norm(), 1e-300));
    }
    return worst;
}

double SpectralDecomposition::lowest() const
{
    if (values.size() == 0) throw PreconditionError("empty decomposition");
    return dirac ? values.cwiseAbs().minCoeff() : values[0];
}

SpectralDecomposition eigendecompose(const Eigen::MatrixXcd& H, const ModelManifold& m, int fiber, double weyl_a0,
                                     bool dirac, const SpectralOptions& opt)
{
    if (!(opt.trust_fraction > 0.0 && opt.trust_fraction <= 1.0))
        throw DomainError("trust_fraction must lie in (0, 1]");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.info() != Eigen::Success) {
        std::ostringstream os;
        os << "eigensolver did not converge (matrix size " << H.rows() << ", norm " << H.norm() << ")";
        throw ConvergenceError(os.str());
    }
    const int dim = static_cast<int>(H.rows());
    const Eigen::VectorXd& ev = es.eigenvalues();
    std::vector<int> order(dim);
    std::iota(order.begin(), order.end(), 0);
    // trusted modes: lowest lambda, or lowest |mu| for Dirac
    if (dirac)
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return std::abs(ev[a]) < std::abs(ev[b]); });
    int K = std::max(1, static_cast<int>(std::floor(opt.trust_fraction * dim)));
    K = std::min(K, dim);
    std::vector<int> keep(order.begin(), order.begin() + K);
    std::sort(keep.begin(), keep.end(), [&](int a, int b) { return ev[a] < ev[b]; });

    SpectralDecomposition d;
    d.dirac = dirac;
    d.dim = m.dim;
    d.fiber = fiber;
    d.grid = m.grid;
    d.basis_size = dim;
    d.mode_cutoff = K;
    d.weyl_a0 = weyl_a0;
    d.trust_fraction = opt.trust_fraction;
    d.tail_tolerance = opt.tail_tolerance;
    d.values.resize(K);
    d.vectors.resize(dim, K);
    for (int k = 0; k < K; ++k) {
        d.values[k] = ev[keep[k]];
        d.vectors.col(k) = es.eigenvectors().col(keep[k]);
    }
    const double edge = ev[order[K - 1]];
    d.lambda_cut = dirac ? edge * edge : edge;

    if (opt.check) {
        Eigen::MatrixXcd R = H * d.vectors - d.vectors * d.values.asDiagonal();
        for (int k = 0; k < K; ++k)
            d.max_residual = std::max(d.max_residual, R.col(k).norm() / std::max(1.0, std::abs(d.values[k])));
        d.orthonormality = (d.vectors.adjoint() * d.vectors - Eigen::MatrixXcd::Identity(K, K)).cwiseAbs().maxCoeff();
        if (d.max_residual > 1e-9) throw ConsistencyError("eigenpair residual too large", d.max_residual);
        if (d.orthonormality > 1e-10) throw ConsistencyError("eigenvectors not orthonormal", d.orthonormality);
    }
    return d;
}

namespace {
double a0_of(const ModelManifold& m, const OperatorGeometry& g)
{
    return m.integrate(sqrt_det_field(g)) * g.fiber;
}
} // namespace

SpectralDecomposition decompose_laplace(const ModelManifold& m, const OperatorGeometry& g, const SpectralOptions& opt)
{
    return eigendecompose(assemble_laplace(m, g), m, g.fiber, a0_of(m, g), false, opt);
}

SpectralDecomposition decompose_dirac(const ModelManifold& m, const OperatorGeometry& g, const SpectralOptions& opt)
{
    return eigendecompose(assemble_dirac(m, g), m, g.fiber, a0_of(m, g), true, opt);
}

Overlap overlap(const SpectralDecomposition& plus, const SpectralDecomposition& minus)
{
    if (plus.vectors.rows() != minus.vectors.rows())
        throw PreconditionError("overlap: decompositions live on different grids");
    Overlap o;
    o.O = minus.vectors.adjoint() * plus.vectors;
    o.P = o.O.cwiseAbs2();
    Eigen::VectorXd cs = o.P.colwise().sum();
    o.max_column_sum = cs.maxCoeff();
    o.min_column_sum = cs.minCoeff();
    return o;
}

// ---------------------------------------------------------------- tails

double tail_theta(const SpectralDecomposition& d, double t)
{
    const double n = d.dim, L = std::max(d.lambda_cut, 0.0);
    return std::pow(4.0 * M_PI * t, -0.5 * n) * d.weyl_a0 * boost::math::gamma_q(0.5 * n, t * L);
}

double tail_theta_dt(const SpectralDecomposition& d, double t)
{
    const double n = d.dim, L = std::max(d.lambda_cut, 0.0);
    return weyl_density(d.dim) * d.weyl_a0 * std::tgamma(0.5 * n + 1.0) * std::pow(t, -0.5 * n - 1.0) *
           boost::math::gamma_q(0.5 * n + 1.0, t * L);
}

double tail_abs_eta(const SpectralDecomposition& d, double t)
{
    const double n = d.dim, L = std::max(d.lambda_cut, 0.0);
    return weyl_density(d.dim) * d.weyl_a0 * std::tgamma(0.5 * (n + 1.0)) * std::pow(t, -0.5 * (n + 1.0)) *
           boost::math::gamma_q(0.5 * (n + 1.0), t * L);
}

int suggest_grid(const SpectralDecomposition& d, double t, double tol)
{
    // smallest Lambda with Weyl tail below tol * (leading Weyl term), then invert the Weyl count
    const double n = d.dim;
    double lo = std::max(d.lambda_cut, 1.0), hi = lo;
    auto ok = [&](double L) { return boost::math::gamma_q(0.5 * n, t * L) < tol; };
    while (!ok(hi)) hi *= 2.0;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    double count = weyl_density(d.dim) * d.weyl_a0 * std::pow(hi, 0.5 * n) / (0.5 * n);
    double basis = count / d.trust_fraction / d.fiber;
    int g = static_cast<int>(std::ceil(std::pow(basis, 1.0 / n)));
    g += g % 2;
    return std::max(g, d.grid + 2);
}

double min_safe_time(const SpectralDecomposition& d, double tol)
{
    // relative tail is Q(n/2, t Lambda) against the Weyl leading term; a factor 10 margin
    const double n = d.dim, L = std::max(d.lambda_cut, 1e-12);
    double lo = 0.0, hi = 1.0 / L;
    while (boost::math::gamma_q(0.5 * n, hi * L) >= 0.1 * tol) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        (boost::math::gamma_q(0.5 * n, mid * L) < 0.1 * tol ? hi : lo) = mid;
    }
    return hi;
}

std::pair<double, double> safe_epsilon_window(const SpectralDecomposition& p, const SpectralDecomposition& m,
                                              double t, double s, double tol, double ratio)
{
    if (!(t > 0.0) || !(s > 0.0)) throw DomainError("epsilon window needs t, s > 0");
    const double tau = std::max(min_safe_time(p, tol), min_safe_time(m, tol));
    const double lo = tau / std::min(t, s);
    return {lo, lo * ratio};
}

namespace {

void refuse_if(const SpectralDecomposition& d, double t, const TraceValue& v, const char* what)
{
    if (v.tail > d.tail_tolerance * std::abs(v.value)) {
        std::ostringstream os;
        os << what << ": truncation tail " << v.tail << " exceeds " << d.tail_tolerance << " of the value "
           << v.value << " at t = " << t << "; use grid >= " << suggest_grid(d, t, d.tail_tolerance);
        throw TruncationError(os.str(), suggest_grid(d, t, d.tail_tolerance));
    }
}

Eigen::VectorXd heat_weights(const SpectralDecomposition& d, double t)
{
    return (-t * d.laplace_values().array()).exp().matrix();
}

double max_heat(const SpectralDecomposition& d, double t)
{
    return std::max(1.0, std::exp(-t * d.laplace_values().minCoeff()));
}

} // namespace

TraceValue theta(const SpectralDecomposition& d, double t)
{
    if (!(t > 0.0)) throw DomainError("theta needs t > 0");
    TraceValue v{heat_weights(d, t).sum(), tail_theta(d, t)};
    refuse_if(d, t, v, "Theta");
    return v;
}

TraceValue theta_dt(const SpectralDecomposition& d, double t)
{
    if (!(t > 0.0)) throw DomainError("theta_dt needs t > 0");
    Eigen::VectorXd lam = d.laplace_values();
    TraceValue v{-lam.dot(heat_weights(d, t)), tail_theta_dt(d, t)};
    refuse_if(d, t, v, "dTheta/dt");
    return v;
}

TraceValue eta(const SpectralDecomposition& d, double t)
{
    if (!d.dirac) throw PreconditionError("eta needs a Dirac decomposition");
    if (!(t > 0.0)) throw DomainError("eta needs t > 0");
    // H may vanish by symmetry, so no refusal relative to the value
    return {d.values.dot(heat_weights(d, t)), tail_abs_eta(d, t)};
}

TraceValue combined_X(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o, double t,
                      double s)
{
    if (!(t >= 0.0) || !(s >= 0.0) || (t == 0.0 && s == 0.0)) throw DomainError("combined_X needs t, s >= 0, not both 0");
    TraceValue v;
    v.value = heat_weights(m, s).dot(o.P * heat_weights(p, t));
    // columns and rows of P sum to at most one
    double tp = t > 0.0 ? tail_theta(p, t) : 0.0, tm = s > 0.0 ? tail_theta(m, s) : 0.0;
    v.tail = tp * max_heat(m, s) + tm * max_heat(p, t);
    if (t > 0.0 && s > 0.0) refuse_if(p, std::min(t, s), v, "X");
    return v;
}

TraceValue combined_Y(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o, double t,
                      double s)
{
    if (!p.dirac || !m.dirac) throw PreconditionError("Y needs Dirac decompositions");
    if (!(t > 0.0) || !(s > 0.0)) throw DomainError("Y needs t, s > 0");
    Eigen::VectorXd wp = p.values.cwiseProduct(heat_weights(p, t));
    Eigen::VectorXd wm = m.values.cwiseProduct(heat_weights(m, s));
    TraceValue v;
    v.value = wm.dot(o.P * wp);
    // sup |mu| e^{-s mu^2} <= (2 e s)^{-1/2}
    v.tail = tail_abs_eta(p, t) / std::sqrt(2.0 * M_E * s) + tail_abs_eta(m, s) / std::sqrt(2.0 * M_E * t);
    return v;
}

TraceValue relative_psi(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o, double t,
                        double s)
{
    TraceValue a = theta(p, t + s), b = theta(m, t + s);
    TraceValue x1 = combined_X(p, m, o, t, s), x2 = combined_X(p, m, o, s, t);
    return {a.value + b.value - x1.value - x2.value, a.tail + b.tail + x1.tail + x2.tail};
}

TraceValue relative_phi(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o, double t,
                        double s)
{
    TraceValue a = theta_dt(p, t + s), b = theta_dt(m, t + s);
    TraceValue y1 = combined_Y(p, m, o, t, s), y2 = combined_Y(p, m, o, s, t);
    return {-a.value - b.value - y1.value - y2.value, a.tail + b.tail + y1.tail + y2.tail};
}

std::complex<double> generalized_W(const SpectralDecomposition& d, double t, double alpha)
{
    if (!d.dirac) throw PreconditionError("W needs a Dirac decomposition");
    cd acc(0.0);
    for (int k = 0; k < d.values.size(); ++k) {
        const double mu = d.values[k];
        acc += std::exp(cd(-t * mu * mu, alpha * mu));
    }
    return acc;
}

std::complex<double> generalized_V(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                                   double t, double s, double alpha, double beta)
{
    if (!p.dirac || !m.dirac) throw PreconditionError("V needs Dirac decompositions");
    Eigen::VectorXcd a(p.values.size()), b(m.values.size());
    for (int k = 0; k < a.size(); ++k) a[k] = std::exp(cd(-t * p.values[k] * p.values[k], alpha * p.values[k]));
    for (int j = 0; j < b.size(); ++j) b[j] = std::exp(cd(-s * m.values[j] * m.values[j], beta * m.values[j]));
    return b.transpose() * (o.P.cast<cd>() * a);
}

double spectral_zeta(const SpectralDecomposition& d, double s, double zero_tol)
{
    Eigen::VectorXd lam = d.laplace_values();
    double acc = 0.0;
    for (int k = 0; k < lam.size(); ++k)
        if (std::abs(lam[k]) > zero_tol) acc += std::pow(lam[k], -s);
    return acc;
}

ZetaValues relative_zeta(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o, double pp,
                         double q, double zero_tol)
{
    ZetaValues z;
    Eigen::VectorXd lp = p.laplace_values(), lm = m.laplace_values();
    auto powv = [&](const Eigen::VectorXd& lam, double e, int& zeros, bool odd, const Eigen::VectorXd& mu) {
        Eigen::VectorXd out(lam.size());
        zeros = 0;
        for (int k = 0; k < lam.size(); ++k) {
            if (std::abs(lam[k]) <= zero_tol) {
                out[k] = 0.0;
                ++zeros;
                continue;
            }
            if (lam[k] < 0.0) throw DomainError("relative_zeta: negative Laplace eigenvalue");
            out[k] = std::pow(lam[k], -e) * (odd ? mu[k] : 1.0);
        }
        return out;
    };
    int zp = 0, zm = 0;
    Eigen::VectorXd ap = powv(lp, pp, zp, false, lp), aq = powv(lp, q, zp, false, lp);
    Eigen::VectorXd bp = powv(lm, pp, zm, false, lm), bq = powv(lm, q, zm, false, lm);
    z.zero_modes_plus = zp;
    z.zero_modes_minus = zm;
    z.Z_X = bq.dot(o.P * ap);
    double zxqp = bp.dot(o.P * aq);
    z.Z_Psi = ap.dot(aq) + bp.dot(bq) - z.Z_X - zxqp;
    if (p.dirac && m.dirac) {
        int dummy = 0;
        Eigen::VectorXd cp = powv(lp, pp, dummy, true, p.values), cq = powv(lp, q, dummy, true, p.values);
        Eigen::VectorXd dp = powv(lm, pp, dummy, true, m.values), dq = powv(lm, q, dummy, true, m.values);
        z.Z_Y = dq.dot(o.P * cp);
        double zyqp = dp.dot(o.P * cq);
        z.Z_Phi = cp.dot(cq) + dp.dot(dq) - z.Z_Y - zyqp;
    }
    // Weyl tail of sum lambda^{-sigma} beyond the cutoff, sigma = p + q
    auto tail = [&](const SpectralDecomposition& d, double sigma) {
        const double n = d.dim;
        if (sigma <= 0.5 * n) return std::numeric_limits<double>::infinity();
        return weyl_density(d.dim) * d.weyl_a0 * std::pow(d.lambda_cut, 0.5 * n - sigma) / (sigma - 0.5 * n);
    };
    z.tail = 2.0 * (tail(p, pp + q) + tail(m, pp + q));
    return z;
}

double bottom_overlap(const SpectralDecomposition& p, const SpectralDecomposition& m, const Overlap& o,
                      double degeneracy_tol)
{
    Eigen::VectorXd lp = p.laplace_values(), lm = m.laplace_values();
    const double bp = lp.minCoeff(), bm = lm.minCoeff();
    double acc = 0.0;
    for (int k = 0; k < lp.size(); ++k) {
        if (lp[k] - bp > degeneracy_tol * std::max(1.0, std::abs(bp))) continue;
        for (int j = 0; j < lm.size(); ++j)
            if (lm[j] - bm <= degeneracy_tol * std::max(1.0, std::abs(bm))) acc += o.P(j, k);
    }
    return acc;
}

} // namespace heatrace
